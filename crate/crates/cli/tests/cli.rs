use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ipbleadv::export;

const SMALL: &str = r#"
mode = "adv"
topology = "tree"
nodes = 7
producers = 4
duration_us = 20000000
seed = 3

[traffic]
interval_us = 2000000
"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ipbleadv")).args(args).output().expect("binary runs")
}

fn write_scenario(dir: &Path, text: &str) -> String {
    let p = dir.join("s.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_then_report_reproduces_the_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), SMALL);
    let out = tmp.path().join("run");
    let o = bin(&["run", &scenario, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let report = ipbleadv::cmd_report(&out).unwrap();
    assert_eq!(report.len(), 1);
    assert_eq!(report[0].recomputed, report[0].stored);
    assert!(report[0].stored.sent > 0);
    assert!(out.join(export::CDF_CSV).is_file());

    let o = bin(&["report", out.to_str().unwrap()]);
    assert!(o.status.success());
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("adv") && table.contains("tree"), "{table}");
    assert!(!table.contains("warning"), "{table}");
}

#[test]
fn same_seed_gives_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), SMALL);
    let dirs = ["a", "b", "c"].map(|d| tmp.path().join(d));
    for (d, seed) in dirs.iter().zip(["5", "5", "6"]) {
        assert!(bin(&["run", &scenario, "--seed", seed, "--out", d.to_str().unwrap()]).status.success());
    }
    for f in [export::PUTS_CSV, export::NODES_CSV] {
        let read = |d: &Path| fs::read(d.join(f)).unwrap();
        assert_eq!(read(&dirs[0]), read(&dirs[1]), "{f}");
    }
    assert_ne!(fs::read(dirs[0].join(export::PUTS_CSV)).unwrap(), fs::read(dirs[2].join(export::PUTS_CSV)).unwrap());
}

#[test]
fn sweep_writes_one_directory_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), SMALL);
    let out = tmp.path().join("sweep");
    let o = bin(&[
        "sweep",
        &scenario,
        "--param",
        "adv.retransmissions",
        "--values",
        "0,2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("000_0").join(export::SUMMARY_JSON).is_file());
    assert!(out.join("001_2").join(export::SUMMARY_JSON).is_file());
    let csv = fs::read_to_string(out.join(ipbleadv::SWEEP_CSV)).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("value,pdr,p50_us,p90_us"));
    assert_eq!(lines.count(), 2);

    let report = ipbleadv::cmd_report(&out).unwrap();
    assert_eq!(report.len(), 2);
    assert_eq!(report[1].scenario.as_ref().unwrap().adv.retransmissions, 2);
}

#[test]
fn first_sweep_run_matches_a_single_run() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), SMALL);
    let out = tmp.path().join("sweep");
    let values = ["2".to_string(), "0".to_string()];
    let runs = ipbleadv::cmd_sweep(Path::new(&scenario), "adv.retransmissions", &values, None, &out).unwrap();
    let single = ipbleadv::cmd_run(Path::new(&scenario), None, &tmp.path().join("single")).unwrap();
    assert_eq!(runs[0].1, single);
    assert_ne!(runs[1].1, single);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();

    let bad = write_scenario(tmp.path(), "nodes = 1\n");
    assert_eq!(bin(&["run", &bad, "--out", out]).status.code(), Some(2));
    let unknown = write_scenario(tmp.path(), "colour = \"red\"\n");
    assert_eq!(bin(&["run", &unknown, "--out", out]).status.code(), Some(2));
    let ok = write_scenario(tmp.path(), SMALL);
    assert_eq!(bin(&["sweep", &ok, "--param", "nope", "--values", "1", "--out", out]).status.code(), Some(2));

    let missing = tmp.path().join("absent.toml");
    assert_eq!(bin(&["run", missing.to_str().unwrap(), "--out", out]).status.code(), Some(1));
    assert_eq!(bin(&["report", tmp.path().join("empty").to_str().unwrap()]).status.code(), Some(1));
}
