//! File formats and commands of the `ipbleadv` tool.

pub mod export;
pub mod scenario;

use std::fmt::{self, Write as _};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::thread;

use ipbleadv_core::engine::{self, InvalidConfig, Mode, ScenarioConfig};
use ipbleadv_core::types::Dur;

use export::{PutRow, Summary};
use scenario::ScenarioFile;

pub const SCENARIO_TOML: &str = "scenario.toml";
pub const SWEEP_CSV: &str = "sweep.csv";

#[derive(Debug)]
pub enum CliError {
    Io { context: String, source: io::Error },
    Config(InvalidConfig),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io { context, source } => write!(f, "{context}: {source}"),
            CliError::Config(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<InvalidConfig> for CliError {
    fn from(e: InvalidConfig) -> Self {
        CliError::Config(e)
    }
}

trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, CliError>;
}

impl<T> Context<T> for io::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, CliError> {
        self.map_err(|source| CliError::Io { context: what(), source })
    }
}

pub fn load_scenario(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig, CliError> {
    let text = fs::read_to_string(path).context(|| format!("reading {}", path.display()))?;
    let mut cfg = ScenarioFile::parse(&text)?.to_config()?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_outputs(dir: &Path, cfg: &ScenarioConfig) -> Result<Summary, CliError> {
    let log = engine::run(cfg)?;
    let s = export::write_run(dir, &log).context(|| format!("writing results to {}", dir.display()))?;
    fs::write(dir.join(SCENARIO_TOML), ScenarioFile::from(cfg).to_toml())
        .context(|| format!("writing {}", dir.join(SCENARIO_TOML).display()))?;
    Ok(s)
}

/// Write into a hidden sibling first, then move into place.
fn write_atomically(dest: &Path, cfg: &ScenarioConfig) -> Result<Summary, CliError> {
    let parent = dest.parent().unwrap_or(Path::new("."));
    let name = dest.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = parent.join(format!(".{name}.tmp"));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).context(|| format!("removing {}", tmp.display()))?;
    }
    let s = write_outputs(&tmp, cfg)?;
    if dest.exists() {
        fs::remove_dir_all(dest).context(|| format!("replacing {}", dest.display()))?;
    }
    fs::rename(&tmp, dest).context(|| format!("moving results to {}", dest.display()))?;
    Ok(s)
}

pub fn cmd_run(scenario: &Path, seed: Option<u64>, out: &Path) -> Result<Summary, CliError> {
    let cfg = load_scenario(scenario, seed)?;
    fs::create_dir_all(out).context(|| format!("creating {}", out.display()))?;
    write_outputs(out, &cfg)
}

fn dir_name(index: usize, value: &str) -> String {
    let clean: String = value.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' }).collect();
    format!("{index:03}_{clean}")
}

/// One run per value, executed on worker threads; results land in
/// `out/NNN_value/` plus `out/sweep.csv`.
pub fn cmd_sweep(
    scenario: &Path,
    param: &str,
    values: &[String],
    seed: Option<u64>,
    out: &Path,
) -> Result<Vec<(String, Summary)>, CliError> {
    let template = load_scenario(scenario, seed)?;
    let refs: Vec<&str> = values.iter().map(String::as_str).collect();
    let cfgs = engine::sweep_configs(&template, param, &refs)?;
    fs::create_dir_all(out).context(|| format!("creating {}", out.display()))?;

    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(cfgs.len().max(1));
    let jobs: Vec<(usize, &ScenarioConfig)> = cfgs.iter().enumerate().collect();
    let mut results: Vec<Option<Result<Summary, CliError>>> = (0..cfgs.len()).map(|_| None).collect();
    thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let jobs = &jobs;
                s.spawn(move || {
                    jobs.iter()
                        .skip(w)
                        .step_by(workers)
                        .map(|&(i, cfg)| (i, write_atomically(&out.join(dir_name(i, values[i].as_str())), cfg)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("sweep worker panicked") {
                results[i] = Some(r);
            }
        }
    });

    let mut summaries = Vec::with_capacity(values.len());
    for (v, r) in values.iter().zip(results) {
        summaries.push((v.clone(), r.expect("every job ran")?));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["value", "pdr", "p50_us", "p90_us"]).expect("in-memory write");
    for (v, s) in &summaries {
        let opt = |x: Option<u64>| x.map_or_else(String::new, |x| x.to_string());
        let pdr = s.pdr.map_or_else(String::new, |p| p.to_string());
        w.write_record([v.clone(), pdr, opt(s.rtt_us.p50), opt(s.rtt_us.p90)]).expect("in-memory write");
    }
    let tmp = out.join(format!(".{SWEEP_CSV}.tmp"));
    fs::write(&tmp, w.into_inner().expect("in-memory flush")).context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, out.join(SWEEP_CSV)).context(|| format!("writing {}", out.join(SWEEP_CSV).display()))?;
    Ok(summaries)
}

/// A run directory re-read from disk.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub dir: PathBuf,
    pub scenario: Option<ScenarioConfig>,
    pub stored: Summary,
    pub recomputed: Summary,
    /// 90th percentile of RTT / (hops * advertising interval), advertising mode only.
    pub p90_rtt_per_hop_interval: Option<f64>,
}

fn run_dirs(root: &Path) -> Result<Vec<PathBuf>, CliError> {
    if root.join(export::SUMMARY_JSON).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).context(|| format!("listing {}", root.display()))? {
        let p = entry.context(|| format!("listing {}", root.display()))?.path();
        let hidden = p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.'));
        if !hidden && p.join(export::SUMMARY_JSON).is_file() {
            dirs.push(p);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::Io {
            context: format!("reading {}", root.display()),
            source: io::Error::new(io::ErrorKind::NotFound, "no run results found"),
        });
    }
    Ok(dirs)
}

fn per_hop_p90(puts: &[PutRow], interval: Dur) -> Option<f64> {
    let mut v: Vec<f64> = puts
        .iter()
        .filter_map(|p| {
            let rtt = p.ack_us? - p.send_us;
            (p.hops > 0).then(|| rtt as f64 / (f64::from(p.hops) * interval.as_micros() as f64))
        })
        .collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v[(90 * v.len()).div_ceil(100).max(1) - 1])
}

pub fn load_run(dir: &Path) -> Result<RunReport, CliError> {
    let puts_path = dir.join(export::PUTS_CSV);
    let puts = export::read_puts(&puts_path).context(|| format!("reading {}", puts_path.display()))?;
    let nodes_path = dir.join(export::NODES_CSV);
    let nodes = export::read_nodes(&nodes_path).context(|| format!("reading {}", nodes_path.display()))?;
    let sum_path = dir.join(export::SUMMARY_JSON);
    let stored = export::read_summary(&sum_path).context(|| format!("reading {}", sum_path.display()))?;
    let recomputed = export::summarize(&puts, &nodes, stored.runtime_us);
    let scenario = match fs::read_to_string(dir.join(SCENARIO_TOML)) {
        Ok(text) => Some(ScenarioFile::parse(&text)?.to_config()?),
        Err(_) => None,
    };
    let p90_rtt_per_hop_interval = scenario
        .as_ref()
        .filter(|c| c.mode == Mode::Adv)
        .and_then(|c| per_hop_p90(&puts, c.adv.adv_interval));
    if let Some(cdf) = export::cdf_from_rows(&puts, Dur::from_millis(1)) {
        let p = dir.join(export::CDF_CSV);
        fs::write(&p, export::cdf_csv(&cdf)).context(|| format!("writing {}", p.display()))?;
    }
    Ok(RunReport { dir: dir.to_path_buf(), scenario, stored, recomputed, p90_rtt_per_hop_interval })
}

fn ms(us: Option<u64>) -> String {
    us.map_or_else(|| "-".into(), |u| format!("{:.1}", u as f64 / 1000.0))
}

pub fn format_table(runs: &[RunReport]) -> String {
    let mut t = String::new();
    let _ = writeln!(
        t,
        "{:<24} {:<5} {:<5} {:>7} {:>8} {:>9} {:>9} {:>9} {:>8} {:>8} {:>10}",
        "run", "mode", "topo", "sent", "pdr", "p50[ms]", "p90[ms]", "p99[ms]", "max tx%", "min rx%", "p90 rtt/hI"
    );
    for r in runs {
        let name = r.dir.file_name().map_or_else(|| r.dir.display().to_string(), |n| n.to_string_lossy().into_owned());
        let (mode, topo) = r
            .scenario
            .as_ref()
            .map_or(("?", "?"), |c| (c.mode.name(), c.topology.name()));
        let s = &r.recomputed;
        let max_tx = s.utilization.iter().map(|u| u.tx).fold(0.0, f64::max);
        let min_rx = s.utilization.iter().map(|u| u.rx).fold(f64::INFINITY, f64::min);
        let _ = writeln!(
            t,
            "{:<24} {:<5} {:<5} {:>7} {:>8} {:>9} {:>9} {:>9} {:>8.3} {:>8.2} {:>10}",
            name,
            mode,
            topo,
            s.sent,
            s.pdr.map_or_else(|| "-".into(), |p| format!("{p:.4}")),
            ms(s.rtt_us.p50),
            ms(s.rtt_us.p90),
            ms(s.rtt_us.p99),
            100.0 * max_tx,
            if min_rx.is_finite() { 100.0 * min_rx } else { 0.0 },
            r.p90_rtt_per_hop_interval.map_or_else(|| "-".into(), |x| format!("{x:.2}")),
        );
        if r.stored != r.recomputed {
            let _ = writeln!(t, "  warning: summary.json disagrees with the CSV files");
        }
    }
    t
}

pub fn cmd_report(dir: &Path) -> Result<Vec<RunReport>, CliError> {
    run_dirs(dir)?.iter().map(|d| load_run(d)).collect()
}
