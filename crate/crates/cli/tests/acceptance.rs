//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant as Wall};

use ipbleadv::export;
use ipbleadv_core::codec;
use ipbleadv_core::engine::{run, Mode, ScenarioConfig};
use ipbleadv_core::metrics::{self, MetricsLog, NodeRole};
use ipbleadv_core::net::Topology;
use ipbleadv_core::types::{Dur, NodeId};

const TEN_MINUTES: Dur = Dur::from_secs(600);

fn scenario(mode: Mode, topology: Topology, producers: usize, traffic: Dur, r: u8) -> ScenarioConfig {
    let mut c = ScenarioConfig { mode, topology, producers, duration: TEN_MINUTES, ..ScenarioConfig::default() };
    c.traffic.interval = traffic;
    c.adv.adv_interval = Dur::from_millis(50);
    c.adv.retransmissions = r;
    c
}

fn adv(topology: Topology, producers: usize, traffic_s: u64, r: u8) -> ScenarioConfig {
    scenario(Mode::Adv, topology, producers, Dur::from_secs(traffic_s), r)
}

fn conn(topology: Topology, producers: usize, traffic_s: u64) -> ScenarioConfig {
    scenario(Mode::Conn, topology, producers, Dur::from_secs(traffic_s), 2)
}

fn noisy(mut c: ScenarioConfig) -> ScenarioConfig {
    c.noise.advertisers = 10;
    c.noise.interval = Dur::from_millis(100);
    c
}

struct Done {
    cfg: ScenarioConfig,
    log: MetricsLog,
    wall: Duration,
}

/// Runs every distinct configuration once, in parallel.
struct Runs(Vec<Done>);

impl Runs {
    fn execute(cfgs: Vec<ScenarioConfig>) -> Runs {
        let mut unique: Vec<ScenarioConfig> = Vec::new();
        for c in cfgs {
            if !unique.contains(&c) {
                unique.push(c);
            }
        }
        let workers = thread::available_parallelism().map_or(1, |n| n.get());
        let mut done: Vec<Option<Done>> = (0..unique.len()).map(|_| None).collect();
        thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let unique = &unique;
                    s.spawn(move || {
                        let mut out = Vec::new();
                        for (i, c) in unique.iter().enumerate().skip(w).step_by(workers) {
                            let t = Wall::now();
                            let log = run(c).expect("valid scenario");
                            out.push((i, Done { cfg: c.clone(), log, wall: t.elapsed() }));
                        }
                        out
                    })
                })
                .collect();
            for h in handles {
                for (i, d) in h.join().expect("run panicked") {
                    done[i] = Some(d);
                }
            }
        });
        Runs(done.into_iter().map(Option::unwrap).collect())
    }

    fn get(&self, c: &ScenarioConfig) -> &Done {
        self.0.iter().find(|d| &d.cfg == c).expect("scenario was scheduled")
    }

    fn log(&self, c: &ScenarioConfig) -> &MetricsLog {
        &self.get(c).log
    }

    fn pdr(&self, c: &ScenarioConfig) -> f64 {
        metrics::pdr(self.log(c)).expect("traffic was generated")
    }

    fn median(&self, c: &ScenarioConfig) -> u64 {
        metrics::rtt_percentile(self.log(c), 50).expect("some put acknowledged").as_micros()
    }
}

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn codec_roundtrip() -> Verdict {
    let t = Wall::now();
    let mut checked = 0;
    for len in 0..=codec::DEFAULT_MTU {
        let payload: Vec<u8> = (0..len).map(|i| (i * 7 + len) as u8).collect();
        for seq in [0u8, 1, 255] {
            let block = codec::encode(&payload, seq, codec::DEFAULT_SERVICE_UUID).map_err(|e| format!("{e:?}"))?;
            let (s, back) = codec::decode(block.bytes(), codec::DEFAULT_SERVICE_UUID).map_err(|e| format!("{e:?}"))?;
            if s != seq || back != payload {
                return Err(format!("len {len} seq {seq} did not roundtrip"));
            }
            if block.segment_count() != (len + 1).div_ceil(252) {
                return Err(format!("len {len}: {} segments", block.segment_count()));
            }
            checked += 1;
        }
    }
    let full = codec::encode(&[0u8; 1280], 0, codec::DEFAULT_SERVICE_UUID).map_err(|e| format!("{e:?}"))?;
    let wall = t.elapsed();
    check(
        full.segment_count() == 6 && full.len() == 1305 && wall < Duration::from_secs(5),
        format!("{checked} cases, 1280 B -> {} segments / {} B, {wall:.2?}", full.segment_count(), full.len()),
    )
}

fn energy() -> Verdict {
    let busy = metrics::lifetime_hours(1.0, 4.6, 230.0);
    let days = metrics::lifetime_hours(0.005, 4.6, 230.0) / 24.0;
    // Three leading digits as printed: 50.0 h and 416 days.
    check(
        (busy * 10.0).round() == 500.0 && days.floor() == 416.0,
        format!("{busy:.2} h at 100 %, {days:.2} days at 0.5 %"),
    )
}

fn conn_zero_loss(runs: &Runs) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for t in Topology::ALL {
        let d = runs.get(&conn(t, 14, 1));
        let p = runs.pdr(&d.cfg);
        ok &= p == 1.0 && d.wall < Duration::from_secs(60);
        parts.push(format!("{t} {p:.4} ({:.1?})", d.wall));
    }
    check(ok, parts.join(", "))
}

/// Maximal runs of non-empty 5 ms bins, returned as (mean RTT, count).
fn clusters(rtts: &[Dur]) -> Vec<(f64, usize)> {
    let mut bins: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for r in rtts {
        bins.entry(r.as_micros() / 5_000).or_default().push(r.as_micros());
    }
    let mut out: Vec<(u64, Vec<u64>)> = Vec::new();
    for (b, v) in bins {
        match out.last_mut() {
            Some((last, acc)) if *last + 1 == b => {
                *last = b;
                acc.extend(v);
            }
            _ => out.push((b, v)),
        }
    }
    out.into_iter().map(|(_, v)| (v.iter().sum::<u64>() as f64 / v.len() as f64, v.len())).collect()
}

fn stairs(runs: &Runs) -> Verdict {
    let c = clusters(&runs.log(&adv(Topology::Star, 1, 5, 2)).sorted_rtts());
    let offsets: Vec<f64> = c.windows(2).map(|w| (w[1].0 - w[0].0) / 1000.0).collect();
    let ok = c.len() == 3 && offsets.iter().all(|o| (50.0..=60.0).contains(o));
    let shown: Vec<String> = c.iter().map(|(m, n)| format!("{:.1} ms x{n}", m / 1000.0)).collect();
    check(ok, format!("{} clusters [{}], offsets {offsets:.1?} ms", c.len(), shown.join(", ")))
}

const RETRANSMISSIONS: [u8; 4] = [0, 1, 2, 5];

fn retransmissions(runs: &Runs) -> Verdict {
    let p: Vec<f64> = RETRANSMISSIONS.iter().map(|&r| runs.pdr(&adv(Topology::Star, 14, 1, r))).collect();
    let increasing = p.windows(2).all(|w| w[1] > w[0]);
    let diminishing = p[1] - p[0] > p[2] - p[1];
    check(increasing && diminishing, format!("pdr r=0,1,2,5: {p:.4?}"))
}

fn load_and_topology(runs: &Runs) -> Verdict {
    let at = |t, s| runs.pdr(&adv(t, 14, s, 2));
    let load = Topology::ALL.iter().all(|&t| at(t, 5) > at(t, 1));
    let topo = at(Topology::Star, 1) > at(Topology::Tree, 1) && at(Topology::Tree, 1) > at(Topology::Line, 1);
    let shown: Vec<String> =
        Topology::ALL.iter().map(|&t| format!("{t} {:.4}/{:.4}", at(t, 1), at(t, 5))).collect();
    check(load && topo, format!("pdr at 1 s/5 s: {}", shown.join(", ")))
}

fn frame_amplification(runs: &Runs) -> Verdict {
    let frames = |t| metrics::frame_totals(runs.log(&adv(t, 14, 5, 2))).total;
    let (line, star) = (frames(Topology::Line), frames(Topology::Star));
    let ratio = line as f64 / star as f64;
    check((5.0..=8.0).contains(&ratio), format!("line {line} / star {star} = {ratio:.2}"))
}

fn latency_advantage(runs: &Runs) -> Verdict {
    let a = runs.median(&adv(Topology::Star, 14, 5, 2));
    let c = runs.median(&conn(Topology::Star, 14, 5));
    let ratio = c as f64 / a as f64;
    check(a < c && (1.5..=5.0).contains(&ratio), format!("median adv {a} us, conn {c} us, ratio {ratio:.3}"))
}

fn noise(runs: &Runs) -> Verdict {
    let quiet = runs.pdr(&adv(Topology::Star, 14, 1, 2));
    let loud = runs.pdr(&noisy(adv(Topology::Star, 14, 1, 2)));
    let conn_loud = runs.pdr(&noisy(conn(Topology::Star, 14, 1)));
    let drop_pp = 100.0 * (quiet - loud);
    check(
        drop_pp >= 1.0 && conn_loud == 1.0,
        format!("adv {quiet:.4} -> {loud:.4} ({drop_pp:.2} pp), conn with noise {conn_loud:.4}"),
    )
}

fn determinism() -> Verdict {
    let mut cases = Vec::new();
    for mode in [Mode::Adv, Mode::Conn] {
        let mut c = noisy(scenario(mode, Topology::Tree, 14, Dur::from_secs(1), 2));
        c.duration = Dur::from_secs(60);
        c.seed = 7;
        cases.push(c);
    }
    for c in &cases {
        let (a, b) = (run(c).map_err(|e| e.0)?, run(c).map_err(|e| e.0)?);
        let bytes = |l: &MetricsLog| {
            (export::puts_csv(&export::put_rows(l)), export::nodes_csv(&export::node_rows(l)))
        };
        if bytes(&a) != bytes(&b) {
            return Err(format!("{} run differs between repetitions", c.mode.name()));
        }
    }
    Ok("adv and conn tree runs with noise reproduce byte-identical CSVs".into())
}

fn dedup(runs: &Runs, adv_cfgs: &[ScenarioConfig]) -> Verdict {
    let mut ip_dups = 0;
    let mut missing = Vec::new();
    for c in adv_cfgs {
        let log = runs.log(c);
        ip_dups += log.total(|n| n.ip_duplicates);
        let link = log.total(|n| n.duplicates);
        if c.adv.retransmissions >= 1 && metrics::pdr(log).unwrap_or(0.0) > 0.0 && link == 0 {
            missing.push(format!("{} r={}", c.topology, c.adv.retransmissions));
        }
    }
    check(
        ip_dups == 0 && missing.is_empty(),
        format!("{} adv runs, ip duplicates {ip_dups}, runs without link duplicates {missing:?}", adv_cfgs.len()),
    )
}

fn leaves(c: &ScenarioConfig) -> Vec<NodeId> {
    let parents = c.topology.parents(c.nodes);
    (0..c.nodes as u16).map(NodeId).filter(|n| !parents.contains(&Some(*n))).collect()
}

fn utilization(runs: &Runs) -> Verdict {
    let mut min_rx = f64::INFINITY;
    for c in [adv(Topology::Star, 14, 1, 2), adv(Topology::Star, 14, 5, 2)] {
        let log = runs.log(&c);
        for n in log.nodes.iter().filter(|n| n.role != NodeRole::Noise) {
            min_rx = min_rx.min(metrics::radio_utilization(log, n.id).expect("node exists").1);
        }
    }
    let c = conn(Topology::Star, 14, 5);
    let log = runs.log(&c);
    let max_leaf = leaves(&c)
        .into_iter()
        .map(|n| metrics::radio_utilization(log, n).map_or(0.0, |(tx, rx)| tx + rx))
        .fold(0.0, f64::max);
    check(
        min_rx > 0.9 && max_leaf < 0.05,
        format!("adv min rx fraction {min_rx:.4}, conn max leaf utilization {max_leaf:.5}"),
    )
}

fn main() -> ExitCode {
    let mut adv_cfgs = vec![adv(Topology::Star, 1, 5, 2), noisy(adv(Topology::Star, 14, 1, 2))];
    adv_cfgs.extend(RETRANSMISSIONS.map(|r| adv(Topology::Star, 14, 1, r)));
    for t in Topology::ALL {
        adv_cfgs.extend([adv(t, 14, 1, 2), adv(t, 14, 5, 2)]);
    }
    let mut all = adv_cfgs.clone();
    all.extend(Topology::ALL.map(|t| conn(t, 14, 1)));
    all.extend([conn(Topology::Star, 14, 5), noisy(conn(Topology::Star, 14, 1))]);
    let mut unique_adv: Vec<ScenarioConfig> = Vec::new();
    for c in adv_cfgs {
        if !unique_adv.contains(&c) {
            unique_adv.push(c);
        }
    }

    let runs = Runs::execute(all);
    let results: [(&str, Verdict); 12] = [
        ("1 codec exhaustive roundtrip", codec_roundtrip()),
        ("2 energy closed forms", energy()),
        ("3 connection mode zero loss", conn_zero_loss(&runs)),
        ("4 stair effect", stairs(&runs)),
        ("5 retransmission monotonicity", retransmissions(&runs)),
        ("6 load and topology ordering", load_and_topology(&runs)),
        ("7 frame count amplification", frame_amplification(&runs)),
        ("8 latency advantage", latency_advantage(&runs)),
        ("9 noise resilience split", noise(&runs)),
        ("10 determinism", determinism()),
        ("11 dedup end to end", dedup(&runs, &unique_adv)),
        ("12 radio utilization split", utilization(&runs)),
    ];
    let mut failed = 0;
    for (name, v) in &results {
        match v {
            Ok(d) => println!("PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
