//! Result files: `puts.csv`, `nodes.csv`, `summary.json` and `cdf.csv`.
//!
//! All times are integer microseconds; CSV files use a comma separator, a
//! header row and '.' as decimal point.

use std::fs;
use std::io;
use std::path::Path;

use ipbleadv_core::metrics::{self, MetricsLog};
use ipbleadv_core::types::{Dur, Instant, NodeId};
use serde::{Deserialize, Serialize};

pub const PUTS_CSV: &str = "puts.csv";
pub const NODES_CSV: &str = "nodes.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const CDF_CSV: &str = "cdf.csv";

pub const LOST: &str = "LOST";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PutRow {
    pub id: u64,
    pub producer: u16,
    pub send_us: u64,
    pub ack_us: Option<u64>,
    pub hops: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRow {
    pub node: u16,
    pub tx_us: u64,
    pub rx_us: u64,
    pub frames_tx: u64,
    pub frames_rx: u64,
    pub dropped_adv_events: u64,
    pub queue_drops: u64,
    pub duplicates: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utilization {
    pub node: u16,
    pub tx: f64,
    pub rx: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RttPercentiles {
    pub p50: Option<u64>,
    pub p90: Option<u64>,
    pub p99: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub sent: usize,
    pub acked: usize,
    /// `None` when nothing was sent.
    pub pdr: Option<f64>,
    pub rtt_us: RttPercentiles,
    pub runtime_us: u64,
    pub utilization: Vec<Utilization>,
}

pub fn put_rows(log: &MetricsLog) -> Vec<PutRow> {
    log.puts
        .iter()
        .map(|p| PutRow {
            id: p.id,
            producer: p.producer.0,
            send_us: p.send.as_micros(),
            ack_us: p.ack.map(Instant::as_micros),
            hops: p.hops,
        })
        .collect()
}

pub fn node_rows(log: &MetricsLog) -> Vec<NodeRow> {
    log.nodes
        .iter()
        .map(|n| NodeRow {
            node: n.id.0,
            tx_us: n.counters.tx_us,
            rx_us: n.counters.rx_us,
            frames_tx: n.counters.frames_tx_total(),
            frames_rx: n.counters.frames_rx_total(),
            dropped_adv_events: n.counters.dropped_adv_events,
            queue_drops: n.counters.queue_drops,
            duplicates: n.counters.duplicates,
        })
        .collect()
}

/// Summary numbers computed from the exported rows alone, so that a run and a
/// later report over its files agree exactly.
pub fn summarize(puts: &[PutRow], nodes: &[NodeRow], runtime_us: u64) -> Summary {
    let mut rtts: Vec<Dur> = puts.iter().filter_map(|p| p.ack_us.map(|a| Dur(a - p.send_us))).collect();
    rtts.sort_unstable();
    let acked = rtts.len();
    let pct = |p| metrics::percentile(&rtts, p).map(Dur::as_micros);
    let rt = runtime_us as f64;
    Summary {
        sent: puts.len(),
        acked,
        pdr: (!puts.is_empty()).then(|| acked as f64 / puts.len() as f64),
        rtt_us: RttPercentiles { p50: pct(50), p90: pct(90), p99: pct(99) },
        runtime_us,
        utilization: nodes
            .iter()
            .map(|n| Utilization {
                node: n.node,
                tx: if rt > 0.0 { n.tx_us as f64 / rt } else { 0.0 },
                rx: if rt > 0.0 { n.rx_us as f64 / rt } else { 0.0 },
            })
            .collect(),
    }
}

pub fn summary(log: &MetricsLog) -> Summary {
    summarize(&put_rows(log), &node_rows(log), log.runtime.as_micros())
}

pub fn puts_csv(rows: &[PutRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "producer", "send_us", "ack_us", "hops"]).expect("in-memory write");
    for r in rows {
        let ack = r.ack_us.map_or_else(|| LOST.to_string(), |a| a.to_string());
        w.write_record([r.id.to_string(), r.producer.to_string(), r.send_us.to_string(), ack, r.hops.to_string()])
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn nodes_csv(rows: &[NodeRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn cdf_csv(points: &[(Dur, f64)]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t_us", "fraction"]).expect("in-memory write");
    for (t, f) in points {
        w.write_record([t.as_micros().to_string(), f.to_string()]).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn bad_data(e: impl std::fmt::Display) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e.to_string())
}

pub fn read_puts(path: &Path) -> io::Result<Vec<PutRow>> {
    let mut r = csv::Reader::from_path(path).map_err(bad_data)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(bad_data)?;
        let field = |i: usize| rec.get(i).ok_or_else(|| bad_data(format!("short row in {}", path.display())));
        let num = |i: usize| field(i)?.parse::<u64>().map_err(bad_data);
        let ack = field(3)?;
        out.push(PutRow {
            id: num(0)?,
            producer: u16::try_from(num(1)?).map_err(bad_data)?,
            send_us: num(2)?,
            ack_us: if ack == LOST { None } else { Some(ack.parse().map_err(bad_data)?) },
            hops: u32::try_from(num(4)?).map_err(bad_data)?,
        });
    }
    Ok(out)
}

pub fn read_nodes(path: &Path) -> io::Result<Vec<NodeRow>> {
    let mut r = csv::Reader::from_path(path).map_err(bad_data)?;
    r.deserialize().map(|row| row.map_err(bad_data)).collect()
}

pub fn read_summary(path: &Path) -> io::Result<Summary> {
    serde_json::from_slice(&fs::read(path)?).map_err(bad_data)
}

/// Write the three per-run files into `dir`.
pub fn write_run(dir: &Path, log: &MetricsLog) -> io::Result<Summary> {
    fs::create_dir_all(dir)?;
    let puts = put_rows(log);
    let nodes = node_rows(log);
    let s = summarize(&puts, &nodes, log.runtime.as_micros());
    fs::write(dir.join(PUTS_CSV), puts_csv(&puts))?;
    fs::write(dir.join(NODES_CSV), nodes_csv(&nodes))?;
    let mut json = serde_json::to_vec_pretty(&s).map_err(bad_data)?;
    json.push(b'\n');
    fs::write(dir.join(SUMMARY_JSON), json)?;
    Ok(s)
}

/// RTT distribution over the rows of `puts.csv`; see [`metrics::rtt_cdf`].
pub fn cdf_from_rows(puts: &[PutRow], resolution: Dur) -> Option<Vec<(Dur, f64)>> {
    let log = MetricsLog {
        puts: puts
            .iter()
            .map(|p| metrics::PutRecord {
                id: p.id,
                producer: NodeId(p.producer),
                send: Instant(p.send_us),
                ack: p.ack_us.map(Instant),
                hops: p.hops,
            })
            .collect(),
        nodes: Vec::new(),
        frames: Default::default(),
        runtime: Dur::ZERO,
    };
    metrics::rtt_cdf(&log, resolution).ok()
}
