//! Run records and the evaluation quantities derived from them.

use alloc::vec::Vec;
use core::fmt;

use crate::medium::{FrameKind, FrameStats};
use crate::types::{Channel, Dur, Instant, NodeId};

/// Per-node counters accumulated during a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeCounters {
    pub tx_us: u64,
    pub rx_us: u64,
    pub frames_tx: [u64; 5],
    pub frames_rx: [u64; 5],
    pub tx_by_channel: [u64; Channel::COUNT],
    pub adv_events: u64,
    pub dropped_adv_events: u64,
    pub queue_drops: u64,
    /// Link-layer duplicates caught by the sequence-number filter.
    pub duplicates: u64,
    /// Datagrams handed to the IP layer more than once.
    pub ip_duplicates: u64,
    pub missed_pointers: u64,
    pub aux_losses: u64,
    pub no_route_drops: u64,
    pub conn_events: u64,
    pub conn_events_skipped: u64,
    pub buffer_high_water: u64,
}

impl Default for NodeCounters {
    fn default() -> Self {
        NodeCounters {
            tx_us: 0,
            rx_us: 0,
            frames_tx: [0; 5],
            frames_rx: [0; 5],
            tx_by_channel: [0; Channel::COUNT],
            adv_events: 0,
            dropped_adv_events: 0,
            queue_drops: 0,
            duplicates: 0,
            ip_duplicates: 0,
            missed_pointers: 0,
            aux_losses: 0,
            no_route_drops: 0,
            conn_events: 0,
            conn_events_skipped: 0,
            buffer_high_water: 0,
        }
    }
}

impl NodeCounters {
    pub fn frames_tx_total(&self) -> u64 {
        self.frames_tx.iter().sum()
    }

    pub fn frames_rx_total(&self) -> u64 {
        self.frames_rx.iter().sum()
    }

    pub(crate) fn count_tx(&mut self, kind: FrameKind, ch: Channel, air: Dur) {
        self.frames_tx[kind.index()] += 1;
        self.tx_by_channel[ch.index() as usize] += 1;
        self.tx_us += air.as_micros();
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PutRecord {
    pub id: u64,
    pub producer: NodeId,
    pub send: Instant,
    /// `None` once finalized means lost.
    pub ack: Option<Instant>,
    pub hops: u32,
}

impl PutRecord {
    pub fn rtt(&self) -> Option<Dur> {
        self.ack.map(|a| a - self.send)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Consumer,
    Producer,
    Forwarder,
    Noise,
}

impl NodeRole {
    pub fn name(self) -> &'static str {
        match self {
            NodeRole::Consumer => "consumer",
            NodeRole::Producer => "producer",
            NodeRole::Forwarder => "forwarder",
            NodeRole::Noise => "noise",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeRecord {
    pub id: NodeId,
    pub role: NodeRole,
    /// Hops to the consumer; 0 for the consumer and noise sources.
    pub depth: u32,
    pub counters: NodeCounters,
}

/// Everything recorded during one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricsLog {
    pub puts: Vec<PutRecord>,
    pub nodes: Vec<NodeRecord>,
    pub frames: FrameStats,
    /// Simulated time the radio counters are normalized against.
    pub runtime: Dur,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoTraffic;

impl fmt::Display for NoTraffic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("no PUT was sent")
    }
}

impl core::error::Error for NoTraffic {}

impl MetricsLog {
    pub fn sent(&self) -> usize {
        self.puts.len()
    }

    pub fn acked(&self) -> usize {
        self.puts.iter().filter(|p| p.ack.is_some()).count()
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeRecord> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Sum of a counter over all non-noise nodes.
    pub fn total(&self, f: impl Fn(&NodeCounters) -> u64) -> u64 {
        self.nodes.iter().filter(|n| n.role != NodeRole::Noise).map(|n| f(&n.counters)).sum()
    }

    /// Successful round-trip times in ascending order.
    pub fn sorted_rtts(&self) -> Vec<Dur> {
        let mut v: Vec<Dur> = self.puts.iter().filter_map(PutRecord::rtt).collect();
        v.sort_unstable();
        v
    }
}

/// Packet delivery ratio: acknowledged PUTs over sent PUTs.
pub fn pdr(log: &MetricsLog) -> Result<f64, NoTraffic> {
    ratio(log.acked(), log.sent())
}

fn ratio(num: usize, den: usize) -> Result<f64, NoTraffic> {
    if den == 0 {
        Err(NoTraffic)
    } else {
        Ok(num as f64 / den as f64)
    }
}

/// Nearest-rank percentile of the successful RTTs; lost PUTs are excluded.
pub fn rtt_percentile(log: &MetricsLog, pct: u32) -> Option<Dur> {
    percentile(&log.sorted_rtts(), pct)
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[Dur], pct: u32) -> Option<Dur> {
    if sorted.is_empty() {
        return None;
    }
    let pct = pct.min(100) as usize;
    let rank = (pct * sorted.len()).div_ceil(100).max(1);
    Some(sorted[rank - 1])
}

/// Empirical RTT distribution over all sent PUTs, lost PUTs counting as an
/// infinite RTT. Points are spaced `resolution` apart from 0 up to the first
/// grid point at or above the largest RTT; the last value equals [`pdr`].
pub fn rtt_cdf(log: &MetricsLog, resolution: Dur) -> Result<Vec<(Dur, f64)>, NoTraffic> {
    assert!(resolution > Dur::ZERO);
    let sent = log.sent();
    if sent == 0 {
        return Err(NoTraffic);
    }
    let rtts = log.sorted_rtts();
    let max = rtts.last().copied().unwrap_or(Dur::ZERO);
    let steps = max.as_micros().div_ceil(resolution.as_micros());
    let mut out = Vec::with_capacity(steps as usize + 1);
    let mut idx = 0;
    for k in 0..=steps {
        let t = Dur(k * resolution.as_micros());
        while idx < rtts.len() && rtts[idx] <= t {
            idx += 1;
        }
        out.push((t, ratio(idx, sent)?));
    }
    Ok(out)
}

/// Fraction of the run spent transmitting and receiving.
pub fn radio_utilization(log: &MetricsLog, node: NodeId) -> Option<(f64, f64)> {
    let n = log.node(node)?;
    let rt = log.runtime.as_micros() as f64;
    if rt == 0.0 {
        return Some((0.0, 0.0));
    }
    Some((n.counters.tx_us as f64 / rt, n.counters.rx_us as f64 / rt))
}

/// Battery lifetime with the radio active for fraction `duty` of the time.
pub fn lifetime_hours(duty: f64, radio_current_ma: f64, battery_mah: f64) -> f64 {
    battery_mah / (duty * radio_current_ma)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FrameTotals {
    /// All link-layer frames sent by scenario nodes, background noise excluded.
    pub total: u64,
    pub by_kind: [u64; 5],
}

pub fn frame_totals(log: &MetricsLog) -> FrameTotals {
    let mut t = FrameTotals::default();
    for n in log.nodes.iter().filter(|n| n.role != NodeRole::Noise) {
        for (k, c) in n.counters.frames_tx.iter().enumerate() {
            t.by_kind[k] += c;
            t.total += c;
        }
    }
    t
}
