//! IP layer: datagrams, static routes over the scenario topologies, and the
//! producer/consumer traffic model.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::rng::SimRng;
use crate::types::{BleAddress, Dur, Instant, NodeId};

pub const DEFAULT_PUT_PAYLOAD: usize = 100;
pub const DEFAULT_ACK_PAYLOAD: usize = 8;
pub const DEFAULT_HOP_OVERHEAD: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatagramKind {
    DataPut,
    /// Acknowledges the PUT carried by datagram `put`.
    EmptyAck { put: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IpDatagram {
    pub id: u64,
    pub origin: BleAddress,
    pub dest: BleAddress,
    pub payload_len: usize,
    pub kind: DatagramKind,
    pub created_at: Instant,
    pub hop_count: u32,
}

impl IpDatagram {
    /// Size of the packet on a link, header overhead included.
    pub fn link_len(&self, hop_overhead: usize) -> usize {
        self.payload_len + hop_overhead
    }

    /// Bytes handed to a MAC that carries real payloads: the id followed by filler.
    pub fn wire_bytes(&self, hop_overhead: usize) -> Vec<u8> {
        let len = self.link_len(hop_overhead).max(8);
        let mut b = vec![0u8; len];
        b[..8].copy_from_slice(&self.id.to_le_bytes());
        for (i, x) in b[8..].iter_mut().enumerate() {
            *x = i as u8;
        }
        b
    }

    pub fn id_from_wire(bytes: &[u8]) -> Option<u64> {
        Some(u64::from_le_bytes(bytes.get(..8)?.try_into().ok()?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Topology {
    Star,
    Tree,
    Line,
}

impl Topology {
    pub const ALL: [Topology; 3] = [Topology::Star, Topology::Tree, Topology::Line];

    pub fn name(self) -> &'static str {
        match self {
            Topology::Star => "star",
            Topology::Tree => "tree",
            Topology::Line => "line",
        }
    }

    pub fn parse(s: &str) -> Option<Topology> {
        Topology::ALL.into_iter().find(|t| t.name() == s)
    }

    /// Parent of every node; node 0 is the consumer and has none.
    ///
    /// The tree is filled breadth-first with three children below the root
    /// and two below every other node.
    pub fn parents(self, nodes: usize) -> Vec<Option<NodeId>> {
        let mut p = vec![None; nodes];
        match self {
            Topology::Star => {
                for x in p.iter_mut().skip(1) {
                    *x = Some(NodeId(0));
                }
            }
            Topology::Line => {
                for (i, x) in p.iter_mut().enumerate().skip(1) {
                    *x = Some(NodeId(i as u16 - 1));
                }
            }
            Topology::Tree => {
                let mut next = 1;
                let mut parent = 0;
                while next < nodes {
                    let fan = if parent == 0 { 3 } else { 2 };
                    for _ in 0..fan {
                        if next < nodes {
                            p[next] = Some(NodeId(parent as u16));
                            next += 1;
                        }
                    }
                    parent += 1;
                }
            }
        }
        p
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Hop distance of each node to the root of `parents`.
pub fn depths(parents: &[Option<NodeId>]) -> Vec<u32> {
    (0..parents.len())
        .map(|mut n| {
            let mut hops = 0;
            while let Some(p) = parents[n] {
                hops += 1;
                n = p.index();
            }
            hops
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoRoute {
    pub dest: BleAddress,
}

impl fmt::Display for NoRoute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "no route to {}", self.dest)
    }
}

impl core::error::Error for NoRoute {}

/// Final destination to next hop.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RouteTable {
    routes: BTreeMap<BleAddress, BleAddress>,
}

impl RouteTable {
    pub fn insert(&mut self, dest: BleAddress, next_hop: BleAddress) {
        self.routes.insert(dest, next_hop);
    }

    pub fn lookup(&self, dest: BleAddress) -> Result<BleAddress, NoRoute> {
        self.routes.get(&dest).copied().ok_or(NoRoute { dest })
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    /// Loop-free routes for every node of a tree: down into the subtree that
    /// holds the destination, otherwise up to the parent.
    pub fn for_tree(parents: &[Option<NodeId>], addrs: &[BleAddress]) -> Vec<RouteTable> {
        let n = parents.len();
        let mut tables = vec![RouteTable::default(); n];
        for dest in 0..n {
            // Walk from the destination to the root; each ancestor routes down
            // through the child on that path.
            let mut child = dest;
            while let Some(p) = parents[child] {
                tables[p.index()].insert(addrs[dest], addrs[child]);
                child = p.index();
            }
        }
        for (node, table) in tables.iter_mut().enumerate() {
            if let Some(p) = parents[node] {
                for dest in 0..n {
                    if dest != node && !table.routes.contains_key(&addrs[dest]) {
                        table.insert(addrs[dest], addrs[p.index()]);
                    }
                }
            }
        }
        tables
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficSpec {
    pub interval: Dur,
    pub put_payload: usize,
    pub ack_payload: usize,
    pub ack_timeout: Dur,
    /// Link header overhead added on every hop.
    pub hop_overhead: usize,
}

impl Default for TrafficSpec {
    fn default() -> Self {
        TrafficSpec {
            interval: Dur::from_secs(1),
            put_payload: DEFAULT_PUT_PAYLOAD,
            ack_payload: DEFAULT_ACK_PAYLOAD,
            ack_timeout: Dur::from_secs(10),
            hop_overhead: DEFAULT_HOP_OVERHEAD,
        }
    }
}

impl TrafficSpec {
    /// Offset of a producer's first PUT, uniform in `[0, interval)`.
    pub fn first_tick(&self, rng: &mut SimRng) -> Dur {
        Dur(rng.range_u64(0, self.interval.as_micros().max(1) - 1))
    }

    /// Gap to the next PUT: the interval with ±50% uniform jitter.
    pub fn next_gap(&self, rng: &mut SimRng) -> Dur {
        let i = self.interval.as_micros();
        Dur(rng.range_u64(i - i / 2, i + i / 2))
    }
}

/// Consumer-side bookkeeping: every PUT is acknowledged, duplicates included,
/// but counted once.
#[derive(Debug, Clone, Default)]
pub struct Consumer {
    received: BTreeMap<u64, u32>,
}

impl Consumer {
    /// Record PUT `put`; returns `true` the first time it is seen.
    pub fn on_put(&mut self, put: u64) -> bool {
        let n = self.received.entry(put).or_insert(0);
        *n += 1;
        *n == 1
    }

    pub fn unique_puts(&self) -> usize {
        self.received.len()
    }

    pub fn duplicate_puts(&self) -> u64 {
        self.received.values().map(|&n| u64::from(n - 1)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addrs(n: usize) -> Vec<BleAddress> {
        (0..n).map(|i| BleAddress::for_node(i as u16)).collect()
    }

    fn hops_between(tables: &[RouteTable], addrs: &[BleAddress], from: usize, to: usize) -> Option<usize> {
        let mut at = from;
        let mut hops = 0;
        while at != to {
            let next = tables[at].lookup(addrs[to]).ok()?;
            at = addrs.iter().position(|a| *a == next)?;
            hops += 1;
            if hops > addrs.len() {
                return None;
            }
        }
        Some(hops)
    }

    #[test]
    fn topology_depths() {
        let max = |t: Topology| depths(&t.parents(15)).into_iter().max().unwrap();
        assert_eq!(max(Topology::Star), 1);
        assert_eq!(max(Topology::Tree), 3);
        assert_eq!(max(Topology::Line), 14);
        let tree = Topology::Tree.parents(15);
        assert_eq!(tree.iter().filter(|p| **p == Some(NodeId(0))).count(), 3);
        assert_eq!(tree[14], Some(NodeId(6)));
    }

    #[test]
    fn line_producer_traverses_fourteen_hops() {
        let a = addrs(15);
        let t = RouteTable::for_tree(&Topology::Line.parents(15), &a);
        assert_eq!(hops_between(&t, &a, 14, 0), Some(14));
        assert_eq!(hops_between(&t, &a, 0, 14), Some(14));
    }

    #[test]
    fn routes_reach_everything_without_loops() {
        for topo in Topology::ALL {
            let parents = topo.parents(15);
            let a = addrs(15);
            let t = RouteTable::for_tree(&parents, &a);
            let d = depths(&parents);
            for from in 0..15 {
                assert_eq!(hops_between(&t, &a, from, 0), Some(d[from] as usize));
                for to in 0..15 {
                    assert!(hops_between(&t, &a, from, to).is_some(), "{topo} {from}->{to}");
                }
            }
        }
    }

    #[test]
    fn unknown_destination_has_no_route() {
        let a = addrs(3);
        let t = RouteTable::for_tree(&Topology::Star.parents(3), &a);
        let stranger = BleAddress::for_node(99);
        assert_eq!(t[1].lookup(a[2]), Ok(a[0]));
        assert!(t[1].lookup(stranger).is_err());
        assert_eq!(t[0].lookup(stranger), Err(NoRoute { dest: stranger }));
    }

    #[test]
    fn producer_jitter_bounds() {
        let mut rng = SimRng::new(3, 3);
        for secs in [1, 5] {
            let spec = TrafficSpec { interval: Dur::from_secs(secs), ..TrafficSpec::default() };
            for _ in 0..1_000 {
                let g = spec.next_gap(&mut rng);
                assert!(g >= Dur::from_millis(500 * secs) && g <= Dur::from_millis(1_500 * secs));
                assert!(spec.first_tick(&mut rng) < spec.interval);
            }
        }
    }

    #[test]
    fn consumer_counts_puts_once() {
        let mut c = Consumer::default();
        assert!(c.on_put(4));
        assert!(!c.on_put(4));
        assert!(c.on_put(5));
        assert_eq!((c.unique_puts(), c.duplicate_puts()), (2, 1));
    }

    #[test]
    fn wire_roundtrip() {
        let d = IpDatagram {
            id: 0x0102_0304_0506,
            origin: BleAddress::for_node(1),
            dest: BleAddress::for_node(0),
            payload_len: 100,
            kind: DatagramKind::DataPut,
            created_at: Instant(0),
            hop_count: 0,
        };
        let w = d.wire_bytes(10);
        assert_eq!(w.len(), 110);
        assert_eq!(IpDatagram::id_from_wire(&w), Some(d.id));
    }
}
