//! Discrete-event engine: runs a scenario to completion and returns its log.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::adv::{AdvEvent, AdvNode, AdvParams, AuxOutcome, LinkPacket, Service};
use crate::codec;
use crate::conn::{self, ConnParams, ConnTx, Connection, NodeBuffer};
use crate::medium::{air_time, FrameId, FrameKind, Medium, RadioFrame, RxLock, T_IFS};
use crate::metrics::{MetricsLog, NodeCounters, NodeRecord, NodeRole, PutRecord};
use crate::net::{self, Consumer, DatagramKind, IpDatagram, RouteTable, Topology, TrafficSpec};
use crate::rng::{stream, SimRng};
use crate::types::{BleAddress, Channel, Dur, Instant, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Adv,
    Conn,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Adv => "adv",
            Mode::Conn => "conn",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "adv" => Some(Mode::Adv),
            "conn" => Some(Mode::Conn),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Background legacy advertisers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoiseSpec {
    pub advertisers: usize,
    pub interval: Dur,
    pub payload: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { advertisers: 0, interval: Dur::from_millis(100), payload: crate::medium::LEGACY_ADV_PDU }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub mode: Mode,
    pub topology: Topology,
    /// Scenario nodes, consumer included.
    pub nodes: usize,
    /// Number of producers, taken from the highest node indices.
    pub producers: usize,
    pub adv: AdvParams,
    pub conn: ConnParams,
    pub traffic: TrafficSpec,
    pub noise: NoiseSpec,
    pub duration: Dur,
    pub seed: u64,
    /// Addresses of the scenario nodes; empty means derived from the index.
    pub addresses: Vec<BleAddress>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            mode: Mode::Adv,
            topology: Topology::Star,
            nodes: 15,
            producers: 14,
            adv: AdvParams::default(),
            conn: ConnParams::default(),
            traffic: TrafficSpec::default(),
            noise: NoiseSpec::default(),
            duration: Dur::from_secs(60),
            seed: 1,
            addresses: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvalidConfig(pub String);

impl fmt::Display for InvalidConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config: {}", self.0)
    }
}

impl core::error::Error for InvalidConfig {}

fn invalid<T>(msg: impl Into<String>) -> Result<T, InvalidConfig> {
    Err(InvalidConfig(msg.into()))
}

/// Parameters that [`ScenarioConfig::set`] and [`sweep`] accept.
pub const PARAMS: &[&str] = &[
    "mode",
    "topology",
    "nodes",
    "producers",
    "duration_us",
    "seed",
    "adv.interval_us",
    "adv.jitter_us",
    "adv.retransmissions",
    "adv.instances",
    "adv.link_queue",
    "conn.interval_lo_us",
    "conn.interval_hi_us",
    "conn.event_budget",
    "traffic.interval_us",
    "traffic.put_payload",
    "traffic.ack_payload",
    "noise.advertisers",
    "noise.interval_us",
];

impl ScenarioConfig {
    pub fn address(&self, node: usize) -> BleAddress {
        self.addresses.get(node).copied().unwrap_or(BleAddress::for_node(node as u16))
    }

    fn noise_address(&self, i: usize) -> BleAddress {
        BleAddress::for_node(0x8000 | i as u16)
    }

    pub fn validate(&self) -> Result<(), InvalidConfig> {
        if self.nodes < 2 || self.nodes > 0x7fff {
            return invalid(format!("nodes must be in 2..=32767, got {}", self.nodes));
        }
        if self.producers >= self.nodes {
            return invalid(format!("producers ({}) must be fewer than nodes ({})", self.producers, self.nodes));
        }
        if self.duration == Dur::ZERO {
            return invalid("duration must be positive");
        }
        if self.traffic.interval < Dur(2) {
            return invalid("traffic interval must be at least 2 us");
        }
        if self.traffic.ack_timeout == Dur::ZERO {
            return invalid("ack timeout must be positive");
        }
        let a = &self.adv;
        if a.adv_interval == Dur::ZERO {
            return invalid("advertising interval must be positive");
        }
        if a.instances == 0 || a.scan_rotation == Dur::ZERO || a.dedup_capacity == 0 {
            return invalid("instances, scan rotation and dedup capacity must be positive");
        }
        if a.aux_capacity == 0 || a.aux_capacity > 245 || a.max_chain == 0 {
            return invalid("aux capacity must be in 1..=245 and max chain positive");
        }
        let c = &self.conn;
        if c.interval_lo == Dur::ZERO || c.interval_lo > c.interval_hi {
            return invalid("connection interval bounds must satisfy 0 < lo <= hi");
        }
        if c.event_budget == 0 {
            return invalid("connection event budget must be positive");
        }
        if self.noise.advertisers > 0 && (self.noise.interval == Dur::ZERO || self.noise.payload > 255) {
            return invalid("noise interval must be positive and payload at most 255 bytes");
        }
        for payload in [self.traffic.put_payload, self.traffic.ack_payload] {
            let len = payload + self.traffic.hop_overhead;
            if len > a.mtu {
                return invalid(format!("packet of {len} bytes exceeds the MTU of {}", a.mtu));
            }
            match self.mode {
                Mode::Adv => {
                    if let Err(e) = codec::plan_aux(codec::block_len(len.max(8)), a.aux_capacity, a.max_chain) {
                        return invalid(format!("{len}-byte packet cannot be advertised: {e}"));
                    }
                }
                Mode::Conn => {
                    if len + conn::L2CAP_OVERHEAD > c.buffer_cap {
                        return invalid(format!("{len}-byte packet does not fit the connection buffer"));
                    }
                }
            }
        }
        if !self.addresses.is_empty() && self.addresses.len() != self.nodes {
            return invalid(format!("{} addresses given for {} nodes", self.addresses.len(), self.nodes));
        }
        let mut seen = BTreeSet::new();
        let all = (0..self.nodes)
            .map(|i| self.address(i))
            .chain((0..self.noise.advertisers).map(|i| self.noise_address(i)));
        for addr in all {
            if addr.is_broadcast() {
                return invalid("the broadcast address cannot be assigned to a node");
            }
            if !seen.insert(addr) {
                return invalid(format!("duplicate address {addr}"));
            }
        }
        Ok(())
    }

    /// Set one named parameter from its textual value.
    pub fn set(&mut self, name: &str, value: &str) -> Result<(), InvalidConfig> {
        fn num<T: core::str::FromStr>(name: &str, v: &str) -> Result<T, InvalidConfig> {
            v.trim().parse().map_err(|_| InvalidConfig(format!("{name}: cannot parse {v:?}")))
        }
        let us = |v: &str| num::<u64>(name, v).map(Dur);
        match name {
            "mode" => self.mode = Mode::parse(value).ok_or_else(|| InvalidConfig(format!("unknown mode {value:?}")))?,
            "topology" => {
                self.topology =
                    Topology::parse(value).ok_or_else(|| InvalidConfig(format!("unknown topology {value:?}")))?
            }
            "nodes" => self.nodes = num(name, value)?,
            "producers" => self.producers = num(name, value)?,
            "duration_us" => self.duration = us(value)?,
            "seed" => self.seed = num(name, value)?,
            "adv.interval_us" => self.adv.adv_interval = us(value)?,
            "adv.jitter_us" => self.adv.adv_jitter = us(value)?,
            "adv.retransmissions" => self.adv.retransmissions = num(name, value)?,
            "adv.instances" => self.adv.instances = num(name, value)?,
            "adv.link_queue" => self.adv.link_queue = num(name, value)?,
            "conn.interval_lo_us" => self.conn.interval_lo = us(value)?,
            "conn.interval_hi_us" => self.conn.interval_hi = us(value)?,
            "conn.event_budget" => self.conn.event_budget = num(name, value)?,
            "traffic.interval_us" => self.traffic.interval = us(value)?,
            "traffic.put_payload" => self.traffic.put_payload = num(name, value)?,
            "traffic.ack_payload" => self.traffic.ack_payload = num(name, value)?,
            "noise.advertisers" => self.noise.advertisers = num(name, value)?,
            "noise.interval_us" => self.noise.interval = us(value)?,
            _ => return invalid(format!("unknown parameter {name:?}")),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ev {
    FrameEnd(FrameId),
    TxDone(NodeId),
    AdvWake(NodeId),
    ProducerTick(NodeId),
    ConnAnchor(usize),
    Noise(usize),
    StopTraffic,
}

/// Pending events in `(time, insertion order)` order.
#[derive(Debug, Default)]
pub struct EventQueue<E> {
    pending: BTreeMap<(Instant, u64), E>,
    seq: u64,
}

impl<E> EventQueue<E> {
    pub fn new() -> EventQueue<E> {
        EventQueue { pending: BTreeMap::new(), seq: 0 }
    }

    pub fn push(&mut self, at: Instant, e: E) {
        self.pending.insert((at, self.seq), e);
        self.seq += 1;
    }

    pub fn pop(&mut self) -> Option<(Instant, E)> {
        self.pending.pop_first().map(|((t, _), e)| (t, e))
    }

    pub fn peek_time(&self) -> Option<Instant> {
        self.pending.first_key_value().map(|((t, _), _)| *t)
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }
}

#[derive(Debug)]
enum Payload {
    Adv(Rc<AdvEvent>),
    Conn { conn: usize, receiver: NodeId, receiver_addr: BleAddress },
    Noise,
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    now: Instant,
    queue: EventQueue<Ev>,
    medium: Medium<Payload>,
    addrs: Vec<BleAddress>,
    by_addr: BTreeMap<BleAddress, NodeId>,
    depth: Vec<u32>,
    routes: Vec<RouteTable>,
    roles: Vec<NodeRole>,
    counters: Vec<NodeCounters>,
    node_rng: Vec<SimRng>,
    traffic_rng: Vec<SimRng>,
    adv: Vec<AdvNode>,
    armed: Vec<Option<Instant>>,
    conns: Vec<Connection>,
    conn_rng: Vec<SimRng>,
    links: BTreeMap<(NodeId, NodeId), usize>,
    buffers: Vec<NodeBuffer>,
    in_event: Vec<Option<usize>>,
    noise_rng: Vec<SimRng>,
    dgrams: Vec<IpDatagram>,
    delivered: Vec<BTreeSet<u64>>,
    puts: Vec<PutRecord>,
    put_index: BTreeMap<u64, usize>,
    consumer: Consumer,
    traffic_on: bool,
}

const CONSUMER: NodeId = NodeId(0);

impl<'a> Sim<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Sim<'a> {
        let n = cfg.nodes;
        let k = cfg.noise.advertisers;
        let addrs: Vec<BleAddress> = (0..n).map(|i| cfg.address(i)).collect();
        let by_addr = addrs.iter().enumerate().map(|(i, a)| (*a, NodeId(i as u16))).collect();
        let parents = cfg.topology.parents(n);
        let depth = net::depths(&parents);
        let routes = RouteTable::for_tree(&parents, &addrs);
        let roles = (0..n + k)
            .map(|i| match i {
                0 => NodeRole::Consumer,
                i if i >= n => NodeRole::Noise,
                i if i >= n - cfg.producers => NodeRole::Producer,
                _ => NodeRole::Forwarder,
            })
            .collect();
        let mut node_rng: Vec<SimRng> = (0..n).map(|i| SimRng::new(cfg.seed, i as u64)).collect();
        let traffic_rng = (0..n).map(|i| SimRng::new(cfg.seed, stream::TRAFFIC_BASE + i as u64)).collect();
        let noise_rng = (0..k).map(|i| SimRng::new(cfg.seed, stream::NOISE_BASE + i as u64)).collect();

        let mut adv = Vec::new();
        let mut conns = Vec::new();
        let mut conn_rng = Vec::new();
        let mut links = BTreeMap::new();
        match cfg.mode {
            Mode::Adv => {
                for i in 0..n {
                    adv.push(AdvNode::new(NodeId(i as u16), addrs[i], cfg.adv.clone(), &mut node_rng[i]));
                }
            }
            Mode::Conn => {
                for (child, parent) in parents.iter().enumerate() {
                    let Some(p) = *parent else { continue };
                    let c = NodeId(child as u16);
                    let mut rng = SimRng::new(cfg.seed, stream::CONNECTION_BASE + conns.len() as u64);
                    let link = Connection::new((p, addrs[p.index()]), (c, addrs[child]), cfg.conn.clone(), &mut rng);
                    links.insert((p, c), conns.len());
                    links.insert((c, p), conns.len());
                    conns.push(link);
                    conn_rng.push(rng);
                }
            }
        }
        Sim {
            cfg,
            now: Instant::ZERO,
            queue: EventQueue::new(),
            medium: Medium::new(n + k),
            addrs,
            by_addr,
            depth,
            routes,
            roles,
            counters: vec![NodeCounters::default(); n + k],
            node_rng,
            traffic_rng,
            adv,
            armed: vec![None; n],
            conns,
            conn_rng,
            links,
            buffers: vec![NodeBuffer::new(cfg.conn.buffer_cap); n],
            in_event: vec![None; n],
            noise_rng,
            dgrams: Vec::new(),
            delivered: vec![BTreeSet::new(); n],
            puts: Vec::new(),
            put_index: BTreeMap::new(),
            consumer: Consumer::default(),
            traffic_on: true,
        }
    }

    fn counters(&mut self, n: NodeId) -> &mut NodeCounters {
        match self.cfg.mode {
            Mode::Adv if n.index() < self.adv.len() => &mut self.adv[n.index()].counters,
            _ => &mut self.counters[n.index()],
        }
    }

    fn schedule_start(&mut self) {
        for (i, role) in self.roles.clone().into_iter().enumerate() {
            if role == NodeRole::Producer {
                let t = self.cfg.traffic.first_tick(&mut self.traffic_rng[i]);
                self.queue.push(Instant::ZERO + t, Ev::ProducerTick(NodeId(i as u16)));
            }
        }
        for c in 0..self.conns.len() {
            self.queue.push(self.conns[c].next_anchor(), Ev::ConnAnchor(c));
        }
        for i in 0..self.cfg.noise.advertisers {
            let t = self.noise_rng[i].range_u64(0, self.cfg.noise.interval.as_micros() - 1);
            self.queue.push(Instant(t), Ev::Noise(i));
        }
        self.queue.push(Instant::ZERO + self.cfg.duration, Ev::StopTraffic);
    }

    fn run(mut self) -> MetricsLog {
        self.schedule_start();
        let end = Instant::ZERO + self.cfg.duration + self.cfg.traffic.ack_timeout;
        while let Some(t) = self.queue.peek_time() {
            if t > end {
                break;
            }
            let (t, ev) = self.queue.pop().expect("peeked");
            assert!(t >= self.now, "time went backwards");
            self.now = t;
            self.dispatch(ev);
        }
        self.now = end;
        self.finish()
    }

    fn dispatch(&mut self, ev: Ev) {
        match ev {
            Ev::FrameEnd(id) => self.frame_end(id),
            Ev::TxDone(n) => {
                self.adv[n.index()].tx_done(self.now);
                self.arm(n);
            }
            Ev::AdvWake(n) => self.adv_wake(n),
            Ev::ProducerTick(n) => self.producer_tick(n),
            Ev::ConnAnchor(c) => self.conn_anchor(c),
            Ev::Noise(i) => self.noise(i),
            Ev::StopTraffic => self.traffic_on = false,
        }
    }

    fn finish(mut self) -> MetricsLog {
        let now = self.now;
        for a in &mut self.adv {
            a.close(now);
        }
        for c in &mut self.conns {
            c.abort_event();
        }
        // Settle frames still on air so the medium totals reconcile.
        while let Some((_, ev)) = self.queue.pop() {
            if let Ev::FrameEnd(id) = ev {
                self.medium.resolve(id, &[]);
            }
        }
        let frames = self.medium.stats();
        assert!(frames.reconciles(), "frame conservation violated: {frames:?}");
        let n = self.cfg.nodes;
        let mut nodes = Vec::with_capacity(self.roles.len());
        for (i, role) in self.roles.iter().enumerate() {
            let mut counters = match (self.cfg.mode, i < n) {
                (Mode::Adv, true) => self.adv[i].counters.clone(),
                _ => self.counters[i].clone(),
            };
            if i < n {
                counters.buffer_high_water = counters.buffer_high_water.max(self.buffers[i].high_water as u64);
            }
            nodes.push(NodeRecord {
                id: NodeId(i as u16),
                role: *role,
                depth: if i < n { self.depth[i] } else { 0 },
                counters,
            });
        }
        MetricsLog { puts: self.puts, nodes, frames, runtime: self.now - Instant::ZERO }
    }

    // ---- IP layer ----

    fn new_datagram(&mut self, origin: NodeId, dest: BleAddress, payload_len: usize, kind: DatagramKind) -> u64 {
        let id = self.dgrams.len() as u64;
        self.dgrams.push(IpDatagram {
            id,
            origin: self.addrs[origin.index()],
            dest,
            payload_len,
            kind,
            created_at: self.now,
            hop_count: 0,
        });
        id
    }

    fn producer_tick(&mut self, n: NodeId) {
        if !self.traffic_on {
            return;
        }
        let consumer = self.addrs[CONSUMER.index()];
        let id = self.new_datagram(n, consumer, self.cfg.traffic.put_payload, DatagramKind::DataPut);
        self.put_index.insert(id, self.puts.len());
        self.puts.push(PutRecord { id, producer: n, send: self.now, ack: None, hops: self.depth[n.index()] });
        self.forward(n, id);
        let gap = self.cfg.traffic.next_gap(&mut self.traffic_rng[n.index()]);
        self.queue.push(self.now + gap, Ev::ProducerTick(n));
    }

    fn ip_receive(&mut self, n: NodeId, id: u64) {
        if !self.delivered[n.index()].insert(id) {
            self.counters(n).ip_duplicates += 1;
            return;
        }
        let d = &self.dgrams[id as usize];
        if d.dest != self.addrs[n.index()] {
            self.forward(n, id);
            return;
        }
        match d.kind {
            DatagramKind::DataPut => {
                if n != CONSUMER {
                    return;
                }
                self.consumer.on_put(id);
                let origin = d.origin;
                let ack = self.new_datagram(n, origin, self.cfg.traffic.ack_payload, DatagramKind::EmptyAck { put: id });
                self.forward(n, ack);
            }
            DatagramKind::EmptyAck { put } => {
                let timeout = self.cfg.traffic.ack_timeout;
                if let Some(&i) = self.put_index.get(&put) {
                    let rec = &mut self.puts[i];
                    if rec.ack.is_none() && self.now - rec.send <= timeout {
                        rec.ack = Some(self.now);
                    }
                }
            }
        }
    }

    fn forward(&mut self, n: NodeId, id: u64) {
        let dest = self.dgrams[id as usize].dest;
        let next = match self.routes[n.index()].lookup(dest) {
            Ok(next) => next,
            Err(_) => {
                self.counters(n).no_route_drops += 1;
                return;
            }
        };
        self.dgrams[id as usize].hop_count += 1;
        let overhead = self.cfg.traffic.hop_overhead;
        match self.cfg.mode {
            Mode::Adv => {
                let ip = self.dgrams[id as usize].wire_bytes(overhead);
                // Overflow is counted by the MAC.
                let _ = self.adv[n.index()].enqueue_ip(self.now, LinkPacket { dgram: id, dest: next, ip });
                self.arm(n);
            }
            Mode::Conn => {
                let peer = self.by_addr[&next];
                let c = self.links[&(n, peer)];
                let len = self.dgrams[id as usize].link_len(overhead);
                let dir = self.conns[c].direction_from(n);
                if self.conns[c].enqueue(dir, id, len, &mut self.buffers[n.index()]).is_err() {
                    self.counters[n.index()].queue_drops += 1;
                }
            }
        }
    }

    // ---- medium ----

    fn listeners(&self) -> Vec<RxLock> {
        self.adv.iter().filter_map(|a| a.rx_lock(self.now)).collect()
    }

    fn frame_end(&mut self, id: FrameId) {
        let listeners = match self.cfg.mode {
            Mode::Adv => self.listeners(),
            Mode::Conn => Vec::new(),
        };
        // Connection frames are heard by their receiver only.
        let res = match self.medium.peek_payload(id) {
            Some(Payload::Conn { receiver, receiver_addr, .. }) => {
                let (receiver, receiver_addr) = (*receiver, *receiver_addr);
                let (ch, from, until) = self.medium.peek_span(id).expect("frame on air");
                self.medium.resolve(id, &[RxLock { node: receiver, address: receiver_addr, channel: ch, from, until }])
            }
            _ => self.medium.resolve(id, &listeners),
        };
        match &res.frame.payload {
            Payload::Adv(ev) => {
                let ev = ev.clone();
                self.adv_frame_end(&ev, res.frame.kind, res.frame.chain_index as usize, res.collided, &res.delivered);
            }
            Payload::Conn { conn, receiver, .. } => {
                let ok = res.delivered.contains(receiver);
                self.conn_frame_end(*conn, *receiver, ok);
            }
            Payload::Noise => {}
        }
    }

    // ---- advertising mode ----

    fn arm(&mut self, n: NodeId) {
        let i = n.index();
        match self.adv[i].next_due() {
            None => self.armed[i] = None,
            Some(due) => {
                let t = due.max(self.now);
                if self.armed[i] != Some(t) {
                    self.armed[i] = Some(t);
                    self.queue.push(t, Ev::AdvWake(n));
                }
            }
        }
    }

    fn adv_wake(&mut self, n: NodeId) {
        let i = n.index();
        if self.armed[i] != Some(self.now) {
            return;
        }
        self.armed[i] = None;
        match self.adv[i].service(self.now, &mut self.node_rng[i]) {
            Service::Transmit { event, frames, ends } => {
                for f in frames {
                    let frame = RadioFrame {
                        sender: n,
                        channel: f.channel,
                        t_start: f.t_start,
                        air_time: f.air_time,
                        kind: f.kind,
                        directed_to: f.directed_to,
                        event_id: event.event_id,
                        chain_index: f.chain_index,
                        payload: Payload::Adv(event.clone()),
                    };
                    let t_end = frame.t_end();
                    let id = self.medium.transmit(frame).expect("advertiser radio is idle");
                    self.queue.push(t_end, Ev::FrameEnd(id));
                }
                self.queue.push(ends, Ev::TxDone(n));
            }
            Service::Busy(_) => {}
            Service::Dropped(_) | Service::Idle => self.arm(n),
        }
    }

    fn adv_frame_end(&mut self, ev: &Rc<AdvEvent>, kind: FrameKind, index: usize, collided: bool, delivered: &[NodeId]) {
        if kind == FrameKind::ExtInd {
            for &n in delivered {
                self.adv[n.index()].on_pointer(self.now, ev);
            }
            if !collided {
                for a in &mut self.adv {
                    if a.id != ev.sender && !delivered.contains(&a.id) {
                        a.note_missed_pointer(ev);
                    }
                }
            }
            return;
        }
        for i in 0..self.adv.len() {
            let n = NodeId(i as u16);
            if !self.adv[i].expects(ev.sender, ev.event_id, index) {
                continue;
            }
            let outcome = match ev.directed_to {
                Some(to) if to != self.addrs[i] => AuxOutcome::Filtered,
                _ if delivered.contains(&n) => AuxOutcome::Delivered,
                _ => AuxOutcome::Missed,
            };
            let received = self.adv[i].on_aux(self.now, index, outcome);
            if let Some(r) = received {
                if let Some(id) = IpDatagram::id_from_wire(&r.ip) {
                    self.ip_receive(n, id);
                }
            }
            self.arm(n);
        }
    }

    // ---- connection mode ----

    fn conn_anchor(&mut self, c: usize) {
        let (a, b) = (self.conns[c].coordinator, self.conns[c].subordinate);
        let busy_a = self.in_event[a.index()].is_some();
        let busy_b = self.in_event[b.index()].is_some();
        if busy_a || busy_b {
            for (n, busy) in [(a, busy_a), (b, busy_b)] {
                if busy {
                    self.counters[n.index()].conn_events_skipped += 1;
                }
            }
            self.conns[c].skip_event(&mut self.conn_rng[c]);
            self.queue.push(self.conns[c].next_anchor(), Ev::ConnAnchor(c));
            return;
        }
        self.in_event[a.index()] = Some(c);
        self.in_event[b.index()] = Some(c);
        self.counters[a.index()].conn_events += 1;
        self.counters[b.index()].conn_events += 1;
        let tx = self.conns[c].open_event(&mut self.conn_rng[c]);
        self.send_conn(c, tx);
    }

    fn send_conn(&mut self, c: usize, tx: ConnTx) {
        let frame = RadioFrame {
            sender: tx.sender,
            channel: tx.channel,
            t_start: tx.t_start,
            air_time: tx.air_time,
            kind: FrameKind::ConnData,
            directed_to: Some(tx.receiver_addr),
            event_id: c as u64,
            chain_index: 0,
            payload: Payload::Conn { conn: c, receiver: tx.receiver, receiver_addr: tx.receiver_addr },
        };
        let t_end = frame.t_end();
        self.counters[tx.sender.index()].count_tx(FrameKind::ConnData, tx.channel, tx.air_time);
        self.counters[tx.receiver.index()].rx_us += tx.air_time.as_micros();
        let id = self.medium.transmit(frame).expect("connection radio is idle");
        self.queue.push(t_end, Ev::FrameEnd(id));
    }

    fn conn_frame_end(&mut self, c: usize, receiver: NodeId, ok: bool) {
        if ok {
            self.counters[receiver.index()].frames_rx[FrameKind::ConnData.index()] += 1;
        }
        if let Some(done) = self.conns[c].frame_end(ok) {
            if let Some(f) = done.frame {
                let sender = self.conns[c].sender(done.dir);
                self.buffers[sender.index()].release(f.len);
                if f.last {
                    self.ip_receive(receiver, f.dgram);
                }
            }
            if let Some(tx) = self.conns[c].continue_event(self.now) {
                self.send_conn(c, tx);
                return;
            }
        }
        let conn = &self.conns[c];
        self.in_event[conn.coordinator.index()] = None;
        self.in_event[conn.subordinate.index()] = None;
        self.queue.push(conn.next_anchor(), Ev::ConnAnchor(c));
    }

    // ---- background noise ----

    fn noise(&mut self, i: usize) {
        let sender = NodeId((self.cfg.nodes + i) as u16);
        let air = air_time(self.cfg.noise.payload);
        let mut t = self.now;
        for ch in Channel::PRIMARY {
            let frame = RadioFrame {
                sender,
                channel: ch,
                t_start: t,
                air_time: air,
                kind: FrameKind::LegacyAdv,
                directed_to: None,
                event_id: 0,
                chain_index: 0,
                payload: Payload::Noise,
            };
            let t_end = frame.t_end();
            let id = self.medium.transmit(frame).expect("noise radio is idle");
            self.counters[sender.index()].count_tx(FrameKind::LegacyAdv, ch, air);
            self.queue.push(t_end, Ev::FrameEnd(id));
            t = t_end + T_IFS;
        }
        let jitter = self.noise_rng[i].uniform_range(Dur::ZERO, Dur::from_millis(10));
        self.queue.push(self.now + self.cfg.noise.interval + jitter, Ev::Noise(i));
    }
}

/// Run one scenario to completion.
pub fn run(cfg: &ScenarioConfig) -> Result<MetricsLog, InvalidConfig> {
    cfg.validate()?;
    Ok(Sim::new(cfg).run())
}

/// One run per value of `param`; run `i` uses seed `template.seed + i`.
pub fn sweep(template: &ScenarioConfig, param: &str, values: &[&str]) -> Result<Vec<MetricsLog>, InvalidConfig> {
    sweep_configs(template, param, values)?.iter().map(run).collect()
}

/// The configurations [`sweep`] runs, validated.
pub fn sweep_configs(template: &ScenarioConfig, param: &str, values: &[&str]) -> Result<Vec<ScenarioConfig>, InvalidConfig> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut cfg = template.clone();
            cfg.set(param, v)?;
            cfg.seed = template.seed.wrapping_add(i as u64);
            cfg.validate()?;
            Ok(cfg)
        })
        .collect()
}
