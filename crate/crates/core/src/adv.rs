//! Connection-less MAC: IP datagrams carried in extended advertising events.
//!
//! Each datagram becomes an advertising instance that is repeated in
//! `retransmissions + 1` events. The radio scans continuously whenever it is
//! not transmitting, follows the first aux pointer it hears and filters
//! repeated payloads with the per-source sequence number.

use alloc::collections::VecDeque;
use alloc::rc::Rc;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::codec::{self, AuxPlan, CodecError};
use crate::dedup::{DedupTable, Verdict};
use crate::medium::{air_time, FrameKind, RxLock, EXT_IND_PDU, T_IFS, T_MAFS};
use crate::metrics::NodeCounters;
use crate::rng::SimRng;
use crate::types::{BleAddress, Channel, Dur, Instant, NodeId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdvParams {
    pub adv_interval: Dur,
    /// Upper bound of the random delay added to every advertising interval.
    pub adv_jitter: Dur,
    pub retransmissions: u8,
    pub instances: usize,
    pub link_queue: usize,
    pub setup_delay: Dur,
    pub aux_capacity: usize,
    pub max_chain: usize,
    pub service_uuid: u16,
    pub mtu: usize,
    /// Time the scanner stays on one primary channel.
    pub scan_rotation: Dur,
    /// Receiver ramp-up after every retune; the radio hears nothing meanwhile.
    pub radio_switch: Dur,
    pub dedup_capacity: usize,
}

impl Default for AdvParams {
    fn default() -> Self {
        AdvParams {
            adv_interval: Dur::from_millis(50),
            adv_jitter: Dur::from_millis(10),
            retransmissions: 2,
            instances: 10,
            link_queue: 4,
            setup_delay: Dur::from_millis(1),
            aux_capacity: codec::DEFAULT_AUX_CAPACITY,
            max_chain: codec::DEFAULT_MAX_CHAIN,
            service_uuid: codec::DEFAULT_SERVICE_UUID,
            mtu: codec::DEFAULT_MTU,
            scan_rotation: Dur::from_millis(30),
            radio_switch: Dur(130),
            dedup_capacity: crate::dedup::DEFAULT_CAPACITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdvError {
    QueueOverflow,
    Codec(CodecError),
}

impl fmt::Display for AdvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdvError::QueueOverflow => f.write_str("advertising instances and link queue are full"),
            AdvError::Codec(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for AdvError {}

impl From<CodecError> for AdvError {
    fn from(e: CodecError) -> Self {
        AdvError::Codec(e)
    }
}

/// An IP packet handed to the MAC for one link hop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkPacket {
    pub dgram: u64,
    /// Link-layer destination; [`BleAddress::BROADCAST`] sends undirected.
    pub dest: BleAddress,
    pub ip: Vec<u8>,
}

/// One advertising event as seen on air. Shared by all of its frames.
#[derive(Debug)]
pub struct AdvEvent {
    pub sender: NodeId,
    pub sender_addr: BleAddress,
    pub event_id: u64,
    pub data_channel: Channel,
    pub aux_start: Instant,
    pub directed_to: Option<BleAddress>,
    pub block: Rc<[u8]>,
    pub ranges: Vec<Range<usize>>,
}

impl AdvEvent {
    pub fn frame_count(&self) -> usize {
        self.ranges.len()
    }
}

/// A frame the MAC wants on the medium.
#[derive(Debug, Clone)]
pub struct AdvTx {
    pub channel: Channel,
    pub t_start: Instant,
    pub air_time: Dur,
    pub kind: FrameKind,
    pub directed_to: Option<BleAddress>,
    pub chain_index: u16,
}

#[derive(Debug, Clone)]
pub struct AdvInstance {
    order: u64,
    pub seq: u8,
    pub dgram: u64,
    block: Rc<[u8]>,
    pub aux_plan: AuxPlan,
    pub remaining_events: u16,
    pub next_event_at: Instant,
    pub directed_to: Option<BleAddress>,
}

#[derive(Debug)]
pub struct AuxRx {
    since: Instant,
    event: Rc<AdvEvent>,
    next_index: usize,
    parts: Vec<u8>,
}

#[derive(Debug)]
pub enum Radio {
    Scan { since: Instant },
    AuxRx(AuxRx),
    Tx { until: Instant },
}

/// Result of servicing due advertising instances.
#[derive(Debug)]
pub enum Service {
    Transmit { event: Rc<AdvEvent>, frames: Vec<AdvTx>, ends: Instant },
    /// Due instances were dropped because the radio was receiving an aux chain.
    Dropped(usize),
    /// Radio is transmitting; retry then.
    Busy(Instant),
    Idle,
}

/// Outcome of an aux frame for a node committed to its chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxOutcome {
    Delivered,
    /// Heard, but directed to another node.
    Filtered,
    /// Collided or not heard.
    Missed,
}

/// A datagram handed up to IP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Received {
    pub from: BleAddress,
    pub ip: Vec<u8>,
}

#[derive(Debug)]
pub struct AdvNode {
    pub id: NodeId,
    pub addr: BleAddress,
    params: AdvParams,
    next_seq: u8,
    next_order: u64,
    next_event_id: u64,
    instances: Vec<AdvInstance>,
    queue: VecDeque<LinkPacket>,
    dedup: DedupTable,
    scan_phase: u64,
    radio: Radio,
    last_missed: Option<(NodeId, u64)>,
    pub counters: NodeCounters,
}

impl AdvNode {
    pub fn new(id: NodeId, addr: BleAddress, params: AdvParams, rng: &mut SimRng) -> AdvNode {
        let rot = params.scan_rotation.as_micros().max(1);
        let scan_phase = rng.range_u64(0, rot - 1);
        AdvNode {
            id,
            addr,
            dedup: DedupTable::new(params.dedup_capacity),
            params,
            next_seq: 0,
            next_order: 0,
            next_event_id: 0,
            instances: Vec::new(),
            queue: VecDeque::new(),
            scan_phase,
            radio: Radio::Scan { since: Instant::ZERO },
            last_missed: None,
            counters: NodeCounters::default(),
        }
    }

    pub fn params(&self) -> &AdvParams {
        &self.params
    }

    pub fn radio(&self) -> &Radio {
        &self.radio
    }

    pub fn instances(&self) -> &[AdvInstance] {
        &self.instances
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    fn rotation(&self) -> u64 {
        self.params.scan_rotation.as_micros().max(1)
    }

    fn slot(&self, t: Instant) -> u64 {
        (t.as_micros() + self.scan_phase) / self.rotation()
    }

    fn slot_bounds(&self, slot: u64) -> (Instant, Instant) {
        let rot = self.rotation();
        let start = (slot * rot).saturating_sub(self.scan_phase);
        let end = ((slot + 1) * rot).saturating_sub(self.scan_phase);
        (Instant(start), Instant(end))
    }

    /// Primary channel the scanner is tuned to at `t`.
    pub fn scan_channel_at(&self, t: Instant) -> Channel {
        Channel::PRIMARY[(self.slot(t) % 3) as usize]
    }

    /// Listening window that contains `now`, if the radio is receiving.
    pub fn rx_lock(&self, now: Instant) -> Option<RxLock> {
        let ramp = self.params.radio_switch;
        match &self.radio {
            Radio::Scan { since } => {
                // A frame ending exactly at a slot boundary belongs to the slot before it.
                let probe = Instant(now.as_micros().saturating_sub(1).max(since.as_micros()));
                let slot = self.slot(probe);
                let (start, end) = self.slot_bounds(slot);
                Some(RxLock {
                    node: self.id,
                    address: self.addr,
                    channel: Channel::PRIMARY[(slot % 3) as usize],
                    from: (*since).max(start) + ramp,
                    until: end,
                })
            }
            Radio::AuxRx(rx) => Some(RxLock {
                node: self.id,
                address: self.addr,
                channel: rx.event.data_channel,
                from: rx.since + ramp,
                until: Instant(u64::MAX),
            }),
            Radio::Tx { .. } => None,
        }
    }

    /// Microseconds actually listening while scanning over `[from, to)`.
    pub fn scan_listen_time(&self, from: Instant, to: Instant) -> u64 {
        let (a, b) = (from.as_micros(), to.as_micros());
        if b <= a {
            return 0;
        }
        let ramp = self.params.radio_switch.as_micros();
        let mut dead_until = a + ramp;
        let mut dead = dead_until.min(b) - a;
        let mut slot = self.slot(from) + 1;
        loop {
            let (boundary, _) = self.slot_bounds(slot);
            let boundary = boundary.as_micros();
            if boundary >= b {
                break;
            }
            let s = boundary.max(dead_until);
            let e = (boundary + ramp).min(b);
            if e > s {
                dead += e - s;
            }
            dead_until = dead_until.max(boundary + ramp);
            slot += 1;
        }
        (b - a) - dead
    }

    fn leave_radio_state(&mut self, now: Instant) {
        let listened = match &self.radio {
            Radio::Scan { since } => self.scan_listen_time(*since, now),
            Radio::AuxRx(rx) => {
                let span = now.since(rx.since).as_micros();
                span - span.min(self.params.radio_switch.as_micros())
            }
            Radio::Tx { .. } => 0,
        };
        self.counters.rx_us += listened;
    }

    fn set_radio(&mut self, now: Instant, radio: Radio) {
        self.leave_radio_state(now);
        self.radio = radio;
    }

    /// Flush radio time accounting at the end of a run.
    pub fn close(&mut self, now: Instant) {
        self.set_radio(now, Radio::Scan { since: now });
    }

    fn dest_busy(&self, dest: BleAddress) -> bool {
        self.instances.iter().any(|i| match i.directed_to {
            None => true,
            Some(d) => dest.is_broadcast() || d == dest,
        })
    }

    /// Hand a datagram to the MAC.
    ///
    /// A free instance slot is used immediately unless an instance to the
    /// same destination is still repeating; otherwise the datagram waits in
    /// the link queue.
    pub fn enqueue_ip(&mut self, now: Instant, pkt: LinkPacket) -> Result<(), AdvError> {
        if pkt.ip.len() > self.params.mtu {
            return Err(CodecError::PayloadTooLarge { len: pkt.ip.len(), mtu: self.params.mtu }.into());
        }
        if self.instances.len() < self.params.instances && !self.dest_busy(pkt.dest) {
            return self.start_instance(now, pkt);
        }
        if self.queue.len() >= self.params.link_queue {
            self.counters.queue_drops += 1;
            return Err(AdvError::QueueOverflow);
        }
        self.queue.push_back(pkt);
        Ok(())
    }

    fn start_instance(&mut self, now: Instant, pkt: LinkPacket) -> Result<(), AdvError> {
        let seq = self.next_seq;
        let block = codec::encode_with_mtu(&pkt.ip, seq, self.params.service_uuid, self.params.mtu)?;
        let aux_plan = codec::plan_aux(block.len(), self.params.aux_capacity, self.params.max_chain)?;
        self.next_seq = self.next_seq.wrapping_add(1);
        self.instances.push(AdvInstance {
            order: self.next_order,
            seq,
            dgram: pkt.dgram,
            block: Rc::from(block.into_bytes()),
            aux_plan,
            remaining_events: u16::from(self.params.retransmissions) + 1,
            next_event_at: now + self.params.setup_delay,
            directed_to: (!pkt.dest.is_broadcast()).then_some(pkt.dest),
        });
        self.next_order += 1;
        Ok(())
    }

    fn promote(&mut self, now: Instant) {
        while self.instances.len() < self.params.instances {
            let Some(pos) = self.queue.iter().position(|p| !self.dest_busy(p.dest)) else {
                return;
            };
            let pkt = self.queue.remove(pos).expect("position is valid");
            if self.start_instance(now, pkt).is_err() {
                self.counters.queue_drops += 1;
            }
        }
    }

    /// Earliest instant an instance wants the radio.
    pub fn next_due(&self) -> Option<Instant> {
        self.instances.iter().map(|i| i.next_event_at).min()
    }

    fn reschedule(&mut self, idx: usize, from: Instant, rng: &mut SimRng) {
        let jitter = rng.uniform_range(Dur::ZERO, self.params.adv_jitter);
        let inst = &mut self.instances[idx];
        inst.remaining_events -= 1;
        inst.next_event_at = from + self.params.adv_interval + jitter;
    }

    fn retire_finished(&mut self, now: Instant) {
        let before = self.instances.len();
        self.instances.retain(|i| i.remaining_events > 0);
        if self.instances.len() != before {
            self.promote(now);
        }
    }

    /// Run whatever advertising events are due at `now`.
    pub fn service(&mut self, now: Instant, rng: &mut SimRng) -> Service {
        let mut due: Vec<usize> = (0..self.instances.len())
            .filter(|&i| self.instances[i].next_event_at <= now)
            .collect();
        if due.is_empty() {
            return Service::Idle;
        }
        match self.radio {
            Radio::Tx { until } => Service::Busy(until),
            Radio::AuxRx(_) => {
                for &i in &due {
                    let at = self.instances[i].next_event_at;
                    self.reschedule(i, at, rng);
                }
                self.counters.dropped_adv_events += due.len() as u64;
                self.retire_finished(now);
                Service::Dropped(due.len())
            }
            Radio::Scan { .. } => {
                due.sort_by_key(|&i| self.instances[i].order);
                let idx = due[0];
                let (event, frames, ends) = self.build_event(idx, now, rng);
                self.reschedule(idx, now, rng);
                for f in &frames {
                    self.counters.count_tx(f.kind, f.channel, f.air_time);
                }
                self.counters.adv_events += 1;
                self.set_radio(now, Radio::Tx { until: ends });
                self.retire_finished(now);
                Service::Transmit { event, frames, ends }
            }
        }
    }

    fn build_event(&mut self, idx: usize, now: Instant, rng: &mut SimRng) -> (Rc<AdvEvent>, Vec<AdvTx>, Instant) {
        let inst = &self.instances[idx];
        let data_channel = Channel::Data(rng.range_u64(0, u64::from(Channel::DATA_COUNT) - 1) as u8);
        let ptr_air = air_time(EXT_IND_PDU);
        let mut frames = Vec::with_capacity(3 + inst.aux_plan.frame_count());
        let mut t = now;
        for (i, ch) in Channel::PRIMARY.iter().enumerate() {
            if i > 0 {
                t += ptr_air + T_IFS;
            }
            frames.push(AdvTx {
                channel: *ch,
                t_start: t,
                air_time: ptr_air,
                kind: FrameKind::ExtInd,
                directed_to: None,
                chain_index: i as u16,
            });
        }
        let aux_start = t + ptr_air + T_MAFS;
        let mut t = aux_start;
        for (k, &size) in inst.aux_plan.frame_sizes().iter().enumerate() {
            let air = air_time(size + codec::AUX_HEADER);
            frames.push(AdvTx {
                channel: data_channel,
                t_start: t,
                air_time: air,
                kind: if k == 0 { FrameKind::AuxAdv } else { FrameKind::AuxChain },
                directed_to: inst.directed_to,
                chain_index: k as u16,
            });
            t = t + air + T_MAFS;
        }
        let ends = frames.last().map(|f| f.t_start + f.air_time).expect("event has frames");
        let event = Rc::new(AdvEvent {
            sender: self.id,
            sender_addr: self.addr,
            event_id: self.next_event_id,
            data_channel,
            aux_start,
            directed_to: inst.directed_to,
            block: inst.block.clone(),
            ranges: inst.aux_plan.ranges().collect(),
        });
        self.next_event_id += 1;
        (event, frames, ends)
    }

    /// The advertising event transmitted by this node has ended.
    pub fn tx_done(&mut self, now: Instant) {
        if let Radio::Tx { until } = self.radio {
            debug_assert!(until <= now);
            self.set_radio(now, Radio::Scan { since: now });
        }
    }

    /// Whether the radio is following the aux chain of `(sender, event_id)`
    /// and expects chain frame `index` next.
    pub fn expects(&self, sender: NodeId, event_id: u64, index: usize) -> bool {
        matches!(&self.radio, Radio::AuxRx(rx)
            if rx.event.sender == sender && rx.event.event_id == event_id && rx.next_index == index)
    }

    /// A primary-channel pointer was received.
    pub fn on_pointer(&mut self, now: Instant, event: &Rc<AdvEvent>) {
        self.counters.frames_rx[FrameKind::ExtInd.index()] += 1;
        if !matches!(self.radio, Radio::Scan { .. }) {
            return;
        }
        if now + self.params.radio_switch > event.aux_start {
            return;
        }
        self.set_radio(
            now,
            Radio::AuxRx(AuxRx { since: now, event: event.clone(), next_index: 0, parts: Vec::new() }),
        );
    }

    /// A pointer went by while the radio was busy elsewhere.
    pub fn note_missed_pointer(&mut self, event: &AdvEvent) {
        let key = (event.sender, event.event_id);
        let committed_elsewhere = match &self.radio {
            Radio::AuxRx(rx) => (rx.event.sender, rx.event.event_id) != key,
            _ => false,
        };
        if committed_elsewhere && self.last_missed != Some(key) {
            self.last_missed = Some(key);
            self.counters.missed_pointers += 1;
        }
    }

    /// Chain frame `index` of the followed event ended with `outcome`.
    pub fn on_aux(&mut self, now: Instant, index: usize, outcome: AuxOutcome) -> Option<Received> {
        let Radio::AuxRx(rx) = &mut self.radio else {
            return None;
        };
        debug_assert_eq!(rx.next_index, index);
        match outcome {
            AuxOutcome::Filtered => {
                self.set_radio(now, Radio::Scan { since: now });
                None
            }
            AuxOutcome::Missed => {
                self.counters.aux_losses += 1;
                self.set_radio(now, Radio::Scan { since: now });
                None
            }
            AuxOutcome::Delivered => {
                let kind = if index == 0 { FrameKind::AuxAdv } else { FrameKind::AuxChain };
                self.counters.frames_rx[kind.index()] += 1;
                let range = rx.event.ranges[index].clone();
                rx.parts.extend_from_slice(&rx.event.block[range]);
                rx.next_index += 1;
                if rx.next_index < rx.event.frame_count() {
                    return None;
                }
                let from = rx.event.sender_addr;
                let block = core::mem::take(&mut rx.parts);
                self.set_radio(now, Radio::Scan { since: now });
                self.accept_block(from, &block)
            }
        }
    }

    fn accept_block(&mut self, from: BleAddress, block: &[u8]) -> Option<Received> {
        let (seq, ip) = match codec::decode(block, self.params.service_uuid) {
            Ok(d) => d,
            Err(_) => {
                self.counters.aux_losses += 1;
                return None;
            }
        };
        match self.dedup.check_and_update(from, seq) {
            Ok(Verdict::Fresh) => Some(Received { from, ip }),
            Ok(Verdict::Duplicate) => {
                self.counters.duplicates += 1;
                None
            }
            Err(_) => None,
        }
    }
}

/// Start-to-delivery latency of a first advertising event in a quiet medium.
pub fn first_event_latency(params: &AdvParams, ip_len: usize) -> Option<Dur> {
    let block = codec::block_len(ip_len);
    let plan = codec::plan_aux(block, params.aux_capacity, params.max_chain).ok()?;
    let ptr = air_time(EXT_IND_PDU);
    let mut t = params.setup_delay + ptr + T_IFS + ptr + T_IFS + ptr + T_MAFS;
    for (k, size) in plan.frame_sizes().iter().enumerate() {
        if k > 0 {
            t += T_MAFS;
        }
        t += air_time(size + codec::AUX_HEADER);
    }
    Some(t)
}
