//! A single shared collision domain.
//!
//! Every node hears every other node. A frame is lost for everybody as soon
//! as any other frame overlaps it in time on the same channel; there is no
//! capture effect.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::types::{BleAddress, Channel, Dur, Instant, NodeId};

/// Preamble, access address, header and CRC octets around every PDU.
pub const PHY_OVERHEAD: usize = 10;
/// LE 1M: one octet on air takes 8 µs.
pub const US_PER_BYTE: u64 = 8;
/// Inter-frame space.
pub const T_IFS: Dur = Dur(150);
/// Offset between the last primary pointer and the first aux frame, and
/// between chained aux frames.
pub const T_MAFS: Dur = Dur(300);
/// PDU payload of an extended advertising pointer (ADV_EXT_IND).
pub const EXT_IND_PDU: usize = 9;
/// PDU payload of a legacy advertisement used as background traffic.
pub const LEGACY_ADV_PDU: usize = 37;

/// Air time of a PDU with `pdu_payload_len` payload octets.
pub fn air_time(pdu_payload_len: usize) -> Dur {
    debug_assert!(pdu_payload_len <= 255, "PDU payload {pdu_payload_len} > 255");
    Dur((PHY_OVERHEAD + pdu_payload_len) as u64 * US_PER_BYTE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FrameKind {
    ExtInd,
    AuxAdv,
    AuxChain,
    ConnData,
    LegacyAdv,
}

impl FrameKind {
    pub const ALL: [FrameKind; 5] =
        [FrameKind::ExtInd, FrameKind::AuxAdv, FrameKind::AuxChain, FrameKind::ConnData, FrameKind::LegacyAdv];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FrameKind::ExtInd => "ext_ind",
            FrameKind::AuxAdv => "aux_adv",
            FrameKind::AuxChain => "aux_chain",
            FrameKind::ConnData => "conn_data",
            FrameKind::LegacyAdv => "legacy_adv",
        }
    }

    fn allowed_on(self, ch: Channel) -> bool {
        match self {
            FrameKind::ExtInd | FrameKind::LegacyAdv => ch.is_primary(),
            FrameKind::AuxAdv | FrameKind::AuxChain | FrameKind::ConnData => !ch.is_primary(),
        }
    }
}

/// One transmission on the medium. `payload` is whatever the MAC needs to
/// hand to receivers.
#[derive(Debug, Clone)]
pub struct RadioFrame<P> {
    pub sender: NodeId,
    pub channel: Channel,
    pub t_start: Instant,
    pub air_time: Dur,
    pub kind: FrameKind,
    pub directed_to: Option<BleAddress>,
    pub event_id: u64,
    pub chain_index: u16,
    pub payload: P,
}

impl<P> RadioFrame<P> {
    pub fn t_end(&self) -> Instant {
        self.t_start + self.air_time
    }

    fn overlaps(&self, other: &RadioFrame<P>) -> bool {
        self.t_start < other.t_end() && other.t_start < self.t_end()
    }
}

/// A node's receiver tuned to `channel` over `[from, until)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RxLock {
    pub node: NodeId,
    pub address: BleAddress,
    pub channel: Channel,
    pub from: Instant,
    pub until: Instant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameId(u64);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MediumError {
    RadioBusy { node: NodeId, busy_until: Instant },
    WrongChannel { kind: FrameKind, channel: Channel },
}

impl fmt::Display for MediumError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MediumError::RadioBusy { node, busy_until } => {
                write!(f, "node {node} is still transmitting until {busy_until}")
            }
            MediumError::WrongChannel { kind, channel } => {
                write!(f, "{} frame not allowed on channel {channel}", kind.name())
            }
        }
    }
}

impl core::error::Error for MediumError {}

/// Totals that must reconcile: `transmitted = delivered + collided + unheard`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FrameStats {
    pub transmitted: u64,
    pub delivered: u64,
    pub collided: u64,
    pub unheard: u64,
}

impl FrameStats {
    pub fn reconciles(&self) -> bool {
        self.transmitted == self.delivered + self.collided + self.unheard
    }
}

#[derive(Debug)]
pub struct Resolution<P> {
    pub frame: RadioFrame<P>,
    pub collided: bool,
    /// Listeners that received the frame.
    pub delivered: Vec<NodeId>,
    /// Listeners that received the frame but whose controller dropped it
    /// because it was directed to somebody else.
    pub filtered: Vec<NodeId>,
}

#[derive(Debug)]
struct OnAir<P> {
    frame: RadioFrame<P>,
    collided: bool,
}

#[derive(Debug)]
pub struct Medium<P> {
    on_air: BTreeMap<FrameId, OnAir<P>>,
    by_channel: Vec<Vec<FrameId>>,
    tx_until: Vec<Instant>,
    next_id: u64,
    stats: FrameStats,
}

impl<P> Medium<P> {
    pub fn new(nodes: usize) -> Medium<P> {
        Medium {
            on_air: BTreeMap::new(),
            by_channel: (0..Channel::COUNT).map(|_| Vec::new()).collect(),
            tx_until: alloc::vec![Instant::ZERO; nodes],
            next_id: 0,
            stats: FrameStats::default(),
        }
    }

    pub fn stats(&self) -> FrameStats {
        self.stats
    }

    pub fn in_flight(&self) -> usize {
        self.on_air.len()
    }

    pub fn peek_payload(&self, id: FrameId) -> Option<&P> {
        self.on_air.get(&id).map(|o| &o.frame.payload)
    }

    /// Channel and time span of a frame still on air.
    pub fn peek_span(&self, id: FrameId) -> Option<(Channel, Instant, Instant)> {
        self.on_air.get(&id).map(|o| (o.frame.channel, o.frame.t_start, o.frame.t_end()))
    }

    /// Register `frame` for `[t_start, t_start + air_time)`.
    pub fn transmit(&mut self, frame: RadioFrame<P>) -> Result<FrameId, MediumError> {
        if !frame.kind.allowed_on(frame.channel) {
            return Err(MediumError::WrongChannel { kind: frame.kind, channel: frame.channel });
        }
        let busy = self.tx_until[frame.sender.index()];
        if busy > frame.t_start {
            return Err(MediumError::RadioBusy { node: frame.sender, busy_until: busy });
        }
        self.tx_until[frame.sender.index()] = frame.t_end();

        let id = FrameId(self.next_id);
        self.next_id += 1;
        let mut collided = false;
        let ch = frame.channel.index() as usize;
        for other in &self.by_channel[ch] {
            let o = self.on_air.get_mut(other).expect("channel index in sync");
            if o.frame.overlaps(&frame) {
                o.collided = true;
                collided = true;
            }
        }
        self.by_channel[ch].push(id);
        self.on_air.insert(id, OnAir { frame, collided });
        self.stats.transmitted += 1;
        Ok(id)
    }

    /// Settle frame `id` once its air time is over.
    ///
    /// A listener receives the frame iff its lock covers the whole frame on
    /// the frame's channel, nothing else overlapped the frame, and the frame
    /// is undirected or directed to the listener.
    pub fn resolve(&mut self, id: FrameId, listeners: &[RxLock]) -> Resolution<P> {
        let OnAir { frame, collided } = self.on_air.remove(&id).expect("frame resolved twice");
        let ch = frame.channel.index() as usize;
        self.by_channel[ch].retain(|f| *f != id);

        let mut delivered = Vec::new();
        let mut filtered = Vec::new();
        if !collided {
            for l in listeners {
                let covers = l.channel == frame.channel
                    && l.from <= frame.t_start
                    && l.until >= frame.t_end()
                    && l.node != frame.sender;
                if !covers {
                    continue;
                }
                match frame.directed_to {
                    Some(to) if to != l.address => filtered.push(l.node),
                    _ => delivered.push(l.node),
                }
            }
        }
        if collided {
            self.stats.collided += 1;
        } else if delivered.is_empty() {
            self.stats.unheard += 1;
        } else {
            self.stats.delivered += 1;
        }
        Resolution { frame, collided, delivered, filtered }
    }
}
