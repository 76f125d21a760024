//! Connection-based baseline: time-slotted connection events with channel
//! hopping and reliable in-order link frames.

use alloc::collections::VecDeque;
use core::fmt;

use crate::medium::{air_time, T_IFS, T_MAFS};
use crate::rng::SimRng;
use crate::types::{BleAddress, Channel, Dur, Instant, NodeId};

pub const MAX_FRAME_PAYLOAD: usize = 251;
pub const L2CAP_OVERHEAD: usize = 4;
pub const DEFAULT_BUFFER_CAP: usize = 8900;
pub const DEFAULT_EVENT_BUDGET: u8 = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnParams {
    pub interval_lo: Dur,
    pub interval_hi: Dur,
    /// Maximum frame pairs per connection event.
    pub event_budget: u8,
    pub buffer_cap: usize,
}

impl Default for ConnParams {
    fn default() -> Self {
        ConnParams {
            interval_lo: Dur::from_millis(40),
            interval_hi: Dur::from_millis(60),
            event_budget: DEFAULT_EVENT_BUDGET,
            buffer_cap: DEFAULT_BUFFER_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnError {
    BufferOverflow { buffered: usize, requested: usize, cap: usize },
}

impl fmt::Display for ConnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConnError::BufferOverflow { buffered, requested, cap } => {
                write!(f, "buffer overflow: {buffered} + {requested} bytes exceeds {cap}")
            }
        }
    }
}

impl core::error::Error for ConnError {}

/// Number of link frames needed for an IP packet of `ip_len` bytes.
pub const fn frame_count(ip_len: usize) -> usize {
    (ip_len + L2CAP_OVERHEAD).div_ceil(MAX_FRAME_PAYLOAD)
}

/// Per-node packet buffer shared by all of the node's connections.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeBuffer {
    pub bytes: usize,
    pub cap: usize,
    pub high_water: usize,
}

impl NodeBuffer {
    pub fn new(cap: usize) -> NodeBuffer {
        NodeBuffer { bytes: 0, cap, high_water: 0 }
    }

    fn reserve(&mut self, n: usize) -> Result<(), ConnError> {
        if self.bytes + n > self.cap {
            return Err(ConnError::BufferOverflow { buffered: self.bytes, requested: n, cap: self.cap });
        }
        self.bytes += n;
        self.high_water = self.high_water.max(self.bytes);
        Ok(())
    }

    pub fn release(&mut self, n: usize) {
        self.bytes -= n;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkFrame {
    pub dgram: u64,
    pub len: usize,
    /// Last frame of its datagram.
    pub last: bool,
}

/// Direction of data flow on a connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Sent by the coordinator.
    Down,
    /// Sent by the subordinate.
    Up,
}

impl Direction {
    fn idx(self) -> usize {
        match self {
            Direction::Down => 0,
            Direction::Up => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct EventState {
    channel: Channel,
    next_anchor: Instant,
    pairs: u8,
    turn: Direction,
}

/// A frame the connection wants on the medium.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConnTx {
    pub dir: Direction,
    pub sender: NodeId,
    pub receiver: NodeId,
    pub receiver_addr: BleAddress,
    pub channel: Channel,
    pub t_start: Instant,
    pub air_time: Dur,
    /// `None` for an empty frame.
    pub frame: Option<LinkFrame>,
}

/// What a delivered frame completed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameDone {
    pub dir: Direction,
    pub frame: Option<LinkFrame>,
}

#[derive(Debug, Clone)]
pub struct Connection {
    pub coordinator: NodeId,
    pub subordinate: NodeId,
    pub coordinator_addr: BleAddress,
    pub subordinate_addr: BleAddress,
    params: ConnParams,
    pub hop_increment: u8,
    last_channel: u8,
    next_anchor: Instant,
    fifo: [VecDeque<LinkFrame>; 2],
    event: Option<EventState>,
    pub events: u64,
}

impl Connection {
    /// Open a connection whose first anchor falls uniformly in `[0, interval_hi)`.
    pub fn new(
        coordinator: (NodeId, BleAddress),
        subordinate: (NodeId, BleAddress),
        params: ConnParams,
        rng: &mut SimRng,
    ) -> Connection {
        assert!(params.interval_lo <= params.interval_hi && params.interval_lo > Dur::ZERO);
        let hop_increment = rng.range_u64(5, 16) as u8;
        let last_channel = rng.range_u64(0, u64::from(Channel::DATA_COUNT) - 1) as u8;
        let first = rng.range_u64(0, params.interval_hi.as_micros() - 1);
        Connection {
            coordinator: coordinator.0,
            subordinate: subordinate.0,
            coordinator_addr: coordinator.1,
            subordinate_addr: subordinate.1,
            params,
            hop_increment,
            last_channel,
            next_anchor: Instant(first),
            fifo: [VecDeque::new(), VecDeque::new()],
            event: None,
            events: 0,
        }
    }

    pub fn next_anchor(&self) -> Instant {
        self.next_anchor
    }

    pub fn in_event(&self) -> bool {
        self.event.is_some()
    }

    pub fn queued(&self, dir: Direction) -> usize {
        self.fifo[dir.idx()].len()
    }

    pub fn sender(&self, dir: Direction) -> NodeId {
        match dir {
            Direction::Down => self.coordinator,
            Direction::Up => self.subordinate,
        }
    }

    /// Direction used when `from` sends to its peer.
    pub fn direction_from(&self, from: NodeId) -> Direction {
        if from == self.coordinator {
            Direction::Down
        } else {
            Direction::Up
        }
    }

    /// Split an IP packet into link frames and append them to the FIFO.
    pub fn enqueue(&mut self, dir: Direction, dgram: u64, ip_len: usize, buf: &mut NodeBuffer) -> Result<usize, ConnError> {
        let total = ip_len + L2CAP_OVERHEAD;
        buf.reserve(total)?;
        let n = frame_count(ip_len);
        for k in 0..n {
            let len = if k + 1 < n { MAX_FRAME_PAYLOAD } else { total - MAX_FRAME_PAYLOAD * (n - 1) };
            self.fifo[dir.idx()].push_back(LinkFrame { dgram, len, last: k + 1 == n });
        }
        Ok(n)
    }

    fn hop(&mut self) -> Channel {
        self.last_channel = (self.last_channel + self.hop_increment) % Channel::DATA_COUNT;
        Channel::Data(self.last_channel)
    }

    fn advance_anchor(&mut self, rng: &mut SimRng) -> Instant {
        let anchor = self.next_anchor;
        self.next_anchor = anchor + rng.uniform_range(self.params.interval_lo, self.params.interval_hi);
        self.next_anchor
    }

    /// The anchor passed without an event; the hop sequence still advances.
    pub fn skip_event(&mut self, rng: &mut SimRng) {
        self.hop();
        self.advance_anchor(rng);
    }

    /// Start the event at the current anchor and return its first frame.
    pub fn open_event(&mut self, rng: &mut SimRng) -> ConnTx {
        assert!(self.event.is_none());
        let now = self.next_anchor;
        let channel = self.hop();
        let next_anchor = self.advance_anchor(rng);
        self.events += 1;
        self.event = Some(EventState { channel, next_anchor, pairs: 0, turn: Direction::Down });
        self.next_tx(now).expect("every event starts with one exchange")
    }

    fn tx_for(&self, dir: Direction, t: Instant, channel: Channel) -> ConnTx {
        let frame = self.fifo[dir.idx()].front().copied();
        let (sender, receiver, receiver_addr) = match dir {
            Direction::Down => (self.coordinator, self.subordinate, self.subordinate_addr),
            Direction::Up => (self.subordinate, self.coordinator, self.coordinator_addr),
        };
        ConnTx {
            dir,
            sender,
            receiver,
            receiver_addr,
            channel,
            t_start: t,
            air_time: air_time(frame.map_or(0, |f| f.len)),
            frame,
        }
    }

    fn next_tx(&self, t: Instant) -> Option<ConnTx> {
        let ev = self.event?;
        if ev.turn == Direction::Up {
            return Some(self.tx_for(Direction::Up, t, ev.channel));
        }
        let down = self.tx_for(Direction::Down, t, ev.channel);
        if ev.pairs == 0 {
            return Some(down);
        }
        let pending = self.fifo.iter().any(|q| !q.is_empty());
        let up_air = air_time(self.fifo[1].front().map_or(0, |f| f.len));
        let pair_end = t + down.air_time + T_IFS + up_air;
        let fits = pair_end + T_MAFS <= ev.next_anchor;
        (pending && ev.pairs < self.params.event_budget && fits).then_some(down)
    }

    /// The frame in flight ended. A lost frame ends the event and stays queued.
    pub fn frame_end(&mut self, delivered: bool) -> Option<FrameDone> {
        let mut ev = self.event?;
        if !delivered {
            self.event = None;
            return None;
        }
        let dir = ev.turn;
        let frame = self.fifo[dir.idx()].pop_front();
        match dir {
            Direction::Down => ev.turn = Direction::Up,
            Direction::Up => {
                ev.turn = Direction::Down;
                ev.pairs += 1;
            }
        }
        self.event = Some(ev);
        Some(FrameDone { dir, frame })
    }

    /// Next frame of the running event after a frame ended at `now`, or
    /// `None` once the event is over.
    pub fn continue_event(&mut self, now: Instant) -> Option<ConnTx> {
        let next = self.next_tx(now + T_IFS);
        if next.is_none() {
            self.event = None;
        }
        next
    }

    /// Give up on the running event, e.g. at the end of a run.
    pub fn abort_event(&mut self) {
        self.event = None;
    }
}
