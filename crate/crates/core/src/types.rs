//! Shared vocabulary: simulated time, link-layer addresses and radio channels.

use core::fmt;
use core::ops::{Add, AddAssign, Sub};

/// Microseconds since the start of a simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Instant(pub u64);

/// A span of simulated time in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Dur(pub u64);

impl Instant {
    pub const ZERO: Instant = Instant(0);

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    /// Time elapsed since `earlier`, saturating at zero.
    pub fn since(self, earlier: Instant) -> Dur {
        Dur(self.0.saturating_sub(earlier.0))
    }
}

impl Dur {
    pub const ZERO: Dur = Dur(0);

    pub const fn from_micros(us: u64) -> Dur {
        Dur(us)
    }

    pub const fn from_millis(ms: u64) -> Dur {
        Dur(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Dur {
        Dur(s * 1_000_000)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, other: Dur) -> Dur {
        Dur(self.0.saturating_sub(other.0))
    }
}

impl Add<Dur> for Instant {
    type Output = Instant;
    fn add(self, rhs: Dur) -> Instant {
        Instant(self.0 + rhs.0)
    }
}

impl AddAssign<Dur> for Instant {
    fn add_assign(&mut self, rhs: Dur) {
        self.0 += rhs.0;
    }
}

impl Sub<Instant> for Instant {
    type Output = Dur;
    fn sub(self, rhs: Instant) -> Dur {
        Dur(self.0 - rhs.0)
    }
}

impl Add for Dur {
    type Output = Dur;
    fn add(self, rhs: Dur) -> Dur {
        Dur(self.0 + rhs.0)
    }
}

impl AddAssign for Dur {
    fn add_assign(&mut self, rhs: Dur) {
        self.0 += rhs.0;
    }
}

impl Sub for Dur {
    type Output = Dur;
    fn sub(self, rhs: Dur) -> Dur {
        Dur(self.0 - rhs.0)
    }
}

impl fmt::Display for Instant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

impl fmt::Display for Dur {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

/// A 6-octet BLE device address, used as the IP link-layer address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BleAddress(pub [u8; 6]);

impl BleAddress {
    /// Reserved destination for link-layer broadcast (IP multicast).
    pub const BROADCAST: BleAddress = BleAddress([0xff; 6]);

    /// Deterministic locally-administered address for the node at `index`.
    pub const fn for_node(index: u16) -> BleAddress {
        let [hi, lo] = index.to_be_bytes();
        BleAddress([0xc2, 0x00, 0x00, 0x00, hi, lo])
    }

    pub fn is_broadcast(&self) -> bool {
        *self == Self::BROADCAST
    }
}

impl fmt::Display for BleAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            a[0], a[1], a[2], a[3], a[4], a[5]
        )
    }
}

/// Index of a node inside one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u16);

impl NodeId {
    pub const fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A BLE radio channel by its channel index.
///
/// Indices 37, 38 and 39 are the primary advertising channels; 0..=36 carry
/// auxiliary advertising packets and connection traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    Primary(u8),
    Data(u8),
}

impl Channel {
    pub const PRIMARY: [Channel; 3] = [Channel::Primary(37), Channel::Primary(38), Channel::Primary(39)];
    pub const DATA_COUNT: u8 = 37;
    /// Total number of distinct channels.
    pub const COUNT: usize = 40;

    pub fn data(index: u8) -> Option<Channel> {
        (index < Self::DATA_COUNT).then_some(Channel::Data(index))
    }

    pub fn primary(index: u8) -> Option<Channel> {
        (37..=39).contains(&index).then_some(Channel::Primary(index))
    }

    pub fn from_index(index: u8) -> Option<Channel> {
        Self::data(index).or_else(|| Self::primary(index))
    }

    pub fn index(self) -> u8 {
        match self {
            Channel::Primary(i) | Channel::Data(i) => i,
        }
    }

    pub fn is_primary(self) -> bool {
        matches!(self, Channel::Primary(_))
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}
