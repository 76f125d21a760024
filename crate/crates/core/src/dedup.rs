//! Receiver-side duplicate suppression on the 1-octet link sequence number.

use alloc::vec::Vec;
use core::fmt;

use crate::types::BleAddress;

pub const DEFAULT_CAPACITY: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Fresh,
    Duplicate,
}

/// What to do when a new source arrives and the table is full.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Eviction {
    /// Replace the entry that was updated longest ago.
    #[default]
    LeastRecentlyUpdated,
    /// Refuse the new source with [`TableFull`].
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableFull;

impl fmt::Display for TableFull {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("duplicate table full")
    }
}

impl core::error::Error for TableFull {}

#[derive(Debug, Clone)]
struct Entry {
    src: BleAddress,
    seq: u8,
    touched: u64,
}

/// Last sequence number seen per link-layer source.
///
/// Only equality is checked: a reordered older packet whose number differs
/// from the last one is accepted as fresh.
#[derive(Debug, Clone)]
pub struct DedupTable {
    entries: Vec<Entry>,
    capacity: usize,
    eviction: Eviction,
    clock: u64,
}

impl Default for DedupTable {
    fn default() -> Self {
        DedupTable::new(DEFAULT_CAPACITY)
    }
}

impl DedupTable {
    pub fn new(capacity: usize) -> DedupTable {
        DedupTable::with_eviction(capacity, Eviction::default())
    }

    pub fn with_eviction(capacity: usize, eviction: Eviction) -> DedupTable {
        assert!(capacity > 0);
        DedupTable { entries: Vec::with_capacity(capacity), capacity, eviction, clock: 0 }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last_seq(&self, src: BleAddress) -> Option<u8> {
        self.entries.iter().find(|e| e.src == src).map(|e| e.seq)
    }

    pub fn check_and_update(&mut self, src: BleAddress, seq: u8) -> Result<Verdict, TableFull> {
        self.clock += 1;
        if let Some(e) = self.entries.iter_mut().find(|e| e.src == src) {
            if e.seq == seq {
                return Ok(Verdict::Duplicate);
            }
            e.seq = seq;
            e.touched = self.clock;
            return Ok(Verdict::Fresh);
        }
        if self.entries.len() == self.capacity {
            match self.eviction {
                Eviction::Reject => return Err(TableFull),
                Eviction::LeastRecentlyUpdated => {
                    let oldest = self
                        .entries
                        .iter()
                        .enumerate()
                        .min_by_key(|(_, e)| e.touched)
                        .map(|(i, _)| i)
                        .expect("capacity > 0");
                    self.entries.swap_remove(oldest);
                }
            }
        }
        self.entries.push(Entry { src, seq, touched: self.clock });
        Ok(Verdict::Fresh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const A: BleAddress = BleAddress::for_node(1);
    const B: BleAddress = BleAddress::for_node(2);

    #[test]
    fn first_contact_then_duplicate() {
        let mut t = DedupTable::default();
        assert_eq!(t.check_and_update(A, 5), Ok(Verdict::Fresh));
        assert_eq!(t.check_and_update(A, 5), Ok(Verdict::Duplicate));
        assert_eq!(t.last_seq(A), Some(5));
    }

    #[test]
    fn wraparound_is_fresh() {
        let mut t = DedupTable::default();
        t.check_and_update(A, 255).unwrap();
        assert_eq!(t.check_and_update(A, 0), Ok(Verdict::Fresh));
    }

    #[test]
    fn reordered_old_packet_is_accepted() {
        let mut t = DedupTable::default();
        t.check_and_update(A, 5).unwrap();
        t.check_and_update(A, 6).unwrap();
        assert_eq!(t.check_and_update(A, 5), Ok(Verdict::Fresh));
    }

    #[test]
    fn eviction_policies() {
        let mut lru = DedupTable::new(2);
        lru.check_and_update(A, 1).unwrap();
        lru.check_and_update(B, 1).unwrap();
        lru.check_and_update(A, 2).unwrap();
        let c = BleAddress::for_node(3);
        assert_eq!(lru.check_and_update(c, 1), Ok(Verdict::Fresh));
        assert_eq!(lru.len(), 2);
        assert_eq!(lru.last_seq(B), None, "B was updated least recently");
        assert_eq!(lru.last_seq(A), Some(2));

        let mut strict = DedupTable::with_eviction(1, Eviction::Reject);
        strict.check_and_update(A, 1).unwrap();
        assert_eq!(strict.check_and_update(B, 1), Err(TableFull));
        assert_eq!(strict.check_and_update(A, 1), Ok(Verdict::Duplicate));
    }

    proptest! {
        #[test]
        fn idempotent_after_fresh(seqs in proptest::collection::vec(any::<u8>(), 1..50)) {
            let mut t = DedupTable::default();
            for s in seqs {
                let first = t.check_and_update(A, s).unwrap();
                prop_assert_eq!(t.check_and_update(A, s).unwrap(), Verdict::Duplicate);
                prop_assert_eq!(t.check_and_update(A, s).unwrap(), Verdict::Duplicate);
                let _ = first;
            }
        }

        #[test]
        fn sources_are_independent(ops in proptest::collection::vec((any::<bool>(), 0u8..4), 1..100)) {
            let mut mixed = DedupTable::default();
            let mut only_b = DedupTable::default();
            for (is_a, seq) in ops {
                if is_a {
                    mixed.check_and_update(A, seq).unwrap();
                } else {
                    let v = mixed.check_and_update(B, seq).unwrap();
                    prop_assert_eq!(v, only_b.check_and_update(B, seq).unwrap());
                }
            }
        }
    }
}
