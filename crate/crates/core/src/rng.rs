//! Seeded random streams.
//!
//! Every node draws from its own PCG stream so that adding a node to a
//! scenario does not perturb the draws of the existing ones.

use rand_core::Rng as _;
use rand_pcg::Pcg32;

use crate::types::Dur;

/// Stream identifiers used by the engine. Node streams use the node index.
pub mod stream {
    pub const CONNECTION_BASE: u64 = 1 << 20;
    pub const NOISE_BASE: u64 = 2 << 20;
    pub const TRAFFIC_BASE: u64 = 3 << 20;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// A deterministic random stream identified by `(seed, stream)`.
#[derive(Clone, Debug)]
pub struct SimRng {
    inner: Pcg32,
}

impl SimRng {
    pub fn new(seed: u64, stream: u64) -> SimRng {
        // PCG streams sharing a start state are correlated; scramble the state too.
        let state = splitmix64(seed ^ splitmix64(stream));
        SimRng { inner: Pcg32::new(state, stream) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `[lo, hi]` (inclusive), without modulo bias.
    pub fn range_u64(&mut self, lo: u64, hi: u64) -> u64 {
        assert!(lo <= hi, "empty range {lo}..={hi}");
        let span = hi - lo;
        if span == u64::MAX {
            return self.next_u64();
        }
        let n = span + 1;
        // Lemire's widening multiply with rejection of the biased zone.
        let zone = n.wrapping_neg() % n;
        loop {
            let m = u128::from(self.next_u64()) * u128::from(n);
            if (m as u64) >= zone {
                return lo + (m >> 64) as u64;
            }
        }
    }

    /// Uniform duration in `[lo, hi]`, inclusive.
    pub fn uniform_range(&mut self, lo: Dur, hi: Dur) -> Dur {
        Dur(self.range_u64(lo.0, hi.0))
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        self.range_u64(0, n as u64 - 1) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn degenerate_range() {
        let mut rng = SimRng::new(7, 0);
        assert_eq!(rng.uniform_range(Dur::ZERO, Dur::ZERO), Dur::ZERO);
        assert_eq!(rng.uniform_range(Dur(5), Dur(5)), Dur(5));
    }

    #[test]
    fn jitter_bounds() {
        let mut rng = SimRng::new(1, 3);
        for _ in 0..10_000 {
            let v = rng.uniform_range(Dur::ZERO, Dur::from_millis(10));
            assert!(v <= Dur::from_millis(10));
        }
    }

    #[test]
    fn golden_first_draw() {
        // Frozen from a first run; guards against silent stream changes.
        let mut a = SimRng::new(42, 1);
        let mut b = SimRng::new(42, 1);
        let first = a.uniform_range(Dur::ZERO, Dur::from_millis(10));
        assert_eq!(first, b.uniform_range(Dur::ZERO, Dur::from_millis(10)));
        assert_eq!(first, Dur(GOLDEN_SEED42_STREAM1));
    }

    const GOLDEN_SEED42_STREAM1: u64 = 3_392;

    #[test]
    fn streams_are_independent() {
        let a: Vec<u64> = {
            let mut r = SimRng::new(42, 1);
            (0..8).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = SimRng::new(42, 2);
            (0..8).map(|_| r.next_u64()).collect()
        };
        assert_ne!(a, b);
    }

    #[test]
    fn range_covers_both_ends() {
        let mut rng = SimRng::new(9, 9);
        let mut seen = [false; 4];
        for _ in 0..1_000 {
            seen[rng.range_u64(10, 13) as usize - 10] = true;
        }
        assert!(seen.iter().all(|s| *s));
    }
}
