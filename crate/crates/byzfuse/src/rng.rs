//! Deterministic random-number plumbing.
//!
//! Reproducibility contract: every Monte-Carlo trial draws from its own
//! [`ChaCha8Rng`] whose seed is a pure function of `(master_seed, stream,
//! index)`. Trials can therefore be executed in any order — or partitioned
//! across any number of threads — and still consume exactly the same
//! randomness, which is what makes experiment outputs byte-identical
//! regardless of `--threads`.
//!
//! Streams keep draws for unrelated purposes statistically independent even
//! when they share a master seed and a trial index (e.g. the state sequence
//! and the Byzantine placement of the same trial).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Well-known stream identifiers. Purely conventional; any `u64` works.
pub mod streams {
    /// Hypothesis/state-sequence sampling.
    pub const STATES: u64 = 0x01;
    /// Byzantine placement sampling.
    pub const PLACEMENT: u64 = 0x02;
    /// Report generation (local errors + malicious flips).
    pub const REPORTS: u64 = 0x03;
    /// Fallback decisions when a defence isolates every node.
    pub const FALLBACK: u64 = 0x04;
    /// Consensus measurement noise.
    pub const MEASUREMENTS: u64 = 0x05;
    /// Consensus attack-set selection.
    pub const ATTACK: u64 = 0x06;
    /// Random-graph topology generation.
    pub const TOPOLOGY: u64 = 0x07;
    /// Scratch stream for tests and examples.
    pub const SCRATCH: u64 = 0xFF;
}

/// One step of the SplitMix64 output function.
///
/// Used as a seed mixer: it is bijective on `u64` and scrambles related
/// inputs (consecutive trial indices) into unrelated outputs.
#[inline]
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Collapse `(master, stream, index)` into a single 64-bit sub-seed.
#[inline]
pub fn sub_seed(master: u64, stream: u64, index: u64) -> u64 {
    const STREAM_MIX: u64 = 0xD6E8_FEB8_6659_FD93; // odd => bijective multiply
    const INDEX_MIX: u64 = 0xA076_1D64_78BD_642F; // odd
    let mut s = master;
    let a = splitmix64(&mut s);
    let mut s = a ^ stream.wrapping_mul(STREAM_MIX);
    let b = splitmix64(&mut s);
    let mut s = b ^ index.wrapping_mul(INDEX_MIX);
    splitmix64(&mut s)
}

/// Build the RNG for one `(stream, index)` cell of a master-seeded
/// experiment. The full 256-bit ChaCha key is expanded from the mixed
/// sub-seed with further SplitMix64 steps, so distinct cells get keys that
/// differ in every word.
///
/// ```
/// use byzfuse::rng::{trial_rng, streams};
/// use rand::RngCore;
///
/// let mut a = trial_rng(42, streams::STATES, 7);
/// let mut b = trial_rng(42, streams::STATES, 7);
/// assert_eq!(a.next_u64(), b.next_u64()); // same cell, same draws
///
/// let mut c = trial_rng(42, streams::STATES, 8);
/// assert_ne!(trial_rng(42, streams::STATES, 7).next_u64(), c.next_u64());
/// ```
pub fn trial_rng(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut state = sub_seed(master, stream, index);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn sub_seed_is_pure() {
        assert_eq!(sub_seed(1, 2, 3), sub_seed(1, 2, 3));
    }

    #[test]
    fn streams_decorrelate_same_index() {
        let a = sub_seed(99, streams::STATES, 0);
        let b = sub_seed(99, streams::PLACEMENT, 0);
        assert_ne!(a, b);
    }

    #[test]
    fn trial_rngs_are_reproducible_and_distinct() {
        let mut r1 = trial_rng(7, streams::REPORTS, 1000);
        let mut r2 = trial_rng(7, streams::REPORTS, 1000);
        for _ in 0..16 {
            assert_eq!(r1.next_u64(), r2.next_u64());
        }
        let mut r3 = trial_rng(7, streams::REPORTS, 1001);
        assert_ne!(r1.next_u64(), r3.next_u64());
    }

    /// Frozen values: catches accidental changes to the seed derivation,
    /// which would silently invalidate every recorded experiment.
    #[test]
    fn seed_derivation_is_frozen() {
        assert_eq!(sub_seed(0, 0, 0), {
            // independently recomputed SplitMix64 chain
            let mut s = 0u64;
            let a = splitmix64(&mut s);
            let mut s = a; // stream 0 contributes nothing
            let b = splitmix64(&mut s);
            let mut s = b; // index 0 contributes nothing
            splitmix64(&mut s)
        });
        // Distinct master seeds propagate.
        assert_ne!(sub_seed(1, 0, 0), sub_seed(2, 0, 0));
    }
}
