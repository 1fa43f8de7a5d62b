//! Deterministic seed-stream derivation.
//!
//! Every source of randomness in a run is derived from one master seed so
//! that repeated runs are bit-identical. Sub-streams are labelled with a
//! domain tag and an index and mixed through splitmix64, so reordering or
//! parallelizing work cannot change which stream an episode sees.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// splitmix64 finalizer; a small, well-distributed 64-bit mixer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream labels for the independent RNG streams of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Model weight initialization.
    Init,
    /// Training-time exploration and loss sampling.
    Train,
    /// Per-episode environment generation.
    EnvGen,
    /// Per-episode policy randomness during evaluation.
    EvalPolicy,
    /// Fixed evaluation-suite environments.
    EvalEnv,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Init => 0x01,
            Stream::Train => 0x02,
            Stream::EnvGen => 0x03,
            Stream::EvalPolicy => 0x04,
            Stream::EvalEnv => 0x05,
        }
    }
}

/// Derive the sub-seed for (`stream`, `index`) from a master seed.
pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ stream.tag().rotate_left(48)) ^ splitmix64(index))
}

/// RNG for a derived stream.
pub fn derive_rng(master: u64, stream: Stream, index: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(derive_seed(master, stream, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_distinct() {
        let a = derive_seed(7, Stream::EnvGen, 0);
        let b = derive_seed(7, Stream::EnvGen, 1);
        let c = derive_seed(7, Stream::EvalPolicy, 0);
        let d = derive_seed(8, Stream::EnvGen, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn derivation_is_stable() {
        assert_eq!(derive_seed(7, Stream::EnvGen, 3), derive_seed(7, Stream::EnvGen, 3));
    }
}
