//! Deterministic seed derivation.
//!
//! Every random draw in a run comes from a seed derived from the run seed,
//! a stream tag and a counter, so independent components never share an RNG
//! and any single draw can be reproduced in isolation.

/// One round of the SplitMix64 output function.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed for `(stream, index)` from `base`.
pub fn derive_seed(base: u64, stream: Stream, index: u64) -> u64 {
    mix(mix(mix(base) ^ stream as u64) ^ index)
}

/// Named random streams used by the agent and the training loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    ActorInit = 1,
    Critic1Init = 2,
    Critic2Init = 3,
    ValueInit = 4,
    BatchSample = 5,
    TargetNoise = 6,
    Acting = 7,
    TrainEnv = 8,
    EvalEnv = 9,
}
