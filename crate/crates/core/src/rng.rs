//! Seed derivation for decoupled random streams.
//!
//! Each run owns independent generators for problem initialization, target
//! drift, and observation noise. All three are pure functions of the run
//! seed, so SGD and Adam runs with the same seed face the identical target
//! trajectory and data stream regardless of learning rate or optimizer.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type RunRng = ChaCha12Rng;

/// splitmix64 finalizer; good avalanche for cheap stream separation.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive a substream seed from a master seed and a label.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    mix(master ^ mix(fnv1a(label)))
}

/// Generator for the named substream of a run.
pub fn stream(master: u64, label: &str) -> RunRng {
    ChaCha12Rng::seed_from_u64(derive_seed(master, label))
}

/// The three standard streams of a run.
pub struct RunStreams {
    pub init: RunRng,
    pub drift: RunRng,
    pub noise: RunRng,
}

impl RunStreams {
    pub fn new(seed: u64) -> Self {
        RunStreams {
            init: stream(seed, "init"),
            drift: stream(seed, "drift"),
            noise: stream(seed, "noise"),
        }
    }
}
