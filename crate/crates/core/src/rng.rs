//! Seed derivation for reproducible, variance-paired random streams.
//!
//! Every random draw in a simulation comes from a ChaCha stream whose seed is
//! derived by hashing a key path such as `(master, run, step, purpose)`. Two
//! policies run with the same master seed therefore see identical truth and
//! clutter draws, and a planner's node evaluations can be keyed by the action
//! path that reached the node.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. Keeps sub-streams from colliding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Truth = 1,
    Measurement = 2,
    FilterPd = 3,
    Planner = 4,
    PlannerNode = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash-chained seed key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedKey(u64);

impl SeedKey {
    pub fn new(master: u64) -> Self {
        SeedKey(splitmix64(master))
    }

    pub fn with(self, component: u64) -> Self {
        SeedKey(splitmix64(self.0 ^ splitmix64(component.wrapping_add(0xA5A5_A5A5))))
    }

    pub fn purpose(self, purpose: Purpose) -> Self {
        self.with(purpose as u64)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> StreamRng {
        StreamRng::seed_from_u64(self.0)
    }
}

/// Stream for `(master, run, step, purpose)`.
pub fn stream(master: u64, run: u64, step: u64, purpose: Purpose) -> StreamRng {
    SeedKey::new(master).with(run).with(step).purpose(purpose).rng()
}
