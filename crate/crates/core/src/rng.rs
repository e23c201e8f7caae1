//! Seeded generators. Every stochastic routine takes an explicit seed so runs
//! are reproducible; parallel trials derive their stream from `seed + index`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, index: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(index))
}
