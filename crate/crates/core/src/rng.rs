//! Deterministic random substreams.
//!
//! Every consumer draws from its own ChaCha stream keyed by
//! `(seed, purpose, index)`, so results never depend on evaluation order or
//! worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream purposes. Kept in the high bits of the ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Target = 1,
    Sample = 2,
    Tau = 3,
    Tuples = 4,
    Points = 5,
    Oracle = 6,
}

pub fn substream(seed: u64, purpose: Purpose, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) ^ index);
    rng
}
