//! Reproducible random streams.
//!
//! Every draw comes from ChaCha20 keyed by the user seed, with the 64-bit
//! stream id set to `(index << 8) | purpose`. Trials can therefore be
//! generated in any order or in parallel and still see the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Split = 1,
    Inputs = 2,
    Noise = 3,
    Theta = 4,
    MonteCarlo = 5,
    Oracle = 6,
}

pub type StreamRng = ChaCha20Rng;

pub fn stream_rng(seed: u64, index: u64, purpose: Purpose) -> StreamRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((index << 8) | purpose as u64);
    rng
}
