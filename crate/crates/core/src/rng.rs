//! Counter-addressed random streams.
//!
//! Every random draw comes from a ChaCha stream keyed by `(seed, purpose)` and
//! selected by the trial index, so trial `t` sees the same numbers regardless
//! of how trials are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// What a stream is used for; distinct purposes never share key material.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum Purpose {
    Chain = 1,
    Trajectory = 2,
    Policy = 3,
    Model = 4,
}

/// Returns the stream for `(seed, trial, purpose)`.
pub fn stream(seed: u64, trial: u64, purpose: Purpose) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(&(purpose as u32).to_le_bytes());
    key[12..16].copy_from_slice(b"clms");
    let mut rng = ChaCha12Rng::from_seed(key);
    rng.set_stream(trial);
    rng
}
