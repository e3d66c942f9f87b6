//! Counter-based random streams.
//!
//! Every draw of the engine is keyed by `(master_seed, stream, step)`: the
//! ChaCha key comes from the master seed, the ChaCha stream id is the
//! trajectory index, and the word position is moved to `step · STEP_STRIDE`
//! before each step. Draws therefore never depend on how trajectories are
//! scheduled on threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 32-bit words reserved per step. A step that needs more simply reads
/// into the next step's block, which stays deterministic.
pub const STEP_STRIDE: u128 = 1 << 16;

pub type StreamRng = ChaCha8Rng;

/// Generator for stream `stream` under `master_seed`, positioned at step 0.
pub fn stream_rng(master_seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Moves `rng` to the block reserved for `step`.
pub fn seek_step(rng: &mut StreamRng, step: u64) {
    rng.set_word_pos(step as u128 * STEP_STRIDE);
}

/// Generator for auxiliary draws (sample sets, moment estimates).
pub fn seeded(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}
