//! Counter-based random streams: every sample index gets its own ChaCha
//! stream derived from `(seed, index)`, so parallel runs are bit-identical
//! whatever the worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for sample `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
