//! Seeded, random-access random streams.
//!
//! Every stochastic stage draws from its own ChaCha8 stream derived from the
//! run seed, so results do not depend on chunking or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const PLAN_STREAM: u64 = 0;
pub(crate) const PHASE_STREAM: u64 = 1;
const DETECTION_STREAM_BASE: u64 = 1 << 40;

/// A ChaCha8 generator for `(seed, stream)` positioned at `word` (32-bit words).
pub(crate) fn stream_at(seed: u64, stream: u64, word: u128) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word);
    rng
}

/// Generator for the detection randomness of one chunk of one session.
pub(crate) fn detection_rng(seed: u64, session: u64, chunk: u64) -> ChaCha8Rng {
    stream_at(seed, DETECTION_STREAM_BASE + (session << 32) + chunk, 0)
}

/// Seed for a derived task (a session or a sweep point) of a run.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform f64 in [0, 1) from the top 53 bits of a word.
#[inline]
pub(crate) fn unit_f64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
