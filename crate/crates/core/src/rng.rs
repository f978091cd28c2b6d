//! Seeded random streams.
//!
//! Every stochastic component takes an explicit `u64` seed and builds its own
//! ChaCha stream, so runs are reproducible bit for bit and independent
//! components never share generator state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a base seed with a list of tags into a new seed.
///
/// The result depends only on `(base, tags)`, so adding new sweep cells never
/// changes the seeds of existing ones.
pub fn derive_seed(base: u64, tags: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    for tag in tags {
        hasher.update((tag.len() as u64).to_le_bytes());
        hasher.update(tag.as_bytes());
    }
    let digest = hasher.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    base ^ u64::from_le_bytes(word)
}

/// Standard Laplace draw (location 0, scale 1) by inverse CDF.
pub fn laplace<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen_range(-0.5..0.5);
    -u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

pub fn gaussian<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}
