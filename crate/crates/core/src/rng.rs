//! Deterministic randomness plumbing.
//!
//! Every stochastic quantity in this crate comes out of a ChaCha8 stream
//! addressed as (master seed, stream index). Distinct stream indices of the
//! same master seed are statistically independent, so a sweep hands stream
//! `k` to realization `k` and stays reproducible under any execution order
//! or thread count.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Substream `stream` of the ChaCha8 generator seeded by `master`.
pub fn substream(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// Derives a fresh master seed from `master` and a tag path.
///
/// Used to give each purpose (channel draws, Monte-Carlo sampling, optimizer
/// restarts) its own seed space so substream indices never collide across
/// purposes. splitmix64 chain; stable across platforms.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = master;
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t));
    }
    state
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One draw of a standard circular complex Gaussian, E{|z|^2} = 1.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Angle drawn uniformly from [-pi, pi).
pub fn uniform_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    (2.0 * u - 1.0) * std::f64::consts::PI
}
