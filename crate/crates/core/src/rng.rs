//! Counter-based seeding: stream i of a master seed is an independent RNG,
//! so batches of paths/rollouts give identical results whether they are
//! sampled serially or in parallel.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// RNG for sample `index` of the batch owned by `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| StandardNormal.sample(rng))
}

/// Draw from N(0, L L^T) given a (possibly rank-deficient) factor L.
pub fn correlated_normal<R: Rng + ?Sized>(rng: &mut R, chol_lower: &DMatrix<f64>) -> DVector<f64> {
    let z = standard_normal_vec(rng, chol_lower.ncols());
    chol_lower * z
}
