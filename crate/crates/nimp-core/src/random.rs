//! Seeded generation of random states and Hermitian operators.
//!
//! Used throughout the validation suites: every "random instance" in a test
//! is reproducible from a fixed seed.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{C64, CMatrix, CVector, HilbertSpace, Operator, StateVector};

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A Hermitian operator with entries of order one, (R + R†)/2 for random R.
pub fn random_hermitian(space: &HilbertSpace, rng: &mut ChaCha8Rng) -> Operator {
    let dim = space.total_dim();
    let raw = DMatrix::from_fn(dim, dim, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let herm: CMatrix = (&raw + raw.adjoint()) * C64::new(0.5, 0.0);
    Operator::from_matrix(space.clone(), herm).expect("square by construction")
}

/// A Haar-ish random normalized state (Gaussian amplitudes, renormalized).
pub fn random_state(space: &HilbertSpace, rng: &mut ChaCha8Rng) -> StateVector {
    let dim = space.total_dim();
    let raw: CVector = DVector::from_fn(dim, |_, _| {
        C64::new(gaussian(rng), gaussian(rng))
    });
    StateVector::unnormalized(space.clone(), raw)
        .renormalized()
        .expect("nonzero with probability one")
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
