//! State-vector simulation of noninvasive (weak ancilla) measurement
//! protocols for dynamic correlations in finite spin lattices.
//!
//! The library estimates the complex two-time correlation
//! C = ⟨ψ|O₁(t₁)O₂(t₂)|ψ⟩ of Hermitian observables under unitary evolution,
//! and simulates every measurement protocol against the exact state-vector
//! oracle:
//!
//! - [`lattice`] builds Hamiltonians, evolves states under piecewise-constant
//!   schedules, and computes the exact correlation (the oracle).
//! - [`nimp`] is the single-ancilla noninvasive measurement protocol: weakly
//!   couple an ancilla spin to the target at t₁, measure it projectively, and
//!   correlate with a later projective measurement at t₂.
//! - [`simul`] couples two ancillas simultaneously at t₁ so that both the
//!   real and the imaginary part of C come out of one set of measurements.
//! - [`povm`] gives the Kraus-operator view of the ancilla measurement and
//!   the ancilla-free protocols it licenses for special observables.
//! - [`sampler`] adds finite-shot Monte Carlo statistics with reproducible,
//!   counter-based randomness, and the error-vs-coupling-time scan.
//!
//! All operations are pure functions on immutable values and can be shared
//! freely across threads.

pub mod lattice;
pub mod linalg;
pub mod nimp;
pub mod povm;
pub mod random;
pub mod sampler;
pub mod simul;

pub use linalg::{
    C64, HalfInteger, HilbertSpace, Operator, SpectralDecomposition, StateVector,
};

/// Errors produced by the simulation library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("operator is not Hermitian (residual {residual:.3e})")]
    NotHermitian { residual: f64 },
    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },
    #[error("site index {site} out of range for {sites} sites")]
    SiteOutOfRange { site: usize, sites: usize },
    #[error("negative time {t}")]
    NegativeTime { t: f64 },
    #[error("measurement times must satisfy 0 <= t1 <= t2, got t1={t1}, t2={t2}")]
    InvalidTimeOrder { t1: f64, t2: f64 },
    #[error("coupling time lambda must be nonzero")]
    ZeroLambda,
    #[error("rotation angle theta must be nonzero")]
    ZeroTheta,
    #[error("ancilla specification invalid: {reason}")]
    InvalidAncilla { reason: String },
    #[error("Kraus set incomplete: completeness residual {residual:.3e}")]
    IncompleteKrausSet { residual: f64 },
    #[error("observable spectrum is not of two-point symmetric form: {reason}")]
    SpectrumNotTwoPoint { reason: String },
    #[error("distribution is not normalized (total {total})")]
    UnnormalizedDistribution { total: f64 },
    #[error("shot count must be at least 1")]
    ZeroShots,
    #[error("scan grid must be nonempty, positive, and sorted ascending")]
    InvalidGrid,
    #[error("estimator prefactor vanishes for this ancilla state")]
    DegeneratePrefactor,
}

pub type Result<T> = std::result::Result<T, Error>;
