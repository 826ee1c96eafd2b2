//! The single-ancilla noninvasive measurement protocol.
//!
//! An ancilla spin ζ is prepared in a state φ, coupled weakly to the target
//! at t₁ by the unitary exp(−iλ B⊗O₁), and measured projectively in the
//! eigenbasis of S^α; the target is measured at t₂ in the eigenbasis of O₂.
//! Correlating the outcome pairs (m_α, e_o) gives a weighted correlation 𝒞
//! that is proportional, at first order in λ, to Im C (coupling via B = S^α)
//! or Re C (coupling via the ladder difference B = (i/2)(S_α⁻ − S_α⁺)).
//!
//! All ancilla states and operators are expressed in the S^α measurement
//! eigenbasis, ordered by descending m. In that basis S^α is the diagonal
//! spin matrix and the ladder difference is the y-form spin matrix, so the
//! numerics are identical for every axis α; the axis is carried as metadata
//! describing the physical setup.

use crate::lattice::{CorrelationTask, evolve, evolve_between};
use crate::linalg::{
    C64, CVector, HalfInteger, HilbertSpace, Operator, SpectralDecomposition, SpinComponent,
    spectral_decompose, spin_operator,
};
use crate::{Error, Result, StateVector};

/// Measurement axis for the ancilla readout. The simulation works in the
/// S^α eigenbasis throughout, so this is descriptive metadata.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasurementAxis {
    X,
    Y,
    Z,
}

/// Ancilla preparation: spin ζ, readout axis α, and the coefficients
/// r_m e^{iθ_m} of the initial state in the S^α eigenbasis (m descending).
#[derive(Clone, Debug)]
pub struct AncillaSpec {
    spin: HalfInteger,
    axis: MeasurementAxis,
    /// (r_m, θ_m) pairs; r_m ≥ 0, Σ r_m² = 1.
    coefficients: Vec<(f64, f64)>,
}

impl AncillaSpec {
    pub fn new(
        spin: HalfInteger,
        axis: MeasurementAxis,
        coefficients: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if coefficients.len() != spin.dimension() {
            return Err(Error::DimensionMismatch {
                context: "ancilla coefficients",
                expected: spin.dimension(),
                actual: coefficients.len(),
            });
        }
        if coefficients.iter().any(|&(r, _)| r < 0.0) {
            return Err(Error::InvalidAncilla {
                reason: "weights r_m must be non-negative".into(),
            });
        }
        let total: f64 = coefficients.iter().map(|&(r, _)| r * r).sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized { norm: total.sqrt() });
        }
        Ok(AncillaSpec { spin, axis, coefficients })
    }

    /// The equal superposition r_m = (2ζ+1)^{−1/2}, θ_m = 0 — the default
    /// balanced preparation.
    pub fn equal_superposition(spin: HalfInteger, axis: MeasurementAxis) -> Self {
        let dim = spin.dimension();
        let r = (dim as f64).sqrt().recip();
        AncillaSpec { spin, axis, coefficients: vec![(r, 0.0); dim] }
    }

    pub fn spin(&self) -> HalfInteger {
        self.spin
    }

    pub fn axis(&self) -> MeasurementAxis {
        self.axis
    }

    pub fn coefficients(&self) -> &[(f64, f64)] {
        &self.coefficients
    }

    pub fn dimension(&self) -> usize {
        self.spin.dimension()
    }

    /// Whether r_m = r_{−m} for all m, which makes ⟨S^α⟩_φ vanish.
    pub fn is_balanced(&self) -> bool {
        let dim = self.dimension();
        (0..dim).all(|k| {
            (self.coefficients[k].0 - self.coefficients[dim - 1 - k].0).abs() <= 1e-12
        })
    }

    /// The outcome labels m = ζ, ζ−1, …, −ζ.
    pub fn outcome_labels(&self) -> Vec<f64> {
        self.spin.projections().collect()
    }
}

/// The ancilla initial state |φ⟩ = Σ r_m e^{iθ_m} |m⟩ in the measurement
/// eigenbasis. For balanced specs ⟨S^α⟩_φ = 0 within 1e−12.
pub fn ancilla_state(spec: &AncillaSpec) -> StateVector {
    let dim = spec.dimension();
    let amplitudes = CVector::from_iterator(
        dim,
        spec.coefficients().iter().map(|&(r, theta)| C64::from_polar(r, theta)),
    );
    StateVector::new(HilbertSpace::single(dim), amplitudes)
        .expect("AncillaSpec enforces normalization")
}

/// Which part of C the coupling operator extracts at first order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CouplingVariant {
    /// Variant 1, B = S^α: the weighted correlation is ∝ Im C.
    Imaginary,
    /// Variant 2, B = (i/2)(S_α⁻ − S_α⁺): the weighted correlation is ∝ Re C.
    Real,
}

impl CouplingVariant {
    pub fn index(self) -> u8 {
        match self {
            CouplingVariant::Imaginary => 1,
            CouplingVariant::Real => 2,
        }
    }
}

/// Whether the coupling unitary is applied exactly or truncated to first
/// order in λ (the analysis device; it leaves states un-normalized).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CouplingMode {
    Exact,
    Linearized,
}

#[derive(Clone, Copy, Debug)]
pub struct CouplingSpec {
    pub variant: CouplingVariant,
    pub lambda: f64,
    pub mode: CouplingMode,
}

impl CouplingSpec {
    pub fn exact(variant: CouplingVariant, lambda: f64) -> Self {
        CouplingSpec { variant, lambda, mode: CouplingMode::Exact }
    }

    pub fn linearized(variant: CouplingVariant, lambda: f64) -> Self {
        CouplingSpec { variant, lambda, mode: CouplingMode::Linearized }
    }
}

/// The ancilla-side coupling operator B in the measurement eigenbasis:
/// the diagonal spin matrix for variant 1, the y-form ladder difference for
/// variant 2. Hermitian in both cases.
pub fn coupling_generator(variant: CouplingVariant, spin: HalfInteger) -> Operator {
    match variant {
        CouplingVariant::Imaginary => spin_operator(spin, SpinComponent::Z),
        CouplingVariant::Real => spin_operator(spin, SpinComponent::Y),
    }
}

/// |λ|·‖B ⊗ O₁‖, the dimensionless size of the coupling pulse. The
/// weak-coupling regime requires this to be ≪ 1.
pub fn coupling_strength(ancilla_op: &Operator, target_obs: &Operator, lambda: f64) -> f64 {
    lambda.abs() * ancilla_op.operator_norm() * target_obs.operator_norm()
}

/// Applies the ancilla–target coupling to a joint state.
///
/// Exact mode applies exp(−iλ B⊗O₁) and preserves the norm; linearized mode
/// applies 1 − iλ B⊗O₁ without renormalizing and flags the result.
pub fn couple(
    joint: &StateVector,
    ancilla_op: &Operator,
    target_obs: &Operator,
    lambda: f64,
    mode: CouplingMode,
) -> Result<StateVector> {
    let coupling = ancilla_op.kron(target_obs);
    if coupling.space() != joint.space() {
        return Err(Error::DimensionMismatch {
            context: "coupling space",
            expected: coupling.dim(),
            actual: joint.space().total_dim(),
        });
    }
    match mode {
        CouplingMode::Exact => {
            let u = crate::linalg::hermitian_propagator(&coupling, lambda)?;
            u.apply(joint)
        }
        CouplingMode::Linearized => {
            let correction = coupling.apply(joint)?;
            let amplitudes =
                joint.amplitudes() - correction.amplitudes() * C64::new(0.0, lambda);
            Ok(StateVector::unnormalized(joint.space().clone(), amplitudes))
        }
    }
}

/// When the ancilla readout happens. Immediate measures it at t₁ right after
/// the coupling; deferred carries it along to t₂. For exact coupling the two
/// produce identical outcome statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReadoutTiming {
    Immediate,
    Deferred,
}

/// One fully specified protocol run.
#[derive(Clone, Debug)]
pub struct NimpRun {
    pub task: CorrelationTask,
    pub ancilla: AncillaSpec,
    pub coupling: CouplingSpec,
    pub readout: ReadoutTiming,
}

impl NimpRun {
    pub fn new(
        task: CorrelationTask,
        ancilla: AncillaSpec,
        coupling: CouplingSpec,
        readout: ReadoutTiming,
    ) -> Self {
        NimpRun { task, ancilla, coupling, readout }
    }

    /// The ancilla-side coupling operator for this run.
    pub fn ancilla_coupling(&self) -> Operator {
        coupling_generator(self.coupling.variant, self.ancilla.spin())
    }

    /// |λ|·‖B ⊗ O₁‖ for this run.
    pub fn coupling_strength(&self) -> f64 {
        coupling_strength(
            &self.ancilla_coupling(),
            &self.task.observable_early,
            self.coupling.lambda,
        )
    }
}

/// Exact probabilities over measurement-outcome tuples.
///
/// Labels pair an ancilla eigenvalue m with a distinct eigenvalue e_o of the
/// late observable. In exact mode probabilities are Born weights (clipped at
/// −1e−12); in linearized mode they are the first-order expansion, may dip
/// negative at O(λ²), and are reported unclipped with `truncated` set.
#[derive(Clone, Debug)]
pub struct OutcomeDistribution {
    labels: Vec<(f64, f64)>,
    probabilities: Vec<f64>,
    truncated: bool,
}

impl OutcomeDistribution {
    pub(crate) fn from_exact(labels: Vec<(f64, f64)>, raw: Vec<f64>) -> Result<Self> {
        let mut probabilities = raw;
        for p in probabilities.iter_mut() {
            if *p < 0.0 {
                debug_assert!(*p >= -1e-12, "exact Born weight below clip threshold");
                *p = 0.0;
            }
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::UnnormalizedDistribution { total });
        }
        Ok(OutcomeDistribution { labels, probabilities, truncated: false })
    }

    pub(crate) fn from_linearized(labels: Vec<(f64, f64)>, probabilities: Vec<f64>) -> Self {
        OutcomeDistribution { labels, probabilities, truncated: true }
    }

    pub fn labels(&self) -> &[(f64, f64)] {
        &self.labels
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// True when the probabilities come from the first-order expansion.
    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// The estimator weights m·e per outcome.
    pub fn weights(&self) -> Vec<f64> {
        self.labels.iter().map(|&(m, e)| m * e).collect()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// The un-normalized target branches (⟨m|⊗1)𝒰(λ)|φ,ψ(t₁)⟩ right after the
/// coupling, one per ancilla outcome m. ‖branch‖² is the outcome probability
/// of an immediate readout; the branches coincide with M_m|ψ(t₁)⟩ for the
/// Kraus operators of the measurement.
pub fn immediate_branches(run: &NimpRun) -> Result<Vec<(f64, StateVector)>> {
    let phi = ancilla_state(&run.ancilla);
    let psi1 = evolve(&run.task.initial, &run.task.schedule, run.task.t1)?;
    let joint = phi.tensor(&psi1);
    let b = run.ancilla_coupling();
    let coupled = couple(
        &joint,
        &b,
        &run.task.observable_early,
        run.coupling.lambda,
        run.coupling.mode,
    )?;
    let (blocks, _) = coupled.leading_blocks(1);
    Ok(run.ancilla.outcome_labels().into_iter().zip(blocks).collect())
}

/// The joint outcome distribution over (m_α, e_o) tuples.
pub fn outcome_distribution(run: &NimpRun) -> Result<OutcomeDistribution> {
    let late_spec = spectral_decompose(&run.task.observable_late, None)?;
    match run.coupling.mode {
        CouplingMode::Exact => exact_distribution(run, &late_spec),
        CouplingMode::Linearized => linearized_distribution(run, &late_spec),
    }
}

fn make_labels(ancilla: &AncillaSpec, late_spec: &SpectralDecomposition) -> Vec<(f64, f64)> {
    let mut labels = Vec::with_capacity(ancilla.dimension() * late_spec.len());
    for m in ancilla.outcome_labels() {
        for &e in late_spec.eigenvalues() {
            labels.push((m, e));
        }
    }
    labels
}

fn exact_distribution(
    run: &NimpRun,
    late_spec: &SpectralDecomposition,
) -> Result<OutcomeDistribution> {
    let branches = immediate_branches(run)?;
    let mut raw = Vec::with_capacity(branches.len() * late_spec.len());
    for (_, branch) in &branches {
        // The ancilla projector commutes with the target evolution, so the
        // deferred path evolves each un-normalized branch as is, while the
        // immediate path follows the collapse bookkeeping literally:
        // renormalize at t1, evolve, then restore the Born weight.
        let evolved = match run.readout {
            ReadoutTiming::Deferred => {
                evolve_between(branch, &run.task.schedule, run.task.t1, run.task.t2)?
            }
            ReadoutTiming::Immediate => {
                let weight = branch.norm().powi(2);
                if weight < 1e-300 {
                    branch.clone()
                } else {
                    let collapsed = branch.renormalized()?;
                    let moved = evolve_between(
                        &collapsed,
                        &run.task.schedule,
                        run.task.t1,
                        run.task.t2,
                    )?;
                    StateVector::unnormalized(
                        moved.space().clone(),
                        moved.amplitudes() * C64::new(weight.sqrt(), 0.0),
                    )
                }
            }
        };
        for k in 0..late_spec.len() {
            raw.push(late_spec.weight(k, &evolved)?);
        }
    }
    OutcomeDistribution::from_exact(make_labels(&run.ancilla, late_spec), raw)
}

/// First-order probabilities P = P⁰ + 2λ Im⟨Ψ⁰|Π|Ψ¹⟩, reproducing the
/// weak-coupling expansion term by term with the O(λ²) remainder dropped.
fn linearized_distribution(
    run: &NimpRun,
    late_spec: &SpectralDecomposition,
) -> Result<OutcomeDistribution> {
    let phi = ancilla_state(&run.ancilla);
    let psi1 = evolve(&run.task.initial, &run.task.schedule, run.task.t1)?;
    let joint = phi.tensor(&psi1);
    let b = run.ancilla_coupling();
    let coupling = b.kron(&run.task.observable_early);
    let first_order = coupling.apply(&joint)?;

    let (zero_blocks, _) = joint.leading_blocks(1);
    let (one_blocks, _) = first_order.leading_blocks(1);
    let lambda = run.coupling.lambda;

    let mut probabilities = Vec::with_capacity(zero_blocks.len() * late_spec.len());
    for (zero, one) in zero_blocks.iter().zip(&one_blocks) {
        let zero_t2 = evolve_between(zero, &run.task.schedule, run.task.t1, run.task.t2)?;
        let one_t2 = evolve_between(one, &run.task.schedule, run.task.t1, run.task.t2)?;
        for proj in late_spec.projectors() {
            let p_zero = proj.apply(&zero_t2)?;
            let base = p_zero.norm().powi(2);
            let cross = p_zero.inner(&one_t2)?;
            probabilities.push(base + 2.0 * lambda * cross.im);
        }
    }
    Ok(OutcomeDistribution::from_linearized(
        make_labels(&run.ancilla, late_spec),
        probabilities,
    ))
}

/// 𝒞 = Σ m_α e_o P(m_α, e_o).
pub fn weighted_correlation(dist: &OutcomeDistribution) -> f64 {
    dist.labels
        .iter()
        .zip(&dist.probabilities)
        .map(|(&(m, e), &p)| m * e * p)
        .sum()
}

/// The closed-form conversion prefactors for an equal-superposition ancilla:
///
/// f⁽¹⁾ = (2ζ³ + 3ζ² + ζ) / (3(2ζ+1)),
/// f⁽²⁾ = (1/(2(2ζ+1))) Σ_{m=−ζ}^{ζ−1} c₊(ζ, m).
///
/// They equal the real (variant 1) and imaginary (variant 2) part of
/// ⟨B S^α⟩_φ, which the validation suite checks by direct matrix computation.
pub fn estimator_prefactor(variant: CouplingVariant, spin: HalfInteger) -> f64 {
    let s = spin.value();
    match variant {
        CouplingVariant::Imaginary => {
            (2.0 * s.powi(3) + 3.0 * s.powi(2) + s) / (3.0 * (2.0 * s + 1.0))
        }
        CouplingVariant::Real => {
            let sum: f64 = spin
                .projections()
                .skip(1) // m = ζ−1 … −ζ, i.e. all m with m+1 in range
                .map(|m| crate::linalg::ladder_coefficient(spin, m))
                .sum();
            sum / (2.0 * (2.0 * s + 1.0))
        }
    }
}

/// Combines the two variants' weighted correlations at the same λ into the
/// complex correlation estimate C^λ = −(1/2λ)(𝒞₂/f⁽²⁾ + i 𝒞₁/f⁽¹⁾).
pub fn reconstruct_correlation(
    c_imag_variant: f64,
    c_real_variant: f64,
    lambda: f64,
    spin: HalfInteger,
) -> Result<C64> {
    if lambda == 0.0 {
        return Err(Error::ZeroLambda);
    }
    let f1 = estimator_prefactor(CouplingVariant::Imaginary, spin);
    let f2 = estimator_prefactor(CouplingVariant::Real, spin);
    Ok(C64::new(c_real_variant / f2, c_imag_variant / f1) * (-0.5 / lambda))
}

/// Runs the protocol with exact probabilities: the outcome distribution and
/// its weighted correlation.
pub fn run_protocol(run: &NimpRun) -> Result<(f64, OutcomeDistribution)> {
    let dist = outcome_distribution(run)?;
    Ok((weighted_correlation(&dist), dist))
}
