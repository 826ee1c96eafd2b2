//! The simultaneous two-ancilla protocol.
//!
//! Two ancillas are coupled to the target at t₁ through commuting unitaries
//! exp(−iλ₁ B₁⊗1⊗O₁) and exp(−iλ₂ 1⊗B₂⊗O₁), then both ancillas and the
//! target are measured at t₂. The two marginals of the joint distribution
//! carry Im C (ancilla 1, B₁ = S^z) and Re C (ancilla 2, B₂ = S^y), so one
//! set of measurements yields the full complex correlation.
//!
//! The admissible ancilla states are those with ⟨S^z⟩ = 0 and, for the
//! second ancilla, ⟨S^y⟩ = 0; symmetric weights with sign patterns
//! (−1)^{k_m} r_m generate this class.

use crate::lattice::{CorrelationTask, evolve, evolve_between};
use crate::linalg::{
    HalfInteger, Operator, SpectralDecomposition, SpinComponent, spectral_decompose,
    spin_operator,
};
use crate::nimp::{AncillaSpec, MeasurementAxis, OutcomeDistribution, ancilla_state};
use crate::{Error, Result, StateVector};

/// A two-ancilla protocol run. Both ancillas are measured in their S^z
/// eigenbases; the couplings act on the joint space A₁⊗A₂⊗S and commute.
#[derive(Clone, Debug)]
pub struct TwoAncillaRun {
    pub task: CorrelationTask,
    pub ancilla1: AncillaSpec,
    pub ancilla2: AncillaSpec,
    pub coupling1: Operator,
    pub coupling2: Operator,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl TwoAncillaRun {
    /// The standard configuration: B₁ = S^z on ancilla 1 (imaginary part)
    /// and B₂ = S^y on ancilla 2 (real part).
    pub fn new(
        task: CorrelationTask,
        ancilla1: AncillaSpec,
        ancilla2: AncillaSpec,
        lambda1: f64,
        lambda2: f64,
    ) -> Result<Self> {
        let coupling1 = spin_operator(ancilla1.spin(), SpinComponent::Z);
        let coupling2 = spin_operator(ancilla2.spin(), SpinComponent::Y);
        Self::with_couplings(task, ancilla1, ancilla2, coupling1, coupling2, lambda1, lambda2)
    }

    /// Both equal-superposition spin-1/2 ancillas.
    pub fn standard(task: CorrelationTask, lambda1: f64, lambda2: f64) -> Result<Self> {
        let spec = AncillaSpec::equal_superposition(HalfInteger::HALF, MeasurementAxis::Z);
        Self::new(task, spec.clone(), spec, lambda1, lambda2)
    }

    /// Custom coupling operators; verifies Hermiticity and that the two
    /// embedded coupling Hamiltonians commute within 1e−12.
    pub fn with_couplings(
        task: CorrelationTask,
        ancilla1: AncillaSpec,
        ancilla2: AncillaSpec,
        coupling1: Operator,
        coupling2: Operator,
        lambda1: f64,
        lambda2: f64,
    ) -> Result<Self> {
        for (op, spec) in [(&coupling1, &ancilla1), (&coupling2, &ancilla2)] {
            op.ensure_hermitian()?;
            if op.dim() != spec.dimension() {
                return Err(Error::DimensionMismatch {
                    context: "ancilla coupling operator",
                    expected: spec.dimension(),
                    actual: op.dim(),
                });
            }
        }
        let run = TwoAncillaRun {
            task,
            ancilla1,
            ancilla2,
            coupling1,
            coupling2,
            lambda1,
            lambda2,
        };
        let (h1, h2) = run.embedded_couplings();
        let commutator = &(&h1 * &h2) - &(&h2 * &h1);
        let residual = commutator.max_abs();
        if residual > 1e-12 {
            return Err(Error::NotHermitian { residual });
        }
        Ok(run)
    }

    /// (B₁⊗1⊗O₁, 1⊗B₂⊗O₁) on the joint space.
    pub fn embedded_couplings(&self) -> (Operator, Operator) {
        let id1 = Operator::identity(self.coupling1.space().clone());
        let id2 = Operator::identity(self.coupling2.space().clone());
        let h1 = self.coupling1.kron(&id2).kron(&self.task.observable_early);
        let h2 = id1.kron(&self.coupling2).kron(&self.task.observable_early);
        (h1, h2)
    }
}

/// Exact joint probabilities over (m₁, m₂, e_o) outcome triples.
#[derive(Clone, Debug)]
pub struct TwoAncillaDistribution {
    labels: Vec<(f64, f64, f64)>,
    probabilities: Vec<f64>,
    dims: (usize, usize, usize),
}

impl TwoAncillaDistribution {
    pub fn labels(&self) -> &[(f64, f64, f64)] {
        &self.labels
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Which ancilla a marginal keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeepAncilla {
    First,
    Second,
}

/// The joint state (1⊗1⊗U(t₂−t₁)) 𝒰₁ 𝒰₂ |φ₁,φ₂,ψ(t₁)⟩ at measurement time.
fn joint_state_at_t2(run: &TwoAncillaRun) -> Result<StateVector> {
    let phi1 = ancilla_state(&run.ancilla1);
    let phi2 = ancilla_state(&run.ancilla2);
    let psi1 = evolve(&run.task.initial, &run.task.schedule, run.task.t1)?;
    let joint = phi1.tensor(&phi2).tensor(&psi1);

    let (h1, h2) = run.embedded_couplings();
    let u2 = crate::linalg::hermitian_propagator(&h2, run.lambda2)?;
    let u1 = crate::linalg::hermitian_propagator(&h1, run.lambda1)?;
    let coupled = u1.apply(&u2.apply(&joint)?)?;

    let anc_dim = run.ancilla1.dimension() * run.ancilla2.dimension();
    let (blocks, rest) = coupled.leading_blocks(2);
    debug_assert_eq!(blocks.len(), anc_dim);
    let mut amplitudes = crate::linalg::CVector::zeros(anc_dim * rest.total_dim());
    for (b, block) in blocks.iter().enumerate() {
        let moved = evolve_between(block, &run.task.schedule, run.task.t1, run.task.t2)?;
        for (j, amp) in moved.amplitudes().iter().enumerate() {
            amplitudes[b * rest.total_dim() + j] = *amp;
        }
    }
    Ok(StateVector::unnormalized(coupled.space().clone(), amplitudes))
}

/// The full outcome distribution of the simultaneous protocol, with deferred
/// readout of both ancillas at t₂.
pub fn two_ancilla_distribution(run: &TwoAncillaRun) -> Result<TwoAncillaDistribution> {
    let late_spec = spectral_decompose(&run.task.observable_late, None)?;
    let state = joint_state_at_t2(run)?;
    let (blocks, _) = state.leading_blocks(2);

    let labels1 = run.ancilla1.outcome_labels();
    let labels2 = run.ancilla2.outcome_labels();
    let d2 = run.ancilla2.dimension();

    let mut labels = Vec::with_capacity(blocks.len() * late_spec.len());
    let mut probabilities = Vec::with_capacity(blocks.len() * late_spec.len());
    for (b, block) in blocks.iter().enumerate() {
        let m1 = labels1[b / d2];
        let m2 = labels2[b % d2];
        for (k, &e) in late_spec.eigenvalues().iter().enumerate() {
            labels.push((m1, m2, e));
            probabilities.push(late_spec.weight(k, block)?);
        }
    }
    let total: f64 = probabilities.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::UnnormalizedDistribution { total });
    }
    Ok(TwoAncillaDistribution {
        labels,
        probabilities,
        dims: (labels1.len(), labels2.len(), late_spec.len()),
    })
}

/// Sums out the other ancilla, leaving a distribution over (m_kept, e_o).
pub fn marginalize(dist: &TwoAncillaDistribution, keep: KeepAncilla) -> OutcomeDistribution {
    let (d1, d2, ne) = dist.dims;
    let kept_dim = match keep {
        KeepAncilla::First => d1,
        KeepAncilla::Second => d2,
    };
    let mut probs = vec![0.0; kept_dim * ne];
    let mut labels = vec![(0.0, 0.0); kept_dim * ne];
    for (flat, (&(m1, m2, e), &p)) in dist.labels.iter().zip(&dist.probabilities).enumerate()
    {
        let eo = flat % ne;
        let (kept, m) = match keep {
            KeepAncilla::First => (flat / (d2 * ne), m1),
            KeepAncilla::Second => ((flat / ne) % d2, m2),
        };
        labels[kept * ne + eo] = (m, e);
        probs[kept * ne + eo] += p;
    }
    OutcomeDistribution::from_exact(labels, probs)
        .expect("marginal of a normalized distribution is normalized")
}

/// Validation report for an ancilla state intended for the simultaneous
/// protocol.
#[derive(Clone, Copy, Debug)]
pub struct SimAncillaReport {
    /// ⟨S^z⟩_φ = 0 within 1e−12.
    pub balanced_z: bool,
    /// ⟨S^y⟩_φ = 0 within 1e−12.
    pub zero_y: bool,
    /// The sufficient condition: r_m = r_{−m} and every θ_m − θ_{m+1} an
    /// integer multiple of π. States outside it are still accepted when the
    /// expectation values vanish.
    pub phase_condition: bool,
    pub z_expectation: f64,
    pub y_expectation: f64,
}

/// Checks the admissibility conditions ⟨S^z⟩ = ⟨S^y⟩ = 0 directly, and
/// reports whether the sufficient symmetric-weights/π-phases condition holds.
pub fn validate_sim_ancilla(spec: &AncillaSpec) -> SimAncillaReport {
    let phi = ancilla_state(spec);
    let sz = spin_operator(spec.spin(), SpinComponent::Z);
    let sy = spin_operator(spec.spin(), SpinComponent::Y);
    let z_expectation = sz.expectation(&phi).expect("matching spaces").re;
    let y_expectation = sy.expectation(&phi).expect("matching spaces").re;

    let coeffs = spec.coefficients();
    let phases_ok = coeffs.windows(2).all(|w| {
        let delta = (w[0].1 - w[1].1) / std::f64::consts::PI;
        (delta - delta.round()).abs() < 1e-12
    });
    SimAncillaReport {
        balanced_z: z_expectation.abs() <= 1e-12,
        zero_y: y_expectation.abs() <= 1e-12,
        phase_condition: spec.is_balanced() && phases_ok,
        z_expectation,
        y_expectation,
    }
}

/// Builds |φ⟩ = Σ (−1)^{k_m} r_m |m⟩ from symmetric weights and integer sign
/// exponents. Every state generated this way passes [`validate_sim_ancilla`]
/// with both flags set.
pub fn valid_sim_ancilla(
    spin: HalfInteger,
    weights: &[f64],
    signs: &[i64],
) -> Result<AncillaSpec> {
    let dim = spin.dimension();
    if weights.len() != dim || signs.len() != dim {
        return Err(Error::DimensionMismatch {
            context: "ancilla weights",
            expected: dim,
            actual: weights.len().max(signs.len()),
        });
    }
    for k in 0..dim {
        if (weights[k] - weights[dim - 1 - k]).abs() > 1e-12 {
            return Err(Error::InvalidAncilla {
                reason: "weights must satisfy r_m = r_{-m}".into(),
            });
        }
    }
    let coefficients = weights
        .iter()
        .zip(signs)
        .map(|(&r, &k)| (r, if k.rem_euclid(2) == 0 { 0.0 } else { std::f64::consts::PI }))
        .collect();
    AncillaSpec::new(spin, MeasurementAxis::Z, coefficients)
}

/// First-order estimates of (Im C, Re C) from one simultaneous run.
///
/// Requires B₁ = S^z, B₂ = S^y, nonzero couplings, ⟨S^z⟩ = 0 on both
/// ancillas, and ⟨S^y⟩_{φ₂} = 0. The conversion prefactors are computed from
/// ⟨B S^z⟩_φ, so admissible states beyond the equal superposition rescale
/// automatically; for equal-superposition spin-1/2 ancillas the estimates
/// reduce to 𝒞₁/(−λ₁/2) and 𝒞₂/(−λ₂/2).
pub fn simultaneous_estimate(run: &TwoAncillaRun) -> Result<(f64, f64)> {
    let (im_est, re_est, _) = simultaneous_estimate_with_distribution(run)?;
    Ok((im_est, re_est))
}

/// As [`simultaneous_estimate`], also returning the joint distribution.
pub fn simultaneous_estimate_with_distribution(
    run: &TwoAncillaRun,
) -> Result<(f64, f64, TwoAncillaDistribution)> {
    if run.lambda1 == 0.0 || run.lambda2 == 0.0 {
        return Err(Error::ZeroLambda);
    }
    let z1 = spin_operator(run.ancilla1.spin(), SpinComponent::Z);
    let y2 = spin_operator(run.ancilla2.spin(), SpinComponent::Y);
    if run.coupling1.max_abs_diff(&z1) > 1e-12 {
        return Err(Error::InvalidAncilla {
            reason: "estimator requires B1 = S^z on ancilla 1".into(),
        });
    }
    if run.coupling2.max_abs_diff(&y2) > 1e-12 {
        return Err(Error::InvalidAncilla {
            reason: "estimator requires B2 = S^y on ancilla 2".into(),
        });
    }
    let report1 = validate_sim_ancilla(&run.ancilla1);
    if !report1.balanced_z {
        return Err(Error::InvalidAncilla {
            reason: format!(
                "ancilla 1 must have vanishing <S^z> (got {:.3e})",
                report1.z_expectation
            ),
        });
    }
    let report2 = validate_sim_ancilla(&run.ancilla2);
    if !report2.balanced_z || !report2.zero_y {
        return Err(Error::InvalidAncilla {
            reason: format!(
                "ancilla 2 must have vanishing <S^z> and <S^y> (got {:.3e}, {:.3e})",
                report2.z_expectation, report2.y_expectation
            ),
        });
    }

    let (g1, g2) = estimate_prefactors(run)?;
    let dist = two_ancilla_distribution(run)?;
    let c1 = crate::nimp::weighted_correlation(&marginalize(&dist, KeepAncilla::First));
    let c2 = crate::nimp::weighted_correlation(&marginalize(&dist, KeepAncilla::Second));
    Ok((
        c1 / (-2.0 * run.lambda1 * g1),
        c2 / (-2.0 * run.lambda2 * g2),
        dist,
    ))
}

/// The conversion prefactors Re⟨B₁S^z⟩_{φ₁} and Im⟨B₂S^z⟩_{φ₂}.
fn estimate_prefactors(run: &TwoAncillaRun) -> Result<(f64, f64)> {
    let phi1 = ancilla_state(&run.ancilla1);
    let phi2 = ancilla_state(&run.ancilla2);
    let sz1 = spin_operator(run.ancilla1.spin(), SpinComponent::Z);
    let sz2 = spin_operator(run.ancilla2.spin(), SpinComponent::Z);
    let bs1 = (&run.coupling1 * &sz1).expectation(&phi1)?;
    let bs2 = (&run.coupling2 * &sz2).expectation(&phi2)?;
    // the Im-channel prefactor must be purely real and the Re-channel one
    // purely imaginary, otherwise the channels mix parts of C
    if bs1.im.abs() > 1e-12 || bs2.re.abs() > 1e-12 {
        return Err(Error::InvalidAncilla {
            reason: "coupling expectation mixes real and imaginary channels".into(),
        });
    }
    if bs1.re.abs() < 1e-14 || bs2.im.abs() < 1e-14 {
        return Err(Error::DegeneratePrefactor);
    }
    Ok((bs1.re, bs2.im))
}

/// Marginal-consistency check: the operator-identity form of the marginal,
/// ⟨Ψ(t₂)| (|m₁⟩⟨m₁| ⊗ 1 ⊗ Π^o) |Ψ(t₂)⟩, compared against summing the joint
/// distribution. Returns the largest absolute deviation.
pub fn marginal_identity_residual(run: &TwoAncillaRun) -> Result<f64> {
    let dist = two_ancilla_distribution(run)?;
    let marg1 = marginalize(&dist, KeepAncilla::First);
    let late_spec: SpectralDecomposition =
        spectral_decompose(&run.task.observable_late, None)?;
    let state = joint_state_at_t2(run)?;
    let d1 = run.ancilla1.dimension();
    let d2 = run.ancilla2.dimension();
    let mut worst: f64 = 0.0;
    let (blocks, _) = state.leading_blocks(2);
    for m1 in 0..d1 {
        for k in 0..late_spec.len() {
            // direct evaluation of the projector expectation: the ancilla-2
            // index is part of the orthogonal block structure, so the
            // operator identity sums the per-block weights
            let mut direct = 0.0;
            for m2 in 0..d2 {
                direct += late_spec.weight(k, &blocks[m1 * d2 + m2])?;
            }
            let from_marginal = marg1.probabilities()[m1 * late_spec.len() + k];
            worst = worst.max((direct - from_marginal).abs());
        }
    }
    Ok(worst)
}
