//! Target Hamiltonians, piecewise-constant time evolution, and the exact
//! dynamic-correlation oracle.
//!
//! The oracle [`exact_correlation`] evaluates C = ⟨ψ|O₁(t₁)O₂(t₂)|ψ⟩ by
//! direct dense state evolution. Every measurement protocol in this crate is
//! validated against it.

use crate::linalg::{
    C64, HalfInteger, HilbertSpace, Operator, SpinComponent, embed_product,
    hermitian_propagator, spin_operator,
};
use crate::{Error, Result, StateVector};

/// One product term `coefficient · A_{i} ⊗ B_{j} ⊗ …` of a lattice
/// Hamiltonian, with Hermitian local factors at distinct sites.
#[derive(Clone, Debug)]
pub struct HamiltonianTerm {
    pub coefficient: f64,
    pub factors: Vec<(usize, Operator)>,
}

impl HamiltonianTerm {
    pub fn new(coefficient: f64, factors: Vec<(usize, Operator)>) -> Self {
        HamiltonianTerm { coefficient, factors }
    }

    pub fn single(coefficient: f64, site: usize, op: Operator) -> Self {
        HamiltonianTerm { coefficient, factors: vec![(site, op)] }
    }
}

/// H = Σ terms, assembled on `space`. Hermitian by construction since each
/// local factor must be Hermitian and each coefficient is real.
pub fn build_hamiltonian(terms: &[HamiltonianTerm], space: &HilbertSpace) -> Result<Operator> {
    let mut h = Operator::zero(space.clone());
    for term in terms {
        for (_, op) in &term.factors {
            op.ensure_hermitian()?;
        }
        let refs: Vec<(usize, &Operator)> =
            term.factors.iter().map(|(site, op)| (*site, op)).collect();
        let product = embed_product(&refs, space)?;
        h = &h + &product.scaled(C64::new(term.coefficient, 0.0));
    }
    Ok(h)
}

/// Transverse-field Ising chain of spin-1/2 sites with open boundaries:
/// H = −J Σ S^z_k S^z_{k+1} − g Σ S^x_k.
pub fn tfim(sites: usize, j: f64, g: f64) -> (HilbertSpace, Operator) {
    let space = HilbertSpace::spin_chain(sites, HalfInteger::HALF);
    let sz = spin_operator(HalfInteger::HALF, SpinComponent::Z);
    let sx = spin_operator(HalfInteger::HALF, SpinComponent::X);
    let mut terms = Vec::new();
    for k in 0..sites.saturating_sub(1) {
        terms.push(HamiltonianTerm::new(-j, vec![(k, sz.clone()), (k + 1, sz.clone())]));
    }
    for k in 0..sites {
        terms.push(HamiltonianTerm::single(-g, k, sx.clone()));
    }
    let h = build_hamiltonian(&terms, &space).expect("preset terms are well-formed");
    (space, h)
}

#[derive(Clone, Debug)]
pub struct ScheduleSegment {
    pub duration: f64,
    pub hamiltonian: Operator,
}

/// A piecewise-constant evolution schedule on the target space.
///
/// Evolution over the schedule is the ordered product of the segment
/// propagators; if the requested time exceeds the total duration, the final
/// Hamiltonian extends indefinitely.
#[derive(Clone, Debug)]
pub struct Schedule {
    segments: Vec<ScheduleSegment>,
}

impl Schedule {
    /// A single Hamiltonian for all times.
    pub fn constant(hamiltonian: Operator) -> Self {
        Schedule {
            segments: vec![ScheduleSegment { duration: f64::INFINITY, hamiltonian }],
        }
    }

    pub fn piecewise(segments: Vec<ScheduleSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::DimensionMismatch {
                context: "schedule segments",
                expected: 1,
                actual: 0,
            });
        }
        let space = segments[0].hamiltonian.space().clone();
        for seg in &segments {
            if seg.duration < 0.0 {
                return Err(Error::NegativeTime { t: seg.duration });
            }
            if *seg.hamiltonian.space() != space {
                return Err(Error::DimensionMismatch {
                    context: "schedule segment space",
                    expected: space.total_dim(),
                    actual: seg.hamiltonian.space().total_dim(),
                });
            }
            seg.hamiltonian.ensure_hermitian()?;
        }
        Ok(Schedule { segments })
    }

    pub fn space(&self) -> &HilbertSpace {
        self.segments[0].hamiltonian.space()
    }

    pub fn segments(&self) -> &[ScheduleSegment] {
        &self.segments
    }

    /// The pieces `(H_k, Δt_k)` that make up evolution from `t0` to `t1`,
    /// in application order.
    fn pieces(&self, t0: f64, t1: f64) -> Vec<(&Operator, f64)> {
        debug_assert!(0.0 <= t0 && t0 <= t1);
        let mut pieces = Vec::new();
        let mut clock = 0.0;
        let mut remaining_skip = t0;
        let mut remaining = t1 - t0;
        for (idx, seg) in self.segments.iter().enumerate() {
            let is_last = idx + 1 == self.segments.len();
            let available = if is_last { f64::INFINITY } else { seg.duration };
            let skip_here = remaining_skip.min(available);
            remaining_skip -= skip_here;
            let run_here = remaining.min(available - skip_here);
            if run_here > 0.0 {
                pieces.push((&seg.hamiltonian, run_here));
                remaining -= run_here;
            }
            clock += seg.duration;
            let _ = clock;
            if remaining <= 0.0 {
                break;
            }
        }
        pieces
    }

    /// The unitary carrying states from time `t0` to `t1 ≥ t0`.
    pub fn propagator_between(&self, t0: f64, t1: f64) -> Result<Operator> {
        if t0 < 0.0 {
            return Err(Error::NegativeTime { t: t0 });
        }
        if t1 < t0 {
            return Err(Error::InvalidTimeOrder { t1: t0, t2: t1 });
        }
        let mut u = Operator::identity(self.space().clone());
        for (h, dt) in self.pieces(t0, t1) {
            u = &hermitian_propagator(h, dt)? * &u;
        }
        Ok(u)
    }
}

/// Evolves a state from time 0 to `t ≥ 0` under the schedule.
pub fn evolve(state: &StateVector, schedule: &Schedule, t: f64) -> Result<StateVector> {
    evolve_between(state, schedule, 0.0, t)
}

/// Evolves between two times; `t1 < t0` applies the adjoint (backward)
/// propagator.
pub fn evolve_between(
    state: &StateVector,
    schedule: &Schedule,
    t0: f64,
    t1: f64,
) -> Result<StateVector> {
    if t0 < 0.0 || t1 < 0.0 {
        return Err(Error::NegativeTime { t: t0.min(t1) });
    }
    let forward = t1 >= t0;
    let (a, b) = if forward { (t0, t1) } else { (t1, t0) };
    let mut current = state.clone();
    let mut pieces = schedule.pieces(a, b);
    if !forward {
        pieces.reverse();
    }
    for (h, dt) in pieces {
        let signed_dt = if forward { dt } else { -dt };
        let u = hermitian_propagator(h, signed_dt)?;
        current = u.apply(&current)?;
    }
    Ok(current)
}

/// A fully specified correlation measurement: initial state, both Hermitian
/// observables with their times, and the evolution schedule.
#[derive(Clone, Debug)]
pub struct CorrelationTask {
    pub initial: StateVector,
    pub observable_early: Operator,
    pub t1: f64,
    pub observable_late: Operator,
    pub t2: f64,
    pub schedule: Schedule,
}

impl CorrelationTask {
    /// Validates Hermiticity, time ordering (0 ≤ t1 ≤ t2; equal times are
    /// the coincidence limit), and space consistency.
    pub fn new(
        initial: StateVector,
        observable_early: Operator,
        t1: f64,
        observable_late: Operator,
        t2: f64,
        schedule: Schedule,
    ) -> Result<Self> {
        if t1 < 0.0 || t2 < t1 {
            return Err(Error::InvalidTimeOrder { t1, t2 });
        }
        observable_early.ensure_hermitian()?;
        observable_late.ensure_hermitian()?;
        let space = initial.space();
        for (op, context) in [
            (&observable_early, "early observable space"),
            (&observable_late, "late observable space"),
        ] {
            if op.space() != space {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: space.total_dim(),
                    actual: op.space().total_dim(),
                });
            }
        }
        if schedule.space() != space {
            return Err(Error::DimensionMismatch {
                context: "schedule space",
                expected: space.total_dim(),
                actual: schedule.space().total_dim(),
            });
        }
        Ok(CorrelationTask {
            initial,
            observable_early,
            t1,
            observable_late,
            t2,
            schedule,
        })
    }

    pub fn space(&self) -> &HilbertSpace {
        self.initial.space()
    }
}

/// The oracle: C = ⟨ψ|O₁(t₁)O₂(t₂)|ψ⟩ with O(t) = U†(t) O U(t),
/// evaluated by state-side application only.
pub fn exact_correlation(task: &CorrelationTask) -> Result<C64> {
    let psi1 = evolve(&task.initial, &task.schedule, task.t1)?;
    let at_t2 = evolve_between(&psi1, &task.schedule, task.t1, task.t2)?;
    let late_applied = task.observable_late.apply(&at_t2)?;
    let back = evolve_between(&late_applied, &task.schedule, task.t2, task.t1)?;
    let early_applied = task.observable_early.apply(&back)?;
    psi1.inner(&early_applied)
}

/// U†(t) O U(t), the observable carried to time t in the Heisenberg picture.
pub fn heisenberg_observable(op: &Operator, t: f64, schedule: &Schedule) -> Result<Operator> {
    if op.space() != schedule.space() {
        return Err(Error::DimensionMismatch {
            context: "Heisenberg observable space",
            expected: schedule.space().total_dim(),
            actual: op.space().total_dim(),
        });
    }
    let u = schedule.propagator_between(0.0, t)?;
    Ok(&(&u.adjoint() * op) * &u)
}
