//! Finite-shot Monte Carlo simulation of the protocols.
//!
//! Sampling is counter-based: shot i draws its uniform variate from a fixed
//! position (derived from i alone) in the keyed ChaCha stream for the record
//! seed, so counts are reproducible bit for bit regardless of chunking or
//! thread scheduling. Estimators are plug-in replacements of probabilities
//! by relative frequencies, with delta-method standard errors (bootstrap
//! available for validation).

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;

use crate::lattice::{CorrelationTask, evolve, evolve_between, exact_correlation};
use crate::linalg::{C64, HalfInteger, spectral_decompose};
use crate::nimp::{
    AncillaSpec, CouplingSpec, CouplingVariant, MeasurementAxis, NimpRun, OutcomeDistribution,
    ReadoutTiming, estimator_prefactor, outcome_distribution, reconstruct_correlation,
    weighted_correlation,
};
use crate::povm::two_point_spectrum;
use crate::{Error, Result};

/// Words consumed per `next_u64` on the ChaCha stream.
const WORDS_PER_U64: u128 = 2;

/// A finite sample of protocol outcomes: counts per outcome index, aligned
/// with the distribution the record was drawn from. Identical
/// (descriptor, seed, n) always reproduce identical counts.
#[derive(Clone, Debug, PartialEq)]
pub struct ShotRecord {
    pub descriptor: String,
    pub seed: u64,
    pub n: u64,
    pub counts: Vec<u64>,
}

impl ShotRecord {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Relative frequencies n_k / n.
    pub fn frequencies(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.n as f64).collect()
    }
}

/// The uniform variate of shot `index` under `seed`: the two stream words at
/// counter position 2·index, mapped to [0, 1).
fn shot_uniform(rng: &mut ChaCha8Rng, index: u64) -> f64 {
    rng.set_word_pos(index as u128 * WORDS_PER_U64);
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn cumulative(probabilities: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = probabilities.iter().sum();
    if (total - 1.0).abs() > 1e-10 || probabilities.iter().any(|&p| p < -1e-12) {
        return Err(Error::UnnormalizedDistribution { total });
    }
    let mut acc = 0.0;
    let mut cumulative: Vec<f64> = probabilities
        .iter()
        .map(|&p| {
            acc += p.max(0.0);
            acc
        })
        .collect();
    if let Some(last) = cumulative.last_mut() {
        *last = 1.0;
    }
    Ok(cumulative)
}

fn index_for(cumulative: &[f64], u: f64) -> usize {
    cumulative.partition_point(|&edge| edge <= u).min(cumulative.len() - 1)
}

/// Draws `n` multinomial shots from a normalized distribution.
pub fn sample(
    probabilities: &[f64],
    n: u64,
    seed: u64,
    descriptor: impl Into<String>,
) -> Result<ShotRecord> {
    if n == 0 {
        return Err(Error::ZeroShots);
    }
    let cumulative = cumulative(probabilities)?;
    let mut counts = vec![0u64; probabilities.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for shot in 0..n {
        let u = shot_uniform(&mut rng, shot);
        counts[index_for(&cumulative, u)] += 1;
    }
    Ok(ShotRecord { descriptor: descriptor.into(), seed, n, counts })
}

/// [`sample`] for a protocol outcome distribution.
pub fn sample_distribution(
    dist: &OutcomeDistribution,
    n: u64,
    seed: u64,
    descriptor: impl Into<String>,
) -> Result<ShotRecord> {
    sample(dist.probabilities(), n, seed, descriptor)
}

/// [`sample`] for a two-ancilla joint distribution.
pub fn sample_joint(
    dist: &crate::simul::TwoAncillaDistribution,
    n: u64,
    seed: u64,
    descriptor: impl Into<String>,
) -> Result<ShotRecord> {
    sample(dist.probabilities(), n, seed, descriptor)
}

/// How a shot record turns into a physical estimate.
#[derive(Clone, Copy, Debug)]
pub enum EstimatorMeta {
    /// The raw weighted correlation Σ w_k n_k/n.
    WeightedCorrelation,
    /// A single-ancilla protocol part estimate 𝒞/(−2λ f⁽ᵛ⁾(ζ)).
    NimpPart {
        variant: CouplingVariant,
        lambda: f64,
        spin: HalfInteger,
    },
    /// A marginal of the simultaneous protocol, 𝒞/(−2λ g) with the
    /// prefactor g from ⟨B S^z⟩_φ.
    SimulPart { lambda: f64, prefactor: f64 },
}

impl EstimatorMeta {
    /// The factor applied to the raw weighted correlation.
    fn scale(&self) -> f64 {
        match *self {
            EstimatorMeta::WeightedCorrelation => 1.0,
            EstimatorMeta::NimpPart { variant, lambda, spin } => {
                -1.0 / (2.0 * lambda * estimator_prefactor(variant, spin))
            }
            EstimatorMeta::SimulPart { lambda, prefactor } => {
                -1.0 / (2.0 * lambda * prefactor)
            }
        }
    }
}

/// An estimate with its standard error and sampling metadata.
#[derive(Clone, Copy, Debug)]
pub struct EstimateWithError {
    pub value: f64,
    pub std_error: f64,
    pub n: u64,
    pub lambda: f64,
}

/// Plug-in estimate of Σ w_k p_k from relative frequencies, rescaled per
/// `meta`, with the multinomial delta-method standard error
/// √((Σ p̂w² − (Σ p̂w)²)/n).
pub fn estimate_from_shots(
    record: &ShotRecord,
    weights: &[f64],
    meta: &EstimatorMeta,
) -> Result<EstimateWithError> {
    if record.n == 0 {
        return Err(Error::ZeroShots);
    }
    if weights.len() != record.counts.len() {
        return Err(Error::DimensionMismatch {
            context: "estimator weights",
            expected: record.counts.len(),
            actual: weights.len(),
        });
    }
    let freqs = record.frequencies();
    let mean: f64 = freqs.iter().zip(weights).map(|(&p, &w)| p * w).sum();
    let second: f64 = freqs.iter().zip(weights).map(|(&p, &w)| p * w * w).sum();
    let variance = ((second - mean * mean) / record.n as f64).max(0.0);
    let scale = meta.scale();
    let lambda = match *meta {
        EstimatorMeta::WeightedCorrelation => 0.0,
        EstimatorMeta::NimpPart { lambda, .. } | EstimatorMeta::SimulPart { lambda, .. } => {
            lambda
        }
    };
    Ok(EstimateWithError {
        value: mean * scale,
        std_error: variance.sqrt() * scale.abs(),
        n: record.n,
        lambda,
    })
}

/// Bootstrap standard error: resamples the counts B times and takes the
/// standard deviation of the re-estimated values. Validation tool for the
/// delta method.
pub fn bootstrap_std_error(
    record: &ShotRecord,
    weights: &[f64],
    meta: &EstimatorMeta,
    resamples: u32,
    seed: u64,
) -> Result<f64> {
    let freqs = record.frequencies();
    let mut values = Vec::with_capacity(resamples as usize);
    for b in 0..resamples {
        let resampled = sample(&freqs, record.n, mix_seed(seed, b as u64, 7), "bootstrap")?;
        values.push(estimate_from_shots(&resampled, weights, meta)?.value);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var =
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64;
    Ok(var.sqrt())
}

/// A complex correlation estimate assembled from the two protocol variants.
#[derive(Clone, Copy, Debug)]
pub struct ComplexEstimate {
    pub value: C64,
    /// Combined standard error √(se_re² + se_im²) of the two independent
    /// channels.
    pub std_error: f64,
    pub n: u64,
    pub lambda: f64,
}

/// Reconstructs C from sampled variant-1 and variant-2 records at the same λ.
pub fn reconstruct_from_records(
    record_imag: &ShotRecord,
    weights_imag: &[f64],
    record_real: &ShotRecord,
    weights_real: &[f64],
    lambda: f64,
    spin: HalfInteger,
) -> Result<ComplexEstimate> {
    if lambda == 0.0 {
        return Err(Error::ZeroLambda);
    }
    let im = estimate_from_shots(
        record_imag,
        weights_imag,
        &EstimatorMeta::NimpPart { variant: CouplingVariant::Imaginary, lambda, spin },
    )?;
    let re = estimate_from_shots(
        record_real,
        weights_real,
        &EstimatorMeta::NimpPart { variant: CouplingVariant::Real, lambda, spin },
    )?;
    Ok(ComplexEstimate {
        value: C64::new(re.value, im.value),
        std_error: (re.std_error * re.std_error + im.std_error * im.std_error).sqrt(),
        n: record_imag.n,
        lambda,
    })
}

/// Splits a scan seed into independent per-point, per-variant seeds.
pub fn mix_seed(seed: u64, index: u64, stream: u64) -> u64 {
    // splitmix64 over a distinct odd-offset input per (index, stream)
    let mut z = seed
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One row of an error-vs-λ scan.
#[derive(Clone, Copy, Debug)]
pub struct ScanRow {
    pub lambda: f64,
    /// |C^λ_est − C_oracle|.
    pub abs_error: f64,
    /// Combined statistical standard error (0 in exact-probability mode).
    pub std_error: f64,
    /// Shots per variant (0 in exact-probability mode).
    pub n: u64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct LambdaScan {
    pub rows: Vec<ScanRow>,
    pub argmin_index: usize,
    pub oracle: C64,
}

impl LambdaScan {
    pub fn argmin_lambda(&self) -> f64 {
        self.rows[self.argmin_index].lambda
    }
}

/// Scans coupling times: at each grid point both protocol variants run (with
/// a ζ=1/2 equal-superposition ancilla), C^λ is reconstructed either from
/// exact probabilities (`shots = None`, pure bias) or from `n` sampled shots
/// per variant, and the deviation from the oracle is tabulated.
///
/// With finite shots the deviation exhibits the bias–statistics tradeoff:
/// bias grows with λ while the statistical error scales as 1/(λ√n), so the
/// scan locates an interior optimal coupling time on a wide enough grid.
pub fn lambda_scan(
    task: &CorrelationTask,
    grid: &[f64],
    shots: Option<u64>,
    seed: u64,
) -> Result<LambdaScan> {
    if grid.is_empty()
        || grid.iter().any(|&l| l <= 0.0)
        || grid.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::InvalidGrid);
    }
    let oracle = exact_correlation(task)?;
    let spin = HalfInteger::HALF;
    let ancilla = AncillaSpec::equal_superposition(spin, MeasurementAxis::Z);

    let rows: Result<Vec<ScanRow>> = grid
        .par_iter()
        .enumerate()
        .map(|(idx, &lambda)| {
            let mut parts: Vec<(f64, OutcomeDistribution)> = Vec::with_capacity(2);
            for variant in [CouplingVariant::Imaginary, CouplingVariant::Real] {
                let run = NimpRun::new(
                    task.clone(),
                    ancilla.clone(),
                    CouplingSpec::exact(variant, lambda),
                    ReadoutTiming::Deferred,
                );
                let dist = outcome_distribution(&run)?;
                parts.push((weighted_correlation(&dist), dist));
            }
            match shots {
                None => {
                    let rec = reconstruct_correlation(parts[0].0, parts[1].0, lambda, spin)?;
                    Ok(ScanRow {
                        lambda,
                        abs_error: (rec - oracle).norm(),
                        std_error: 0.0,
                        n: 0,
                        seed,
                    })
                }
                Some(n) => {
                    let seed_imag = mix_seed(seed, idx as u64, 1);
                    let seed_real = mix_seed(seed, idx as u64, 2);
                    let rec_imag = sample_distribution(
                        &parts[0].1,
                        n,
                        seed_imag,
                        format!("scan[{idx}] variant 1"),
                    )?;
                    let rec_real = sample_distribution(
                        &parts[1].1,
                        n,
                        seed_real,
                        format!("scan[{idx}] variant 2"),
                    )?;
                    let estimate = reconstruct_from_records(
                        &rec_imag,
                        &parts[0].1.weights(),
                        &rec_real,
                        &parts[1].1.weights(),
                        lambda,
                        spin,
                    )?;
                    Ok(ScanRow {
                        lambda,
                        abs_error: (estimate.value - oracle).norm(),
                        std_error: estimate.std_error,
                        n,
                        seed,
                    })
                }
            }
        })
        .collect();
    let rows = rows?;
    let argmin_index = rows
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.abs_error.partial_cmp(&b.abs_error).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    Ok(LambdaScan { rows, argmin_index, oracle })
}

/// Trajectory-mode sampling of the two-step projective protocol for Re C:
/// each shot collapses O₁ at t₁ with Born probabilities, evolves the
/// collapsed branch, and measures O₂ at t₂. Counts are over (e_ω, e_o)
/// outcome pairs, ordered as in [`projective_re_distribution`], which the
/// trajectory statistics must reproduce.
pub fn sample_projective_re_trajectories(
    task: &CorrelationTask,
    n: u64,
    seed: u64,
) -> Result<ShotRecord> {
    if n == 0 {
        return Err(Error::ZeroShots);
    }
    let two_point = two_point_spectrum(&task.observable_early)?;
    let late_spec = spectral_decompose(&task.observable_late, None)?;
    let psi1 = evolve(&task.initial, &task.schedule, task.t1)?;

    // per-branch collapse probabilities and conditional late distributions
    let mut branch_probs = Vec::with_capacity(2);
    let mut conditional = Vec::with_capacity(2);
    for projector in [&two_point.projector_plus, &two_point.projector_minus] {
        let collapsed = projector.apply(&psi1)?;
        let p = collapsed.norm().powi(2);
        if p > 1e-24 {
            let moved =
                evolve_between(&collapsed.renormalized()?, &task.schedule, task.t1, task.t2)?;
            let probs: Result<Vec<f64>> =
                (0..late_spec.len()).map(|k| late_spec.weight(k, &moved)).collect();
            let mut probs = probs?;
            let total: f64 = probs.iter().sum();
            for q in probs.iter_mut() {
                *q /= total;
            }
            conditional.push(probs);
        } else {
            conditional.push(vec![0.0; late_spec.len()]);
        }
        branch_probs.push(p);
    }
    let early_cumulative = cumulative(&branch_probs)?;
    let late_cumulatives: Vec<Option<Vec<f64>>> = conditional
        .iter()
        .zip(&branch_probs)
        .map(|(probs, &p)| if p > 1e-24 { Some(cumulative(probs).unwrap()) } else { None })
        .collect();

    let mut counts = vec![0u64; 2 * late_spec.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for shot in 0..n {
        // two variates per shot, at counter positions 2i and 2i + 1
        let u_early = shot_uniform(&mut rng, 2 * shot);
        let u_late = shot_uniform(&mut rng, 2 * shot + 1);
        let early = index_for(&early_cumulative, u_early);
        let late_cumulative =
            late_cumulatives[early].as_ref().expect("sampled branch has weight");
        let late = index_for(late_cumulative, u_late);
        counts[early * late_spec.len() + late] += 1;
    }
    Ok(ShotRecord { descriptor: "projective-re trajectories".into(), seed, n, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nimp::CouplingMode;
    use crate::povm::projective_re_distribution;
    use approx::assert_abs_diff_eq;

    #[test]
    fn point_mass_distribution() {
        let record = sample(&[0.0, 1.0, 0.0], 1000, 7, "point").unwrap();
        assert_eq!(record.counts, vec![0, 1000, 0]);
    }

    #[test]
    fn uniform_counts_within_five_sigma() {
        let n = 4_000_000u64;
        let record = sample(&[0.25; 4], n, 42, "uniform").unwrap();
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for &count in &record.counts {
            let dev = (count as f64 - n as f64 * 0.25).abs();
            assert!(dev < 5.0 * sigma, "count {count} deviates {dev} > 5 sigma");
        }
        assert_eq!(record.total(), n);
    }

    #[test]
    fn sampling_is_deterministic() {
        let probs = [0.1, 0.4, 0.2, 0.3];
        let a = sample(&probs, 10_000, 123, "a").unwrap();
        let b = sample(&probs, 10_000, 123, "b").unwrap();
        assert_eq!(a.counts, b.counts);
        let c = sample(&probs, 10_000, 124, "c").unwrap();
        assert_ne!(a.counts, c.counts);
    }

    #[test]
    fn shot_randomness_is_counter_addressed() {
        // drawing shot k in isolation reproduces its value from a sequential run
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let sequential: Vec<f64> = (0..64).map(|i| shot_uniform(&mut rng, i)).collect();
        for &k in &[0u64, 1, 5, 33, 63] {
            let mut fresh = ChaCha8Rng::seed_from_u64(99);
            assert_eq!(shot_uniform(&mut fresh, k), sequential[k as usize]);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            sample(&[0.5, 0.4], 10, 1, "bad"),
            Err(Error::UnnormalizedDistribution { .. })
        ));
        assert!(matches!(sample(&[1.0], 0, 1, "none"), Err(Error::ZeroShots)));
    }

    #[test]
    fn exact_counts_reproduce_exact_estimate() {
        // counts exactly proportional to the distribution give the
        // exact-probability value
        let weights = [0.25, -0.25, -0.25, 0.25];
        let probs = [0.4, 0.1, 0.3, 0.2];
        let counts: Vec<u64> = probs.iter().map(|p| (p * 1000.0) as u64).collect();
        let record = ShotRecord { descriptor: "exact".into(), seed: 0, n: 1000, counts };
        let est = estimate_from_shots(
            &record,
            &weights,
            &EstimatorMeta::WeightedCorrelation,
        )
        .unwrap();
        let exact: f64 = probs.iter().zip(&weights).map(|(&p, &w)| p * w).sum();
        assert_abs_diff_eq!(est.value, exact, epsilon = 1e-15);
    }

    fn test_run(variant: CouplingVariant, lambda: f64) -> NimpRun {
        NimpRun::new(
            crate::nimp::testkit::test_task(),
            AncillaSpec::equal_superposition(HalfInteger::HALF, MeasurementAxis::Z),
            CouplingSpec { variant, lambda, mode: CouplingMode::Exact },
            ReadoutTiming::Deferred,
        )
    }

    #[test]
    fn sampled_estimate_within_five_std_errors() {
        let lambda = 0.1;
        let run = test_run(CouplingVariant::Imaginary, lambda);
        let dist = outcome_distribution(&run).unwrap();
        let exact = weighted_correlation(&dist)
            / (-2.0 * lambda * estimator_prefactor(CouplingVariant::Imaginary, HalfInteger::HALF));
        let record = sample_distribution(&dist, 100_000, 2024, "shots").unwrap();
        let est = estimate_from_shots(
            &record,
            &dist.weights(),
            &EstimatorMeta::NimpPart {
                variant: CouplingVariant::Imaginary,
                lambda,
                spin: HalfInteger::HALF,
            },
        )
        .unwrap();
        assert!(
            (est.value - exact).abs() < 5.0 * est.std_error,
            "estimate {} vs exact {} with se {}",
            est.value,
            exact,
            est.std_error
        );
    }

    #[test]
    fn std_error_shrinks_as_root_n() {
        let lambda = 0.1;
        let run = test_run(CouplingVariant::Imaginary, lambda);
        let dist = outcome_distribution(&run).unwrap();
        let meta = EstimatorMeta::NimpPart {
            variant: CouplingVariant::Imaginary,
            lambda,
            spin: HalfInteger::HALF,
        };
        let trials = 20;
        let mut ratio_sum = 0.0;
        for t in 0..trials {
            let small = sample_distribution(&dist, 1000, mix_seed(5, t, 1), "s").unwrap();
            let large = sample_distribution(&dist, 4000, mix_seed(5, t, 2), "l").unwrap();
            let se_small =
                estimate_from_shots(&small, &dist.weights(), &meta).unwrap().std_error;
            let se_large =
                estimate_from_shots(&large, &dist.weights(), &meta).unwrap().std_error;
            ratio_sum += se_large / se_small;
        }
        let mean_ratio = ratio_sum / trials as f64;
        assert!(
            (mean_ratio - 0.5).abs() < 0.1,
            "quadrupling n gave se ratio {mean_ratio}, expected about 0.5"
        );
    }

    #[test]
    fn delta_method_agrees_with_bootstrap() {
        let lambda = 0.1;
        let run = test_run(CouplingVariant::Real, lambda);
        let dist = outcome_distribution(&run).unwrap();
        let meta = EstimatorMeta::NimpPart {
            variant: CouplingVariant::Real,
            lambda,
            spin: HalfInteger::HALF,
        };
        let record = sample_distribution(&dist, 50_000, 77, "boot").unwrap();
        let delta = estimate_from_shots(&record, &dist.weights(), &meta).unwrap().std_error;
        let boot =
            bootstrap_std_error(&record, &dist.weights(), &meta, 200, 78).unwrap();
        assert!(
            (boot / delta - 1.0).abs() < 0.3,
            "bootstrap {boot} vs delta {delta}"
        );
    }

    #[test]
    fn estimator_variance_scales_inverse_lambda_squared() {
        // at fixed n, doubling λ quarters the variance of the reconstructed
        // part (the 1/λ amplification dominates while the distribution
        // barely changes)
        let n = 10_000u64;
        let trials = 60;
        let mut variances = Vec::new();
        for lambda in [0.02, 0.04] {
            let run = test_run(CouplingVariant::Imaginary, lambda);
            let dist = outcome_distribution(&run).unwrap();
            let meta = EstimatorMeta::NimpPart {
                variant: CouplingVariant::Imaginary,
                lambda,
                spin: HalfInteger::HALF,
            };
            let values: Vec<f64> = (0..trials)
                .map(|t| {
                    let rec = sample_distribution(
                        &dist,
                        n,
                        mix_seed(11, t, (lambda * 1000.0) as u64),
                        "var",
                    )
                    .unwrap();
                    estimate_from_shots(&rec, &dist.weights(), &meta).unwrap().value
                })
                .collect();
            let mean = values.iter().sum::<f64>() / trials as f64;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (trials - 1) as f64;
            variances.push(var);
        }
        let ratio = variances[1] / variances[0];
        assert!(
            (0.15..=0.45).contains(&ratio),
            "variance ratio {ratio}, expected about 0.25"
        );
    }

    #[test]
    fn exact_scan_bias_grows_with_lambda() {
        let task = crate::nimp::testkit::scan_task();
        let grid = [1e-3, 3e-3, 1e-2, 3e-2];
        let scan = lambda_scan(&task, &grid, None, 0).unwrap();
        for pair in scan.rows.windows(2) {
            assert!(
                pair[0].abs_error < pair[1].abs_error,
                "bias not monotone: {} then {}",
                pair[0].abs_error,
                pair[1].abs_error
            );
        }
        assert_eq!(scan.argmin_index, 0);
    }

    #[test]
    fn finite_shot_scan_has_interior_minimum() {
        let task = crate::nimp::testkit::scan_task();
        let grid: Vec<f64> = (0..8)
            .map(|k| 10f64.powf(-3.0 + 3.0 * k as f64 / 7.0))
            .collect();
        let scan = lambda_scan(&task, &grid, Some(10_000), 4242).unwrap();
        assert!(scan.argmin_index > 0 && scan.argmin_index < grid.len() - 1,
            "argmin at edge: index {} of {}", scan.argmin_index, grid.len());
    }

    #[test]
    fn scan_argmin_stable_across_seeds() {
        let task = crate::nimp::testkit::scan_task();
        let grid: Vec<f64> = (0..8)
            .map(|k| 10f64.powf(-3.0 + 3.0 * k as f64 / 7.0))
            .collect();
        let a = lambda_scan(&task, &grid, Some(1_000_000), 1).unwrap();
        let b = lambda_scan(&task, &grid, Some(1_000_000), 2).unwrap();
        assert!(
            (a.argmin_index as i64 - b.argmin_index as i64).abs() <= 1,
            "argmin indices {} and {} differ by more than one grid step",
            a.argmin_index,
            b.argmin_index
        );
    }

    #[test]
    fn scan_rejects_bad_grids() {
        let task = crate::nimp::testkit::test_task();
        assert!(matches!(lambda_scan(&task, &[], None, 0), Err(Error::InvalidGrid)));
        assert!(matches!(
            lambda_scan(&task, &[0.0, 0.1], None, 0),
            Err(Error::InvalidGrid)
        ));
        assert!(matches!(
            lambda_scan(&task, &[0.2, 0.1], None, 0),
            Err(Error::InvalidGrid)
        ));
    }

    #[test]
    fn trajectory_sampling_agrees_with_exact_distribution() {
        let task = crate::nimp::testkit::test_task();
        let exact = projective_re_distribution(&task).unwrap();
        let n = 200_000u64;
        let record = sample_projective_re_trajectories(&task, n, 55).unwrap();
        assert_eq!(record.total(), n);
        for (k, (&p, &count)) in
            exact.probabilities().iter().zip(&record.counts).enumerate()
        {
            let sigma = (n as f64 * p * (1.0 - p)).sqrt().max(1.0);
            let dev = (count as f64 - n as f64 * p).abs();
            assert!(dev < 5.0 * sigma, "outcome {k}: deviation {dev} > 5 sigma");
        }
        // determinism
        let again = sample_projective_re_trajectories(&task, 1000, 55).unwrap();
        let again2 = sample_projective_re_trajectories(&task, 1000, 55).unwrap();
        assert_eq!(again.counts, again2.counts);
    }
}
