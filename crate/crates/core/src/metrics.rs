//! PSF quality metrics and convergence bookkeeping.
//!
//! PSNR here is the unnormalized form `−10 log₁₀(mean |h − ĥ|²)` with no
//! peak term. PSFs are unit-sum, so the absolute dB values are large
//! (roughly 40–60 dB on a 128×128 grid) and only differences between them
//! are meaningful.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{circular_shift, ensure_same_shape, forward_fft, inverse_fft, RealField};
use crate::sftip::{sftip_run, TipConfig};
use crate::simkit::{ConvergenceScenario, ScenarioSpec};

/// Returned by [`psnr_db`] for identical fields.
pub const PSNR_CAP_DB: f64 = 300.0;

/// `−10 log₁₀((1/N) Σ |truth − estimate|²)`, capped at [`PSNR_CAP_DB`].
pub fn psnr_db(truth: &RealField, estimate: &RealField) -> Result<f64> {
    ensure_same_shape(truth.shape(), estimate.shape())?;
    let sum_sq: f64 = truth
        .samples()
        .iter()
        .zip(estimate.samples())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let mse = sum_sq / truth.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((-10.0 * mse.log10()).min(PSNR_CAP_DB))
}

/// Integer translation `(dx, dy)` maximizing `Σ_x reference(x) ·
/// estimate(x − s)`. Ties go to the first maximum in row-major order, so an
/// already aligned estimate keeps shift zero.
pub fn best_shift(reference: &RealField, estimate: &RealField) -> Result<(isize, isize)> {
    ensure_same_shape(reference.shape(), estimate.shape())?;
    let (w, h) = reference.shape();
    let cross = forward_fft(reference)
        .samples()
        .iter()
        .zip(forward_fft(estimate).samples())
        .map(|(r, e)| r * e.conj())
        .collect();
    let correlation = inverse_fft(&crate::grid::ComplexField::new(w, h, cross)?);
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (k, v) in correlation.samples().iter().enumerate() {
        if v.re > best_value {
            best_value = v.re;
            best = k;
        }
    }
    let wrap = |s: usize, len: usize| -> isize {
        if s > len / 2 {
            s as isize - len as isize
        } else {
            s as isize
        }
    };
    Ok((wrap(best % w, w), wrap(best / w, h)))
}

/// `estimate` circularly shifted by [`best_shift`].
pub fn align_by_shift(reference: &RealField, estimate: &RealField) -> Result<RealField> {
    let (dx, dy) = best_shift(reference, estimate)?;
    Ok(circular_shift(estimate, dx, dy))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    pub residual: f64,
    pub psf_psnr_db: Option<f64>,
    /// Cumulative count of delta fallbacks up to this iteration.
    pub delta_fallbacks: usize,
}

/// Per-iteration solver record. The summary values are derived from the
/// records on demand.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTrace {
    records: Vec<IterationRecord>,
}

impl ConvergenceTrace {
    pub fn push(&mut self, record: IterationRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// PSNR after the first iteration.
    pub fn psnr_initial(&self) -> Option<f64> {
        self.records.first().and_then(|r| r.psf_psnr_db)
    }

    /// PSNR after the last iteration.
    pub fn psnr_final(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.psf_psnr_db)
    }

    pub fn improvement_db(&self) -> Option<f64> {
        Some(self.psnr_final()? - self.psnr_initial()?)
    }

    pub fn delta_fallbacks(&self) -> usize {
        self.records.last().map_or(0, |r| r.delta_fallbacks)
    }
}

/// Settings for [`run_convergence_benchmark`].
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOptions {
    pub count: usize,
    pub config: TipConfig,
    /// Template for every scenario; its seed is replaced per scenario.
    pub scenario: ScenarioSpec,
    /// Master seed from which scenario seeds are drawn.
    pub seed: u64,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            count: 20,
            config: TipConfig::default(),
            scenario: ScenarioSpec {
                shift_scene: true,
                ..ScenarioSpec::default()
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub id: usize,
    pub seed: u64,
    pub trace: ConvergenceTrace,
    pub psnr_initial: f64,
    pub psnr_final: f64,
    pub improvement_db: f64,
}

#[derive(Debug, Clone)]
pub struct BenchmarkSummary {
    pub scenarios: Vec<ScenarioOutcome>,
    pub mean_improvement_db: f64,
    /// Sample standard deviation (zero for a single scenario).
    pub std_improvement_db: f64,
}

/// Per-scenario seeds drawn from the master seed.
pub fn scenario_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random()).collect()
}

/// Simulates `count` independent scenes and aberrations, deconvolves each
/// with the ground truth attached, and summarizes the PSF PSNR improvement
/// from the first to the last iteration. Scenarios run in parallel; the
/// result does not depend on scheduling.
pub fn run_convergence_benchmark(options: &BenchmarkOptions) -> Result<BenchmarkSummary> {
    if options.count == 0 {
        return Err(Error::InvalidArgument("scenario count must be at least 1".into()));
    }
    options.config.validate()?;
    let seeds = scenario_seeds(options.seed, options.count);
    let scenarios = seeds
        .par_iter()
        .enumerate()
        .map(|(id, &seed)| {
            let spec = ScenarioSpec {
                seed,
                ..options.scenario.clone()
            };
            let scenario = ConvergenceScenario::generate(&spec)?;
            let outcome = sftip_run(&scenario.image, options.config, Some(&scenario.psf))?;
            let trace = outcome.trace;
            let (psnr_initial, psnr_final) = match (trace.psnr_initial(), trace.psnr_final()) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::Degenerate("trace has no PSNR records".into())),
            };
            Ok(ScenarioOutcome {
                id,
                seed,
                psnr_initial,
                psnr_final,
                improvement_db: psnr_final - psnr_initial,
                trace,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let (mean, std) = mean_std(scenarios.iter().map(|s| s.improvement_db));
    Ok(BenchmarkSummary {
        scenarios,
        mean_improvement_db: mean,
        std_improvement_db: std,
    })
}

/// Mean and sample standard deviation.
pub fn mean_std(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let values: Vec<f64> = values.into_iter().collect();
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_field(w: usize, h: usize, seed: u64) -> RealField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RealField::from_fn(w, h, |_, _| rng.random_range(0.0..1.0))
    }

    #[test]
    fn psnr_scalar_cases() {
        let truth = random_field(8, 8, 1);
        assert_eq!(psnr_db(&truth, &truth).unwrap(), PSNR_CAP_DB);
        let off = truth.map(|v| v + 0.1);
        assert!((psnr_db(&truth, &off).unwrap() - 20.0).abs() < 1e-9);
        let off = truth.map(|v| v - 0.5);
        let expected = -10.0 * 0.25f64.log10();
        assert!((psnr_db(&truth, &off).unwrap() - expected).abs() < 1e-9);
        assert!((expected - 6.0206).abs() < 1e-4);
        assert!(psnr_db(&truth, &RealField::zeros(4, 4)).is_err());
    }

    #[test]
    fn psnr_decreases_with_error() {
        let truth = random_field(8, 8, 2);
        let mut last = f64::INFINITY;
        for e in [1e-4, 1e-3, 0.01, 0.1, 1.0, 10.0] {
            let p = psnr_db(&truth, &truth.map(|v| v + e)).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn alignment_cases() {
        let reference = random_field(16, 12, 3);
        let shifted = circular_shift(&reference, 3, -2);
        assert_eq!(best_shift(&reference, &shifted).unwrap(), (-3, 2));
        assert_eq!(align_by_shift(&reference, &shifted).unwrap(), reference);
        assert_eq!(align_by_shift(&reference, &reference).unwrap(), reference);
    }

    #[test]
    fn alignment_never_reduces_correlation() {
        for seed in 0..10 {
            let a = random_field(8, 8, 10 + seed);
            let b = random_field(8, 8, 100 + seed);
            let dot = |x: &RealField, y: &RealField| -> f64 {
                x.samples().iter().zip(y.samples()).map(|(p, q)| p * q).sum()
            };
            let aligned = align_by_shift(&a, &b).unwrap();
            assert!(dot(&a, &aligned) >= dot(&a, &b) - 1e-12);
        }
    }

    #[test]
    fn trace_summary_is_derived_from_records() {
        let mut trace = ConvergenceTrace::default();
        assert_eq!(trace.improvement_db(), None);
        for (k, p) in [40.0, 42.5, 45.0].into_iter().enumerate() {
            trace.push(IterationRecord {
                iteration: k + 1,
                residual: 1.0,
                psf_psnr_db: Some(p),
                delta_fallbacks: 0,
            });
        }
        assert_eq!(trace.psnr_initial(), Some(40.0));
        assert_eq!(trace.psnr_final(), Some(45.0));
        assert_eq!(trace.improvement_db(), Some(5.0));
    }

    #[test]
    fn mean_std_basics() {
        let (m, s) = mean_std([1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(mean_std([4.0]), (4.0, 0.0));
    }

    #[test]
    fn benchmark_single_diffraction_limited_scenario() {
        let options = BenchmarkOptions {
            count: 1,
            config: TipConfig { iters: 5, support_s: 8, ..TipConfig::default() },
            scenario: ScenarioSpec { size: 32, sigma: 0.0, ..ScenarioSpec::default() },
            seed: 1,
        };
        let summary = run_convergence_benchmark(&options).unwrap();
        assert_eq!(summary.scenarios.len(), 1);
        let s = &summary.scenarios[0];
        assert!(s.improvement_db.is_finite());
        assert_eq!(s.trace.len(), 5);
        assert_eq!(summary.std_improvement_db, 0.0);
        assert!(run_convergence_benchmark(&BenchmarkOptions { count: 0, ..options }).is_err());
    }
}
