//! Single-frame tangential iterative projections.
//!
//! The frame is cut into `P²` apodized pseudo-patches that all share one
//! PSF. The solver then alternates two regularized inverse filters:
//!
//! ```text
//! H   = Σ_p I_p · conj(O_p) / (Σ_p |O_p|² + ε_h)
//! O_p = I_p · conj(H) / (|H|² + ε_o)
//! ```
//!
//! with the PSF projected onto {real, non-negative, finite support, unit
//! sum} after the first filter and the object projected onto {real,
//! non-negative} and re-masked after the second.
//!
//! The `ε` values in [`TipConfig`] are relative: each iteration multiplies
//! them by the mean power of the spectrum in the matching denominator
//! (`Σ_p |O_p|²` for the OTF update, `|H|²` for the object update).

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::constraints::{clip_nonneg, project_nonneg_real, project_psf_support_checked, SupportSpec};
use crate::error::{Error, Result};
use crate::grid::{
    center_to_origin, circular_shift, centering_shift, convolve_with_psf, ensure_same_shape,
    forward_fft, inverse_fft, inverse_fft_real, origin_to_center, ComplexField, RealField,
};
use crate::maskgen::{make_masks, split_spectra, MaskSet};
use crate::metrics::{align_by_shift, psnr_db, ConvergenceTrace, IterationRecord};

/// Solver hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipConfig {
    /// Patches per axis.
    pub grid_p: usize,
    /// PSF support side in pixels.
    pub support_s: usize,
    pub iters: usize,
    /// OTF-update floor, relative to the mean of `Σ_p |O_p|²`.
    pub eps_h: f64,
    /// Object-update floor, relative to the mean of `|H|²`.
    pub eps_o: f64,
    /// Reserved for randomized initializations; the built-in
    /// initialization is deterministic and ignores it.
    pub seed: u64,
    /// Align the PSF estimate to the ground truth by integer shift before
    /// computing PSNR.
    pub align: bool,
}

impl Default for TipConfig {
    fn default() -> Self {
        Self {
            grid_p: 4,
            support_s: 32,
            iters: 100,
            eps_h: 1e-3,
            eps_o: 1e-3,
            seed: 0,
            align: true,
        }
    }
}

impl TipConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::InvalidArgument("iteration count must be at least 1".into()));
        }
        if self.grid_p == 0 {
            return Err(Error::InvalidArgument("patch grid must be at least 1".into()));
        }
        if self.support_s == 0 {
            return Err(Error::InvalidArgument("support size must be at least 1".into()));
        }
        check_eps(self.eps_h, "eps_h")?;
        check_eps(self.eps_o, "eps_o")
    }
}

fn check_eps(eps: f64, name: &str) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {eps}")))
    }
}

/// Converts a relative floor into an absolute one using the mean power of
/// the spectrum it protects. A silent spectrum keeps the relative value so
/// the floor stays positive.
pub fn absolute_floor(relative: f64, mean_power: f64) -> f64 {
    let eps = relative * mean_power;
    if eps > 0.0 && eps.is_finite() {
        eps
    } else {
        relative
    }
}

fn check_spectra(a: &[ComplexField], b: &[ComplexField]) -> Result<(usize, usize)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("spectrum list is empty".into()));
    }
    if a.len() != b.len() {
        return Err(Error::CountMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let shape = a[0].shape();
    for f in a.iter().chain(b) {
        ensure_same_shape(shape, f.shape())?;
    }
    Ok(shape)
}

// Σ_n a_n conj(b_n) / (Σ_n |b_n|² + ε), bin by bin.
fn multi_frame_quotient(a: &[ComplexField], b: &[ComplexField], eps: f64) -> Result<ComplexField> {
    let (w, h) = check_spectra(a, b)?;
    check_eps(eps, "eps")?;
    let mut numerator = vec![Complex64::new(0.0, 0.0); w * h];
    let mut denominator = vec![eps; w * h];
    for (an, bn) in a.iter().zip(b) {
        for (k, (x, y)) in an.samples().iter().zip(bn.samples()).enumerate() {
            numerator[k] += x * y.conj();
            denominator[k] += y.norm_sqr();
        }
    }
    let samples = numerator
        .into_iter()
        .zip(denominator)
        .map(|(n, d)| n / d)
        .collect();
    Ok(ComplexField::from_parts(w, h, samples))
}

/// OTF from matched patch image and object spectra:
/// `H = Σ_p I_p conj(O_p) / (Σ_p |O_p|² + ε)`.
pub fn estimate_otf(
    patch_image_spectra: &[ComplexField],
    patch_object_spectra: &[ComplexField],
    eps_h: f64,
) -> Result<ComplexField> {
    multi_frame_quotient(patch_image_spectra, patch_object_spectra, eps_h)
}

/// Regularized division of every patch spectrum by the OTF:
/// `O_p = I_p conj(H) / (|H|² + ε)`.
pub fn estimate_object_patches(
    patch_image_spectra: &[ComplexField],
    otf: &ComplexField,
    eps_o: f64,
) -> Result<Vec<ComplexField>> {
    check_eps(eps_o, "eps_o")?;
    for spectrum in patch_image_spectra {
        ensure_same_shape(spectrum.shape(), otf.shape())?;
    }
    let (w, h) = otf.shape();
    let filter: Vec<Complex64> = otf
        .samples()
        .iter()
        .map(|v| v.conj() / (v.norm_sqr() + eps_o))
        .collect();
    Ok(patch_image_spectra
        .par_iter()
        .map(|spectrum| {
            let samples = spectrum
                .samples()
                .iter()
                .zip(&filter)
                .map(|(i, f)| i * f)
                .collect();
            ComplexField::from_parts(w, h, samples)
        })
        .collect())
}

/// Multi-frame linear deconvolution:
/// `O = Σ_n I_n conj(H_n) / (Σ_n |H_n|² + ε)`.
pub fn mf_wiener_deconvolve(
    image_spectra: &[ComplexField],
    otfs: &[ComplexField],
    eps: f64,
) -> Result<ComplexField> {
    multi_frame_quotient(image_spectra, otfs, eps)
}

/// `‖i − h ⊛ o‖₂` with `h` in center layout.
pub fn residual_norm(image: &RealField, psf: &RealField, object: &RealField) -> Result<f64> {
    ensure_same_shape(image.shape(), object.shape())?;
    let model = convolve_with_psf(object, psf)?;
    image.l2_distance(&model)
}

/// Solver state between iterations.
#[derive(Debug, Clone)]
pub struct TipState {
    /// Current OTF, the transform of the projected PSF (origin layout).
    pub otf: ComplexField,
    /// Current object patch spectra `O_p`.
    pub patch_spectra: Vec<ComplexField>,
    /// Completed iterations.
    pub iteration: usize,
}

/// Output of one solver iteration.
#[derive(Debug, Clone)]
pub struct StepOutput {
    /// Projected PSF, center layout.
    pub psf: RealField,
    /// Fused non-negative object.
    pub object: RealField,
    pub fell_back: bool,
}

/// Iterative solver over one frame.
#[derive(Debug, Clone)]
pub struct SfTip {
    config: TipConfig,
    masks: MaskSet,
    support: SupportSpec,
    image_spectrum: ComplexField,
    patch_image_spectra: Vec<ComplexField>,
    state: TipState,
    psf: RealField,
    fallbacks: usize,
}

impl SfTip {
    /// Prepares masks and patch spectra and sets `O_p = I_p`.
    pub fn new(image: &RealField, config: TipConfig) -> Result<Self> {
        config.validate()?;
        if let Some((index, &value)) = image.samples().iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::NegativeSample { index, value });
        }
        let (w, h) = image.shape();
        let masks = make_masks(w, h, config.grid_p)?;
        let support = SupportSpec::new(config.support_s, w, h)?;
        let patch_image_spectra = split_spectra(image, &masks)?;
        let state = TipState {
            otf: ComplexField::filled(w, h, Complex64::new(1.0, 0.0)),
            patch_spectra: patch_image_spectra.clone(),
            iteration: 0,
        };
        Ok(Self {
            config,
            image_spectrum: forward_fft(image),
            masks,
            support,
            patch_image_spectra,
            state,
            psf: RealField::centered_delta(w, h),
            fallbacks: 0,
        })
    }

    pub fn config(&self) -> &TipConfig {
        &self.config
    }

    pub fn state(&self) -> &TipState {
        &self.state
    }

    pub fn masks(&self) -> &MaskSet {
        &self.masks
    }

    /// Current PSF estimate, center layout.
    pub fn psf(&self) -> &RealField {
        &self.psf
    }

    /// Number of delta fallbacks so far.
    pub fn fallbacks(&self) -> usize {
        self.fallbacks
    }

    fn project_psf(&mut self, otf: &ComplexField) -> (RealField, bool) {
        let raw = origin_to_center(&project_nonneg_real(&inverse_fft(otf)));
        // Blind deconvolution cannot pin the PSF position; fix it at the grid
        // center. The object follows automatically since it is re-derived from
        // the shifted OTF.
        let (dx, dy) = centering_shift(&raw);
        let centered = circular_shift(&raw, dx, dy);
        let projected = project_psf_support_checked(&centered, self.support);
        (projected.psf, projected.fell_back)
    }

    /// One pass: OTF update, PSF projection, object update, object
    /// projection and re-masking.
    pub fn step(&mut self) -> Result<StepOutput> {
        let object_power = self
            .state
            .patch_spectra
            .iter()
            .map(ComplexField::mean_power)
            .sum::<f64>();
        let eps_h = absolute_floor(self.config.eps_h, object_power);
        let raw_otf = estimate_otf(&self.patch_image_spectra, &self.state.patch_spectra, eps_h)?;

        let (psf, fell_back) = self.project_psf(&raw_otf);
        if fell_back {
            self.fallbacks += 1;
        }
        let otf = forward_fft(&center_to_origin(&psf));

        let eps_o = absolute_floor(self.config.eps_o, otf.mean_power());
        let patch_objects = estimate_object_patches(&self.patch_image_spectra, &otf, eps_o)?;

        // The fused object is Σ_p of the inverse transforms; by linearity one
        // inverse transform of the summed spectra suffices.
        let (w, h) = otf.shape();
        let mut fused = ComplexField::zeros(w, h);
        for spectrum in &patch_objects {
            for (acc, v) in fused.samples_mut().iter_mut().zip(spectrum.samples()) {
                *acc += v;
            }
        }
        let object = clip_nonneg(&inverse_fft_real(&fused));
        let patch_spectra = self
            .masks
            .masks()
            .par_iter()
            .map(|m| {
                let patch = m.zip_map(&object, |a, b| a * b)?;
                Ok(forward_fft(&patch))
            })
            .collect::<Result<Vec<_>>>()?;

        self.state = TipState {
            otf,
            patch_spectra,
            iteration: self.state.iteration + 1,
        };
        self.psf = psf.clone();
        Ok(StepOutput {
            psf,
            object,
            fell_back,
        })
    }

    /// Final object from the current OTF by single-frame regularized
    /// inversion of the whole image, clipped to be non-negative.
    pub fn recover_object(&self) -> Result<RealField> {
        let eps_o = absolute_floor(self.config.eps_o, self.state.otf.mean_power());
        let spectrum = mf_wiener_deconvolve(
            std::slice::from_ref(&self.image_spectrum),
            std::slice::from_ref(&self.state.otf),
            eps_o,
        )?;
        Ok(clip_nonneg(&inverse_fft_real(&spectrum)))
    }
}

/// Result of a full solver run.
#[derive(Debug, Clone)]
pub struct TipOutcome {
    /// PSF estimate in center layout: non-negative, unit sum, zero outside
    /// the support window.
    pub psf: RealField,
    pub object: RealField,
    pub trace: ConvergenceTrace,
}

/// PSNR of `estimate` against `truth`, optionally after shift alignment.
pub fn psf_psnr(truth: &RealField, estimate: &RealField, align: bool) -> Result<f64> {
    if align {
        psnr_db(truth, &align_by_shift(truth, estimate)?)
    } else {
        psnr_db(truth, estimate)
    }
}

/// Runs the solver for `config.iters` iterations, recording the residual
/// and, when a ground-truth PSF (center layout) is supplied, its PSNR.
pub fn sftip_run(
    image: &RealField,
    config: TipConfig,
    ground_truth_psf: Option<&RealField>,
) -> Result<TipOutcome> {
    if let Some(truth) = ground_truth_psf {
        ensure_same_shape(truth.shape(), image.shape())?;
    }
    let mut solver = SfTip::new(image, config)?;
    let mut trace = ConvergenceTrace::default();
    for _ in 0..config.iters {
        let out = solver.step()?;
        let residual = residual_norm(image, &out.psf, &out.object)?;
        let psf_psnr_db = ground_truth_psf
            .map(|truth| psf_psnr(truth, &out.psf, config.align))
            .transpose()?;
        trace.push(IterationRecord {
            iteration: solver.state().iteration,
            residual,
            psf_psnr_db,
            delta_fallbacks: solver.fallbacks(),
        });
    }
    Ok(TipOutcome {
        psf: solver.psf().clone(),
        object: solver.recover_object()?,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn spectrum(w: usize, h: usize, rng: &mut ChaCha8Rng) -> ComplexField {
        let samples = (0..w * h)
            .map(|_| c(rng.random_range(-3i32..=3) as f64, rng.random_range(-3i32..=3) as f64))
            .collect();
        ComplexField::new(w, h, samples).unwrap()
    }

    #[test]
    fn otf_identity_when_objects_equal_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let image = ComplexField::new(
            4,
            4,
            (0..16).map(|_| c(rng.random_range(1.0..5.0), rng.random_range(-5.0..5.0))).collect(),
        )
        .unwrap();
        let eps = 1e-3;
        let h = estimate_otf(std::slice::from_ref(&image), std::slice::from_ref(&image), eps).unwrap();
        for (hv, iv) in h.samples().iter().zip(image.samples()) {
            if iv.norm_sqr() >= 100.0 * eps {
                assert!((hv - c(1.0, 0.0)).norm() < 0.01);
            }
        }
    }

    #[test]
    fn otf_zero_objects_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let images = vec![spectrum(4, 4, &mut rng), spectrum(4, 4, &mut rng)];
        let zeros = vec![ComplexField::zeros(4, 4); 2];
        let h = estimate_otf(&images, &zeros, 0.5).unwrap();
        assert!(h.samples().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn otf_matches_scalar_quotient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let images = vec![spectrum(4, 4, &mut rng), spectrum(4, 4, &mut rng)];
        let objects = vec![spectrum(4, 4, &mut rng), spectrum(4, 4, &mut rng)];
        let eps = 0.25;
        let h = estimate_otf(&images, &objects, eps).unwrap();
        for k in 0..16 {
            let (i1, i2) = (images[0].samples()[k], images[1].samples()[k]);
            let (o1, o2) = (objects[0].samples()[k], objects[1].samples()[k]);
            // (a + bi)(c − di) expanded by hand
            let num_re = i1.re * o1.re + i1.im * o1.im + i2.re * o2.re + i2.im * o2.im;
            let num_im = i1.im * o1.re - i1.re * o1.im + i2.im * o2.re - i2.re * o2.im;
            let den = o1.re * o1.re + o1.im * o1.im + o2.re * o2.re + o2.im * o2.im + eps;
            assert!((h.samples()[k].re - num_re / den).abs() < 1e-12);
            assert!((h.samples()[k].im - num_im / den).abs() < 1e-12);
        }
    }

    #[test]
    fn otf_rejects_bad_inputs() {
        let a = vec![ComplexField::zeros(4, 4)];
        assert!(estimate_otf(&[], &[], 1.0).is_err());
        assert!(estimate_otf(&a, &[ComplexField::zeros(4, 4), ComplexField::zeros(4, 4)], 1.0).is_err());
        assert!(estimate_otf(&a, &[ComplexField::zeros(4, 3)], 1.0).is_err());
        assert!(estimate_otf(&a, &a, 0.0).is_err());
    }

    #[test]
    fn object_identity_and_zero_filters() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let images = vec![spectrum(4, 4, &mut rng), spectrum(4, 4, &mut rng)];
        let eps = 1e-9;
        let ones = ComplexField::filled(4, 4, c(1.0, 0.0));
        for (o, i) in estimate_object_patches(&images, &ones, eps).unwrap().iter().zip(&images) {
            for (ov, iv) in o.samples().iter().zip(i.samples()) {
                assert!((ov - iv).norm() <= eps * iv.norm() + 1e-15);
            }
        }
        let zero = ComplexField::zeros(4, 4);
        for o in estimate_object_patches(&images, &zero, eps).unwrap() {
            assert!(o.samples().iter().all(|v| v.norm() == 0.0));
        }
        assert!(estimate_object_patches(&images, &ComplexField::zeros(2, 2), eps).is_err());
    }

    #[test]
    fn object_recovers_synthesized_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let otf = ComplexField::new(
            8,
            8,
            (0..64)
                .map(|_| Complex64::from_polar(rng.random_range(0.5..2.0), rng.random_range(-3.0..3.0)))
                .collect(),
        )
        .unwrap();
        let truth = spectrum(8, 8, &mut rng);
        let image = truth.hadamard(&otf).unwrap();
        let got = &estimate_object_patches(&[image], &otf, 1e-12).unwrap()[0];
        let err: f64 = got
            .samples()
            .iter()
            .zip(truth.samples())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-6 * truth.energy().sqrt());
    }

    #[test]
    fn wiener_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let image = spectrum(4, 4, &mut rng);
        let ones = ComplexField::filled(4, 4, c(1.0, 0.0));
        let eps = 1e-6;
        let out = mf_wiener_deconvolve(std::slice::from_ref(&image), &[ones], eps).unwrap();
        for (o, i) in out.samples().iter().zip(image.samples()) {
            assert!((o - i).norm() <= eps * i.norm() + 1e-15);
        }

        // complementary zeros keep every denominator away from ε
        let h1 = ComplexField::new(4, 4, (0..16).map(|k| c((k % 2) as f64, 0.0)).collect()).unwrap();
        let h2 = ComplexField::new(4, 4, (0..16).map(|k| c(((k + 1) % 2) as f64, 0.0)).collect()).unwrap();
        for k in 0..16 {
            let den = h1.samples()[k].norm_sqr() + h2.samples()[k].norm_sqr();
            assert!(den >= 1.0);
        }

        let frames: Vec<_> = (0..3).map(|_| spectrum(4, 4, &mut rng)).collect();
        let otfs: Vec<_> = (0..3).map(|_| spectrum(4, 4, &mut rng)).collect();
        let out = mf_wiener_deconvolve(&frames, &otfs, 0.5).unwrap();
        for k in 0..16 {
            let mut num = c(0.0, 0.0);
            let mut den = 0.5;
            for n in 0..3 {
                let i = frames[n].samples()[k];
                let hh = otfs[n].samples()[k];
                num += c(i.re * hh.re + i.im * hh.im, i.im * hh.re - i.re * hh.im);
                den += hh.re * hh.re + hh.im * hh.im;
            }
            assert!((out.samples()[k] - num / den).norm() < 1e-12);
        }
        assert!(mf_wiener_deconvolve(&[], &[], 1.0).is_err());
    }

    #[test]
    fn residual_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let image = RealField::from_fn(8, 8, |_, _| rng.random_range(0.0..1.0));
        let delta = RealField::centered_delta(8, 8);
        assert!(residual_norm(&image, &delta, &image).unwrap() < 1e-12);

        let psf = RealField::from_fn(8, 8, |x, y| if (3..6).contains(&x) && y == 4 { 1.0 / 3.0 } else { 0.0 });
        let blurred = convolve_with_psf(&image, &psf).unwrap();
        assert!(residual_norm(&blurred, &psf, &image).unwrap() < 1e-12);

        let ones = RealField::filled(8, 8, 1.0);
        let r = residual_norm(&ones, &delta, &RealField::zeros(8, 8)).unwrap();
        assert!((r - 8.0).abs() < 1e-12);
        assert!(residual_norm(&ones, &delta, &RealField::zeros(4, 4)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TipConfig::default().validate().is_ok());
        for bad in [
            TipConfig { iters: 0, ..TipConfig::default() },
            TipConfig { grid_p: 0, ..TipConfig::default() },
            TipConfig { support_s: 0, ..TipConfig::default() },
            TipConfig { eps_h: 0.0, ..TipConfig::default() },
            TipConfig { eps_o: f64::NAN, ..TipConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn zero_image_falls_back_to_delta() {
        let config = TipConfig { iters: 5, support_s: 8, ..TipConfig::default() };
        let out = sftip_run(&RealField::zeros(32, 32), config, None).unwrap();
        assert_eq!(out.psf, RealField::centered_delta(32, 32));
        assert!(out.object.samples().iter().all(|&v| v == 0.0));
        assert_eq!(out.trace.records().len(), 5);
        assert!(out.trace.records().iter().all(|r| r.residual.is_finite()));
        assert_eq!(out.trace.records().last().unwrap().delta_fallbacks, 5);
    }

    #[test]
    fn rejects_negative_image() {
        let mut image = RealField::filled(16, 16, 1.0);
        image.set(2, 2, -1.0);
        assert!(matches!(
            sftip_run(&image, TipConfig { support_s: 4, ..TipConfig::default() }, None),
            Err(Error::NegativeSample { .. })
        ));
    }

    #[test]
    fn psf_stays_feasible_every_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let scene = RealField::from_fn(32, 32, |_, _| rng.random_range(0.0..1.0));
        let config = TipConfig { iters: 10, support_s: 6, ..TipConfig::default() };
        let mut solver = SfTip::new(&scene, config).unwrap();
        let support = SupportSpec::new(6, 32, 32).unwrap();
        for _ in 0..10 {
            let out = solver.step().unwrap();
            assert!((out.psf.sum() - 1.0).abs() < 1e-12);
            for y in 0..32 {
                for x in 0..32 {
                    let v = out.psf.get(x, y);
                    assert!(v >= 0.0 && v.is_finite());
                    if !support.contains(x, y, 32, 32) {
                        assert_eq!(v, 0.0);
                    }
                }
            }
            assert!(out.object.samples().iter().all(|v| *v >= 0.0 && v.is_finite()));
        }
    }
}
