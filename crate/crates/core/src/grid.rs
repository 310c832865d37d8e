//! Two-dimensional real and complex sample grids and the Fourier machinery
//! shared by every other module.
//!
//! Samples are stored row-major: the sample at column `x`, row `y` lives at
//! index `y * width + x`. The forward transform is the unnormalized DFT and
//! the inverse applies the `1/N` factor, so the convolution theorem holds as
//! `a ⊛ b = inverse_fft(forward_fft(a) ⊙ forward_fft(b))` with no extra
//! scale. Arbitrary sizes are supported natively (mixed-radix and Bluestein
//! plans from `rustfft`); nothing is padded.

use std::cell::RefCell;

pub use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{Error, Result};

/// Largest tolerated imaginary residue, relative to the result magnitude,
/// when a spectral product is known to be the transform of a real field.
pub const IMAGINARY_RESIDUE_TOL: f64 = 1e-9;

/// A grid of real samples: an image, object, PSF or mask.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    width: usize,
    height: usize,
    samples: Vec<f64>,
}

/// A grid of complex samples, normally a spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    width: usize,
    height: usize,
    samples: Vec<Complex64>,
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::EmptyField { width, height });
    }
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| Error::InvalidArgument(format!("{width}x{height} overflows")))?;
    if len != expected {
        return Err(Error::BufferLength {
            expected,
            actual: len,
        });
    }
    Ok(())
}

fn assert_nonempty(width: usize, height: usize) {
    assert!(width > 0 && height > 0, "field dimensions must be non-zero");
}

impl RealField {
    /// Builds a field from row-major samples, rejecting empty shapes,
    /// mismatched buffers and non-finite values.
    pub fn new(width: usize, height: usize, samples: Vec<f64>) -> Result<Self> {
        check_dims(width, height, samples.len())?;
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert_nonempty(width, height);
        Self {
            width,
            height,
            samples: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert_nonempty(width, height);
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            samples,
        }
    }

    /// Unit impulse at `(x, y)`.
    pub fn delta(width: usize, height: usize, x: usize, y: usize) -> Self {
        let mut field = Self::zeros(width, height);
        field.set(x % width, y % height, 1.0);
        field
    }

    /// Unit impulse at the grid center `(width / 2, height / 2)`.
    pub fn centered_delta(width: usize, height: usize) -> Self {
        Self::delta(width, height, width / 2, height / 2)
    }

    pub(crate) fn from_parts(width: usize, height: usize, samples: Vec<f64>) -> Self {
        debug_assert_eq!(samples.len(), width * height);
        Self {
            width,
            height,
            samples,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(width, height)`
    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Pixel count N.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.samples[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.samples[y * self.width + x] = value;
    }

    pub fn sum(&self) -> f64 {
        self.samples.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest absolute sample.
    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sum of squared samples.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(
            self.width,
            self.height,
            self.samples.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        ensure_same_shape(self.shape(), other.shape())?;
        Ok(Self::from_parts(
            self.width,
            self.height,
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField::from_parts(
            self.width,
            self.height,
            self.samples.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    /// Euclidean distance between two equally shaped fields.
    pub fn l2_distance(&self, other: &Self) -> Result<f64> {
        ensure_same_shape(self.shape(), other.shape())?;
        Ok(self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

impl ComplexField {
    pub fn new(width: usize, height: usize, samples: Vec<Complex64>) -> Result<Self> {
        check_dims(width, height, samples.len())?;
        if let Some(index) = samples
            .iter()
            .position(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn filled(width: usize, height: usize, value: Complex64) -> Self {
        assert_nonempty(width, height);
        Self {
            width,
            height,
            samples: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, Complex64::new(0.0, 0.0))
    }

    pub(crate) fn from_parts(width: usize, height: usize, samples: Vec<Complex64>) -> Self {
        debug_assert_eq!(samples.len(), width * height);
        Self {
            width,
            height,
            samples,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn get(&self, x: usize, y: usize) -> Complex64 {
        self.samples[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: Complex64) {
        self.samples[y * self.width + x] = value;
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Mean of `|X(k)|²` over all bins.
    pub fn mean_power(&self) -> f64 {
        self.energy() / self.len() as f64
    }

    /// Pixel-wise product.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        ensure_same_shape(self.shape(), other.shape())?;
        Ok(Self::from_parts(
            self.width,
            self.height,
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a * b)
                .collect(),
        ))
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self::from_parts(
            self.width,
            self.height,
            self.samples.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Real part, without any residue check.
    pub fn real_part(&self) -> RealField {
        RealField::from_parts(
            self.width,
            self.height,
            self.samples.iter().map(|v| v.re).collect(),
        )
    }

    /// Largest imaginary magnitude relative to the largest real magnitude.
    pub fn imaginary_residue(&self) -> f64 {
        let re = self.samples.iter().fold(0.0f64, |m, v| m.max(v.re.abs()));
        let im = self.samples.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
        if im == 0.0 {
            0.0
        } else if re == 0.0 {
            f64::INFINITY
        } else {
            im / re
        }
    }

    /// Real part of a field that must be real up to round-off, such as the
    /// inverse transform of a product of Hermitian spectra.
    pub fn expect_real(&self) -> RealField {
        let residue = self.imaginary_residue();
        let abs_im = self.samples.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
        debug_assert!(
            residue < IMAGINARY_RESIDUE_TOL || abs_im < 1e-300,
            "imaginary residue {residue:e} exceeds tolerance"
        );
        self.real_part()
    }
}

pub(crate) fn ensure_same_shape(left: (usize, usize), right: (usize, usize)) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { left, right })
    }
}

/// Anything the forward transform accepts.
pub trait SpectralInput {
    fn to_spectral_buffer(&self) -> ComplexField;
}

impl SpectralInput for RealField {
    fn to_spectral_buffer(&self) -> ComplexField {
        self.to_complex()
    }
}

impl SpectralInput for ComplexField {
    fn to_spectral_buffer(&self) -> ComplexField {
        self.clone()
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn transform_in_place(field: &mut ComplexField, direction: FftDirection) {
    let (w, h) = field.shape();
    let (row_fft, col_fft) = PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        (planner.plan_fft(w, direction), planner.plan_fft(h, direction))
    });

    // rows are contiguous, so one call covers all of them
    row_fft.process(&mut field.samples);
    if h == 1 {
        return;
    }
    let mut columns = vec![Complex64::new(0.0, 0.0); w * h];
    for y in 0..h {
        for x in 0..w {
            columns[x * h + y] = field.samples[y * w + x];
        }
    }
    col_fft.process(&mut columns);
    for x in 0..w {
        for y in 0..h {
            field.samples[y * w + x] = columns[x * h + y];
        }
    }
}

/// Unnormalized 2-D DFT: `X(u, v) = Σ x(p, q) exp(-2πi (up/W + vq/H))`.
pub fn forward_fft<F: SpectralInput + ?Sized>(field: &F) -> ComplexField {
    let mut buffer = field.to_spectral_buffer();
    transform_in_place(&mut buffer, FftDirection::Forward);
    buffer
}

/// Inverse 2-D DFT including the `1/N` normalization.
pub fn inverse_fft(spectrum: &ComplexField) -> ComplexField {
    let mut buffer = spectrum.clone();
    transform_in_place(&mut buffer, FftDirection::Inverse);
    let scale = 1.0 / buffer.len() as f64;
    for v in &mut buffer.samples {
        *v *= scale;
    }
    buffer
}

/// Inverse transform of a spectrum known to belong to a real field.
pub fn inverse_fft_real(spectrum: &ComplexField) -> RealField {
    inverse_fft(spectrum).expect_real()
}

/// Cyclic convolution `(a ⊛ b)(x) = Σ_y a(y) b(x − y)`, indices modulo the
/// grid size.
pub fn circular_convolve(a: &RealField, b: &RealField) -> Result<RealField> {
    ensure_same_shape(a.shape(), b.shape())?;
    let product = forward_fft(a).hadamard(&forward_fft(b))?;
    Ok(inverse_fft_real(&product))
}

/// Toroidal translation: the sample at `(x, y)` moves to
/// `((x + dx) mod W, (y + dy) mod H)`.
pub fn circular_shift(field: &RealField, dx: isize, dy: isize) -> RealField {
    let (w, h) = field.shape();
    let sx = dx.rem_euclid(w as isize) as usize;
    let sy = dy.rem_euclid(h as isize) as usize;
    if sx == 0 && sy == 0 {
        return field.clone();
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let ty = (y + sy) % h;
        for x in 0..w {
            out[ty * w + (x + sx) % w] = field.samples[y * w + x];
        }
    }
    RealField::from_parts(w, h, out)
}

/// Moves a PSF stored with its center at `(W/2, H/2)` to the FFT layout
/// with its center at the origin.
pub fn center_to_origin(psf: &RealField) -> RealField {
    circular_shift(psf, -((psf.width() / 2) as isize), -((psf.height() / 2) as isize))
}

/// Inverse of [`center_to_origin`].
pub fn origin_to_center(psf: &RealField) -> RealField {
    circular_shift(psf, (psf.width() / 2) as isize, (psf.height() / 2) as isize)
}

/// Blurs `object` with a PSF stored center-layout, so a centered delta is
/// the identity and the image is not translated.
pub fn convolve_with_psf(object: &RealField, psf: &RealField) -> Result<RealField> {
    ensure_same_shape(object.shape(), psf.shape())?;
    circular_convolve(object, &center_to_origin(psf))
}

/// Intensity-weighted centroid on the torus, per axis, as fractional pixel
/// coordinates in `[0, W)` and `[0, H)`. Each axis uses the circular mean of
/// the marginal, so mass straddling the border is handled correctly. An axis
/// whose marginal has no preferred direction reports `None`.
pub fn circular_centroid(field: &RealField) -> (Option<f64>, Option<f64>) {
    let (w, h) = field.shape();
    let mut cols = vec![0.0; w];
    let mut rows = vec![0.0; h];
    for (y, row) in field.samples().chunks(w).enumerate() {
        for (x, &v) in row.iter().enumerate() {
            cols[x] += v;
            rows[y] += v;
        }
    }
    (circular_mean(&cols), circular_mean(&rows))
}

fn circular_mean(weights: &[f64]) -> Option<f64> {
    let n = weights.len() as f64;
    let total: f64 = weights.iter().map(|w| w.abs()).sum();
    let acc: Complex64 = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| Complex64::from_polar(w, 2.0 * std::f64::consts::PI * i as f64 / n))
        .sum();
    if total <= 0.0 || acc.norm() <= 1e-12 * total {
        return None;
    }
    Some((acc.arg() * n / (2.0 * std::f64::consts::PI)).rem_euclid(n))
}

/// Integer translation that brings the circular centroid of `field` to the
/// grid center `(W/2, H/2)`.
pub fn centering_shift(field: &RealField) -> (isize, isize) {
    let (w, h) = field.shape();
    let (cx, cy) = circular_centroid(field);
    let axis = |c: Option<f64>, len: usize| -> isize {
        match c {
            None => 0,
            Some(c) => {
                let len_i = len as isize;
                let raw = ((len / 2) as f64 - c).round() as isize;
                // smallest equivalent translation
                let mut s = raw.rem_euclid(len_i);
                if s > len_i / 2 {
                    s -= len_i;
                }
                s
            }
        }
    };
    (axis(cx, w), axis(cy, h))
}

/// Circularly shifts `field` so its centroid lands on the grid center.
pub fn recenter(field: &RealField) -> RealField {
    let (dx, dy) = centering_shift(field);
    circular_shift(field, dx, dy)
}

/// Full-scale value of a 16-bit sample.
pub const MAX_16BIT: f64 = 65535.0;

/// Rescales `[0, max]` linearly onto `[0, 65535]` and rounds half up.
///
/// The output holds integer values. An all-zero field stays all-zero.
/// Negative samples are rejected; clip them first.
pub fn quantize_16bit(field: &RealField) -> Result<RealField> {
    if let Some((index, &value)) = field.samples.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NegativeSample { index, value });
    }
    let max = field.max();
    if max <= 0.0 {
        return Ok(RealField::zeros(field.width, field.height));
    }
    let scale = MAX_16BIT / max;
    Ok(field.map(|v| (v * scale + 0.5).floor().min(MAX_16BIT)))
}
