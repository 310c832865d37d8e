//! Ground-truth generation: Zernike aberrations, pupil-plane PSFs, synthetic
//! scenes and forward image formation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{
    circular_shift, convolve_with_psf, ensure_same_shape, forward_fft, origin_to_center,
    quantize_16bit, recenter, ComplexField, RealField,
};

pub const MAX_COEFFICIENTS: usize = 64;
pub const DEFAULT_PUPIL_FRACTION: f64 = 0.5;
pub const DEFAULT_MODE_COUNT: usize = 20;
pub const DEFAULT_SIGMA: f64 = 0.5;

/// Radial order `n` and signed azimuthal frequency `m` of Noll index `j`.
/// Positive `m` selects the cosine term (even `j`), negative the sine term.
pub fn noll_to_nm(j: usize) -> Result<(u32, i32)> {
    if j == 0 {
        return Err(Error::InvalidArgument("Noll indices start at 1".into()));
    }
    let mut n = 0usize;
    let mut rem = j - 1;
    while rem > n {
        n += 1;
        rem -= n;
    }
    let m_abs = (n % 2) + 2 * ((rem + (n + 1) % 2) / 2);
    let m = if j.is_multiple_of(2) { m_abs as i32 } else { -(m_abs as i32) };
    Ok((n as u32, m))
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

fn radial(n: u32, m: u32, rho: f64) -> f64 {
    (0..=(n - m) / 2)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * factorial(n - k)
                / (factorial(k) * factorial((n + m) / 2 - k) * factorial((n - m) / 2 - k))
                * rho.powi((n - 2 * k) as i32)
        })
        .sum()
}

/// Noll-normalized Zernike polynomial `Z_j(ρ, θ)`, orthonormal over the unit
/// disk with respect to the area-averaged inner product.
pub fn zernike_noll(j: usize, rho: f64, theta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("rho = {rho} outside [0, 1]")));
    }
    let (n, m) = noll_to_nm(j)?;
    let r = radial(n, m.unsigned_abs(), rho);
    let n1 = f64::from(n + 1);
    Ok(match m {
        0 => n1.sqrt() * r,
        m if m > 0 => (2.0 * n1).sqrt() * r * (f64::from(m) * theta).cos(),
        m => (2.0 * n1).sqrt() * r * (f64::from(-m) * theta).sin(),
    })
}

/// Wavefront aberration as Zernike coefficients in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct AberrationSpec {
    /// `coefficients[k]` weights Noll index `j = k + 1`.
    coefficients: Vec<f64>,
    /// Aperture radius as a fraction of the grid half-width.
    pupil_radius_fraction: f64,
}

impl AberrationSpec {
    pub fn new(coefficients: Vec<f64>, pupil_radius_fraction: f64) -> Result<Self> {
        if coefficients.len() > MAX_COEFFICIENTS {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients exceed the limit of {MAX_COEFFICIENTS}",
                coefficients.len()
            )));
        }
        if !(pupil_radius_fraction > 0.0 && pupil_radius_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "pupil radius fraction {pupil_radius_fraction} outside (0, 1]"
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite Zernike coefficient".into()));
        }
        Ok(Self {
            coefficients,
            pupil_radius_fraction,
        })
    }

    /// Unaberrated pupil.
    pub fn diffraction_limited(pupil_radius_fraction: f64) -> Result<Self> {
        Self::new(Vec::new(), pupil_radius_fraction)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn pupil_radius_fraction(&self) -> f64 {
        self.pupil_radius_fraction
    }

    pub fn with_pupil_radius_fraction(self, fraction: f64) -> Result<Self> {
        Self::new(self.coefficients, fraction)
    }

    /// Wavefront phase `Σ_j c_j Z_j(ρ, θ)` in radians.
    pub fn phase(&self, rho: f64, theta: f64) -> Result<f64> {
        let mut phase = 0.0;
        for (k, c) in self.coefficients.iter().enumerate() {
            if *c != 0.0 {
                phase += c * zernike_noll(k + 1, rho, theta)?;
            }
        }
        Ok(phase)
    }
}

/// Draws `c_2 … c_{mode_count+1}` i.i.d. from `N(0, sigma²)`. Piston stays
/// zero. Tip and tilt are included.
pub fn random_aberration(mode_count: usize, sigma: f64, seed: u64) -> Result<AberrationSpec> {
    if mode_count == 0 || mode_count + 1 > MAX_COEFFICIENTS {
        return Err(Error::InvalidArgument(format!(
            "mode count {mode_count} outside 1..={}",
            MAX_COEFFICIENTS - 1
        )));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma {sigma} must be non-negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coefficients = vec![0.0; mode_count + 1];
    for c in coefficients.iter_mut().skip(1) {
        let z: f64 = rng.sample(StandardNormal);
        *c = sigma * z;
    }
    AberrationSpec::new(coefficients, DEFAULT_PUPIL_FRACTION)
}

/// Pupil function `A(ρ) exp(i φ(ρ, θ))` centered on `(W/2, H/2)`.
pub fn make_pupil(aberration: &AberrationSpec, width: usize, height: usize) -> Result<ComplexField> {
    if width == 0 || height == 0 {
        return Err(Error::EmptyField { width, height });
    }
    let radius = aberration.pupil_radius_fraction * (width.min(height) as f64) / 2.0;
    let (cx, cy) = ((width / 2) as f64, (height / 2) as f64);
    let mut pupil = ComplexField::zeros(width, height);
    for y in 0..height {
        for x in 0..width {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let rho = (dx * dx + dy * dy).sqrt() / radius;
            if rho <= 1.0 {
                let phase = aberration.phase(rho, dy.atan2(dx))?;
                pupil.set(x, y, Complex64::from_polar(1.0, phase));
            }
        }
    }
    Ok(pupil)
}

/// Incoherent PSF `|F{pupil}|²`, centroid moved to the grid center, unit sum.
pub fn psf_from_pupil(pupil: &ComplexField) -> Result<RealField> {
    let intensity = forward_fft(pupil).map(|v| Complex64::new(v.norm_sqr(), 0.0)).real_part();
    let total = intensity.sum();
    if total <= 0.0 || total.is_nan() {
        return Err(Error::Degenerate("pupil transmits no light".into()));
    }
    let psf = recenter(&origin_to_center(&intensity));
    Ok(psf.scale(1.0 / total))
}

/// `quantize_16bit(max(psf ⊛ scene + noise, 0))` with Gaussian noise of
/// standard deviation `noise_sigma` (in scene units) drawn from `seed`.
pub fn simulate_observation(
    scene: &RealField,
    psf: &RealField,
    noise_sigma: f64,
    seed: u64,
) -> Result<RealField> {
    ensure_same_shape(scene.shape(), psf.shape())?;
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise sigma {noise_sigma} must be non-negative")));
    }
    let mut blurred = convolve_with_psf(scene, psf)?;
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in blurred.samples_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += noise_sigma * z;
        }
    }
    quantize_16bit(&blurred.map(|v| v.max(0.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    /// Groups of bars at several periods, alternating orientation.
    BarTarget,
    /// Checkerboard of [`CHECKER_CELL`]-pixel squares.
    Checkerboard,
    Flat,
}

impl std::str::FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bar-target" | "bar_target" | "bars" => Ok(Self::BarTarget),
            "checkerboard" => Ok(Self::Checkerboard),
            "flat" => Ok(Self::Flat),
            other => Err(Error::InvalidArgument(format!("unknown scene kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for SceneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::BarTarget => "bar-target",
            Self::Checkerboard => "checkerboard",
            Self::Flat => "flat",
        })
    }
}

pub const CHECKER_CELL: usize = 8;

/// Bar periods in pixels, largest first.
pub const BAR_PERIODS: [usize; 8] = [16, 12, 8, 6, 4, 3, 2, 10];
const BAR_BACKGROUND: f64 = 0.2;

/// Deterministic synthetic scene with values in `[0, 1]`.
pub fn make_test_scene(kind: SceneKind, width: usize, height: usize) -> RealField {
    match kind {
        SceneKind::Flat => RealField::filled(width, height, 1.0),
        SceneKind::Checkerboard => RealField::from_fn(width, height, |x, y| {
            ((x / CHECKER_CELL + y / CHECKER_CELL) % 2) as f64
        }),
        SceneKind::BarTarget => bar_target(width, height),
    }
}

// A 4x4 grid of cells (fewer on tiny frames). Cell k holds bars of period
// BAR_PERIODS[k % 8] inside a margin of one eighth of the cell; the two
// cells sharing a period get opposite orientations.
fn bar_target(width: usize, height: usize) -> RealField {
    let cells_x = 4.min(width).max(1);
    let cells_y = 4.min(height).max(1);
    let cw = width / cells_x;
    let ch = height / cells_y;
    RealField::from_fn(width, height, |x, y| {
        let (col, row) = (x / cw.max(1), y / ch.max(1));
        if col >= cells_x || row >= cells_y {
            return BAR_BACKGROUND;
        }
        let k = row * cells_x + col;
        let period = BAR_PERIODS[k % BAR_PERIODS.len()];
        let (lx, ly) = (x - col * cw, y - row * ch);
        let (mx, my) = (cw / 8, ch / 8);
        if lx < mx || lx >= cw - mx || ly < my || ly >= ch - my {
            return BAR_BACKGROUND;
        }
        let along = if (k + k / BAR_PERIODS.len()).is_multiple_of(2) { lx - mx } else { ly - my };
        if along % period < period / 2 {
            1.0
        } else {
            BAR_BACKGROUND
        }
    })
}

/// Parameters of one simulated (scene, aberration) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub size: usize,
    pub scene: SceneKind,
    pub mode_count: usize,
    pub sigma: f64,
    pub pupil_fraction: f64,
    pub noise_sigma: f64,
    /// Randomly translate the scene on the torus.
    pub shift_scene: bool,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            size: 128,
            scene: SceneKind::BarTarget,
            mode_count: DEFAULT_MODE_COUNT,
            sigma: DEFAULT_SIGMA,
            pupil_fraction: DEFAULT_PUPIL_FRACTION,
            noise_sigma: 0.0,
            shift_scene: false,
            seed: 0,
        }
    }
}

/// A ground-truth scene, its aberration and PSF, and the resulting
/// quantized observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceScenario {
    pub scene: RealField,
    pub aberration: AberrationSpec,
    pub psf: RealField,
    pub image: RealField,
}

impl ConvergenceScenario {
    /// Builds the scenario from a procedural scene.
    pub fn generate(spec: &ScenarioSpec) -> Result<Self> {
        if spec.size == 0 {
            return Err(Error::EmptyField { width: 0, height: 0 });
        }
        let mut scene = make_test_scene(spec.scene, spec.size, spec.size);
        if spec.shift_scene {
            // separate stream from the aberration draw
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_5ce0_e000_0001);
            let dx = rng.random_range(0..spec.size) as isize;
            let dy = rng.random_range(0..spec.size) as isize;
            scene = circular_shift(&scene, dx, dy);
        }
        Self::from_scene(scene, spec)
    }

    /// Builds the scenario around a caller-supplied scene; `spec.size` and
    /// `spec.scene` are ignored.
    pub fn from_scene(scene: RealField, spec: &ScenarioSpec) -> Result<Self> {
        let aberration = if spec.mode_count == 0 || spec.sigma == 0.0 {
            AberrationSpec::diffraction_limited(spec.pupil_fraction)?
        } else {
            random_aberration(spec.mode_count, spec.sigma, spec.seed)?
                .with_pupil_radius_fraction(spec.pupil_fraction)?
        };
        let (w, h) = scene.shape();
        let psf = psf_from_pupil(&make_pupil(&aberration, w, h)?)?;
        let image = simulate_observation(&scene, &psf, spec.noise_sigma, spec.seed)?;
        Ok(Self {
            scene,
            aberration,
            psf,
            image,
        })
    }
}

/// Second moment of a center-layout PSF about its own centroid, in px².
pub fn second_moment(psf: &RealField) -> f64 {
    let total = psf.sum();
    let (w, h) = psf.shape();
    let (mut mx, mut my) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let v = psf.get(x, y);
            mx += v * x as f64;
            my += v * y as f64;
        }
    }
    mx /= total;
    my /= total;
    let mut m2 = 0.0;
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - mx, y as f64 - my);
            m2 += psf.get(x, y) * (dx * dx + dy * dy);
        }
    }
    m2 / total
}
