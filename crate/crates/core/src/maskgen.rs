//! Apodized masks that cut one frame into overlapping pseudo-patches.
//!
//! Each axis is divided into `P` tiles of `T = size / P` pixels. Tile `p`
//! carries the raised-cosine window `cos²(π d / 2T)` where `d` is the
//! toroidal distance to the tile center `pT + T/2`, and zero once `|d| ≥ T`.
//! Neighbouring windows overlap by half and their squares of cosine and sine
//! add to one, so the masks form a partition of unity on the torus. The 2-D
//! mask for tile `(px, py)` is the product of the two axis windows.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{ensure_same_shape, forward_fft, ComplexField, RealField};

/// Smallest tile side accepted by [`make_masks`].
pub const MIN_TILE: usize = 4;

#[derive(Debug, Clone)]
pub struct MaskSet {
    grid_p: usize,
    width: usize,
    height: usize,
    masks: Vec<RealField>,
    spectra: Vec<ComplexField>,
}

impl MaskSet {
    pub fn grid_p(&self) -> usize {
        self.grid_p
    }

    /// `P²`
    pub fn count(&self) -> usize {
        self.masks.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Masks ordered row-major over the tile grid: index `py * P + px`.
    pub fn masks(&self) -> &[RealField] {
        &self.masks
    }

    pub fn mask(&self, index: usize) -> &RealField {
        &self.masks[index]
    }

    /// Cached `M_p = forward_fft(m_p)`.
    pub fn spectra(&self) -> &[ComplexField] {
        &self.spectra
    }

    pub fn tile_size(&self) -> (usize, usize) {
        (self.width / self.grid_p, self.height / self.grid_p)
    }
}

/// Raised-cosine window value for a tile of `tile` pixels centered at
/// `center`, evaluated at pixel `x` on an axis of `len` pixels.
pub(crate) fn axis_window(x: usize, len: usize, tile: usize, center: f64) -> f64 {
    let len_f = len as f64;
    let mut d = (x as f64 - center).rem_euclid(len_f);
    if d > len_f / 2.0 {
        d -= len_f;
    }
    let t = tile as f64;
    if d.abs() >= t {
        0.0
    } else {
        (PI * d / (2.0 * t)).cos().powi(2)
    }
}

fn axis_windows(len: usize, grid_p: usize) -> Vec<Vec<f64>> {
    if grid_p == 1 {
        return vec![vec![1.0; len]];
    }
    let tile = len / grid_p;
    (0..grid_p)
        .map(|p| {
            let center = (p * tile) as f64 + tile as f64 / 2.0;
            (0..len).map(|x| axis_window(x, len, tile, center)).collect()
        })
        .collect()
}

/// Builds the `P²` apodized masks for a `width × height` frame.
///
/// `width` and `height` must both be divisible by `grid_p` and the resulting
/// tiles must be at least [`MIN_TILE`] pixels on a side. `grid_p = 1` yields
/// a single all-ones mask.
pub fn make_masks(width: usize, height: usize, grid_p: usize) -> Result<MaskSet> {
    if grid_p == 0 {
        return Err(Error::InvalidArgument("patch grid must be at least 1".into()));
    }
    if width == 0 || height == 0 {
        return Err(Error::EmptyField { width, height });
    }
    if !width.is_multiple_of(grid_p) || !height.is_multiple_of(grid_p) {
        return Err(Error::InvalidArgument(format!(
            "{width}x{height} is not divisible into a {grid_p}x{grid_p} patch grid"
        )));
    }
    if grid_p > 1 && (width / grid_p < MIN_TILE || height / grid_p < MIN_TILE) {
        return Err(Error::InvalidArgument(format!(
            "tiles of {}x{} are smaller than {MIN_TILE} pixels",
            width / grid_p,
            height / grid_p
        )));
    }

    let wx = axis_windows(width, grid_p);
    let wy = axis_windows(height, grid_p);
    let mut masks = Vec::with_capacity(grid_p * grid_p);
    for row in &wy {
        for col in &wx {
            masks.push(RealField::from_fn(width, height, |x, y| row[y] * col[x]));
        }
    }
    let spectra = masks.iter().map(forward_fft).collect();
    Ok(MaskSet {
        grid_p,
        width,
        height,
        masks,
        spectra,
    })
}

/// Pseudo-patches `i_p = m_p ⊙ i`.
pub fn split_image(image: &RealField, masks: &MaskSet) -> Result<Vec<RealField>> {
    ensure_same_shape(image.shape(), masks.shape())?;
    masks
        .masks()
        .iter()
        .map(|m| m.zip_map(image, |a, b| a * b))
        .collect()
}

/// Spectra `I_p = forward_fft(m_p ⊙ i)` of the pseudo-patches.
pub fn split_spectra(image: &RealField, masks: &MaskSet) -> Result<Vec<ComplexField>> {
    Ok(split_image(image, masks)?.iter().map(forward_fft).collect())
}

/// Cyclic convolution of two spectra, scaled by `1/N`: the spectrum of a
/// pixel-wise product, `F{m ⊙ i} = (1/N) (M ⊛ I)`.
pub fn spectral_convolve(a: &ComplexField, b: &ComplexField) -> Result<ComplexField> {
    ensure_same_shape(a.shape(), b.shape())?;
    let (w, h) = a.shape();
    let n = (w * h) as f64;
    let mut out = ComplexField::zeros(w, h);
    for v in 0..h {
        for u in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            for q in 0..h {
                for p in 0..w {
                    acc += a.get(p, q) * b.get((u + w - p) % w, (v + h - q) % h);
                }
            }
            out.set(u, v, acc / n);
        }
    }
    Ok(out)
}
