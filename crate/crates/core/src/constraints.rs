//! Projections onto the feasible sets for the PSF and the object.
//!
//! PSFs are handled in center layout: the optical axis sits at pixel
//! `(W/2, H/2)` and the support window is the `s × s` square around it.

use crate::error::{Error, Result};
use crate::grid::{ensure_same_shape, ComplexField, RealField};
use crate::maskgen::MaskSet;

/// Side length of the square PSF support window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SupportSpec {
    size: usize,
}

impl SupportSpec {
    pub fn new(size: usize, width: usize, height: usize) -> Result<Self> {
        if size == 0 || size > width.min(height) {
            return Err(Error::InvalidArgument(format!(
                "support size {size} outside 1..={}",
                width.min(height)
            )));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Half-open pixel range covered along an axis of `len` pixels.
    pub fn range(&self, len: usize) -> std::ops::Range<usize> {
        let start = len / 2 - self.size / 2;
        start..start + self.size
    }

    pub fn contains(&self, x: usize, y: usize, width: usize, height: usize) -> bool {
        self.range(width).contains(&x) && self.range(height).contains(&y)
    }
}

/// Result of a PSF support projection.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportProjection {
    pub psf: RealField,
    /// Set when the windowed PSF carried no mass and was replaced by a
    /// centered delta.
    pub fell_back: bool,
}

/// Real part, negatives clipped to zero.
pub fn project_nonneg_real(field: &ComplexField) -> RealField {
    field.real_part().map(|v| v.max(0.0))
}

/// Clips negative samples of a real field.
pub fn clip_nonneg(field: &RealField) -> RealField {
    field.map(|v| v.max(0.0))
}

/// Zeroes everything outside the centered support window, then scales the
/// PSF to unit sum. A window without mass yields a centered delta.
pub fn project_psf_support_checked(psf: &RealField, support: SupportSpec) -> SupportProjection {
    let (w, h) = psf.shape();
    let xs = support.range(w);
    let ys = support.range(h);
    let mut out = RealField::zeros(w, h);
    let mut total = 0.0;
    for y in ys.clone() {
        for x in xs.clone() {
            let v = psf.get(x, y);
            out.set(x, y, v);
            total += v;
        }
    }
    if total > 0.0 && total.is_finite() {
        let inv = 1.0 / total;
        for v in out.samples_mut() {
            *v *= inv;
        }
        SupportProjection {
            psf: out,
            fell_back: false,
        }
    } else {
        SupportProjection {
            psf: RealField::centered_delta(w, h),
            fell_back: true,
        }
    }
}

pub fn project_psf_support(psf: &RealField, support: SupportSpec) -> RealField {
    project_psf_support_checked(psf, support).psf
}

/// Fuses the patches into one object, clips it to be non-negative, and
/// re-splits it with the masks: `patch_p ← m_p ⊙ max(Σ_q patch_q, 0)`.
pub fn project_object_support(patches: &[RealField], masks: &MaskSet) -> Result<Vec<RealField>> {
    let fused = fuse_patches(patches, masks)?;
    let object = clip_nonneg(&fused);
    masks
        .masks()
        .iter()
        .map(|m| m.zip_map(&object, |a, b| a * b))
        .collect()
}

/// `Σ_p patch_p`, validating count and shapes against the masks.
pub fn fuse_patches(patches: &[RealField], masks: &MaskSet) -> Result<RealField> {
    if patches.len() != masks.count() {
        return Err(Error::CountMismatch {
            left: patches.len(),
            right: masks.count(),
        });
    }
    let (w, h) = masks.shape();
    let mut fused = RealField::zeros(w, h);
    for patch in patches {
        ensure_same_shape(patch.shape(), (w, h))?;
        for (acc, v) in fused.samples_mut().iter_mut().zip(patch.samples()) {
            *acc += v;
        }
    }
    Ok(fused)
}
