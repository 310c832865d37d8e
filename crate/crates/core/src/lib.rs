//! Single-frame blind deconvolution by tangential iterative projections.
//!
//! One blurred frame is split into overlapping apodized pseudo-patches that
//! share a single PSF. Alternating regularized inverse filters then estimate
//! the OTF from the patches and the patches from the OTF, with physical
//! constraints enforced by projection after every update.
//!
//! * [`grid`]: real and complex fields, FFT, convolution, quantization
//! * [`maskgen`]: partition-of-unity masks
//! * [`constraints`]: projections for the PSF and the object
//! * [`sftip`]: the solver and the underlying update equations
//! * [`simkit`]: Zernike aberrations, PSFs and synthetic observations
//! * [`metrics`]: PSNR, alignment, traces and the convergence benchmark
//! * [`cli`]: the `sftip` command-line tool

pub mod cli;
pub mod constraints;
pub mod error;
pub mod grid;
pub mod maskgen;
pub mod metrics;
pub mod sftip;
pub mod simkit;

pub use error::{Error, Result};
pub use grid::{ComplexField, RealField};
pub use maskgen::MaskSet;
pub use metrics::ConvergenceTrace;
pub use sftip::{sftip_run, TipConfig, TipOutcome};
