//! Kernel tracking and spectral extraction for repeated RGB and NIR-HSI
//! imaging of grain kernels laid out in gridded Petri dishes.
//!
//! The crate is organized as a chain of stages:
//!
//! * [`pixcodec`]: mono12p packing and the on-disk cube container.
//! * [`vision`]: classical primitives (Otsu, components, Hough, RANSAC, ...).
//! * [`standardize`]: white/dark correction and pixel-size standardization of raw line-scan frames.
//! * [`fiducial`]: square binary marker detection.
//! * [`gridfind`]: one-time 6×6 grid detection on a reference image.
//! * [`gridtrack`]: affine grid localization in later RGB / HSI sessions and cell cut-outs.
//! * [`kernelproc`]: kernel segmentation and mean pseudo-absorbance spectra.
//! * [`synthscene`]: deterministic synthetic frames with ground truth.
//! * [`pipeline`]: manifests, configuration and the batch commands behind the CLI.

pub mod error;
pub mod fiducial;
pub mod geometry;
pub mod gridfind;
pub mod gridtrack;
pub mod kernelproc;
pub mod pipeline;
pub mod pixcodec;
pub mod standardize;
pub mod synthscene;
pub mod vision;

pub use error::{Error, Result};
pub use geometry::{Affine2D, Point2};
pub use pixcodec::{ImageCube, Modality};
pub use vision::{BinaryMask, GrayImage};
