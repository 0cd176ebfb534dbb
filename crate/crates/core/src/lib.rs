//! Quantitative susceptibility mapping with a patch-based deep image prior.
//!
//! The crate reconstructs susceptibility maps χ from tissue field maps Φ under
//! the dipole forward model `Φ = F⁻¹ D F χ + η`. The proposed reconstruction
//! ([`pdip`]) alternates between fitting an untrained 3D UNet to overlapping
//! patches of the current estimate and an exact k-space inversion step. TKD,
//! TV and TGV reconstructions ([`baselines`]) and RMSE/SSIM/PSNR
//! ([`metrics`]) are provided for comparison on synthetic phantoms
//! ([`phantom`]).

pub mod baselines;
pub mod cli;
pub mod error;
pub mod metrics;
pub mod neural;
pub mod patchwork;
pub mod pdip;
pub mod phantom;
pub mod seed;
pub mod spectral;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{Mask, Volume};
