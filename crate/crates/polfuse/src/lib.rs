//! Fusion toolkit for low-resolution fully polarimetric SAR (PolSAR) and
//! high-resolution single-polarization SAR (SinSAR) imagery.
//!
//! The crate is organised around the life cycle of a fusion experiment:
//!
//! - [`polarimetry`] — the PolSAR data model (scattering matrices, packed
//!   covariance rasters) and every deterministic polarimetric transform:
//!   covariance/coherency conversion, Pauli powers, intensity extraction,
//!   multilook degradation, and polarimetric signature synthesis.
//! - [`tensor`] — a minimal dense 4-D tensor with reverse-mode automatic
//!   differentiation and exactly the layer set the fusion network needs
//!   (convolution, transposed convolution, PReLU, sigmoid, element-wise ops,
//!   channel concat), plus Kaiming initialisation and Adam.
//! - [`model`] — the fusion network itself: intensity and covariance feature
//!   branches, the two cross-attention modules, the reconstruction head, the
//!   fixed bilinear upsampling baseline, and tiled whole-raster fusion.
//! - [`losses`] — the numerical loss, the per-mode polarimetric consistency
//!   loss, and the adaptive combination of the two.
//! - [`datagen`] — synthetic scene generation with multilook speckle, the
//!   training patch pipeline, and the `PFC3` raster container format.
//! - [`metrics`] — Pauli-space PSNR/MAE, ENL trace-moment maps, the
//!   four-component Yamaguchi decomposition, and the bicubic baseline.
//!
//! Tensor code is generic over [`Scalar`] so training runs in `f32` while
//! verification (finite-difference gradient checks, adjoint identities) runs
//! the same code paths in `f64`. Polarimetric raster math is always `f64`;
//! values convert at the module boundary.

pub mod losses;
pub mod polarimetry;
pub mod scalar;
pub mod tensor;

pub use scalar::Scalar;

/// Deterministic RNG used across the crate. Seeding this with the same value
/// reproduces scenes, datasets, initial weights and training runs bit for bit.
pub type Prng = rand_chacha::ChaCha8Rng;

/// Single-precision tensor, the training currency.
pub type Tensor32 = tensor::Tensor<f32>;
/// Double-precision tensor, used by gradient-check oracles.
pub type Tensor64 = tensor::Tensor<f64>;
