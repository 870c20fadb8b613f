//! Dithered lattice transform codes for the rate-distortion-perception
//! tradeoff on Gaussian sources.
//!
//! The crate provides:
//! - [`lattice`]: named lattice families (Z^n, D_n, D_n^*, E8, Λ16) with exact
//!   closest-point decoders, an enumeration oracle, and Monte-Carlo geometry
//!   (second moment, NSM);
//! - [`dither`]: Voronoi-cell-uniform dithers and nested-lattice coset dithers
//!   for finite shared randomness;
//! - [`codec`]: the deterministic, private-dither, shared-dither, and
//!   quantized-shared-dither compressor pipelines with their operational rate
//!   estimators;
//! - [`metrics`]: MSE, exact and sliced squared 2-Wasserstein perception, and
//!   the closed-form Gaussian RDP function;
//! - [`rcc`]: a reverse-channel-coding baseline via the Poisson functional
//!   representation with Zipf index coding;
//! - [`theory`]: closed-form scheme constructions and lattice-Gaussian /
//!   flatness diagnostics.

pub mod codec;
pub mod dither;
pub mod error;
pub mod lattice;
pub mod metrics;
pub mod rcc;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
