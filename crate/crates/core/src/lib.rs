//! Threshold dynamics for a fourth-order Willmore-type flow of planar regions.
//!
//! A region is represented by its indicator on a periodic square grid. One
//! step of the scheme propagates the indicator under the constant-coefficient
//! semigroup of `u_t = -Δ²u + λΔu` at three diffusion-time scales, combines
//! the three fields linearly so that the leading curvature response cancels,
//! and thresholds the combination at 1/2. The sub-cell interface law that
//! emerges is normal velocity `V = -(κ_ss + κ³/2 - λκ)`, the L²-gradient
//! descent of the elastic energy `E = ∮ (κ²/2 + λ) ds`.
//!
//! Modules:
//! - [`kernel`]: radial profile of the fourth-order heat kernel, its
//!   antiderivative, sign changes, and hyperplane moments.
//! - [`spectral`]: periodic grid, FFT propagation, threshold step.
//! - [`geometry`]: shapes, rasterization, contour extraction, discrete
//!   curvature, energy and gradient of closed curves.
//! - [`flow`]: the evolution loop with per-step diagnostics.
//! - [`validation`]: convergence, expansion, velocity, and band studies.
//! - [`cli`]: command-line front end.

mod fft;

pub mod cli;
pub mod flow;
pub mod geometry;
pub mod kernel;
pub mod spectral;
pub mod validation;
