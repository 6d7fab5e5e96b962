//! Radial calculus of the fourth-order heat kernel.
//!
//! The kernel of `u_t = -Δ²u` at unit time is radial; its profile in
//! dimension `N` has the entire power series
//!
//! ```text
//! φ_N(r) = Σ_{ℓ≥0} (-1)^ℓ b_{N,ℓ} r^{2ℓ},
//! b_{N,ℓ} = Γ(ℓ/2 + N/4) / (2^{N+1} π^{N/2} 2^{2ℓ} Γ(ℓ+1) Γ(ℓ+N/2)),
//! ```
//!
//! whose partial sums bracket the profile once the term ratio times r²
//! drops below one. This module evaluates the profile (series inside the
//! well-conditioned radius, oscillatory quadrature beyond), its
//! antiderivative `Ψ(r) = ∫₀^r φ_1`, the profile's sign changes, the
//! three-scale threshold combination built from Ψ, and the hyperplane
//! moments that drive the interface-law expansion.

mod gamma;
mod moments;
mod quad;
mod zeros;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

pub use gamma::{gamma, ln_gamma};
pub use moments::{moment_closed_form, moment_oracle, moment_oracle_batch, MomentPattern};
pub use quad::radial_profile_quadrature;
pub use zeros::{kernel_zeros, SignChangePair, ZeroTable};

/// Hard cap on series terms; the adaptive truncation always stops long
/// before this for radii the series can represent in f64 at all.
const MAX_TERMS: usize = 400;

/// Target absolute remainder for the adaptive truncation.
const TAIL_TOL: f64 = 1e-12;

/// Largest acceptable absolute error estimate (truncation plus cancellation
/// roundoff) before evaluation falls back to quadrature.
const ABS_ERR_LIMIT: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("quadrature fallback is only available for dims 1-3, got dim {dim}")]
    QuadratureUnsupported { dim: u32 },
    #[error(
        "series for dim {dim} cannot reach r = {r} within the cancellation \
         budget (well-conditioned radius ~{valid_radius:.2}) and no \
         quadrature path exists for this dim"
    )]
    SeriesRange { dim: u32, r: f64, valid_radius: f64 },
    #[error("profile sign-change scan exhausted r ≤ {scanned:.2} after finding {found} pairs")]
    ZeroScanExhausted { scanned: f64, found: usize },
    #[error("no closed form tabulated for moment pattern {pattern}; use the oracle")]
    NoClosedForm { pattern: String },
    #[error("moment oracle: {0}")]
    OracleConfig(String),
    #[error(
        "moment oracle refinement disagrees: coarse {coarse:.3e} vs refined \
         {refined:.3e} (tolerance {tol:.1e})"
    )]
    OracleRefinement { coarse: f64, refined: f64, tol: f64 },
}

/// Coefficient table of the profile series in one dimension.
///
/// Invariants: every coefficient is positive and the consecutive ratio
/// `b_{ℓ+1}/b_ℓ` decreases in ℓ, so partial sums alternate around the
/// profile wherever `ratio(n) · r² ≤ 1`.
pub struct KernelSeries {
    dim: u32,
    coeffs: Vec<f64>,
}

impl KernelSeries {
    pub fn new(dim: u32) -> Self {
        assert!(dim >= 1, "profile dimension must be at least 1");
        // Around ℓ ≈ 100 the coefficients underflow f64; the table ends
        // there, capping the series range (larger radii use quadrature).
        let mut coeffs = Vec::new();
        for ell in 0..=MAX_TERMS + 1 {
            let b = series_coeff(dim, ell as u32);
            if b < f64::MIN_POSITIVE {
                break;
            }
            coeffs.push(b);
        }
        assert!(coeffs.len() >= 8, "series table unexpectedly short");
        KernelSeries { dim, coeffs }
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn coeff(&self, ell: usize) -> f64 {
        self.coeffs[ell]
    }

    /// Largest order whose consecutive ratio (hence tail bound) exists.
    pub fn max_order(&self) -> usize {
        self.coeffs.len() - 2
    }

    /// Ratio of consecutive coefficients; strictly decreasing in `n`.
    pub fn ratio(&self, n: usize) -> f64 {
        self.coeffs[n + 1] / self.coeffs[n]
    }

    /// Radius up to which the alternating-tail bound holds at order `n`.
    pub fn valid_radius(&self, n: usize) -> f64 {
        1.0 / self.ratio(n).sqrt()
    }

    /// Smallest even order with both the bracketing condition
    /// `r ≤ valid_radius(n)` and tail bound `b_n r^{2n} < TAIL_TOL`.
    pub fn truncation_order(&self, r: f64) -> Option<usize> {
        let r2 = r * r;
        let mut term = self.coeffs[0];
        let mut n = 0usize;
        while n <= self.max_order() {
            if n % 2 == 0 && r2 * self.ratio(n) <= 1.0 && term < TAIL_TOL {
                return Some(n);
            }
            term *= self.ratio(n) * r2;
            n += 1;
        }
        None
    }

    /// Partial sum through order `n` inclusive: `Σ_{ℓ=0}^n (-1)^ℓ b_ℓ r^{2ℓ}`.
    pub fn partial_sum(&self, r: f64, n: usize) -> f64 {
        assert!(n < self.coeffs.len(), "partial sum order exceeds table");
        let r2 = r * r;
        let mut term = self.coeffs[0];
        let mut acc = term;
        for ell in 1..=n {
            term *= self.ratio(ell - 1) * r2;
            acc += if ell % 2 == 0 { term } else { -term };
        }
        acc
    }

    /// Series value with its absolute error estimate, or None when the
    /// radius is out of reach or cancellation eats the budget.
    fn eval(&self, r: f64) -> Option<f64> {
        let n = self.truncation_order(r)?;
        let r2 = r * r;
        let mut term = self.coeffs[0];
        let mut acc = term;
        let mut max_term = term;
        for ell in 1..=n {
            term *= self.ratio(ell - 1) * r2;
            max_term = max_term.max(term);
            acc += if ell % 2 == 0 { term } else { -term };
        }
        let err = TAIL_TOL + max_term * 1e-15;
        if err > ABS_ERR_LIMIT {
            None
        } else {
            Some(acc)
        }
    }
}

fn series_table(dim: u32) -> Arc<KernelSeries> {
    static CACHE: OnceLock<Mutex<HashMap<u32, Arc<KernelSeries>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("series cache poisoned");
    map.entry(dim)
        .or_insert_with(|| Arc::new(KernelSeries::new(dim)))
        .clone()
}

/// Series coefficient `b_{dim,ℓ}`, evaluated in log space.
pub fn series_coeff(dim: u32, ell: u32) -> f64 {
    let n = dim as f64;
    let l = ell as f64;
    let ln_num = ln_gamma(0.5 * l + 0.25 * n);
    let ln_den = (n + 1.0 + 2.0 * l) * std::f64::consts::LN_2
        + 0.5 * n * std::f64::consts::PI.ln()
        + ln_gamma(l + 1.0)
        + ln_gamma(l + 0.5 * n);
    (ln_num - ln_den).exp()
}

/// Kernel profile `φ_dim(r)`; even in `r`.
///
/// Uses the series wherever its truncation and cancellation budgets hold
/// (absolute error ≤ 1e-9, in practice ≲1e-12), and the oscillatory
/// quadrature beyond. Dims above 3 have no quadrature path and error out
/// beyond the series range.
pub fn phi(dim: u32, r: f64) -> Result<f64, KernelError> {
    if !r.is_finite() {
        return Err(KernelError::InvalidArgument(format!(
            "radius must be finite, got {r}"
        )));
    }
    let r = r.abs();
    let table = series_table(dim);
    if let Some(v) = table.eval(r) {
        return Ok(v);
    }
    quad::radial_profile_quadrature(dim, r).map_err(|e| match e {
        KernelError::QuadratureUnsupported { dim } => {
            // Report how far the series could have gone instead.
            let vr = table.valid_radius(table.max_order());
            KernelError::SeriesRange {
                dim,
                r,
                valid_radius: vr,
            }
        }
        other => other,
    })
}

/// Antiderivative `Ψ(r) = ∫₀^r φ_1`; odd in `r`, with `Ψ(∞) = 1/2`.
pub fn psi(r: f64) -> f64 {
    assert!(r.is_finite(), "psi argument must be finite");
    let sign = if r < 0.0 { -1.0 } else { 1.0 };
    let r = r.abs();
    let table = series_table(1);
    if let Some(n) = table.truncation_order(r) {
        // Termwise integral of the profile series; same bracketing, with
        // each term additionally damped by r/(2ℓ+1).
        let r2 = r * r;
        let mut base = table.coeff(0);
        let mut acc = base * r;
        let mut max_term = acc.abs();
        for ell in 1..=n {
            base *= table.ratio(ell - 1) * r2;
            let term = base * r / (2.0 * ell as f64 + 1.0);
            max_term = max_term.max(term);
            acc += if ell % 2 == 0 { term } else { -term };
        }
        if TAIL_TOL + max_term * 1e-15 <= ABS_ERR_LIMIT {
            return sign * acc;
        }
    }
    sign * quad::psi_quadrature(r)
}

/// Three-scale threshold profile
/// `I(r) = Ψ(r/(3a)) - 3Ψ(r/(2a)) + 3Ψ(r/a)`.
///
/// This is the deviation of the combined propagated field from 1/2 at
/// signed distance `r·t^{1/4}` inside a flat interface; positivity for all
/// r > 0 is what makes flat interfaces exactly stationary under the
/// threshold step, and `I(∞) = 1/2` recovers the far-field value.
pub fn threshold_combination(r: f64, a: f64) -> f64 {
    assert!(a > 0.0, "scale factor must be positive");
    psi(r / (3.0 * a)) - 3.0 * psi(r / (2.0 * a)) + 3.0 * psi(r / a)
}

/// Moment of the quartic-exponential weight:
/// `L_σ = 2∫₀^∞ ξ^σ e^{-ξ⁴} dξ = Γ((σ+1)/4)/2`.
pub fn l_moment(sigma: u32) -> f64 {
    0.5 * gamma((sigma as f64 + 1.0) / 4.0)
}

/// Radial profile of the `order`-fold Laplacian of the kernel:
/// the same series with `Γ(ℓ/2 + N/4)` promoted to `Γ((ℓ+order)/2 + N/4)`
/// and an overall sign `(-1)^order`.
pub fn laplacian_series(dim: u32, order: u32, r: f64) -> Result<f64, KernelError> {
    if !r.is_finite() || r < 0.0 {
        return Err(KernelError::InvalidArgument(format!(
            "radius must be finite and nonnegative, got {r}"
        )));
    }
    let n = dim as f64;
    let m = order as f64;
    let ln_r2 = if r > 0.0 { 2.0 * r.ln() } else { f64::NEG_INFINITY };
    let mut acc = 0.0;
    let mut max_term = 0.0f64;
    let mut prev = f64::INFINITY;
    for ell in 0..=MAX_TERMS {
        let l = ell as f64;
        let ln_c = ln_gamma(0.5 * (l + m) + 0.25 * n)
            - (n + 1.0 + 2.0 * l) * std::f64::consts::LN_2
            - 0.5 * n * std::f64::consts::PI.ln()
            - ln_gamma(l + 1.0)
            - ln_gamma(l + 0.5 * n);
        let term = if ell == 0 {
            ln_c.exp()
        } else {
            (ln_c + l * ln_r2).exp()
        };
        max_term = max_term.max(term);
        acc += if ell % 2 == 0 { term } else { -term };
        let decreasing = term < prev;
        prev = term;
        if decreasing && term < TAIL_TOL {
            let err = term + max_term * 1e-15;
            if err > ABS_ERR_LIMIT {
                return Err(KernelError::SeriesRange {
                    dim,
                    r,
                    valid_radius: f64::NAN,
                });
            }
            let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
            return Ok(sign * acc);
        }
    }
    Err(KernelError::SeriesRange {
        dim,
        r,
        valid_radius: f64::NAN,
    })
}
