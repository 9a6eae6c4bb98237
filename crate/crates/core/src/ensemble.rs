//! Degree model of a single-layer counter braid ensemble.
//!
//! A braid layer is a sparse bipartite graph between flow nodes and counter
//! nodes. Flow nodes all have degree `k`; counter degrees follow a Poisson
//! distribution with mean `gamma` in the large-system limit, so the
//! edge-perspective counter degree distribution has the closed form
//! `rho(z) = exp(-gamma * (1 - z))`.
//!
//! This module holds the ensemble parameters and the scalar transfer
//! functions of the decoding recursion:
//!
//! - `f(y; eps) = eps * y^(k-1)` — flow-node update,
//! - `g(x) = 1 - rho(1 - (1 - rho(1 - x))^(k-1))` — combined counter update,
//! - `U(x; eps) = x g(x) - \int_0^x g - (eps/k) g(x)^k` — potential function
//!   whose minimizer structure defines the potential threshold.
//!
//! All functions are pure and safe to call concurrently.

use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;

/// Default absolute tolerance for the adaptive quadrature behind
/// [`g_antiderivative`] and [`potential_eval`].
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

/// Probabilities may drift outside [0,1] by roundoff; anything within this
/// slack is clamped, anything further out is an internal-consistency error.
const CLAMP_HARD_SLACK: f64 = 1e-9;

/// Clamp a probability-valued result to [0,1], rejecting values that are
/// outside by more than roundoff could explain.
pub(crate) fn clamp_unit(value: f64, what: &str) -> Result<f64> {
    if !value.is_finite() || value < -CLAMP_HARD_SLACK || value > 1.0 + CLAMP_HARD_SLACK {
        return Err(Error::InternalConsistency(format!(
            "{what} produced {value}, outside [0,1] beyond roundoff slack"
        )));
    }
    Ok(value.clamp(0.0, 1.0))
}

fn check_unit_interval(value: f64, name: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&value) || value.is_nan() {
        return Err(Error::Domain(format!("{name} must lie in [0,1], got {value}")));
    }
    Ok(())
}

/// Parameters of a single-layer ensemble.
///
/// Stores the left degree `k` and the mean counter degree `gamma`; the
/// counters-per-flow ratio `beta = k / gamma` is derived, never stored, so the
/// identity holds exactly. `eps` is the probability that a flow strictly
/// exceeds the minimum flow size `f_min`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleParams {
    k: u32,
    gamma: f64,
    eps: f64,
    f_min: u64,
}

impl EnsembleParams {
    pub fn new(k: u32, gamma: f64, eps: f64, f_min: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!("left degree k must be >= 2, got {k}")));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
        }
        check_unit_interval(eps, "eps")?;
        Ok(Self { k, gamma, eps, f_min })
    }

    /// Construct from the counters-per-flow ratio `beta`; `gamma = k / beta`.
    pub fn from_beta(k: u32, beta: f64, eps: f64, f_min: u64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
        }
        Self::new(k, k as f64 / beta, eps, f_min)
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Counters per flow, `beta = k / gamma`.
    pub fn beta(&self) -> f64 {
        self.k as f64 / self.gamma
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn f_min(&self) -> u64 {
        self.f_min
    }

    /// Same ensemble with a different flow-activity probability.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.k, self.gamma, eps, self.f_min)
    }
}

/// Edge-perspective counter degree distribution `rho(z) = exp(-gamma (1 - z))`.
///
/// Equals the Poisson series `sum_i e^{-gamma} (gamma z)^i / i!` exactly.
pub fn rho_eval(gamma: f64, z: f64) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
    }
    check_unit_interval(z, "z")?;
    Ok((-gamma * (1.0 - z)).exp())
}

/// Flow-node transfer function `f(y; eps) = eps * y^(k-1)`.
pub fn f_eval(y: f64, params: &EnsembleParams) -> Result<f64> {
    check_unit_interval(y, "y")?;
    clamp_unit(f_raw(params.k, params.eps, y), "f(y; eps)")
}

/// Combined counter transfer function
/// `g(x) = 1 - exp(-gamma (1 - exp(-gamma x))^(k-1))`.
pub fn g_eval(x: f64, params: &EnsembleParams) -> Result<f64> {
    check_unit_interval(x, "x")?;
    clamp_unit(g_raw(params.k, params.gamma, x), "g(x)")
}

/// Derivative `g'(x) = gamma^2 (k-1) t^(k-2) e^(-gamma x) (1 - g(x))`
/// with `t = 1 - exp(-gamma x)`.
pub fn g_derivative(x: f64, params: &EnsembleParams) -> Result<f64> {
    check_unit_interval(x, "x")?;
    Ok(g_derivative_raw(params.k, params.gamma, x))
}

/// `\int_0^x g(z) dz` by adaptive quadrature with absolute error <= `tol`.
///
/// The integral has no closed form; `g` is smooth and bounded on [0,1] so the
/// quadrature converges quickly.
pub fn g_antiderivative(x: f64, params: &EnsembleParams, tol: f64) -> Result<f64> {
    check_unit_interval(x, "x")?;
    let (k, gamma) = (params.k, params.gamma);
    adaptive_simpson(&|z| g_raw(k, gamma, z), 0.0, x, tol)
}

/// Potential function `U(x; eps) = x g(x) - \int_0^x g - (eps/k) g(x)^k`.
///
/// `U(0; eps) = 0` exactly; `U'(x) = g'(x) (x - f(g(x); eps))`, so stationary
/// points of `U` are exactly the fixed points of the decoding recursion.
pub fn potential_eval(x: f64, params: &EnsembleParams) -> Result<f64> {
    check_unit_interval(x, "x")?;
    if x == 0.0 {
        return Ok(0.0);
    }
    let g = g_raw(params.k, params.gamma, x);
    let integral = g_antiderivative(x, params, DEFAULT_QUAD_TOL)?;
    Ok(x * g - integral - params.eps / params.k as f64 * g.powi(params.k as i32))
}

// Unchecked fast paths for the density-evolution inner loops. Callers are
// responsible for keeping arguments in [0,1].

#[inline]
pub(crate) fn f_raw(k: u32, eps: f64, y: f64) -> f64 {
    eps * y.powi(k as i32 - 1)
}

#[inline]
pub(crate) fn g_raw(k: u32, gamma: f64, x: f64) -> f64 {
    let t = -(-gamma * x).exp_m1();
    -(-gamma * t.powi(k as i32 - 1)).exp_m1()
}

#[inline]
pub(crate) fn g_derivative_raw(k: u32, gamma: f64, x: f64) -> f64 {
    let t = -(-gamma * x).exp_m1();
    let one_minus_g = (-gamma * t.powi(k as i32 - 1)).exp();
    gamma * gamma * (k as f64 - 1.0) * t.powi(k as i32 - 2) * (-gamma * x).exp() * one_minus_g
}

/// `ln g(x)`, stable for arguments where `g` underflows ordinary evaluation.
pub(crate) fn ln_g_raw(k: u32, gamma: f64, x: f64) -> f64 {
    let t = -(-gamma * x).exp_m1();
    let a = gamma * t.powi(k as i32 - 1);
    let g = -(-a).exp_m1();
    if g > 1e-300 {
        g.ln()
    } else {
        // g = a - a^2/2 + ... ; for a this small ln g = ln a to double precision.
        a.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(k: u32, gamma: f64, eps: f64) -> EnsembleParams {
        EnsembleParams::new(k, gamma, eps, 1).unwrap()
    }

    /// Truncated Poisson series for rho; the independent oracle for the
    /// closed exponential form.
    fn rho_series(gamma: f64, z: f64, terms: usize) -> f64 {
        let mut sum = 0.0;
        let mut term = (-gamma).exp(); // i = 0
        for i in 0..terms {
            sum += term;
            term *= gamma * z / (i as f64 + 1.0);
        }
        sum
    }

    #[test]
    fn rho_at_one_is_one() {
        assert_eq!(rho_eval(3.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn rho_at_zero_is_exp_neg_gamma() {
        let v = rho_eval(3.0, 0.0).unwrap();
        assert!((v - (-3.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.049_787_07).abs() < 1e-8);
    }

    #[test]
    fn rho_matches_poisson_series() {
        let v = rho_eval(2.5, 0.4).unwrap();
        assert!((v - rho_series(2.5, 0.4, 60)).abs() < 1e-12);
    }

    #[test]
    fn rho_rejects_out_of_domain() {
        assert!(rho_eval(0.0, 0.5).is_err());
        assert!(rho_eval(-1.0, 0.5).is_err());
        assert!(rho_eval(3.0, -0.1).is_err());
        assert!(rho_eval(3.0, 1.1).is_err());
    }

    #[test]
    fn f_trivial_values() {
        let p = params(3, 4.0, 0.6);
        assert!((f_eval(1.0, &p).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(f_eval(0.0, &p).unwrap(), 0.0);
        let p = params(3, 4.0, 0.8);
        assert!((f_eval(0.5, &p).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn g_trivial_and_composed_values() {
        let p = params(3, 3.0, 0.5);
        assert_eq!(g_eval(0.0, &p).unwrap(), 0.0);
        // Compose the closed forms independently at x = 1.
        let inner = 1.0 - rho_eval(3.0, 1.0 - 1.0).unwrap();
        let expected = 1.0 - rho_eval(3.0, 1.0 - inner.powi(2)).unwrap();
        assert!((g_eval(1.0, &p).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn g_strictly_increasing_spot_check() {
        let p = params(3, 4.0, 0.5);
        assert!(g_eval(0.3, &p).unwrap() < g_eval(0.6, &p).unwrap());
    }

    #[test]
    fn antiderivative_at_zero_and_monotone_bound() {
        let p = params(3, 3.0, 1.0);
        assert_eq!(g_antiderivative(0.0, &p, 1e-10).unwrap(), 0.0);
        for &x in &[0.1, 0.4, 0.7, 1.0] {
            let integral = g_antiderivative(x, &p, 1e-10).unwrap();
            assert!(integral <= x * g_eval(x, &p).unwrap() + 1e-12);
        }
    }

    #[test]
    fn antiderivative_matches_dense_trapezoid() {
        let p = params(3, 3.0, 1.0);
        let n = 1_000_000usize;
        let h = 1.0 / n as f64;
        let mut acc = 0.5 * (g_raw(3, 3.0, 0.0) + g_raw(3, 3.0, 1.0));
        for i in 1..n {
            acc += g_raw(3, 3.0, i as f64 * h);
        }
        let oracle = acc * h;
        let v = g_antiderivative(1.0, &p, 1e-10).unwrap();
        assert!((v - oracle).abs() < 1e-8, "quadrature {v} vs trapezoid {oracle}");
    }

    #[test]
    fn potential_zero_at_origin() {
        let p = params(3, 4.0, 0.7);
        assert_eq!(potential_eval(0.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn potential_derivative_identity_spot() {
        // dU/dx = g'(x) (x - f(g(x); eps)) against a central finite difference.
        let p = params(3, 4.0, 0.5);
        let x = 0.5;
        let step = 1e-5;
        let fd = (potential_eval(x + step, &p).unwrap() - potential_eval(x - step, &p).unwrap())
            / (2.0 * step);
        let g = g_eval(x, &p).unwrap();
        let analytic = g_derivative(x, &p).unwrap() * (x - f_eval(g, &p).unwrap());
        assert!((fd - analytic).abs() < 1e-6, "fd {fd} vs analytic {analytic}");
    }

    #[test]
    fn potential_finite_at_right_endpoint() {
        let p = params(3, 4.0, 1.0);
        let v = potential_eval(1.0, &p).unwrap();
        assert!(v.is_finite());
        let g = g_eval(1.0, &p).unwrap();
        let integral = g_antiderivative(1.0, &p, DEFAULT_QUAD_TOL).unwrap();
        assert!((v - (g - integral - g.powi(3) / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn potential_derivative_identity_on_grid() {
        let p = params(3, 4.0, 0.5);
        let step = 1e-5;
        for i in 1..50 {
            let x = i as f64 / 51.0;
            let fd = (potential_eval(x + step, &p).unwrap()
                - potential_eval(x - step, &p).unwrap())
                / (2.0 * step);
            let g = g_eval(x, &p).unwrap();
            let analytic = g_derivative(x, &p).unwrap() * (x - f_eval(g, &p).unwrap());
            assert!((fd - analytic).abs() < 1e-5, "x={x}: fd {fd} vs analytic {analytic}");
        }
    }

    #[test]
    fn transfer_functions_have_no_jumps() {
        // Continuity scan for g and g' at resolution 1e-4.
        let p = params(3, 4.0, 0.5);
        let h = 1e-4;
        let mut prev_g = g_eval(0.0, &p).unwrap();
        let mut prev_dg = g_derivative(0.0, &p).unwrap();
        let mut i = 1;
        while i as f64 * h <= 1.0 {
            let x = i as f64 * h;
            let g = g_eval(x, &p).unwrap();
            let dg = g_derivative(x, &p).unwrap();
            assert!((g - prev_g).abs() < 0.01, "jump in g near {x}");
            assert!((dg - prev_dg).abs() < 0.05, "jump in g' near {x}");
            prev_g = g;
            prev_dg = dg;
            i += 1;
        }
    }

    #[test]
    fn beta_is_derived_exactly() {
        let p = EnsembleParams::from_beta(3, 0.5, 0.2, 1).unwrap();
        assert_eq!(p.gamma(), 6.0);
        assert_eq!(p.beta(), 0.5);
    }

    #[test]
    fn params_validation() {
        assert!(EnsembleParams::new(1, 3.0, 0.5, 1).is_err());
        assert!(EnsembleParams::new(3, 0.0, 0.5, 1).is_err());
        assert!(EnsembleParams::new(3, 3.0, 1.5, 1).is_err());
        assert!(EnsembleParams::from_beta(3, 0.0, 0.5, 1).is_err());
    }

    #[test]
    fn clamp_unit_behavior() {
        assert_eq!(clamp_unit(1.0 + 1e-15, "x").unwrap(), 1.0);
        assert_eq!(clamp_unit(-1e-12, "x").unwrap(), 0.0);
        assert!(clamp_unit(1.0 + 1e-6, "x").is_err());
        assert!(clamp_unit(f64::NAN, "x").is_err());
    }

    proptest! {
        #[test]
        fn rho_closed_form_equals_series(gamma in 0.1f64..8.0, z in 0.0f64..=1.0) {
            let closed = rho_eval(gamma, z).unwrap();
            prop_assert!((closed - rho_series(gamma, z, 60)).abs() < 1e-12);
        }

        #[test]
        fn f_and_g_monotone(k in 2u32..6, gamma in 0.2f64..8.0, eps in 0.01f64..=1.0,
                            a in 0.0f64..1.0, d in 1e-6f64..0.5) {
            let p = EnsembleParams::new(k, gamma, eps, 1).unwrap();
            let b = (a + d).min(1.0);
            prop_assert!(f_eval(a, &p).unwrap() < f_eval(b, &p).unwrap() + 1e-18);
            prop_assert!(g_eval(a, &p).unwrap() < g_eval(b, &p).unwrap());
        }

        #[test]
        fn f_nondecreasing_in_eps(k in 2u32..6, gamma in 0.2f64..8.0,
                                  y in 0.0f64..=1.0, e1 in 0.0f64..=1.0, e2 in 0.0f64..=1.0) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let p_lo = EnsembleParams::new(k, gamma, lo, 1).unwrap();
            let p_hi = EnsembleParams::new(k, gamma, hi, 1).unwrap();
            prop_assert!(f_eval(y, &p_lo).unwrap() <= f_eval(y, &p_hi).unwrap());
        }
    }
}
