//! Scalar density evolution for the uncoupled ensemble.
//!
//! Tracks the message error probability `x` of the combined recursion
//! `x <- f(g(x); eps)`. By monotonicity of `f` and `g` the iteration from
//! `x0 = 1` decreases monotonically to the largest fixed point; decoding
//! succeeds when that fixed point is zero. On top of the recursion this
//! module computes:
//!
//! - the BP thresholds in `eps` (fixed ratio `beta`) and in `beta` (fixed
//!   `eps`), by bisection over the success region;
//! - the extended-BP EXIT curve `(eps(x), h(x)) = (x / g(x)^(k-1), g(x)^k)`,
//!   the trace of all fixed points;
//! - the area threshold: the point `x*` where the cumulative curve integral
//!   `\int_0^{x*} h d(eps)` returns to zero, subject to the no-revisit
//!   condition on `eps`;
//! - the potential threshold: the largest `eps` for which the potential
//!   `U(x; eps)` has its global minimum only at `x = 0` (equal to the area
//!   threshold; the acceptance suite cross-checks the two routes);
//! - the EXIT curve of the expected residual graph left behind by a stalled
//!   peeling decoder, whose signed area vanishes exactly at the area
//!   threshold.

use serde::{Deserialize, Serialize};

use crate::ensemble::{
    self, f_raw, g_derivative_raw, g_raw, ln_g_raw, EnsembleParams,
};
use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;

/// DE success means the iterate dropped below this.
pub const DE_ZERO_TOL: f64 = 1e-10;
/// Default stall tolerance of the scalar recursion.
pub const DE_STALL_TOL: f64 = 1e-12;
/// Default iteration cap; near-threshold slowdown is quadratic, so sweeps
/// that probe very close to a threshold may need more.
pub const DE_MAX_ITER: usize = 100_000;
/// Sample count of the internally generated EXIT-curve grids.
pub const CURVE_SAMPLES: usize = 4000;

/// Knobs of the scalar fixed-point iteration.
#[derive(Debug, Clone, Copy)]
pub struct DeOptions {
    pub max_iter: usize,
    /// Stop when the per-iteration decrease falls below this.
    pub tol: f64,
    /// Iterates below this count as "decoded".
    pub zero_tol: f64,
    pub record_trajectory: bool,
}

impl Default for DeOptions {
    fn default() -> Self {
        Self {
            max_iter: DE_MAX_ITER,
            tol: DE_STALL_TOL,
            zero_tol: DE_ZERO_TOL,
            record_trajectory: false,
        }
    }
}

/// Outcome of the scalar recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    /// Final iterate; the largest fixed point when started from `x0 = 1`.
    pub x: f64,
    pub iterations: usize,
    /// True when the iteration stalled below tolerance or hit zero, rather
    /// than running out of iterations.
    pub converged: bool,
    pub trajectory: Option<Vec<f64>>,
}

/// Iterate `x <- f(g(x); eps)` from `x0` until the step size drops below
/// `opts.tol`, the iterate drops below `opts.zero_tol`, or `opts.max_iter`.
pub fn de_fixed_point(
    params: &EnsembleParams,
    x0: f64,
    opts: &DeOptions,
) -> Result<FixedPointResult> {
    if !(0.0..=1.0).contains(&x0) {
        return Err(Error::Domain(format!("x0 must lie in [0,1], got {x0}")));
    }
    let (k, gamma, eps) = (params.k(), params.gamma(), params.eps());
    let mut x = x0;
    let mut trajectory = opts.record_trajectory.then(|| vec![x0]);
    for iteration in 1..=opts.max_iter {
        let next = ensemble::clamp_unit(f_raw(k, eps, g_raw(k, gamma, x)), "DE iterate")?;
        let delta = (next - x).abs();
        x = next;
        if let Some(t) = trajectory.as_mut() {
            t.push(x);
        }
        if x < opts.zero_tol || delta < opts.tol {
            return Ok(FixedPointResult { x, iterations: iteration, converged: true, trajectory });
        }
    }
    Ok(FixedPointResult { x, iterations: opts.max_iter, converged: false, trajectory })
}

/// Trajectory of the two-step (per-parity) recursion: odd steps apply
/// `y^(k-1)`, even steps `eps * y^(k-1)`, with `y = 1 - rho(1 - x)`.
///
/// Two steps equal one combined iteration; kept as the parity-faithful form
/// for cross-checks against the combined recursion and the modified coupled
/// recursion.
pub fn de_two_step_trajectory(
    params: &EnsembleParams,
    x0: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&x0) {
        return Err(Error::Domain(format!("x0 must lie in [0,1], got {x0}")));
    }
    let (k, gamma, eps) = (params.k(), params.gamma(), params.eps());
    let mut xs = Vec::with_capacity(steps + 1);
    xs.push(x0);
    let mut x = x0;
    for step in 1..=steps {
        let y = -(-gamma * x).exp_m1();
        x = if step % 2 == 1 { y.powi(k as i32 - 1) } else { eps * y.powi(k as i32 - 1) };
        xs.push(x);
    }
    Ok(xs)
}

fn de_succeeds(params: &EnsembleParams, opts: &DeOptions) -> Result<bool> {
    let result = de_fixed_point(params, 1.0, opts)?;
    Ok(result.x < opts.zero_tol)
}

/// BP threshold in `eps` for fixed `(k, gamma)`: the supremum of `eps` for
/// which density evolution from `x0 = 1` reaches zero. Bisection on [0,1] to
/// a bracket of width `tol_eps`.
pub fn bp_threshold_eps(k: u32, gamma: f64, tol_eps: f64) -> Result<f64> {
    if !(tol_eps > 0.0) {
        return Err(Error::Domain(format!("tol_eps must be positive, got {tol_eps}")));
    }
    let opts = DeOptions::default();
    let probe = |eps: f64| -> Result<bool> {
        de_succeeds(&EnsembleParams::new(k, gamma, eps, 0)?, &opts)
    };
    if probe(1.0)? {
        return Ok(1.0);
    }
    let mut lo = 0.0; // eps = 0 always decodes
    let mut hi = 1.0;
    while hi - lo > tol_eps {
        let mid = 0.5 * (lo + hi);
        if probe(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// BP threshold in `beta` for fixed `(k, eps)`: the infimum of
/// `beta = k / gamma` for which density evolution succeeds. The bracket is
/// sought in `(0, 4]`; ensembles needing more counters per flow than that are
/// reported as a range error.
pub fn bp_threshold_beta(k: u32, eps: f64, tol_beta: f64) -> Result<f64> {
    if !(tol_beta > 0.0) {
        return Err(Error::Domain(format!("tol_beta must be positive, got {tol_beta}")));
    }
    let opts = DeOptions::default();
    let probe = |beta: f64| -> Result<bool> {
        de_succeeds(&EnsembleParams::from_beta(k, beta, eps, 0)?, &opts)
    };
    let hi_limit = 4.0;
    if !probe(hi_limit)? {
        return Err(Error::Range(format!(
            "no successful beta found in (0, {hi_limit}] for k={k}, eps={eps}"
        )));
    }
    let mut lo = 1e-9; // effectively beta -> 0+, which always fails for eps > 0
    let mut hi = hi_limit;
    if eps == 0.0 || probe(lo)? {
        return Ok(lo);
    }
    while hi - lo > tol_beta {
        let mid = 0.5 * (lo + hi);
        if probe(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One point of an EXIT curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitSample {
    /// Curve parameter: `x` for the extended-BP curve, `z` for the residual one.
    pub param: f64,
    pub eps: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveKind {
    Ebp,
    Residual,
}

/// A sampled EXIT curve with its signed area `\int h d(eps)`.
///
/// `eps` values of the extended-BP curve are unbounded as `x -> 0` for
/// `k >= 3` (the fixed-point equation demands `eps > 1` there), so samples
/// are stored unclamped; `h` always lies in [0,1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitCurve {
    pub kind: CurveKind,
    pub k: u32,
    pub gamma: f64,
    /// Channel parameter of a residual curve; `None` for the extended-BP curve.
    pub channel_eps: Option<f64>,
    pub samples: Vec<ExitSample>,
    /// Signed area `\int h d(eps)` over the sampled range (trapezoid).
    pub area: f64,
    /// Leftmost extent of the curve in `eps`; for the extended-BP curve this
    /// marks the BP threshold.
    pub eps_min: f64,
}

impl ExitCurve {
    /// CSV with a comment header carrying the ensemble and the area:
    /// `param,eps,h` rows, floats printed in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let kind = match self.kind {
            CurveKind::Ebp => "ebp",
            CurveKind::Residual => "residual",
        };
        out.push_str(&format!("# kind={kind} k={} gamma={}", self.k, self.gamma));
        if let Some(eps) = self.channel_eps {
            out.push_str(&format!(" eps={eps}"));
        }
        out.push_str(&format!(" area={}\n", self.area));
        out.push_str("param,eps,h\n");
        for s in &self.samples {
            out.push_str(&format!("{},{},{}\n", s.param, s.eps, s.h));
        }
        out
    }

    /// Parse the format written by [`ExitCurve::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header =
            lines.next().ok_or_else(|| Error::Parse("empty curve file".into()))?.trim();
        if !header.starts_with('#') {
            return Err(Error::Parse("curve CSV must start with a comment header".into()));
        }
        let mut kind = None;
        let mut k = None;
        let mut gamma = None;
        let mut channel_eps = None;
        let mut area = None;
        for field in header.trim_start_matches('#').split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header field {field:?}")))?;
            match key {
                "kind" => {
                    kind = Some(match value {
                        "ebp" => CurveKind::Ebp,
                        "residual" => CurveKind::Residual,
                        other => return Err(Error::Parse(format!("unknown curve kind {other:?}"))),
                    })
                }
                "k" => k = value.parse().ok(),
                "gamma" => gamma = value.parse().ok(),
                "eps" => channel_eps = value.parse().ok(),
                "area" => area = value.parse().ok(),
                // Producers may stamp a run manifest into the header.
                "manifest" => {}
                _ => return Err(Error::Parse(format!("unknown header key {key:?}"))),
            }
        }
        let column_line = lines.next().unwrap_or("");
        if column_line.trim() != "param,eps,h" {
            return Err(Error::Parse(format!("bad column header {column_line:?}")));
        }
        let mut samples = Vec::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let mut next = |what: &str| -> Result<f64> {
                cols.next()
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Parse(format!("bad {what} in row {line:?}")))
            };
            samples.push(ExitSample { param: next("param")?, eps: next("eps")?, h: next("h")? });
        }
        let eps_min = samples.iter().map(|s| s.eps).fold(f64::INFINITY, f64::min);
        Ok(Self {
            kind: kind.ok_or_else(|| Error::Parse("header missing kind".into()))?,
            k: k.ok_or_else(|| Error::Parse("header missing k".into()))?,
            gamma: gamma.ok_or_else(|| Error::Parse("header missing gamma".into()))?,
            channel_eps,
            samples,
            area: area.ok_or_else(|| Error::Parse("header missing area".into()))?,
            eps_min: if eps_min.is_finite() { eps_min } else { 0.0 },
        })
    }
}

/// Cosine-spaced grid on (0, 1]: clusters samples at both endpoints, which
/// stabilizes the curve integrals where `eps(x)` varies fastest.
pub fn cosine_grid(samples: usize) -> Vec<f64> {
    let n = samples.max(2);
    (1..=n).map(|i| 0.5 * (1.0 - (std::f64::consts::PI * i as f64 / n as f64).cos())).collect()
}

/// `eps(x) = x / g(x)^(k-1)` evaluated through logarithms so the small-`x`
/// blowup stays accurate.
fn ebp_eps(k: u32, gamma: f64, x: f64) -> f64 {
    (x.ln() - (k as f64 - 1.0) * ln_g_raw(k, gamma, x)).exp()
}

fn trapezoid_area(samples: &[ExitSample]) -> f64 {
    samples
        .windows(2)
        .map(|w| 0.5 * (w[0].h + w[1].h) * (w[1].eps - w[0].eps))
        .sum()
}

/// Sample the extended-BP EXIT curve on `grid` (strictly positive `x`).
///
/// Every sample satisfies the fixed-point identity
/// `x = f(g(x); eps(x))`, and `h = (x / eps)^(k/(k-1))` by construction.
pub fn ebp_exit_curve(k: u32, gamma: f64, grid: &[f64]) -> Result<ExitCurve> {
    if k < 2 || !(gamma > 0.0) {
        return Err(Error::Domain(format!("need k >= 2 and gamma > 0, got k={k}, gamma={gamma}")));
    }
    if grid.is_empty() || grid.iter().any(|&x| !(0.0 < x && x <= 1.0)) {
        return Err(Error::Domain("grid must be nonempty and within (0,1]".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("grid must be strictly increasing".into()));
    }
    let samples: Vec<ExitSample> = grid
        .iter()
        .map(|&x| {
            let g = g_raw(k, gamma, x);
            ExitSample { param: x, eps: ebp_eps(k, gamma, x), h: g.powi(k as i32) }
        })
        .collect();
    let area = trapezoid_area(&samples);
    let eps_min = samples.iter().map(|s| s.eps).fold(f64::INFINITY, f64::min);
    Ok(ExitCurve { kind: CurveKind::Ebp, k, gamma, channel_eps: None, samples, area, eps_min })
}

/// `d(eps)/dx` of the extended-BP curve, for refining the area balance point.
fn ebp_eps_derivative(k: u32, gamma: f64, x: f64) -> f64 {
    let g = g_raw(k, gamma, x);
    let dg = g_derivative_raw(k, gamma, x);
    let km1 = k as f64 - 1.0;
    g.powf(-km1) * (1.0 - km1 * x * dg / g)
}

/// Area threshold: `eps(x*)` at the largest root `x*` of the cumulative
/// integral `C(x) = \int_0^x h d(eps)`, with the no-revisit condition that no
/// `x' > x*` maps back onto `eps(x*)`.
///
/// `C` is accumulated by trapezoid over a cosine grid of [`CURVE_SAMPLES`]
/// points and the bracketing root is polished by bisection with adaptive
/// quadrature of `h(x) eps'(x)` until the `eps` bracket is within `tol`. If
/// the curve never dips (no decreasing branch in `eps`), the curve-consistent
/// value is the leftmost extent `eps(0+)`, approximated at the first grid
/// point.
pub fn area_threshold(k: u32, gamma: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tol must be positive, got {tol}")));
    }
    let curve = ebp_exit_curve(k, gamma, &cosine_grid(CURVE_SAMPLES))?;
    let s = &curve.samples;
    let mut cumulative = Vec::with_capacity(s.len());
    let mut acc = 0.0;
    cumulative.push(0.0);
    for w in s.windows(2) {
        acc += 0.5 * (w[0].h + w[1].h) * (w[1].eps - w[0].eps);
        cumulative.push(acc);
    }
    // Largest sign change from non-positive to positive, scanned from the top.
    let mut bracket = None;
    for i in (0..s.len() - 1).rev() {
        if cumulative[i] <= 0.0 && cumulative[i + 1] > 0.0 {
            bracket = Some(i);
            break;
        }
    }
    let Some(i) = bracket else {
        if cumulative.iter().all(|&c| c >= 0.0) {
            // Monotone curve: balance point degenerates to the left end.
            return Ok(s[0].eps);
        }
        return Err(Error::Range(format!(
            "area balance point not bracketed for k={k}, gamma={gamma}: \
             cumulative integral ends at {acc:.3e}"
        )));
    };

    let integrand = |x: f64| g_raw(k, gamma, x).powi(k as i32) * ebp_eps_derivative(k, gamma, x);
    let mut lo = s[i].param;
    let mut hi = s[i + 1].param;
    let mut c_lo = cumulative[i];
    let mut steps = 0;
    while (ebp_eps(k, gamma, hi) - ebp_eps(k, gamma, lo)).abs() > tol {
        steps += 1;
        if steps > 200 {
            return Err(Error::Numerical(format!(
                "area balance refinement stalled near x = {lo} at tolerance {tol:.3e}"
            )));
        }
        let mid = 0.5 * (lo + hi);
        let c_mid = c_lo + adaptive_simpson(&integrand, lo, mid, 1e-14)?;
        if c_mid <= 0.0 {
            lo = mid;
            c_lo = c_mid;
        } else {
            hi = mid;
        }
    }
    let x_star = 0.5 * (lo + hi);
    let eps_star = ebp_eps(k, gamma, x_star);
    // No-revisit scan on the sample grid.
    for sample in s.iter().filter(|p| p.param > hi) {
        if sample.eps <= eps_star + 1e-9 {
            return Err(Error::Range(format!(
                "eps({}) = {} revisits eps(x*) = {eps_star} right of the balance point",
                sample.param, sample.eps
            )));
        }
    }
    Ok(eps_star)
}

/// Grid resolution of the potential minimization.
const POTENTIAL_GRID: usize = 2000;

/// Potential threshold: the supremum of `eps` such that the global minimum of
/// `U(x; eps)` over [0,1] is attained only at `x = 0`.
///
/// For each candidate `eps` the minimum over `x > 0` is located on a
/// 2000-point grid and polished by golden-section search; the sign of that
/// minimum classifies the phase and `eps` is bisected to `tol`.
pub fn potential_threshold(k: u32, gamma: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tol must be positive, got {tol}")));
    }
    let n = POTENTIAL_GRID;
    let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let gs: Vec<f64> = xs.iter().map(|&x| g_raw(k, gamma, x)).collect();
    // Cumulative \int_0^x g by per-interval Simpson; g is smooth so the
    // composite rule is far below the tolerances in play.
    let mut big_g = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    big_g.push(0.0);
    for i in 0..n {
        let h = xs[i + 1] - xs[i];
        let mid = g_raw(k, gamma, xs[i] + 0.5 * h);
        acc += h / 6.0 * (gs[i] + 4.0 * mid + gs[i + 1]);
        big_g.push(acc);
    }

    let u_at = |x: f64, eps: f64| -> Result<f64> {
        let j = ((x * n as f64) as usize).min(n - 1);
        let integral = big_g[j] + adaptive_simpson(&|z| g_raw(k, gamma, z), xs[j], x, 1e-14)?;
        let g = g_raw(k, gamma, x);
        Ok(x * g - integral - eps / k as f64 * g.powi(k as i32))
    };

    // Positive minimum over x > 0 means the only global minimizer is x = 0.
    let zero_only_minimum = |eps: f64| -> Result<bool> {
        let mut best = f64::INFINITY;
        let mut best_i = 1;
        for i in 1..=n {
            let u = xs[i] * gs[i] - big_g[i] - eps / k as f64 * gs[i].powi(k as i32);
            if u < best {
                best = u;
                best_i = i;
            }
        }
        // Golden-section polish around the best grid point.
        let mut a = xs[best_i - 1];
        let mut b = xs[(best_i + 1).min(n)];
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        let mut fc = u_at(c, eps)?;
        let mut fd = u_at(d, eps)?;
        for _ in 0..60 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = u_at(c, eps)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = u_at(d, eps)?;
            }
            if b - a < 1e-12 {
                break;
            }
        }
        let refined = best.min(fc).min(fd);
        // Supercritical means a strictly negative interior dip; a minimum
        // that merely approaches zero as x -> 0 still leaves x = 0 as the
        // only global minimizer.
        Ok(refined >= -1e-10)
    };

    if zero_only_minimum(1.0)? {
        return Ok(1.0);
    }
    let mut lo = 0.0; // U(x; 0) = x g(x) - \int g > 0 for x > 0
    let mut hi = 1.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if zero_only_minimum(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// EXIT curve of the expected residual graph after the peeling decoder
/// stalls at channel parameter `eps`.
///
/// With `x` the largest fixed point of the recursion at `eps` and
/// `u(z) = g(x z) / g(x)`, the curve is
/// `(eps~, h~) = (z u(z)^{1-k}, u(z)^k)` over the `z` grid. When `eps` admits
/// no positive fixed point the decoder clears the graph and the curve is
/// empty with area zero.
pub fn residual_exit_curve(k: u32, gamma: f64, eps: f64, grid: &[f64]) -> Result<ExitCurve> {
    if grid.is_empty() || grid.iter().any(|&z| !(0.0 < z && z <= 1.0)) {
        return Err(Error::Domain("grid must be nonempty and within (0,1]".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("grid must be strictly increasing".into()));
    }
    let params = EnsembleParams::new(k, gamma, eps, 0)?;
    let opts = DeOptions { max_iter: 200_000, tol: 1e-14, ..DeOptions::default() };
    let fp = de_fixed_point(&params, 1.0, &opts)?;
    if fp.x < opts.zero_tol {
        return Ok(ExitCurve {
            kind: CurveKind::Residual,
            k,
            gamma,
            channel_eps: Some(eps),
            samples: Vec::new(),
            area: 0.0,
            eps_min: 0.0,
        });
    }
    let x = fp.x;
    let ln_gx = ln_g_raw(k, gamma, x);
    let km1 = k as f64 - 1.0;
    let samples: Vec<ExitSample> = grid
        .iter()
        .map(|&z| {
            let ln_u = ln_g_raw(k, gamma, x * z) - ln_gx;
            ExitSample {
                param: z,
                eps: (z.ln() - km1 * ln_u).exp(),
                h: (k as f64 * ln_u).exp(),
            }
        })
        .collect();
    let area = trapezoid_area(&samples);
    let eps_min = samples.iter().map(|s| s.eps).fold(f64::INFINITY, f64::min);
    Ok(ExitCurve {
        kind: CurveKind::Residual,
        k,
        gamma,
        channel_eps: Some(eps),
        samples,
        area,
        eps_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(k: u32, gamma: f64, eps: f64) -> EnsembleParams {
        EnsembleParams::new(k, gamma, eps, 0).unwrap()
    }

    #[test]
    fn de_zero_eps_collapses_immediately() {
        let result = de_fixed_point(&params(3, 4.0, 0.0), 1.0, &DeOptions::default()).unwrap();
        assert_eq!(result.iterations, 1);
        assert_eq!(result.x, 0.0);
        assert!(result.converged);
    }

    #[test]
    fn de_overloaded_stays_high() {
        let result = de_fixed_point(&params(3, 20.0, 1.0), 1.0, &DeOptions::default()).unwrap();
        assert!(result.x > 0.9, "x = {}", result.x);
    }

    #[test]
    fn de_matches_long_run_oracle() {
        // Fixed tolerance run against a brute-force long iteration.
        let p = params(3, 4.0, 0.3);
        let result = de_fixed_point(&p, 1.0, &DeOptions::default()).unwrap();
        let mut x = 1.0f64;
        for _ in 0..100_000 {
            x = 0.3 * g_raw(3, 4.0, x).powi(2);
        }
        assert!((result.x - x).abs() < 1e-10, "{} vs oracle {x}", result.x);
    }

    #[test]
    fn de_monotone_from_one_and_pinned_at_zero() {
        let p = params(3, 5.0, 0.7);
        let opts = DeOptions { record_trajectory: true, ..DeOptions::default() };
        let result = de_fixed_point(&p, 1.0, &opts).unwrap();
        let t = result.trajectory.unwrap();
        assert!(t.windows(2).all(|w| w[1] <= w[0]), "trajectory must be nonincreasing");
        let result = de_fixed_point(&p, 0.0, &opts).unwrap();
        assert_eq!(result.x, 0.0);
        assert_eq!(result.iterations, 1);
    }

    #[test]
    fn two_step_form_matches_combined_form() {
        let p = params(3, 4.0, 0.5);
        let two_step = de_two_step_trajectory(&p, 1.0, 40).unwrap();
        let opts = DeOptions { record_trajectory: true, tol: 0.0, max_iter: 20, ..DeOptions::default() };
        let combined = de_fixed_point(&p, 1.0, &opts).unwrap().trajectory.unwrap();
        for (i, &x) in combined.iter().enumerate().take(20) {
            assert!((two_step[2 * i] - x).abs() < 1e-15, "step {i}");
        }
    }

    #[test]
    fn threshold_near_one_for_tiny_gamma() {
        let t = bp_threshold_eps(3, 0.1, 1e-4).unwrap();
        assert!(t >= 0.99, "threshold {t}");
        assert!(t <= 1.0);
    }

    #[test]
    fn threshold_matches_grid_scan_oracle() {
        let t = bp_threshold_eps(3, 4.0, 1e-6).unwrap();
        // Dense scan: first failing eps on a 10^4-point grid.
        let opts = DeOptions::default();
        let mut transition = 1.0;
        for i in 0..=10_000 {
            let eps = i as f64 / 10_000.0;
            if !de_succeeds(&params(3, 4.0, eps), &opts).unwrap() {
                transition = eps;
                break;
            }
        }
        assert!((t - transition).abs() < 2e-4, "bisection {t} vs grid {transition}");
    }

    #[test]
    fn threshold_beta_round_trip() {
        let beta = bp_threshold_beta(3, 0.5, 1e-6).unwrap();
        assert!(beta > 0.0);
        let eps = bp_threshold_eps(3, 3.0 / beta, 1e-6).unwrap();
        assert!((eps - 0.5).abs() < 1e-4, "round trip gave {eps}");
    }

    #[test]
    fn threshold_beta_monotone_in_eps() {
        let b3 = bp_threshold_beta(3, 0.3, 1e-5).unwrap();
        let b6 = bp_threshold_beta(3, 0.6, 1e-5).unwrap();
        let b9 = bp_threshold_beta(3, 0.9, 1e-5).unwrap();
        assert!(b3 <= b6 + 1e-4 && b6 <= b9 + 1e-4, "{b3} {b6} {b9}");
    }

    #[test]
    fn ebp_curve_identities() {
        let grid = cosine_grid(500);
        let curve = ebp_exit_curve(3, 4.0, &grid).unwrap();
        // eps(1) has the closed form 1 / g(1)^(k-1).
        let last = curve.samples.last().unwrap();
        let g1 = g_raw(3, 4.0, 1.0);
        assert!((last.eps - 1.0 / g1.powi(2)).abs() < 1e-12);
        for s in &curve.samples {
            // h = (x / eps)^(k/(k-1)) identically.
            let expected_h = (s.param / s.eps).powf(3.0 / 2.0);
            assert!((s.h - expected_h).abs() < 1e-9 * (1.0 + expected_h), "x={}", s.param);
            // Plug back into the fixed-point equation.
            let p = EnsembleParams::new(3, 4.0, s.eps.min(1.0), 0).unwrap();
            if s.eps <= 1.0 {
                let x_back = f_raw(p.k(), s.eps, g_raw(3, 4.0, s.param));
                assert!((x_back - s.param).abs() < 1e-12, "fixed point at x={}", s.param);
            }
        }
    }

    #[test]
    fn ebp_curve_rejects_bad_grids() {
        assert!(ebp_exit_curve(3, 4.0, &[]).is_err());
        assert!(ebp_exit_curve(3, 4.0, &[0.0, 0.5]).is_err());
        assert!(ebp_exit_curve(3, 4.0, &[0.5, 0.4]).is_err());
    }

    #[test]
    fn area_threshold_sits_above_bp_threshold() {
        let bp = bp_threshold_eps(3, 4.0, 1e-6).unwrap();
        let area = area_threshold(3, 4.0, 1e-6).unwrap();
        assert!(area >= bp - 1e-5, "area {area} vs bp {bp}");
        assert!(area <= 1.0);
    }

    #[test]
    fn area_equals_potential_spot() {
        let area = area_threshold(3, 4.0, 1e-6).unwrap();
        let potential = potential_threshold(3, 4.0, 1e-6).unwrap();
        assert!((area - potential).abs() < 1e-4, "area {area} vs potential {potential}");
    }

    #[test]
    fn cumulative_area_matches_closed_identity() {
        // Integration by parts gives \int_0^x h d(eps) =
        // k \int_0^x g - (k-1) x g(x); an independent route to the same area.
        let k = 3;
        let gamma = 5.0;
        let grid = cosine_grid(CURVE_SAMPLES);
        let curve = ebp_exit_curve(k, gamma, &grid).unwrap();
        let p = EnsembleParams::new(k, gamma, 0.5, 0).unwrap();
        let trapezoid = curve.area;
        let gx = g_raw(k, gamma, 1.0);
        let closed = k as f64 * ensemble::g_antiderivative(1.0, &p, ensemble::DEFAULT_QUAD_TOL).unwrap()
            - (k as f64 - 1.0) * gx;
        assert!(
            (trapezoid - closed).abs() < 5e-6,
            "trapezoid {trapezoid} vs closed identity {closed}"
        );
    }

    #[test]
    fn potential_phase_classification_endpoints() {
        // eps = 0 is always below threshold, heavy overload at eps = 1 above.
        let t = potential_threshold(3, 6.0, 1e-5).unwrap();
        assert!(t > 0.0 && t < 1.0, "threshold {t}");
        let p1 = params(3, 6.0, 1.0);
        // Interior minimizer exists at eps = 1: U dips negative somewhere.
        let dip = (1..=100)
            .map(|i| ensemble::potential_eval(i as f64 / 100.0, &p1).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(dip < 0.0, "expected negative potential dip, got {dip}");
    }

    #[test]
    fn residual_curve_identities_and_empty_case() {
        let k = 3;
        let gamma = 6.0;
        let bp = bp_threshold_eps(k, gamma, 1e-6).unwrap();
        // Below the BP threshold the residual graph is empty.
        let empty = residual_exit_curve(k, gamma, bp - 0.05, &cosine_grid(100)).unwrap();
        assert!(empty.samples.is_empty());
        assert_eq!(empty.area, 0.0);
        // Above: z = 1 endpoint satisfies eps~(1) = 1 and h~(1) = 1.
        let curve = residual_exit_curve(k, gamma, bp + 0.1, &cosine_grid(400)).unwrap();
        let last = curve.samples.last().unwrap();
        assert!((last.eps - 1.0).abs() < 1e-12);
        assert!((last.h - 1.0).abs() < 1e-12);
        assert!(curve.area > 0.0, "area {} should be positive above threshold", curve.area);
    }

    #[test]
    fn largest_fixed_point_continuous_from_above() {
        // Approaching the BP threshold from above, the largest fixed point
        // shrinks monotonically without jumps between neighboring samples
        // (the discontinuity sits at the threshold itself and is not probed).
        let (k, gamma) = (3u32, 6.0);
        let bp = bp_threshold_eps(k, gamma, 1e-6).unwrap();
        let opts = DeOptions { tol: 1e-14, max_iter: 200_000, ..DeOptions::default() };
        let mut prev: Option<f64> = None;
        for i in 1..=10 {
            let eps = bp + 0.001 * i as f64;
            let x = de_fixed_point(&params(k, gamma, eps), 1.0, &opts).unwrap().x;
            assert!(x > 0.0, "fixed point must be positive above threshold");
            if let Some(p) = prev {
                assert!(x >= p, "x(eps) must be nondecreasing in eps");
                assert!(x - p < 0.05, "unexpected jump between adjacent samples");
            }
            prev = Some(x);
        }
    }

    #[test]
    fn curve_csv_round_trip() {
        let curve = ebp_exit_curve(3, 4.5, &cosine_grid(50)).unwrap();
        let parsed = ExitCurve::from_csv(&curve.to_csv()).unwrap();
        assert_eq!(curve, parsed);
        let residual = residual_exit_curve(3, 6.0, 0.4, &cosine_grid(50)).unwrap();
        let parsed = ExitCurve::from_csv(&residual.to_csv()).unwrap();
        assert_eq!(residual, parsed);
    }
}
