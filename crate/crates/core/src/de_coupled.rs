//! Density evolution for spatially coupled ensembles.
//!
//! A coupled ensemble chains `N` copies of the uncoupled one; every flow
//! group spreads its sockets uniformly over `w` consecutive counter
//! positions, so counter positions run to `M = N + w - 1`. The coupling
//! matrix `A` has entries `1/w` on its width-`w` band and its band structure
//! means each of the four nested averages in the position-wise recursion
//! touches at most `w` terms.
//!
//! Two recursions are provided:
//!
//! - [`coupled_de_step`] — the standard recursion obtained by coupling the
//!   graph itself. Its threshold improves on the uncoupled one but stops
//!   short of the area threshold: the flow update differs between odd and
//!   even iterations, so the averages appear in every stage.
//! - [`modified_coupled_de_step`] — the two-step recursion with the average
//!   applied only to the counter input on odd steps and the flow input on
//!   even steps. Its threshold saturates to the area threshold.
//!
//! Both collapse exactly (not just asymptotically) onto the uncoupled
//! recursions at `w = 1`. The [`reference`] module keeps literal
//! direct-summation transcriptions of both steps as oracles for the banded
//! implementations.

use crate::de_uncoupled::{area_threshold, bp_threshold_eps, potential_threshold};
use crate::ensemble::EnsembleParams;
use crate::error::{Error, Result};
use crate::exec::{map_ordered, Parallelism};
use crate::report::ThresholdReport;

/// Band description of the `N x M` coupling matrix; entries are `1/w` on the
/// band and zero elsewhere, so only the two lengths are stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CouplingMatrix {
    chain_length: usize,
    w: usize,
}

impl CouplingMatrix {
    pub fn new(chain_length: usize, w: usize) -> Result<Self> {
        if chain_length == 0 {
            return Err(Error::InvalidArgument("chain length must be positive".into()));
        }
        if w < 1 || w > chain_length + 1 {
            return Err(Error::InvalidArgument(format!(
                "smoothing parameter w={w} outside 1..={}",
                chain_length + 1
            )));
        }
        Ok(Self { chain_length, w })
    }

    pub fn chain_length(&self) -> usize {
        self.chain_length
    }

    pub fn w(&self) -> usize {
        self.w
    }

    /// Counter positions `M = N + w - 1`.
    pub fn total_positions(&self) -> usize {
        self.chain_length + self.w - 1
    }

    /// Matrix entry at 0-based `(p, q)`, `p < N`, `q < M`.
    pub fn entry(&self, p: usize, q: usize) -> f64 {
        if p < self.chain_length && q < self.total_positions() && q >= p && q - p < self.w {
            1.0 / self.w as f64
        } else {
            0.0
        }
    }
}

/// Position-wise state of the standard recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    /// Error probabilities per position, length `M`.
    pub x: Vec<f64>,
    pub iteration: usize,
}

impl CoupledState {
    /// Worst-case start: 1 on the `N` flow positions, 0 on the `w - 1`
    /// seeded boundary positions beyond them.
    pub fn new_worst_case(coupling: &CouplingMatrix) -> Self {
        let mut x = vec![1.0; coupling.total_positions()];
        for slot in x.iter_mut().skip(coupling.chain_length) {
            *slot = 0.0;
        }
        Self { x, iteration: 0 }
    }

    pub fn max(&self) -> f64 {
        self.x.iter().fold(0.0, |a: f64, &b| a.max(b))
    }
}

/// Forward average over the band: `out[p] = (1/w) sum_{q=p}^{p+w-1} v[q]`
/// for the `N` flow positions; every window lies fully inside `0..M`.
fn band_average_forward(coupling: &CouplingMatrix, v: &[f64], out: &mut Vec<f64>) {
    let w = coupling.w;
    out.clear();
    for p in 0..coupling.chain_length {
        let sum: f64 = v[p..p + w].iter().sum();
        out.push(sum / w as f64);
    }
}

/// Backward average over the band: `out[q] = (1/w) sum_p A_{p,q} v[p]` for
/// the `M` counter positions; windows are clipped at both boundaries but the
/// divisor stays `w`, which is exactly the seeding attenuation.
fn band_average_backward(coupling: &CouplingMatrix, v: &[f64], out: &mut Vec<f64>) {
    let w = coupling.w;
    let n = coupling.chain_length;
    out.clear();
    for q in 0..coupling.total_positions() {
        let lo = q.saturating_sub(w - 1);
        let hi = q.min(n - 1);
        let mut sum = 0.0;
        for item in v.iter().take(hi + 1).skip(lo) {
            sum += item;
        }
        out.push(sum / w as f64);
    }
}

/// One sweep of the standard coupled recursion.
///
/// Stage by stage (all averages banded): counter update of the flow-message
/// averages, flow power, counter update again, flow power with the channel
/// factor `eps`. Cost is `O(M w)` per sweep.
pub fn coupled_de_step(
    state: &CoupledState,
    params: &EnsembleParams,
    coupling: &CouplingMatrix,
) -> Result<CoupledState> {
    let m = coupling.total_positions();
    if state.x.len() != m {
        return Err(Error::InvalidArgument(format!(
            "state has {} positions, coupling expects {m}",
            state.x.len()
        )));
    }
    let (k, gamma, eps) = (params.k(), params.gamma(), params.eps());
    let km1 = k as i32 - 1;

    let u: Vec<f64> = state.x.iter().map(|&x| -(-gamma * x).exp_m1()).collect();
    let mut s = Vec::new();
    band_average_forward(coupling, &u, &mut s);
    let t: Vec<f64> = s.iter().map(|&s| s.powi(km1)).collect();
    let mut z = Vec::new();
    band_average_backward(coupling, &t, &mut z);
    let v: Vec<f64> = z.iter().map(|&z| -(-gamma * z).exp_m1()).collect();
    let mut r = Vec::new();
    band_average_forward(coupling, &v, &mut r);
    let e: Vec<f64> = r.iter().map(|&r| r.powi(km1)).collect();
    let mut x = Vec::new();
    band_average_backward(coupling, &e, &mut x);
    for slot in x.iter_mut() {
        *slot *= eps;
    }
    Ok(CoupledState { x, iteration: state.iteration + 1 })
}

/// State of the modified two-step recursion; `iteration` counts applied
/// steps, so the next step is odd when `iteration` is even.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub iteration: usize,
}

impl ModifiedState {
    pub fn new_worst_case(coupling: &CouplingMatrix) -> Self {
        let m = coupling.total_positions();
        let mut x = vec![1.0; m];
        for slot in x.iter_mut().skip(coupling.chain_length) {
            *slot = 0.0;
        }
        Self { x, y: vec![0.0; m], iteration: 0 }
    }

    pub fn max(&self) -> f64 {
        self.x.iter().fold(0.0, |a: f64, &b| a.max(b))
    }
}

/// One parity step of the modified recursion. Odd steps average the flow
/// messages entering a counter position from its left window; even steps
/// average the counter messages entering a flow position from its right
/// window and apply the channel factor. Two steps make one effective round.
pub fn modified_coupled_de_step(
    state: &ModifiedState,
    params: &EnsembleParams,
    coupling: &CouplingMatrix,
) -> Result<ModifiedState> {
    let m = coupling.total_positions();
    if state.x.len() != m || state.y.len() != m {
        return Err(Error::InvalidArgument(format!(
            "state has {}/{} positions, coupling expects {m}",
            state.x.len(),
            state.y.len()
        )));
    }
    let (k, gamma, eps) = (params.k(), params.gamma(), params.eps());
    let km1 = k as i32 - 1;
    let w = coupling.w;
    let step = state.iteration + 1;
    let odd = step % 2 == 1;

    let mut y = vec![0.0; m];
    let mut x = vec![0.0; m];
    if odd {
        // 1 - rho(1 - avg) = 1 - exp(-gamma * avg).
        for i in 0..m {
            let span = i.min(w - 1);
            let sum: f64 = (0..=span).map(|j| state.x[i - j]).sum();
            y[i] = -(-gamma * (sum / w as f64)).exp_m1();
        }
        for i in 0..m {
            x[i] = y[i].powi(km1);
        }
    } else {
        for i in 0..m {
            y[i] = -(-gamma * state.x[i]).exp_m1();
        }
        for i in 0..m {
            let span = (m - 1 - i).min(w - 1);
            let sum: f64 = (0..=span).map(|j| y[i + j]).sum();
            x[i] = eps * (sum / w as f64).powi(km1);
        }
    }
    Ok(ModifiedState { x, y, iteration: step })
}

/// Iteration knobs of the vector recursions.
#[derive(Debug, Clone, Copy)]
pub struct CoupledDeOptions {
    /// Sweep budget per classification; bisection raises it tenfold once the
    /// bracket closes in on the threshold.
    pub max_sweeps: usize,
    /// Success means every position drops below this.
    pub zero_tol: f64,
    /// A sup-norm change below this on a nonzero state counts as stalled.
    pub stall_tol: f64,
}

impl Default for CoupledDeOptions {
    fn default() -> Self {
        Self { max_sweeps: 20_000, zero_tol: 1e-10, stall_tol: 1e-12 }
    }
}

fn standard_de_succeeds(
    params: &EnsembleParams,
    coupling: &CouplingMatrix,
    opts: &CoupledDeOptions,
    max_sweeps: usize,
) -> Result<bool> {
    let mut state = CoupledState::new_worst_case(coupling);
    for _ in 0..max_sweeps {
        let next = coupled_de_step(&state, params, coupling)?;
        let max = next.max();
        if max < opts.zero_tol {
            return Ok(true);
        }
        let delta = next
            .x
            .iter()
            .zip(state.x.iter())
            .fold(0.0, |a: f64, (n, p)| a.max((n - p).abs()));
        if delta < opts.stall_tol {
            return Ok(false);
        }
        state = next;
    }
    Ok(false)
}

fn modified_de_succeeds(
    params: &EnsembleParams,
    coupling: &CouplingMatrix,
    opts: &CoupledDeOptions,
    max_sweeps: usize,
) -> Result<bool> {
    let mut state = ModifiedState::new_worst_case(coupling);
    let mut prev = state.x.clone();
    for _ in 0..max_sweeps {
        let after_odd = modified_coupled_de_step(&state, params, coupling)?;
        state = modified_coupled_de_step(&after_odd, params, coupling)?;
        let max = state.max();
        if max < opts.zero_tol {
            return Ok(true);
        }
        let delta = state
            .x
            .iter()
            .zip(prev.iter())
            .fold(0.0, |a: f64, (n, p)| a.max((n - p).abs()));
        if delta < opts.stall_tol {
            return Ok(false);
        }
        prev.clone_from(&state.x);
    }
    Ok(false)
}

fn bisect_threshold(
    k: u32,
    gamma: f64,
    tol_eps: f64,
    opts: &CoupledDeOptions,
    succeeds: impl Fn(&EnsembleParams, usize) -> Result<bool>,
) -> Result<f64> {
    if !(tol_eps > 0.0) {
        return Err(Error::Domain(format!("tol_eps must be positive, got {tol_eps}")));
    }
    let params = |eps: f64| EnsembleParams::new(k, gamma, eps, 0);
    if succeeds(&params(1.0)?, opts.max_sweeps)? {
        return Ok(1.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while hi - lo > tol_eps {
        // Near-threshold probes converge slowly; widen the sweep budget once
        // the bracket is tight.
        let budget =
            if hi - lo < 10.0 * tol_eps { opts.max_sweeps * 10 } else { opts.max_sweeps };
        let mid = 0.5 * (lo + hi);
        if succeeds(&params(mid)?, budget)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// BP threshold of the standard coupled ensemble: the supremum of `eps` for
/// which the vector recursion reaches the all-zero state.
pub fn coupled_threshold(
    k: u32,
    gamma: f64,
    chain_length: usize,
    w: usize,
    tol_eps: f64,
    opts: &CoupledDeOptions,
) -> Result<f64> {
    let coupling = CouplingMatrix::new(chain_length, w)?;
    bisect_threshold(k, gamma, tol_eps, opts, |params, budget| {
        standard_de_succeeds(params, &coupling, opts, budget)
    })
}

/// Threshold of the modified two-step coupled recursion; saturates to the
/// area threshold as the chain grows.
pub fn modified_threshold(
    k: u32,
    gamma: f64,
    chain_length: usize,
    w: usize,
    tol_eps: f64,
    opts: &CoupledDeOptions,
) -> Result<f64> {
    let coupling = CouplingMatrix::new(chain_length, w)?;
    bisect_threshold(k, gamma, tol_eps, opts, |params, budget| {
        modified_de_succeeds(params, &coupling, opts, budget)
    })
}

/// Grid configuration of the threshold-gap sweep.
#[derive(Debug, Clone)]
pub struct GapStudyConfig {
    pub k_values: Vec<u32>,
    pub beta_grid: Vec<f64>,
    pub chain_length: usize,
    pub w: usize,
    /// Bisection tolerance of the uncoupled thresholds (BP, area, potential).
    pub tol_uncoupled: f64,
    /// Bisection tolerance of the coupled and modified thresholds.
    pub tol_coupled: f64,
    pub de_opts: CoupledDeOptions,
    pub exec: Parallelism,
}

impl GapStudyConfig {
    /// The full study grid: `k` in {3,4,5}, `beta` from 0.05 to 0.95 in steps
    /// of 0.05, coupled configuration `(128, 5)`.
    pub fn full_defaults() -> Self {
        Self {
            k_values: vec![3, 4, 5],
            beta_grid: (1..=19).map(|i| i as f64 / 20.0).collect(),
            chain_length: 128,
            w: 5,
            tol_uncoupled: 1e-5,
            tol_coupled: 1e-4,
            de_opts: CoupledDeOptions::default(),
            exec: Parallelism::Auto,
        }
    }

    /// Reduced grid for quick runs: `k = 3`, `beta` step 0.1, chain `(32, 3)`,
    /// tolerances relaxed fourfold and sweep budget quartered.
    pub fn smoke_defaults() -> Self {
        let base = Self::full_defaults();
        Self {
            k_values: vec![3],
            beta_grid: (1..=9).map(|i| i as f64 / 10.0).collect(),
            chain_length: 32,
            w: 3,
            tol_uncoupled: base.tol_uncoupled * 4.0,
            tol_coupled: base.tol_coupled * 4.0,
            de_opts: CoupledDeOptions {
                max_sweeps: base.de_opts.max_sweeps / 4,
                ..base.de_opts
            },
            exec: base.exec,
        }
    }
}

fn gap_cell(cfg: &GapStudyConfig, k: u32, beta: f64) -> ThresholdReport {
    let gamma = k as f64 / beta;
    let mut report = ThresholdReport::new(k, beta, cfg.chain_length, cfg.w);
    let record_err = |what: &str, e: Error, report: &mut ThresholdReport| {
        let msg = format!("{what}: {e}");
        match &mut report.error {
            Some(existing) => {
                existing.push_str("; ");
                existing.push_str(&msg);
            }
            None => report.error = Some(msg),
        }
    };
    match bp_threshold_eps(k, gamma, cfg.tol_uncoupled) {
        Ok(v) => report.eps_bp = Some(v),
        Err(e) => record_err("eps_bp", e, &mut report),
    }
    match area_threshold(k, gamma, cfg.tol_uncoupled) {
        Ok(v) => report.eps_area = Some(v),
        Err(e) => record_err("eps_area", e, &mut report),
    }
    match potential_threshold(k, gamma, cfg.tol_uncoupled) {
        Ok(v) => report.eps_potential = Some(v),
        Err(e) => record_err("eps_potential", e, &mut report),
    }
    if cfg.chain_length == 1 && cfg.w == 1 {
        // The coupled recursions are identical maps at (1,1); reuse the
        // uncoupled threshold so the degenerate gap columns agree exactly.
        report.eps_bp_coupled = report.eps_bp;
        report.eps_modified = report.eps_bp;
    } else {
        match coupled_threshold(k, gamma, cfg.chain_length, cfg.w, cfg.tol_coupled, &cfg.de_opts)
        {
            Ok(v) => report.eps_bp_coupled = Some(v),
            Err(e) => record_err("eps_bp_coupled", e, &mut report),
        }
        match modified_threshold(k, gamma, cfg.chain_length, cfg.w, cfg.tol_coupled, &cfg.de_opts)
        {
            Ok(v) => report.eps_modified = Some(v),
            Err(e) => record_err("eps_modified", e, &mut report),
        }
    }
    report.fill_gaps();
    // Saturation pushes the modified threshold above the standard coupled
    // one; the reverse is an anomaly worth flagging, not a failure.
    if let (Some(modified), Some(coupled)) = (report.eps_modified, report.eps_bp_coupled) {
        if modified < coupled - 2.0 * cfg.tol_coupled {
            report.note = Some(format!(
                "modified threshold {modified} below coupled threshold {coupled}"
            ));
        }
    }
    report
}

/// Sweep the `(k, beta)` grid and report every threshold plus the gaps
/// `eps_area - eps_bp` (uncoupled) and `eps_area - eps_bp_coupled`.
///
/// Cells are independent and run through the execution mode in `cfg`;
/// failures are recorded in-row and the sweep continues. Rows come back in
/// grid order regardless of completion order.
pub fn gap_study(cfg: &GapStudyConfig) -> Vec<ThresholdReport> {
    let cells: Vec<(u32, f64)> = cfg
        .k_values
        .iter()
        .flat_map(|&k| cfg.beta_grid.iter().map(move |&b| (k, b)))
        .collect();
    map_ordered(cells, cfg.exec, |(k, beta)| gap_cell(cfg, k, beta))
}

/// Literal direct-summation transcriptions of both recursion steps. They
/// evaluate every nested sum over the full index ranges through
/// [`CouplingMatrix::entry`] with no caching or band shortcuts, serving as
/// oracles for the banded implementations.
pub mod reference {
    use super::*;

    fn rho_of(gamma: f64, z: f64) -> f64 {
        (-gamma * (1.0 - z)).exp()
    }

    /// Standard recursion, quadruple loop.
    pub fn coupled_de_step_naive(
        state: &CoupledState,
        params: &EnsembleParams,
        coupling: &CouplingMatrix,
    ) -> CoupledState {
        let n = coupling.chain_length();
        let m = coupling.total_positions();
        let (k, gamma, eps) = (params.k(), params.gamma(), params.eps());
        let km1 = (k - 1) as i32;
        let mut x = vec![0.0; m];
        for (i, slot) in x.iter_mut().enumerate() {
            let mut outer = 0.0;
            for g in 0..n {
                let mut mid = 0.0;
                for h in 0..m {
                    let mut inner = 0.0;
                    for p in 0..n {
                        let mut innermost = 0.0;
                        for q in 0..m {
                            innermost += coupling.entry(p, q)
                                * (1.0 - rho_of(gamma, 1.0 - state.x[q]));
                        }
                        inner += coupling.entry(p, h) * innermost.powi(km1);
                    }
                    mid += coupling.entry(g, h) * (1.0 - rho_of(gamma, 1.0 - inner));
                }
                outer += coupling.entry(g, i) * mid.powi(km1);
            }
            *slot = eps * outer;
        }
        CoupledState { x, iteration: state.iteration + 1 }
    }

    /// Modified two-step recursion, straight transcription.
    pub fn modified_coupled_de_step_naive(
        state: &ModifiedState,
        params: &EnsembleParams,
        coupling: &CouplingMatrix,
    ) -> ModifiedState {
        let m = coupling.total_positions();
        let (k, gamma, eps) = (params.k(), params.gamma(), params.eps());
        let km1 = (k - 1) as i32;
        let w = coupling.w();
        let step = state.iteration + 1;
        let mut y = vec![0.0; m];
        let mut x = vec![0.0; m];
        if step % 2 == 1 {
            for i in 1..=m {
                let mut sum = 0.0;
                for j in 0..=(i - 1).min(w - 1) {
                    sum += state.x[i - j - 1];
                }
                y[i - 1] = 1.0 - rho_of(gamma, 1.0 - sum / w as f64);
            }
            for i in 0..m {
                x[i] = y[i].powi(km1);
            }
        } else {
            for i in 0..m {
                y[i] = 1.0 - rho_of(gamma, 1.0 - state.x[i]);
            }
            for i in 1..=m {
                let mut sum = 0.0;
                for j in 0..=(m - i).min(w - 1) {
                    sum += y[i + j - 1];
                }
                x[i - 1] = eps * (sum / w as f64).powi(km1);
            }
        }
        ModifiedState { x, y, iteration: step }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::de_uncoupled::{de_fixed_point, de_two_step_trajectory, DeOptions};

    fn params(k: u32, gamma: f64, eps: f64) -> EnsembleParams {
        EnsembleParams::new(k, gamma, eps, 0).unwrap()
    }

    #[test]
    fn coupling_matrix_shape() {
        let c = CouplingMatrix::new(4, 2).unwrap();
        assert_eq!(c.total_positions(), 5);
        // Rows sum to 1.
        for p in 0..4 {
            let sum: f64 = (0..5).map(|q| c.entry(p, q)).sum();
            assert!((sum - 1.0).abs() < 1e-15);
        }
        assert_eq!(c.entry(0, 0), 0.5);
        assert_eq!(c.entry(0, 2), 0.0);
        assert_eq!(c.entry(3, 4), 0.5);
        assert!(CouplingMatrix::new(0, 1).is_err());
        assert!(CouplingMatrix::new(3, 5).is_err());
    }

    #[test]
    fn zero_eps_clears_in_one_step() {
        let c = CouplingMatrix::new(8, 3).unwrap();
        let state = CoupledState::new_worst_case(&c);
        let next = coupled_de_step(&state, &params(3, 4.0, 0.0), &c).unwrap();
        assert!(next.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn w1_collapses_to_uncoupled_combined_recursion() {
        let c = CouplingMatrix::new(6, 1).unwrap();
        let p = params(3, 5.0, 0.6);
        let mut state = CoupledState::new_worst_case(&c);
        let opts = DeOptions { record_trajectory: true, tol: 0.0, max_iter: 100, ..DeOptions::default() };
        let scalar = de_fixed_point(&p, 1.0, &opts).unwrap().trajectory.unwrap();
        for step in 1..=100 {
            state = coupled_de_step(&state, &p, &c).unwrap();
            for &v in &state.x {
                assert!(
                    (v - scalar[step]).abs() <= 1e-14,
                    "sweep {step}: {v} vs scalar {}",
                    scalar[step]
                );
            }
        }
    }

    #[test]
    fn modified_w1_collapses_to_two_step_recursion() {
        let c = CouplingMatrix::new(6, 1).unwrap();
        let p = params(3, 5.0, 0.6);
        let mut state = ModifiedState::new_worst_case(&c);
        let scalar = de_two_step_trajectory(&p, 1.0, 100).unwrap();
        for step in 1..=100 {
            state = modified_coupled_de_step(&state, &p, &c).unwrap();
            for &v in &state.x {
                assert!(
                    (v - scalar[step]).abs() <= 1e-14,
                    "step {step}: {v} vs scalar {}",
                    scalar[step]
                );
            }
        }
    }

    #[test]
    fn banded_step_matches_naive_oracle() {
        let c = CouplingMatrix::new(8, 3).unwrap();
        let p = params(3, 4.0, 0.5);
        let mut state = CoupledState::new_worst_case(&c);
        for _ in 0..5 {
            let fast = coupled_de_step(&state, &p, &c).unwrap();
            let slow = reference::coupled_de_step_naive(&state, &p, &c);
            for (a, b) in fast.x.iter().zip(slow.x.iter()) {
                assert!((a - b).abs() <= 1e-14, "banded {a} vs naive {b}");
            }
            state = fast;
        }
    }

    #[test]
    fn modified_step_matches_naive_oracle() {
        let c = CouplingMatrix::new(8, 3).unwrap();
        let p = params(3, 4.0, 0.5);
        let mut state = ModifiedState::new_worst_case(&c);
        for _ in 0..10 {
            let fast = modified_coupled_de_step(&state, &p, &c).unwrap();
            let slow = reference::modified_coupled_de_step_naive(&state, &p, &c);
            for (a, b) in fast.x.iter().zip(slow.x.iter()) {
                assert!((a - b).abs() <= 1e-14, "banded {a} vs naive {b}");
            }
            state = fast;
        }
    }

    #[test]
    fn band_locality_of_dependencies() {
        // Perturbing position i can move the output only within 2(w-1).
        let c = CouplingMatrix::new(12, 3).unwrap();
        let p = params(3, 4.0, 0.5);
        let base = CoupledState { x: vec![0.4; c.total_positions()], iteration: 0 };
        let out_base = coupled_de_step(&base, &p, &c).unwrap();
        let probe = 6;
        let mut bumped = base.clone();
        bumped.x[probe] = 0.9;
        let out_bumped = coupled_de_step(&bumped, &p, &c).unwrap();
        for i in 0..c.total_positions() {
            let moved = (out_base.x[i] - out_bumped.x[i]).abs() > 1e-15;
            if moved {
                assert!(
                    i.abs_diff(probe) <= 2 * (c.w() - 1),
                    "position {i} depends on {probe} beyond the band"
                );
            }
        }
    }

    #[test]
    fn boundary_stays_below_interior() {
        let c = CouplingMatrix::new(16, 3).unwrap();
        let p = params(3, 6.0, 0.3);
        let mut state = CoupledState::new_worst_case(&c);
        for _ in 0..50 {
            state = coupled_de_step(&state, &p, &c).unwrap();
            let interior_max =
                state.x[..c.chain_length()].iter().fold(0.0f64, |a, &b| a.max(b));
            for &v in &state.x[c.chain_length()..] {
                assert!(v <= interior_max + 1e-15, "seeded tail rose above interior");
            }
        }
    }

    #[test]
    fn coupled_threshold_w1_equals_uncoupled() {
        let tol = 1e-4;
        let uncoupled = bp_threshold_eps(3, 6.0, tol).unwrap();
        let coupled =
            coupled_threshold(3, 6.0, 8, 1, tol, &CoupledDeOptions::default()).unwrap();
        assert!((coupled - uncoupled).abs() <= 2.0 * tol, "{coupled} vs {uncoupled}");
    }

    #[test]
    fn coupling_improves_threshold() {
        // Small chain so the test stays quick; improvement already shows.
        let opts = CoupledDeOptions::default();
        let uncoupled = bp_threshold_eps(3, 6.0, 1e-4).unwrap();
        let coupled = coupled_threshold(3, 6.0, 32, 3, 1e-4, &opts).unwrap();
        assert!(coupled >= uncoupled - 2e-4, "coupled {coupled} vs uncoupled {uncoupled}");
    }

    #[test]
    fn threshold_monotone_in_w() {
        let opts = CoupledDeOptions::default();
        let w2 = coupled_threshold(3, 6.0, 16, 2, 2e-4, &opts).unwrap();
        let w4 = coupled_threshold(3, 6.0, 16, 4, 2e-4, &opts).unwrap();
        assert!(w4 >= w2 - 4e-4, "w=4 {w4} vs w=2 {w2}");
    }

    #[test]
    fn gap_study_degenerate_config_reuses_uncoupled() {
        let cfg = GapStudyConfig {
            k_values: vec![3],
            beta_grid: vec![0.5],
            chain_length: 1,
            w: 1,
            tol_uncoupled: 1e-5,
            tol_coupled: 1e-4,
            de_opts: CoupledDeOptions::default(),
            exec: Parallelism::Sequential,
        };
        let rows = gap_study(&cfg);
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert!(row.error.is_none(), "{:?}", row.error);
        assert_eq!(row.eps_bp, row.eps_bp_coupled);
        assert_eq!(row.gap_uncoupled, row.gap_coupled);
    }

    #[test]
    fn gap_study_rows_in_grid_order() {
        let cfg = GapStudyConfig {
            k_values: vec![3],
            beta_grid: vec![0.4, 0.6],
            chain_length: 8,
            w: 2,
            tol_uncoupled: 1e-4,
            tol_coupled: 1e-3,
            de_opts: CoupledDeOptions { max_sweeps: 2000, ..CoupledDeOptions::default() },
            exec: Parallelism::Auto,
        };
        let rows = gap_study(&cfg);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].beta, 0.4);
        assert_eq!(rows[1].beta, 0.6);
        for row in &rows {
            assert!(row.error.is_none(), "{:?}", row.error);
            assert!(row.gap_uncoupled.unwrap() >= -1e-4);
            assert!(row.gap_coupled.unwrap() <= row.gap_uncoupled.unwrap() + 1e-4);
        }
    }
}
