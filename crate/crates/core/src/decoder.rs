//! Message-passing decoders for counter braids.
//!
//! The BP decoder alternates min/max flow-node updates: counter messages
//! subtract the other incoming flow messages from the counter value (floored
//! at `f_min`), flow messages take the minimum of the other counter messages
//! on odd iterations and the maximum on even ones. Starting from
//! `mu = f_min`, odd-iteration estimates are upper bounds on the true flow
//! sizes and even-iteration estimates are lower bounds, so a flow whose
//! estimate repeats across consecutive iterations has converged to its exact
//! size. The decoder stops once the whole estimate vector repeats with period
//! one or two.
//!
//! The peeling decoder runs the same message schedule and additionally
//! removes resolved flows from the graph: a degree-one counter determines its
//! flow outright, and on odd iterations a counter message equal to `f_min`
//! pins its flow to `f_min`. Peeled flows are subtracted from their remaining
//! counters. The set of peeled flows matches the set of BP-converged flows.
//!
//! Messages are held as integers: counter values and `f_min` are integral,
//! so min/max/subtract stay exact and the BP/peeling equivalence can be
//! checked without float slack.

use crate::error::{Error, Result};
use crate::graph::{BraidGraph, CounterState, LayerGraph};

/// Per-flow outcome of a decode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowStatus {
    /// Estimate repeated on consecutive iterations; equals the true size.
    Converged,
    /// Estimate oscillates with period two; still bracketed, not resolved.
    Oscillating,
}

/// What is left of the graph when the peeling decoder stalls.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualGraph {
    /// Surviving flow node ids.
    pub flow_ids: Vec<u32>,
    /// Surviving counter node ids (positive residual degree, not removed).
    pub counter_ids: Vec<u32>,
    /// Residual counter values, aligned with `counter_ids`.
    pub counter_values: Vec<u64>,
    /// Surviving edge count.
    pub edge_count: usize,
}

/// Decode output. `peeled` and `residual` are present for the peeling decoder
/// only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeResult {
    pub estimates: Vec<u64>,
    pub statuses: Vec<FlowStatus>,
    pub iterations: usize,
    pub peeled: Option<Vec<bool>>,
    pub residual: Option<ResidualGraph>,
}

impl DecodeResult {
    /// Indices of flows that converged (BP) or were peeled (peeling).
    pub fn converged_set(&self) -> Vec<usize> {
        self.statuses
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == FlowStatus::Converged)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn all_converged(&self) -> bool {
        self.statuses.iter().all(|s| *s == FlowStatus::Converged)
    }
}

fn check_counters(layer: &LayerGraph, counter_values: &[u64]) -> Result<Vec<i64>> {
    if counter_values.len() != layer.counter_count() {
        return Err(Error::InvalidArgument(format!(
            "got {} counter values for {} counters",
            counter_values.len(),
            layer.counter_count()
        )));
    }
    counter_values
        .iter()
        .map(|&v| {
            i64::try_from(v).map_err(|_| {
                Error::InvalidArgument(format!("counter value {v} exceeds decoder range"))
            })
        })
        .collect()
}

/// Counter-to-flow messages for one iteration: `max(phi(c) - sum of the other
/// incoming flow messages, f_min)`, per edge so parallel edges stay
/// independent.
fn update_psi(
    layer: &LayerGraph,
    values: &[i64],
    mu: &[i64],
    psi: &mut [i64],
    f_min: i64,
    alive_edge: Option<&[bool]>,
    counter_removed: Option<&[bool]>,
) {
    for c in 0..layer.counter_count() {
        if counter_removed.is_some_and(|r| r[c]) {
            continue;
        }
        let ids = layer.counter_edge_ids(c);
        let mut sum: i128 = 0;
        for &e in ids {
            if alive_edge.is_none_or(|a| a[e as usize]) {
                sum += mu[e as usize] as i128;
            }
        }
        for &e in ids {
            let e = e as usize;
            if alive_edge.is_some_and(|a| !a[e]) {
                continue;
            }
            let raw = values[c] as i128 - (sum - mu[e] as i128);
            psi[e] = (raw.max(f_min as i128)) as i64;
        }
    }
}

/// Flow-node update: min (odd) or max (even) over the other incident counter
/// messages, using the two-extremes trick for per-edge exclusion.
fn update_mu(
    layer: &LayerGraph,
    psi: &[i64],
    mu: &mut [i64],
    odd: bool,
    alive_flow: Option<&[bool]>,
    alive_edge: Option<&[bool]>,
) {
    for f in 0..layer.flow_count() {
        if alive_flow.is_some_and(|a| !a[f]) {
            continue;
        }
        let ids = layer.flow_edge_ids(f);
        let mut best = if odd { i64::MAX } else { i64::MIN };
        let mut second = best;
        let mut best_edge = u32::MAX;
        for &e in ids {
            if alive_edge.is_some_and(|a| !a[e as usize]) {
                continue;
            }
            let v = psi[e as usize];
            let better = if odd { v < best } else { v > best };
            if better {
                second = best;
                best = v;
                best_edge = e;
            } else if (odd && v < second) || (!odd && v > second) {
                second = v;
            }
        }
        for &e in ids {
            if alive_edge.is_some_and(|a| !a[e as usize]) {
                continue;
            }
            mu[e as usize] = if e == best_edge { second } else { best };
        }
    }
}

fn flow_estimate(
    layer: &LayerGraph,
    psi: &[i64],
    f: usize,
    odd: bool,
    alive_edge: Option<&[bool]>,
) -> i64 {
    let mut acc = if odd { i64::MAX } else { i64::MIN };
    for &e in layer.flow_edge_ids(f) {
        if alive_edge.is_some_and(|a| !a[e as usize]) {
            continue;
        }
        let v = psi[e as usize];
        acc = if odd { acc.min(v) } else { acc.max(v) };
    }
    acc
}

fn to_u64_estimates(estimates: &[i64]) -> Result<Vec<u64>> {
    estimates
        .iter()
        .map(|&v| {
            u64::try_from(v).map_err(|_| {
                Error::InternalConsistency(format!("negative flow estimate {v} produced"))
            })
        })
        .collect()
}

/// Belief-propagation decode of one layer.
///
/// `counter_values` are the final counter readings; `f_min` is the minimum
/// flow size of the layer's flow population. Stops as soon as the per-flow
/// estimate vector repeats with period one or two, or at `max_iter`.
pub fn bp_decode(
    layer: &LayerGraph,
    counter_values: &[u64],
    f_min: u64,
    max_iter: usize,
) -> Result<DecodeResult> {
    let values = check_counters(layer, counter_values)?;
    let f_min = f_min as i64;
    let edge_count = layer.edges().len();
    let m0 = layer.flow_count();

    let mut mu = vec![f_min; edge_count];
    let mut psi = vec![0i64; edge_count];
    let mut prev: Option<Vec<i64>> = None;
    let mut prev_prev: Option<Vec<i64>> = None;

    let mut iterations = 0;
    loop {
        iterations += 1;
        let odd = iterations % 2 == 1;
        update_psi(layer, &values, &mu, &mut psi, f_min, None, None);
        let estimates: Vec<i64> =
            (0..m0).map(|f| flow_estimate(layer, &psi, f, odd, None)).collect();

        let stop = iterations >= max_iter
            || prev.as_ref() == Some(&estimates)
            || prev_prev.as_ref() == Some(&estimates);
        if stop {
            let statuses = estimates
                .iter()
                .enumerate()
                .map(|(f, &e)| match &prev {
                    Some(p) if p[f] == e => FlowStatus::Converged,
                    _ => FlowStatus::Oscillating,
                })
                .collect();
            return Ok(DecodeResult {
                estimates: to_u64_estimates(&estimates)?,
                statuses,
                iterations,
                peeled: None,
                residual: None,
            });
        }

        update_mu(layer, &psi, &mut mu, odd, None, None);
        prev_prev = prev.take();
        prev = Some(estimates);
    }
}

struct PeelState<'a> {
    layer: &'a LayerGraph,
    values: Vec<i64>,
    alive_flow: Vec<bool>,
    alive_edge: Vec<bool>,
    counter_removed: Vec<bool>,
    degree: Vec<usize>,
    estimates: Vec<i64>,
    peeled: Vec<bool>,
    rule1_queue: Vec<u32>,
    peeled_count: usize,
}

impl<'a> PeelState<'a> {
    fn new(layer: &'a LayerGraph, values: Vec<i64>) -> Self {
        let degree: Vec<usize> = (0..layer.counter_count()).map(|c| layer.counter_degree(c)).collect();
        let rule1_queue = (0..layer.counter_count())
            .filter(|&c| degree[c] == 1)
            .map(|c| c as u32)
            .collect();
        Self {
            layer,
            values,
            alive_flow: vec![true; layer.flow_count()],
            alive_edge: vec![true; layer.edges().len()],
            counter_removed: vec![false; layer.counter_count()],
            degree,
            estimates: vec![0; layer.flow_count()],
            peeled: vec![false; layer.flow_count()],
            rule1_queue,
            peeled_count: 0,
        }
    }

    /// Remove flow `f` with resolved size `value`; decrement the residual
    /// counters behind each of its surviving edges.
    fn peel_flow(&mut self, f: usize, value: i64) -> Result<()> {
        self.alive_flow[f] = false;
        self.peeled[f] = true;
        self.estimates[f] = value;
        self.peeled_count += 1;
        for &e in self.layer.flow_edge_ids(f) {
            let e = e as usize;
            if !self.alive_edge[e] {
                continue;
            }
            self.alive_edge[e] = false;
            let c = self.layer.edges()[e].1 as usize;
            self.degree[c] -= 1;
            self.values[c] -= value;
            if self.values[c] < 0 {
                return Err(Error::InternalConsistency(format!(
                    "counter {c} driven negative while peeling flow {f}"
                )));
            }
            if self.degree[c] == 1 && !self.counter_removed[c] {
                self.rule1_queue.push(c as u32);
            }
        }
        Ok(())
    }

    /// Rule 1 to fixpoint: every counter with residual degree one resolves and
    /// removes its remaining flow.
    fn exhaust_rule1(&mut self) -> Result<usize> {
        let mut fired = 0;
        while let Some(c) = self.rule1_queue.pop() {
            let c = c as usize;
            if self.counter_removed[c] || self.degree[c] != 1 {
                continue;
            }
            let &e = self
                .layer
                .counter_edge_ids(c)
                .iter()
                .find(|&&e| self.alive_edge[e as usize])
                .expect("degree-one counter must have a surviving edge");
            let f = self.layer.edges()[e as usize].0 as usize;
            let value = self.values[c];
            self.counter_removed[c] = true;
            self.peel_flow(f, value)?;
            fired += 1;
        }
        Ok(fired)
    }

    fn residual(&self) -> ResidualGraph {
        let flow_ids = (0..self.layer.flow_count())
            .filter(|&f| self.alive_flow[f])
            .map(|f| f as u32)
            .collect();
        let mut counter_ids = Vec::new();
        let mut counter_values = Vec::new();
        for c in 0..self.layer.counter_count() {
            if !self.counter_removed[c] && self.degree[c] > 0 {
                counter_ids.push(c as u32);
                counter_values.push(self.values[c] as u64);
            }
        }
        let edge_count = self.alive_edge.iter().filter(|&&a| a).count();
        ResidualGraph { flow_ids, counter_ids, counter_values, edge_count }
    }
}

/// Peeling decode of one layer.
///
/// Runs the BP schedule and peels: rule 1 (degree-one counters) to fixpoint
/// at the start of every iteration, rule 2 (counter messages equal to
/// `f_min`) once per odd iteration. Returns the surviving residual graph and
/// the peeled set alongside the estimates.
pub fn peel_decode(
    layer: &LayerGraph,
    counter_values: &[u64],
    f_min: u64,
    max_iter: usize,
) -> Result<DecodeResult> {
    let values = check_counters(layer, counter_values)?;
    let f_min = f_min as i64;
    let edge_count = layer.edges().len();
    let m0 = layer.flow_count();

    let mut state = PeelState::new(layer, values);
    let mut mu = vec![f_min; edge_count];
    let mut psi = vec![0i64; edge_count];
    let mut prev: Option<Vec<i64>> = None;
    let mut prev_prev: Option<Vec<i64>> = None;

    let mut iterations = 0;
    loop {
        iterations += 1;
        let odd = iterations % 2 == 1;
        let mut fired = state.exhaust_rule1()?;

        update_psi(
            layer,
            &state.values,
            &mu,
            &mut psi,
            f_min,
            Some(&state.alive_edge),
            Some(&state.counter_removed),
        );

        if odd {
            // Rule 2: a counter message at the floor pins its flow to f_min.
            let mut to_peel = Vec::new();
            for e in 0..edge_count {
                if state.alive_edge[e] && psi[e] == f_min {
                    let f = layer.edges()[e].0 as usize;
                    if state.alive_flow[f] {
                        to_peel.push(f);
                    }
                }
            }
            for f in to_peel {
                if state.alive_flow[f] {
                    state.peel_flow(f, f_min)?;
                    fired += 1;
                }
            }
        }

        let estimates: Vec<i64> = (0..m0)
            .map(|f| {
                if state.peeled[f] {
                    state.estimates[f]
                } else {
                    flow_estimate(layer, &psi, f, odd, Some(&state.alive_edge))
                }
            })
            .collect();

        let repeating =
            prev.as_ref() == Some(&estimates) || prev_prev.as_ref() == Some(&estimates);
        let stop = state.peeled_count == m0
            || iterations >= max_iter
            || (fired == 0 && repeating);
        if stop {
            for f in 0..m0 {
                if state.peeled[f] {
                    continue;
                }
                state.estimates[f] = estimates[f];
            }
            let statuses = state
                .peeled
                .iter()
                .map(|&p| if p { FlowStatus::Converged } else { FlowStatus::Oscillating })
                .collect();
            let residual = state.residual();
            return Ok(DecodeResult {
                estimates: to_u64_estimates(&state.estimates)?,
                statuses,
                iterations,
                peeled: Some(state.peeled),
                residual: Some(residual),
            });
        }

        update_mu(layer, &psi, &mut mu, odd, Some(&state.alive_flow), Some(&state.alive_edge));
        prev_prev = prev.take();
        prev = Some(estimates);
    }
}

/// Decode a braid layer by layer, starting from the last.
///
/// Upper-layer flow populations are overflow counts, whose minimum is zero,
/// so `f_min` applies only to layer 1. After decoding layer `l`, each
/// layer-`(l-1)` counter is reconstituted as
/// `estimate * 2^{d_{l-1}} + stored value` through the layer bijection.
/// Supports braids of one or two layers.
pub fn layered_decode(
    braid: &BraidGraph,
    counters: &CounterState,
    f_min: u64,
    max_iter: usize,
) -> Result<DecodeResult> {
    match braid.layer_count() {
        1 => bp_decode(braid.single_layer(), counters.layer_values(1), f_min, max_iter),
        2 => {
            let upper = bp_decode(braid.layer(2), counters.layer_values(2), 0, max_iter)?;
            let d1 = braid.depths()[0];
            let mut reconstituted = counters.layer_values(1).to_vec();
            for (f2, &c1) in braid.mapping(2).iter().enumerate() {
                reconstituted[c1 as usize] += upper.estimates[f2] << d1;
            }
            bp_decode(braid.single_layer(), &reconstituted, f_min, max_iter)
        }
        l => Err(Error::InvalidArgument(format!(
            "layered decoding supports at most two layers, got {l}"
        ))),
    }
}
