//! Seeded Monte-Carlo harness: build, encode, peel, tally.
//!
//! Trials are independent; each derives its own RNG seeds from the base seed
//! through a splitmix step, so results do not depend on scheduling and a
//! fixed configuration reproduces byte-identical statistics in both
//! execution modes.

use serde::{Deserialize, Serialize};

use crate::decoder::peel_decode;
use crate::ensemble::EnsembleParams;
use crate::error::{Error, Result};
use crate::exec::{map_ordered, Parallelism};
use crate::graph::{build_coupled, build_single_layer, encode, sample_flows, FlowModel};

/// Configuration of one trial batch.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub m0: usize,
    pub m1: usize,
    pub k: u32,
    pub eps: f64,
    pub f_min: u64,
    pub model: FlowModel,
    pub trials: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Build a coupled graph with this `(chain length, w)` instead of the
    /// uncoupled one; `m0` and `m1` must split evenly over the positions.
    pub coupled: Option<(usize, usize)>,
    pub exec: Parallelism,
}

impl SimConfig {
    pub fn params(&self) -> Result<EnsembleParams> {
        let gamma = self.m0 as f64 * self.k as f64 / self.m1 as f64;
        EnsembleParams::new(self.k, gamma, self.eps, self.f_min)
    }
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    /// Every flow peeled and equal to the ground truth.
    pub recovered: bool,
    pub peeled_fraction: f64,
    pub oscillating_fraction: f64,
    pub iterations: usize,
    /// Encoding overflowed the final layer; no decode was attempted.
    pub capacity_error: bool,
}

/// Batch statistics. Means are taken over trials that encoded successfully.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub records: Vec<TrialRecord>,
    pub recovery_rate: f64,
    pub mean_peeled_fraction: f64,
    pub mean_oscillating_fraction: f64,
    pub capacity_errors: usize,
}

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn run_trial(cfg: &SimConfig, params: &EnsembleParams, trial: usize) -> Result<TrialRecord> {
    let base = splitmix64(cfg.seed ^ (trial as u64).wrapping_mul(0xA076_1D64_78BD_642F));
    let graph_seed = splitmix64(base);
    let flow_seed = splitmix64(base.wrapping_add(1));

    let graph = match cfg.coupled {
        None => build_single_layer(cfg.m0, cfg.m1, cfg.k, graph_seed)?,
        Some((n, w)) => {
            if cfg.m0 % n != 0 {
                return Err(Error::InvalidArgument(format!(
                    "m0 = {} not divisible by chain length {n}",
                    cfg.m0
                )));
            }
            build_coupled(cfg.m0 / n, params, n, w, graph_seed)?
        }
    };
    let flows = sample_flows(cfg.m0, params, cfg.model, flow_seed)?;
    let state = match encode(&graph, &flows) {
        Ok(state) => state,
        Err(Error::Capacity(_)) => {
            return Ok(TrialRecord {
                trial,
                recovered: false,
                peeled_fraction: 0.0,
                oscillating_fraction: 0.0,
                iterations: 0,
                capacity_error: true,
            });
        }
        Err(e) => return Err(e),
    };
    let result = peel_decode(graph.single_layer(), state.layer_values(1), cfg.f_min, cfg.max_iter)?;
    let peeled = result.peeled.as_ref().expect("peeling decoder reports the peeled set");
    let peeled_count = peeled.iter().filter(|&&p| p).count();
    let recovered = peeled_count == cfg.m0 && result.estimates == flows;
    Ok(TrialRecord {
        trial,
        recovered,
        peeled_fraction: peeled_count as f64 / cfg.m0 as f64,
        oscillating_fraction: (cfg.m0 - peeled_count) as f64 / cfg.m0 as f64,
        iterations: result.iterations,
        capacity_error: false,
    })
}

/// Run the batch and aggregate.
pub fn run_trials(cfg: &SimConfig) -> Result<SimReport> {
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    if cfg.m0 == 0 || cfg.m1 == 0 {
        return Err(Error::InvalidArgument("node counts must be positive".into()));
    }
    let params = cfg.params()?;
    if let Some((n, _)) = cfg.coupled {
        // beta = m1 / m0 is the per-position ratio, so each of the N flow
        // positions needs m1 / N counters; the realized coupled graph has
        // (N + w - 1) / N times more counters from boundary termination.
        if cfg.m1 % n != 0 {
            return Err(Error::InvalidArgument(format!(
                "m1 = {} does not split over {n} positions",
                cfg.m1
            )));
        }
    }
    let outcomes = map_ordered((0..cfg.trials).collect(), cfg.exec, |trial| {
        run_trial(cfg, &params, trial)
    });
    let mut records = Vec::with_capacity(cfg.trials);
    for outcome in outcomes {
        records.push(outcome?);
    }
    let capacity_errors = records.iter().filter(|r| r.capacity_error).count();
    let encoded = records.iter().filter(|r| !r.capacity_error);
    let encoded_count = (cfg.trials - capacity_errors).max(1) as f64;
    let recovery_rate =
        records.iter().filter(|r| r.recovered).count() as f64 / cfg.trials as f64;
    let mean_peeled_fraction =
        encoded.clone().map(|r| r.peeled_fraction).sum::<f64>() / encoded_count;
    let mean_oscillating_fraction =
        encoded.map(|r| r.oscillating_fraction).sum::<f64>() / encoded_count;
    Ok(SimReport {
        records,
        recovery_rate,
        mean_peeled_fraction,
        mean_oscillating_fraction,
        capacity_errors,
    })
}
