//! Command implementations: resolve arguments, call the library, render
//! output with a manifest hash so every artifact names the exact
//! configuration that produced it.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use serde::Serialize;
use sha2::{Digest, Sha256};

use counter_braids::de_coupled::{
    coupled_threshold, modified_threshold, CoupledDeOptions, GapStudyConfig,
};
use counter_braids::de_uncoupled::{
    area_threshold, bp_threshold_beta, bp_threshold_eps, cosine_grid, ebp_exit_curve,
    potential_threshold, residual_exit_curve, ExitCurve,
};
use counter_braids::ensemble::EnsembleParams;
use counter_braids::graph::{build_coupled, build_single_layer, build_two_layer, BraidGraph, FlowModel};
use counter_braids::montecarlo::{run_trials, SimConfig};
use counter_braids::report::{reports_to_json, ThresholdReport, CSV_HEADER, LONG_CSV_HEADER};
use counter_braids::Parallelism;

use crate::config::FileConfig;
use crate::{CurvesArgs, Fig2Args, GraphBuildArgs, GraphInfoArgs, SimulateArgs, ThresholdArgs};

pub enum Outcome {
    Clean,
    PartialFailure,
}

const DEFAULT_TOL_UNCOUPLED: f64 = 1e-5;
const DEFAULT_TOL_COUPLED: f64 = 1e-4;
const DEFAULT_SAMPLES: usize = 4000;
const DEFAULT_SEED: u64 = 0;

/// Hash of the resolved configuration, embedded in every output header.
fn manifest_hash<T: Serialize>(resolved: &T) -> String {
    let json = serde_json::to_string(resolved).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn emit(out: Option<&Path>, content: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{content}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// threshold
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ThresholdResolved {
    command: &'static str,
    k: u32,
    gamma: f64,
    which: Vec<String>,
    eps: Option<f64>,
    n: usize,
    w: usize,
    tol_uncoupled: f64,
    tol_coupled: f64,
    max_sweeps: usize,
}

#[derive(Serialize)]
struct ThresholdJson {
    manifest_hash: String,
    report: ThresholdReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta_bp: Option<f64>,
}

pub fn threshold(args: ThresholdArgs, file: &FileConfig) -> anyhow::Result<Outcome> {
    let gamma = args.ensemble.gamma()?;
    let beta = args.ensemble.beta()?;
    let k = args.ensemble.k;
    let tol_uncoupled =
        args.tol_uncoupled.or(file.tol_uncoupled).unwrap_or(DEFAULT_TOL_UNCOUPLED);
    let tol_coupled = args.tol_coupled.or(file.tol_coupled).unwrap_or(DEFAULT_TOL_COUPLED);
    let max_sweeps = args.max_sweeps.or(file.max_sweeps).unwrap_or(20_000);
    let de_opts = CoupledDeOptions { max_sweeps, ..CoupledDeOptions::default() };

    let resolved = ThresholdResolved {
        command: "threshold",
        k,
        gamma,
        which: args.which.clone(),
        eps: args.eps,
        n: args.n,
        w: args.w,
        tol_uncoupled,
        tol_coupled,
        max_sweeps,
    };
    let hash = manifest_hash(&resolved);

    let mut report = ThresholdReport::new(k, beta, args.n, args.w);
    let mut beta_bp = None;
    let mut partial = false;
    for which in &args.which {
        let outcome: counter_braids::Result<()> = (|| {
            match which.as_str() {
                "bp" => report.eps_bp = Some(bp_threshold_eps(k, gamma, tol_uncoupled)?),
                "area" => report.eps_area = Some(area_threshold(k, gamma, tol_uncoupled)?),
                "potential" => {
                    report.eps_potential = Some(potential_threshold(k, gamma, tol_uncoupled)?)
                }
                "coupled" => {
                    report.eps_bp_coupled =
                        Some(coupled_threshold(k, gamma, args.n, args.w, tol_coupled, &de_opts)?)
                }
                "modified" => {
                    report.eps_modified =
                        Some(modified_threshold(k, gamma, args.n, args.w, tol_coupled, &de_opts)?)
                }
                "bp-beta" => {
                    let eps = args.eps.ok_or_else(|| {
                        counter_braids::Error::InvalidArgument(
                            "--which bp-beta requires --eps".into(),
                        )
                    })?;
                    beta_bp = Some(bp_threshold_beta(k, eps, tol_uncoupled)?);
                }
                other => {
                    return Err(counter_braids::Error::InvalidArgument(format!(
                        "unknown threshold kind {other:?}"
                    )))
                }
            }
            Ok(())
        })();
        if let Err(e) = outcome {
            if matches!(e, counter_braids::Error::InvalidArgument(_)) {
                return Err(e.into());
            }
            partial = true;
            let msg = format!("{which}: {e}");
            match &mut report.error {
                Some(existing) => {
                    existing.push_str("; ");
                    existing.push_str(&msg);
                }
                None => report.error = Some(msg),
            }
        }
    }
    report.fill_gaps();

    let content = match args.format.as_str() {
        "csv" => {
            let mut s = format!("# manifest={hash}\n");
            if let Some(b) = beta_bp {
                s.push_str(&format!("# beta_bp={b} eps={}\n", args.eps.unwrap()));
            }
            if let Some(err) = &report.error {
                s.push_str(&format!("# errors={err}\n"));
            }
            s.push_str(CSV_HEADER);
            s.push('\n');
            s.push_str(&report.csv_row());
            s.push('\n');
            s
        }
        "json" => {
            let mut s = serde_json::to_string_pretty(&ThresholdJson {
                manifest_hash: hash,
                report,
                beta_bp,
            })?;
            s.push('\n');
            s
        }
        other => bail!("unknown format {other:?} (expected csv or json)"),
    };
    emit(args.out.as_deref(), &content)?;
    Ok(if partial { Outcome::PartialFailure } else { Outcome::Clean })
}

// ---------------------------------------------------------------------------
// curves
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CurvesResolved {
    command: &'static str,
    kind: String,
    k: u32,
    gamma: f64,
    eps: Option<f64>,
    samples: usize,
}

pub fn curves(args: CurvesArgs, file: &FileConfig) -> anyhow::Result<Outcome> {
    let gamma = args.ensemble.gamma()?;
    let k = args.ensemble.k;
    let samples = args.samples.or(file.samples).unwrap_or(DEFAULT_SAMPLES);
    let grid = cosine_grid(samples);
    let curve: ExitCurve = match args.kind.as_str() {
        "ebp" => ebp_exit_curve(k, gamma, &grid)?,
        "residual" => {
            let eps = args.eps.context("residual curves require --eps")?;
            residual_exit_curve(k, gamma, eps, &grid)?
        }
        other => bail!("unknown curve kind {other:?} (expected ebp or residual)"),
    };
    let resolved = CurvesResolved {
        command: "curves",
        kind: args.kind.clone(),
        k,
        gamma,
        eps: args.eps,
        samples,
    };
    let hash = manifest_hash(&resolved);
    let csv = curve.to_csv();
    // The manifest rides on the curve's own comment header.
    let content = csv.replacen("\n", &format!(" manifest={hash}\n"), 1);
    emit(args.out.as_deref(), &content)?;
    Ok(Outcome::Clean)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SimulateResolved {
    command: &'static str,
    m0: usize,
    m1: usize,
    k: u32,
    eps: f64,
    f_min: u64,
    model: String,
    tail_p: Option<f64>,
    trials: usize,
    seed: u64,
    max_iter: usize,
    coupled: Option<(usize, usize)>,
}

pub fn simulate(args: SimulateArgs, file: &FileConfig) -> anyhow::Result<Outcome> {
    let m1 = match (args.m1, args.beta) {
        (Some(m1), None) => m1,
        (None, Some(beta)) if beta > 0.0 => (args.m0 as f64 * beta).round() as usize,
        _ => bail!("exactly one of --m1/--beta is required"),
    };
    let model = match args.model.as_str() {
        "two-point" => FlowModel::TwoPoint,
        "geometric" => FlowModel::GeometricTail { p: args.tail_p },
        other => bail!("unknown flow model {other:?} (expected two-point or geometric)"),
    };
    let seed = args.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let coupled = args.n.zip(args.w);
    let cfg = SimConfig {
        m0: args.m0,
        m1,
        k: args.k,
        eps: args.eps,
        f_min: args.f_min,
        model,
        trials: args.trials,
        seed,
        max_iter: args.max_iter,
        coupled,
        exec: Parallelism::Auto,
    };
    let resolved = SimulateResolved {
        command: "simulate",
        m0: cfg.m0,
        m1: cfg.m1,
        k: cfg.k,
        eps: cfg.eps,
        f_min: cfg.f_min,
        model: args.model.clone(),
        tail_p: matches!(model, FlowModel::GeometricTail { .. }).then_some(args.tail_p),
        trials: cfg.trials,
        seed,
        max_iter: cfg.max_iter,
        coupled,
    };
    let hash = manifest_hash(&resolved);
    let report = run_trials(&cfg)?;

    let mut s = format!("# manifest={hash}\n");
    s.push_str(&format!(
        "# trials={} recovery_rate={} mean_peeled_fraction={} mean_oscillating_fraction={} capacity_errors={}\n",
        cfg.trials,
        report.recovery_rate,
        report.mean_peeled_fraction,
        report.mean_oscillating_fraction,
        report.capacity_errors
    ));
    s.push_str("trial,recovered,peeled_fraction,oscillating_fraction,iterations,capacity_error\n");
    for r in &report.records {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.trial, r.recovered, r.peeled_fraction, r.oscillating_fraction, r.iterations,
            r.capacity_error
        ));
    }
    emit(args.out.as_deref(), &s)?;
    Ok(Outcome::Clean)
}

// ---------------------------------------------------------------------------
// fig2
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct Fig2Resolved {
    command: &'static str,
    k_list: Vec<u32>,
    beta_grid: Vec<f64>,
    n: usize,
    w: usize,
    tol_uncoupled: f64,
    tol_coupled: f64,
    max_sweeps: usize,
    smoke: bool,
}

#[derive(Serialize)]
struct Fig2Manifest {
    manifest_hash: String,
    version: &'static str,
    config: Fig2Resolved,
    rows: usize,
    rows_with_errors: usize,
    wall_time_secs: f64,
}

pub fn fig2(args: Fig2Args, file: &FileConfig) -> anyhow::Result<Outcome> {
    let mut cfg = if args.smoke {
        GapStudyConfig::smoke_defaults()
    } else {
        let mut cfg = GapStudyConfig::full_defaults();
        cfg.k_values = args.k_list.clone();
        if args.beta_step <= 0.0 || args.beta_min <= 0.0 || args.beta_max >= 1.0 + 1e-12 {
            bail!("beta grid must satisfy 0 < beta_min <= beta_max < 1 with positive step");
        }
        let mut grid = Vec::new();
        let mut b = args.beta_min;
        while b <= args.beta_max + 1e-12 {
            grid.push((b * 1e12).round() / 1e12);
            b += args.beta_step;
        }
        cfg.beta_grid = grid;
        cfg.chain_length = args.n;
        cfg.w = args.w;
        cfg
    };
    if let Some(t) = args.tol_uncoupled.or(file.tol_uncoupled) {
        cfg.tol_uncoupled = t;
    }
    if let Some(t) = args.tol_coupled.or(file.tol_coupled) {
        cfg.tol_coupled = t;
    }
    if let Some(s) = args.max_sweeps.or(file.max_sweeps) {
        cfg.de_opts.max_sweeps = s;
    }

    let resolved = Fig2Resolved {
        command: "fig2",
        k_list: cfg.k_values.clone(),
        beta_grid: cfg.beta_grid.clone(),
        n: cfg.chain_length,
        w: cfg.w,
        tol_uncoupled: cfg.tol_uncoupled,
        tol_coupled: cfg.tol_coupled,
        max_sweeps: cfg.de_opts.max_sweeps,
        smoke: args.smoke,
    };
    let hash = manifest_hash(&resolved);

    let started = Instant::now();
    let rows = counter_braids::de_coupled::gap_study(&cfg);
    let wall = started.elapsed().as_secs_f64();
    let rows_with_errors = rows.iter().filter(|r| r.error.is_some()).count();

    let mut wide = format!("# manifest={hash}\n{CSV_HEADER}\n");
    for row in &rows {
        wide.push_str(&row.csv_row());
        wide.push('\n');
    }
    std::fs::write(&args.out, &wide)
        .with_context(|| format!("writing {}", args.out.display()))?;

    let long_path = args
        .long
        .clone()
        .unwrap_or_else(|| derived_path(&args.out, "long.csv"));
    let mut long = format!("# manifest={hash}\n{LONG_CSV_HEADER}\n");
    for row in &rows {
        for line in row.long_csv_rows() {
            long.push_str(&line);
            long.push('\n');
        }
    }
    std::fs::write(&long_path, &long)
        .with_context(|| format!("writing {}", long_path.display()))?;

    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| derived_path(&args.out, "manifest.json"));
    let manifest = Fig2Manifest {
        manifest_hash: hash,
        version: env!("CARGO_PKG_VERSION"),
        config: resolved,
        rows: rows.len(),
        rows_with_errors,
        wall_time_secs: wall,
    };
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", manifest_path.display()))?;

    // Also keep the raw rows available as JSON next to the manifest.
    let json_path = derived_path(&args.out, "rows.json");
    std::fs::write(&json_path, reports_to_json(&rows)?)
        .with_context(|| format!("writing {}", json_path.display()))?;

    eprintln!(
        "fig2: {} rows ({} with errors) in {:.1}s -> {}",
        rows.len(),
        rows_with_errors,
        wall,
        args.out.display()
    );
    Ok(if rows_with_errors > 0 { Outcome::PartialFailure } else { Outcome::Clean })
}

fn derived_path(base: &Path, suffix: &str) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    base.with_file_name(format!("{stem}.{suffix}"))
}

// ---------------------------------------------------------------------------
// graph
// ---------------------------------------------------------------------------

pub fn graph_build(args: GraphBuildArgs) -> anyhow::Result<Outcome> {
    let graph = if let (Some(n), Some(w)) = (args.coupled_n, args.coupled_w) {
        if args.m0 % n != 0 {
            bail!("--m0 must be divisible by --coupled-n");
        }
        let kappa = args.m0 / n;
        let m = n + w - 1;
        if args.m1 % m != 0 {
            bail!("--m1 must spread evenly over the {m} counter positions");
        }
        let beta = (args.m1 / m) as f64 / kappa as f64;
        let params = EnsembleParams::from_beta(args.k, beta, 0.0, 1)?;
        build_coupled(kappa, &params, n, w, args.seed)?
    } else if let (Some(m2), Some(k2)) = (args.m2, args.k2) {
        build_two_layer(args.m0, args.m1, m2, args.k, k2, args.d1, args.d2, args.seed)?
    } else {
        build_single_layer(args.m0, args.m1, args.k, args.seed)?
    };
    emit(args.out.as_deref(), &graph.to_text())?;
    Ok(Outcome::Clean)
}

pub fn graph_info(args: GraphInfoArgs) -> anyhow::Result<Outcome> {
    let text = std::fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let graph = BraidGraph::from_text(&text)?;
    // Round-trip check while we are at it.
    let reparsed = BraidGraph::from_text(&graph.to_text())?;
    anyhow::ensure!(graph == reparsed, "serialization round trip mismatch");
    println!("layers: {}", graph.layer_count());
    println!("flows: {}", graph.flow_count());
    for (i, layer) in graph.layers().iter().enumerate() {
        println!(
            "layer {}: k={} flows={} counters={} edges={} depth={}",
            i + 1,
            layer.k(),
            layer.flow_count(),
            layer.counter_count(),
            layer.edges().len(),
            graph.depths()[i]
        );
    }
    if let Some(layout) = graph.coupled() {
        println!(
            "coupled: N={} w={} kappa={} counters/position={}",
            layout.chain_length, layout.w, layout.kappa, layout.counters_per_position
        );
    }
    Ok(Outcome::Clean)
}
