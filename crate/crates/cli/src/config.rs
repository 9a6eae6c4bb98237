//! Optional JSON config file and worker-pool setup.
//!
//! Precedence: explicit flags override config-file values, which override
//! built-in defaults.

use std::path::Path;

use anyhow::Context;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub workers: Option<usize>,
    pub tol_uncoupled: Option<f64>,
    pub tol_coupled: Option<f64>,
    pub max_sweeps: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Install the global rayon pool. Reads `CB_WORKERS` when no explicit count
/// is given; silently keeps the default pool if one is already installed.
pub fn init_workers(explicit: Option<usize>) {
    let count = explicit.or_else(|| {
        std::env::var("CB_WORKERS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(count) = count {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(count.max(1)).build_global();
    }
}
