//! Threshold report rows and their CSV/JSON renderings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One `(k, beta)` row of a threshold sweep. Missing values mean the
/// corresponding computation failed; `error` carries why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub k: u32,
    pub beta: f64,
    /// Coupled configuration the coupled columns refer to.
    pub n: usize,
    pub w: usize,
    pub eps_bp: Option<f64>,
    pub eps_bp_coupled: Option<f64>,
    pub eps_area: Option<f64>,
    pub eps_potential: Option<f64>,
    pub eps_modified: Option<f64>,
    /// `eps_area - eps_bp`.
    pub gap_uncoupled: Option<f64>,
    /// `eps_area - eps_bp_coupled`.
    pub gap_coupled: Option<f64>,
    pub error: Option<String>,
    /// Soft observations (e.g. ordering anomalies) that do not fail the cell.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

/// Column order of the wide CSV rendering.
pub const CSV_HEADER: &str =
    "k,beta,N,w,eps_bp,eps_bp_coupled,eps_area,eps_potential,eps_modified,gap_uncoupled,gap_coupled";

/// Column order of the long (plotting-friendly) CSV rendering.
pub const LONG_CSV_HEADER: &str = "k,beta,N,w,quantity,value";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ThresholdReport {
    pub fn new(k: u32, beta: f64, n: usize, w: usize) -> Self {
        Self {
            k,
            beta,
            n,
            w,
            eps_bp: None,
            eps_bp_coupled: None,
            eps_area: None,
            eps_potential: None,
            eps_modified: None,
            gap_uncoupled: None,
            gap_coupled: None,
            error: None,
            note: None,
        }
    }

    /// Derive the gap columns from the thresholds present.
    pub fn fill_gaps(&mut self) {
        self.gap_uncoupled = match (self.eps_area, self.eps_bp) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        };
        self.gap_coupled = match (self.eps_area, self.eps_bp_coupled) {
            (Some(a), Some(c)) => Some(a - c),
            _ => None,
        };
    }

    /// Wide CSV row matching [`CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.k,
            self.beta,
            self.n,
            self.w,
            opt(self.eps_bp),
            opt(self.eps_bp_coupled),
            opt(self.eps_area),
            opt(self.eps_potential),
            opt(self.eps_modified),
            opt(self.gap_uncoupled),
            opt(self.gap_coupled),
        )
    }

    /// Long-format rows, one `(quantity, value)` pair per present field.
    pub fn long_csv_rows(&self) -> Vec<String> {
        let fields = [
            ("eps_bp", self.eps_bp),
            ("eps_bp_coupled", self.eps_bp_coupled),
            ("eps_area", self.eps_area),
            ("eps_potential", self.eps_potential),
            ("eps_modified", self.eps_modified),
            ("gap_uncoupled", self.gap_uncoupled),
            ("gap_coupled", self.gap_coupled),
        ];
        fields
            .iter()
            .filter_map(|(name, v)| {
                v.map(|x| format!("{},{},{},{},{name},{x}", self.k, self.beta, self.n, self.w))
            })
            .collect()
    }
}

/// JSON array of report rows.
pub fn reports_to_json(reports: &[ThresholdReport]) -> Result<String> {
    serde_json::to_string_pretty(reports)
        .map_err(|e| Error::Parse(format!("report serialization failed: {e}")))
}

/// Parse what [`reports_to_json`] produced.
pub fn reports_from_json(text: &str) -> Result<Vec<ThresholdReport>> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("bad report JSON: {e}")))
}
