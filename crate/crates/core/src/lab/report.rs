//! Machine-readable convergence reports.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::fk_solver::Probe;
use crate::nonlinearity::Certificate;
use crate::stats::Verdict;
use crate::symbols::{DominationReport, HwVerdict};

pub const REPORT_SCHEMA: u32 = 1;

/// A regime the run can speak to, and whether its gates passed.
/// `claimed` is never true when `gates_passed` is false.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeClaim {
    pub regime: String,
    pub gates_passed: bool,
    pub claimed: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HwEntry {
    /// `None` for the limit symbol.
    pub n: Option<usize>,
    pub verdict: HwVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDiagnostics {
    /// `sup |pₙ(x, ξ) − p(x, ξ)|` over sampled `x` and a radial `ξ` grid.
    pub symbol_distances: Vec<f64>,
    pub symbol_distance_verdict: Verdict,
    /// Sup-distance of the coefficient fields to their limits; empty for constant sequences.
    pub coefficient_distances: Vec<f64>,
    pub hartman_wintner: Vec<HwEntry>,
    pub domination: Option<DominationReport>,
    pub uniform_density_bound: Option<bool>,
    pub monotonicity: Certificate,
    pub h2_nonnegative: bool,
    pub bounded_data: bool,
    pub max_boundary_mass: f64,
    pub max_exit_fraction: f64,
    pub regimes: Vec<RegimeClaim>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseMetric {
    pub probes: Vec<Probe>,
    /// `[member][probe]`.
    pub gaps: Vec<Vec<f64>>,
    /// Largest Monte Carlo standard error among the two solutions at each probe, `[member][probe]`.
    pub std_errors: Option<Vec<Vec<f64>>>,
    pub verdicts: Vec<Verdict>,
    pub verdict: Verdict,
    pub final_gap: f64,
    pub final_gap_threshold: Option<f64>,
    pub final_gap_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L1Metric {
    pub times: Vec<f64>,
    pub half_width: f64,
    /// `[member][time]`.
    pub values: Vec<Vec<f64>>,
    pub verdicts: Vec<Verdict>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakL2Metric {
    pub bank: Vec<String>,
    /// Signed pairings `[member][test function]`.
    pub values: Vec<Vec<f64>>,
    pub verdicts: Vec<Verdict>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub schema: u32,
    pub name: String,
    pub config_hash: String,
    pub master_seed: u64,
    /// Unix seconds; excluded from [`ConvergenceReport::content_hash`].
    pub generated_at: Option<u64>,
    pub members: Vec<usize>,
    pub parameters: Vec<Vec<f64>>,
    pub limit_probe_values: Vec<f64>,
    pub solver_iterations: Vec<usize>,
    pub pointwise: Option<PointwiseMetric>,
    pub l1_compact: Option<L1Metric>,
    pub weak_l2: Option<WeakL2Metric>,
    pub gates: GateDiagnostics,
    pub metric_consistency: bool,
    pub warnings: Vec<String>,
    pub pass: bool,
}

/// Combines per-component verdicts: any violation wins, all-flat stays flat.
pub fn combine(verdicts: &[Verdict]) -> Verdict {
    if verdicts.contains(&Verdict::Violated) {
        Verdict::Violated
    } else if verdicts.iter().all(|v| *v == Verdict::Flat) {
        Verdict::Flat
    } else {
        Verdict::Decreasing
    }
}

impl ConvergenceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| crate::Error::Config(e.to_string()))
    }

    /// JSON with the timestamp cleared.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.generated_at = None;
        c.to_json()
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn verdicts(&self) -> Vec<(&'static str, Verdict)> {
        let mut out = Vec::new();
        if let Some(p) = &self.pointwise {
            out.push(("pointwise", p.verdict));
        }
        if let Some(l) = &self.l1_compact {
            out.push(("l1_compact", l.verdict));
        }
        if let Some(w) = &self.weak_l2 {
            out.push(("weak_l2", w.verdict));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combining_verdicts() {
        use Verdict::*;
        assert_eq!(combine(&[Flat, Flat]), Flat);
        assert_eq!(combine(&[Flat, Decreasing]), Decreasing);
        assert_eq!(combine(&[Decreasing, Violated]), Violated);
    }
}
