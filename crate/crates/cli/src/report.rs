//! Report documents and their schema validators. Every report carries
//! `tool_version`, `seed` and `tolerance`.

use serde::{Deserialize, Serialize};

use steercert_core::measurements::PovmValidation;
use steercert_core::povm::ExtremalityReport;
use steercert_core::selftest::CertReport;
use steercert_core::steering::LhsStrategy;
use steercert_core::wire::{PovmFile, WireComplex};

use crate::config::PovmKind;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsReport {
    pub tool_version: String,
    pub seed: u64,
    pub tolerance: f64,
    pub d: usize,
    pub alpha: Vec<f64>,
    pub gamma: f64,
    /// δ_k for k = 0..d−1 as [re, im]; δ_0 does not enter the functional.
    pub delta: Vec<WireComplex>,
    pub beta_q: f64,
    pub beta_l_exact: f64,
    pub beta_l_paper_upper: f64,
    /// beta_q − beta_l_exact.
    pub gap: f64,
    pub argmax_strategy: LhsStrategy,
    pub paper_argmax: LhsStrategy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyReport {
    pub tool_version: String,
    pub seed: u64,
    pub tolerance: f64,
    pub d: usize,
    pub alpha: Vec<f64>,
    pub certification: CertReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PovmBuildReport {
    pub tool_version: String,
    pub seed: u64,
    pub tolerance: f64,
    pub kind: PovmKind,
    pub d: usize,
    pub alpha: Option<Vec<f64>>,
    pub xi: Option<Vec<i64>>,
    pub povm: PovmFile,
    pub validation: PovmValidation,
    pub extremality: ExtremalityReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PovmCheckReport {
    pub tool_version: String,
    pub seed: u64,
    pub tolerance: f64,
    pub file: String,
    pub validation: PovmValidation,
    pub extremality: ExtremalityReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomnessCliReport {
    pub tool_version: String,
    pub seed: u64,
    pub tolerance: f64,
    pub d: usize,
    pub alpha: Vec<f64>,
    pub povm: String,
    pub outcome_probs: Vec<f64>,
    pub guessing_probability: f64,
    pub min_entropy_bits: f64,
    pub uniform: bool,
    /// 2·log₂d, the most a d²-outcome measurement can give.
    pub max_bits: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bell3Report {
    pub tool_version: String,
    pub seed: u64,
    pub tolerance: f64,
    pub value: f64,
    pub threshold: f64,
    /// value − threshold.
    pub gap: f64,
    pub state_schmidt: Vec<f64>,
    pub iterations: usize,
    pub restarts: usize,
    pub restart_values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRow {
    pub index: usize,
    pub theta: f64,
    pub beta_l: f64,
    /// d − beta_l.
    pub gap: f64,
    pub tool_version: String,
    pub seed: u64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepReport {
    pub tool_version: String,
    pub seed: u64,
    pub tolerance: f64,
    pub d: usize,
    pub rows: Vec<SweepRow>,
}

/// Slack for consistency checks between reported fields.
const CONSISTENCY: f64 = 1e-12;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= CONSISTENCY * a.abs().max(b.abs()).max(1.0)
}

fn check(cond: bool, what: &str) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(format!("schema check failed: {what}"))
    }
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, String> {
    serde_json::from_str(text).map_err(|e| format!("schema check failed: {e}"))
}

/// Validates a report emitted by `subcommand`, as produced by `run`.
pub fn validate_report(subcommand: &str, text: &str) -> Result<(), String> {
    match subcommand {
        "bounds" => {
            let r: BoundsReport = parse(text)?;
            check(r.alpha.len() == r.d && r.delta.len() == r.d, "alpha and delta have d entries")?;
            check(r.beta_q == r.d as f64, "beta_q equals d")?;
            check(close(r.gap, r.beta_q - r.beta_l_exact), "gap = beta_q - beta_l_exact")
        }
        "certify" => {
            let r: CertifyReport = parse(text)?;
            check(r.alpha.len() == r.d, "alpha has d entries")?;
            let c = &r.certification;
            check(
                (c.verdict == steercert_core::selftest::Verdict::Certified) == c.failing_checks.is_empty(),
                "verdict agrees with failing_checks",
            )
        }
        "povm build" => {
            let r: PovmBuildReport = parse(text)?;
            check(r.povm.dim == r.d && r.povm.elements.len() == r.d * r.d, "d² elements of dimension d")
        }
        "povm check" => {
            let r: PovmCheckReport = parse(text)?;
            check(r.extremality.element_count == r.extremality.element_ranks.len(), "one rank per element")
        }
        "randomness" => {
            let r: RandomnessCliReport = parse(text)?;
            let g = r.outcome_probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            check(g == r.guessing_probability, "guessing_probability is the largest outcome probability")?;
            check(close(r.min_entropy_bits, -g.log2()), "min_entropy_bits = -log2(guessing_probability)")
        }
        "bell3" => {
            let r: Bell3Report = parse(text)?;
            check(close(r.gap, r.value - r.threshold), "gap = value - threshold")?;
            check(r.restart_values.len() == r.restarts, "one value per restart")
        }
        "sweep" => {
            let r: SweepReport = parse(text)?;
            validate_rows(r.d, &r.rows)
        }
        other => Err(format!("no schema for subcommand {other:?}")),
    }
}

fn validate_rows(d: usize, rows: &[SweepRow]) -> Result<(), String> {
    for (i, row) in rows.iter().enumerate() {
        check(row.index == i, "rows ordered by index")?;
        check(close(row.gap, d as f64 - row.beta_l), "gap = d - beta_l")?;
    }
    Ok(())
}

/// Validates sweep CSV output.
pub fn validate_sweep_csv(d: usize, text: &str) -> Result<(), String> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let rows = reader
        .deserialize::<SweepRow>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| format!("schema check failed: {e}"))?;
    validate_rows(d, &rows)
}
