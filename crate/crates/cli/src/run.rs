//! Subcommand dispatch.

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use steercert_core::bell3::{seesaw_optimize, BellFunctional3};
use steercert_core::linalg::DensityMatrix;
use steercert_core::measurements::{validate_povm, Povm};
use steercert_core::povm::{
    covariant_povm, generic_fiducial, is_extremal_rank_one, partial_povm, PhaseTable, DEFAULT_RANK_TOL,
};
use steercert_core::randomness::randomness_report;
use steercert_core::selftest::{certify, Verdict};
use steercert_core::states::{schmidt_state, SchmidtVector};
use steercert_core::steering::{
    functional_coefficients, lhs_bound_exact, lhs_bound_paper_upper, violation_gap,
};
use steercert_core::wire::{complex_to_wire, PovmFile, RealizationFile};

use crate::config::{Command, Format, PovmKind, PovmSource, RunConfig, EXIT_USAGE};
use crate::report::{
    validate_report, validate_sweep_csv, Bell3Report, BoundsReport, CertifyReport, PovmBuildReport, PovmCheckReport,
    RandomnessCliReport, SweepReport, SweepRow, TOOL_VERSION,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_IO: u8 = 3;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "STEERCERT_THREADS";

/// Command-line α may deviate from unit norm by this much (typed decimals
/// such as 0.7071); it is renormalized before use.
pub const ALPHA_NORM_SLACK: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub code: u8,
    pub stdout: String,
    pub stderr: String,
}

enum Failure {
    Usage(String),
    Io(String),
}

impl From<steercert_core::Error> for Failure {
    fn from(e: steercert_core::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

struct Emitted {
    code: u8,
    text: String,
    notes: Vec<String>,
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn thread_count() -> Result<Option<usize>, Failure> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Failure::Usage(format!("{THREADS_ENV}: expected a positive integer, got {v:?}"))),
        },
    }
}

/// Executes `config`. The report goes to `--output` when given, otherwise to
/// `stdout`.
pub fn run(config: &RunConfig) -> RunOutput {
    let result = thread_count().and_then(|threads| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            builder = builder.num_threads(n);
        }
        let pool = builder.build().map_err(|e| Failure::Io(e.to_string()))?;
        pool.install(|| dispatch(config))
    });
    match result {
        Err(Failure::Usage(m)) => RunOutput { code: EXIT_USAGE, stdout: String::new(), stderr: format!("error: {m}\n") },
        Err(Failure::Io(m)) => RunOutput { code: EXIT_IO, stdout: String::new(), stderr: format!("error: {m}\n") },
        Ok(e) => {
            let mut stderr: String = e.notes.iter().map(|n| format!("{n}\n")).collect();
            let stdout = match &config.output {
                Some(path) => match fs::write(path, &e.text) {
                    Ok(()) => String::new(),
                    Err(err) => {
                        stderr.push_str(&format!("error: writing {}: {err}\n", path.display()));
                        return RunOutput { code: EXIT_IO, stdout: String::new(), stderr };
                    }
                },
                None => e.text,
            };
            RunOutput { code: e.code, stdout, stderr }
        }
    }
}

fn schmidt_vector(config: &RunConfig) -> Result<SchmidtVector, Failure> {
    let d = config.d.expect("subcommand takes --d");
    let Some(alpha) = &config.alpha else {
        return Ok(SchmidtVector::uniform(d)?);
    };
    let norm = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > ALPHA_NORM_SLACK {
        return Err(Failure::Usage(format!("--alpha: norm {norm} is not 1 within {ALPHA_NORM_SLACK}")));
    }
    Ok(SchmidtVector::new(alpha.iter().map(|a| a / norm).collect())?)
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("reading {}: {e}", path.display())))
}

/// Loads a POVM from a bare POVM file or from a `povm build` report.
fn load_povm(path: &Path) -> Result<Povm, Failure> {
    let text = read_file(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let inner = value.get("povm").cloned().unwrap_or(value);
    let file: PovmFile =
        serde_json::from_value(inner).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(file.to_povm()?)
}

fn checked(subcommand: &str, text: String) -> Result<String, Failure> {
    validate_report(subcommand, &text).map_err(Failure::Usage)?;
    Ok(text)
}

fn dispatch(c: &RunConfig) -> Result<Emitted, Failure> {
    let ok = |text| Emitted { code: EXIT_OK, text, notes: Vec::new() };
    match &c.command {
        Command::Bounds => {
            let sv = schmidt_vector(c)?;
            let f = functional_coefficients(&sv);
            let exact = lhs_bound_exact(&f);
            let paper = lhs_bound_paper_upper(&f, c.restarts, c.seed);
            let gap = violation_gap(&f);
            let report = BoundsReport {
                tool_version: TOOL_VERSION.into(),
                seed: c.seed,
                tolerance: c.tolerance,
                d: sv.d(),
                alpha: sv.alpha().to_vec(),
                gamma: f.gamma(),
                delta: f.delta().iter().copied().map(complex_to_wire).collect(),
                beta_q: gap.beta_q,
                beta_l_exact: exact.value,
                beta_l_paper_upper: paper.value,
                gap: gap.gap,
                argmax_strategy: exact.strategy,
                paper_argmax: paper.strategy,
            };
            Ok(ok(checked("bounds", to_json(&report))?))
        }
        Command::Certify { realization } => {
            let text = read_file(realization)?;
            let (r, sv) = RealizationFile::from_json(&text)?.to_realization()?;
            let cert = certify(&functional_coefficients(&sv), &r, c.tolerance)?;
            let failed = cert.verdict == Verdict::Failed;
            let notes = cert.failing_checks.iter().map(|f| format!("failed check: {f}")).collect();
            let report = CertifyReport {
                tool_version: TOOL_VERSION.into(),
                seed: c.seed,
                tolerance: c.tolerance,
                d: sv.d(),
                alpha: sv.alpha().to_vec(),
                certification: cert,
            };
            Ok(Emitted {
                code: if failed { EXIT_FAILED } else { EXIT_OK },
                text: checked("certify", to_json(&report))?,
                notes,
            })
        }
        Command::PovmBuild { kind, xi } => {
            let d = c.d.expect("povm build takes --d");
            let (p, alpha, xi) = match kind {
                PovmKind::Covariant => (covariant_povm(d, &generic_fiducial(d, c.seed)?)?, None, None),
                PovmKind::Partial => {
                    let sv = schmidt_vector(c)?;
                    let table = match xi {
                        Some(x) => PhaseTable::new(d, x.clone())?,
                        None => PhaseTable::standard(d)?,
                    };
                    let p = partial_povm(&sv, &table)?;
                    (p, Some(sv.alpha().to_vec()), Some(table.xi().to_vec()))
                }
            };
            let validation = validate_povm(&p, c.tolerance);
            let extremality = is_extremal_rank_one(&p, DEFAULT_RANK_TOL);
            let code = if validation.passed && extremality.extremal { EXIT_OK } else { EXIT_FAILED };
            let report = PovmBuildReport {
                tool_version: TOOL_VERSION.into(),
                seed: c.seed,
                tolerance: c.tolerance,
                kind: *kind,
                d,
                alpha,
                xi,
                povm: PovmFile::from_povm(&p),
                validation,
                extremality,
            };
            Ok(Emitted { code, text: checked("povm build", to_json(&report))?, notes: Vec::new() })
        }
        Command::PovmCheck { file } => {
            let p = load_povm(file)?;
            let validation = validate_povm(&p, c.tolerance);
            let notes = validation.failing.iter().map(|f| format!("failed check: {f}")).collect();
            let code = if validation.passed { EXIT_OK } else { EXIT_FAILED };
            let report = PovmCheckReport {
                tool_version: TOOL_VERSION.into(),
                seed: c.seed,
                tolerance: c.tolerance,
                file: file.display().to_string(),
                extremality: is_extremal_rank_one(&p, DEFAULT_RANK_TOL),
                validation,
            };
            Ok(Emitted { code, text: checked("povm check", to_json(&report))?, notes })
        }
        Command::Randomness { povm } => {
            let sv = schmidt_vector(c)?;
            let d = sv.d();
            let (p, source) = match povm {
                PovmSource::Covariant => (covariant_povm(d, &generic_fiducial(d, c.seed)?)?, "builtin:covariant".to_string()),
                PovmSource::Partial => (partial_povm(&sv, &PhaseTable::standard(d)?)?, "builtin:partial".to_string()),
                PovmSource::File(path) => (load_povm(path)?, path.display().to_string()),
            };
            let rho: DensityMatrix = schmidt_state(&sv).reduced(&[1])?;
            let r = randomness_report(&p, &rho, c.tolerance)?;
            let report = RandomnessCliReport {
                tool_version: TOOL_VERSION.into(),
                seed: c.seed,
                tolerance: c.tolerance,
                d,
                alpha: sv.alpha().to_vec(),
                povm: source,
                outcome_probs: r.outcome_probs,
                guessing_probability: r.guessing_probability,
                min_entropy_bits: r.min_entropy_bits,
                uniform: r.uniform,
                max_bits: 2.0 * (d as f64).log2(),
            };
            Ok(ok(checked("randomness", to_json(&report))?))
        }
        Command::Bell3 { iters } => {
            let res = seesaw_optimize(c.seed, c.restarts, *iters)?;
            let threshold = BellFunctional3::new().bound;
            let report = Bell3Report {
                tool_version: TOOL_VERSION.into(),
                seed: c.seed,
                tolerance: c.tolerance,
                value: res.value,
                threshold,
                gap: res.value - threshold,
                state_schmidt: res.state_schmidt,
                iterations: res.iterations,
                restarts: c.restarts,
                restart_values: res.restart_values,
            };
            Ok(ok(checked("bell3", to_json(&report))?))
        }
        Command::Sweep { theta_grid } => {
            let d = c.d.expect("sweep takes --d");
            let rows = sweep_rows(d, *theta_grid, c)?;
            match c.format {
                Format::Json => {
                    let report = SweepReport {
                        tool_version: TOOL_VERSION.into(),
                        seed: c.seed,
                        tolerance: c.tolerance,
                        d,
                        rows,
                    };
                    Ok(ok(checked("sweep", to_json(&report))?))
                }
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    for row in &rows {
                        w.serialize(row).map_err(|e| Failure::Io(e.to_string()))?;
                    }
                    let bytes = w.into_inner().map_err(|e| Failure::Io(e.to_string()))?;
                    let text = String::from_utf8(bytes).expect("csv output is UTF-8");
                    validate_sweep_csv(d, &text).map_err(Failure::Usage)?;
                    Ok(ok(text))
                }
            }
        }
    }
}

/// α(θ) = (cos θ, sin θ/√(d−1), …, sin θ/√(d−1)) on the midpoint grid
/// θ_i = (i + ½)·(π/2)/N, which avoids the product-state endpoints.
pub fn sweep_alpha(d: usize, theta: f64) -> Vec<f64> {
    let rest = theta.sin() / ((d - 1) as f64).sqrt();
    std::iter::once(theta.cos()).chain(std::iter::repeat_n(rest, d - 1)).collect()
}

fn sweep_rows(d: usize, n: usize, c: &RunConfig) -> Result<Vec<SweepRow>, Failure> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let theta = (i as f64 + 0.5) * FRAC_PI_2 / n as f64;
            let sv = SchmidtVector::new(sweep_alpha(d, theta))?;
            let beta_l = lhs_bound_exact(&functional_coefficients(&sv)).value;
            Ok(SweepRow {
                index: i,
                theta,
                beta_l,
                gap: d as f64 - beta_l,
                tool_version: TOOL_VERSION.into(),
                seed: c.seed,
                tolerance: c.tolerance,
            })
        })
        .collect()
}
