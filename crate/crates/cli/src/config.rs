//! Argument parsing and validation into a [`RunConfig`].

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub const DEFAULT_TOLERANCE: f64 = 1e-7;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_RESTARTS: usize = 32;

/// Exit code for usage errors.
pub const EXIT_USAGE: u8 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PovmKind {
    Covariant,
    Partial,
}

#[derive(Parser, Debug)]
#[command(name = "steercert", version, about = "Steering bounds, self-test certification, extremal POVMs and randomness")]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
    /// Numerical tolerance for pass/fail decisions.
    #[arg(long, global = true, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Restarts for randomized optimizers.
    #[arg(long, global = true, default_value_t = DEFAULT_RESTARTS)]
    restarts: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum CliCommand {
    /// Functional coefficients and the quantum and LHS bounds.
    Bounds {
        #[arg(long)]
        d: usize,
        /// Schmidt coefficients as a JSON array; defaults to uniform.
        #[arg(long)]
        alpha: Option<String>,
    },
    /// Self-test checks on a realization file.
    Certify {
        #[arg(long)]
        realization: PathBuf,
    },
    /// Build or check an extremal POVM.
    Povm {
        #[command(subcommand)]
        action: CliPovmAction,
    },
    /// Guessing probability and min-entropy of Bob's outcome.
    Randomness {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        alpha: Option<String>,
        /// `builtin:covariant`, `builtin:partial` or a POVM file.
        #[arg(long, default_value = "builtin:covariant")]
        povm: String,
    },
    /// See-saw optimization of the qutrit Bell functional.
    Bell3 {
        /// Sweeps per restart.
        #[arg(long, default_value_t = 1000)]
        iters: usize,
    },
    /// Exact LHS bound along a one-parameter family of Schmidt vectors.
    Sweep {
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 90)]
        theta_grid: usize,
    },
}

#[derive(Subcommand, Debug)]
enum CliPovmAction {
    Build {
        #[arg(long, value_enum)]
        kind: PovmKind,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        alpha: Option<String>,
        /// Phase exponents as a JSON integer array; defaults to the standard table.
        #[arg(long)]
        xi: Option<String>,
    },
    Check {
        file: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum PovmSource {
    Covariant,
    Partial,
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Bounds,
    Certify { realization: PathBuf },
    PovmBuild { kind: PovmKind, xi: Option<Vec<i64>> },
    PovmCheck { file: PathBuf },
    Randomness { povm: PovmSource },
    Bell3 { iters: usize },
    Sweep { theta_grid: usize },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Bounds => "bounds",
            Command::Certify { .. } => "certify",
            Command::PovmBuild { .. } => "povm build",
            Command::PovmCheck { .. } => "povm check",
            Command::Randomness { .. } => "randomness",
            Command::Bell3 { .. } => "bell3",
            Command::Sweep { .. } => "sweep",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub d: Option<usize>,
    /// As given on the command line; normalized when the run starts.
    pub alpha: Option<Vec<f64>>,
    pub tolerance: f64,
    pub seed: u64,
    pub restarts: usize,
    pub format: Format,
    pub output: Option<PathBuf>,
}

/// A parse failure with its exit code. Help and version requests carry
/// code 0 and print to stdout.
#[derive(Clone, Debug, PartialEq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn parse_alpha(raw: &str, d: usize) -> Result<Vec<f64>, CliError> {
    let alpha: Vec<f64> = serde_json::from_str(raw)
        .map_err(|e| CliError::usage(format!("--alpha: malformed JSON array ({e})")))?;
    if alpha.len() != d {
        return Err(CliError::usage(format!("--alpha: has {} entries but --d is {d}", alpha.len())));
    }
    if let Some(i) = alpha.iter().position(|a| !a.is_finite() || *a <= 0.0) {
        return Err(CliError::usage(format!("--alpha: α_{i} must be positive, got {}", alpha[i])));
    }
    Ok(alpha)
}

fn parse_xi(raw: &str) -> Result<Vec<i64>, CliError> {
    serde_json::from_str(raw).map_err(|e| CliError::usage(format!("--xi: malformed JSON integer array ({e})")))
}

fn check_d(d: usize) -> Result<usize, CliError> {
    if d < 2 {
        return Err(CliError::usage(format!("--d: must be at least 2, got {d}")));
    }
    Ok(d)
}

/// Parses `argv` (including the program name) into a validated config.
pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| {
        let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
        CliError { code, message: e.to_string() }
    })?;
    if !(cli.tolerance.is_finite() && cli.tolerance > 0.0) {
        return Err(CliError::usage(format!("--tolerance: must be positive, got {}", cli.tolerance)));
    }
    if cli.restarts < 1 {
        return Err(CliError::usage("--restarts: must be at least 1"));
    }
    let mut d = None;
    let mut alpha = None;
    let mut with_alpha = |dv: usize, raw: Option<String>| -> Result<(), CliError> {
        let dv = check_d(dv)?;
        d = Some(dv);
        alpha = raw.map(|r| parse_alpha(&r, dv)).transpose()?;
        Ok(())
    };
    let command = match cli.command {
        CliCommand::Bounds { d, alpha } => {
            with_alpha(d, alpha)?;
            Command::Bounds
        }
        CliCommand::Certify { realization } => Command::Certify { realization },
        CliCommand::Povm { action: CliPovmAction::Build { kind, d, alpha, xi } } => {
            with_alpha(d, alpha)?;
            Command::PovmBuild { kind, xi: xi.map(|x| parse_xi(&x)).transpose()? }
        }
        CliCommand::Povm { action: CliPovmAction::Check { file } } => Command::PovmCheck { file },
        CliCommand::Randomness { d, alpha, povm } => {
            with_alpha(d, alpha)?;
            let povm = match povm.as_str() {
                "builtin:covariant" => PovmSource::Covariant,
                "builtin:partial" => PovmSource::Partial,
                other if other.starts_with("builtin:") => {
                    return Err(CliError::usage(format!(
                        "--povm: unknown builtin {other:?}; use builtin:covariant or builtin:partial"
                    )))
                }
                path => PovmSource::File(PathBuf::from(path)),
            };
            Command::Randomness { povm }
        }
        CliCommand::Bell3 { iters } => {
            if iters < 1 {
                return Err(CliError::usage("--iters: must be at least 1"));
            }
            Command::Bell3 { iters }
        }
        CliCommand::Sweep { d, theta_grid } => {
            with_alpha(d, None)?;
            if theta_grid < 1 {
                return Err(CliError::usage("--theta-grid: must be at least 1"));
            }
            Command::Sweep { theta_grid }
        }
    };
    if cli.format == Format::Csv && !matches!(command, Command::Sweep { .. }) {
        return Err(CliError::usage("--format: csv is only available for sweep"));
    }
    Ok(RunConfig {
        command,
        d,
        alpha,
        tolerance: cli.tolerance,
        seed: cli.seed,
        restarts: cli.restarts,
        format: cli.format,
        output: cli.output,
    })
}
