//! Command-line front end: argument parsing, subcommand dispatch and report
//! emission.

pub mod config;
pub mod report;
pub mod run;

pub use config::{parse_args, CliError, Command, Format, PovmKind, PovmSource, RunConfig};
pub use report::{validate_report, validate_sweep_csv, TOOL_VERSION};
pub use run::{run, RunOutput};
