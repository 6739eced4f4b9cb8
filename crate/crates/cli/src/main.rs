use std::io::Write;
use std::process::ExitCode;

use anyhow::Result;
use steercert::{parse_args, run};

fn main() -> Result<ExitCode> {
    let config = match parse_args(std::env::args_os()) {
        Ok(c) => c,
        Err(e) if e.code == 0 => {
            print!("{e}");
            return Ok(ExitCode::SUCCESS);
        }
        Err(e) => {
            eprint!("{e}");
            if !e.message.ends_with('\n') {
                eprintln!();
            }
            return Ok(ExitCode::from(e.code));
        }
    };
    let out = run(&config);
    std::io::stdout().write_all(out.stdout.as_bytes())?;
    std::io::stderr().write_all(out.stderr.as_bytes())?;
    Ok(ExitCode::from(out.code))
}
