use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match apfx::cli::Cli::try_parse() {
        Ok(cli) => apfx::cli::run(cli),
        Err(e) => {
            let _ = e.print();
            // Usage errors count as config errors; help and version are not errors.
            ExitCode::from(if e.use_stderr() { 1 } else { 0 })
        }
    }
}
