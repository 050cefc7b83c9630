use std::path::Path;
use std::process::ExitCode;

use qsnash_cli::{cmd_oracle, cmd_run, describe, load_config, CliError};

const USAGE: &str = "\
qsnash — mixed Nash equilibrium particle solvers

USAGE:
  qsnash run <config.toml>       run the configured algorithm / sweep
  qsnash oracle <config.toml>    solve the grid fixed point (+ optional
                                 density-flow trace)
  qsnash validate <config.toml>  parse and validate the config only

ENVIRONMENT:
  QSNASH_WORKERS    overrides the configured sweep worker count

EXIT CODES:
  0  success
  1  configuration error
  2  numerical failure
";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qsnash: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(args: &[String]) -> Result<(), CliError> {
    let (cmd, path) = match args {
        [cmd, path] => (cmd.as_str(), Path::new(path)),
        [help] if help == "--help" || help == "-h" => {
            print!("{USAGE}");
            return Ok(());
        }
        _ => {
            return Err(CliError::config(format!(
                "expected a subcommand and a config path\n\n{USAGE}"
            )))
        }
    };
    match cmd {
        "run" => {
            let cfg = load_config(path)?;
            let artifacts = cmd_run(&cfg)?;
            println!(
                "wrote {} data rows to {} (summary: {})",
                artifacts.data_rows,
                artifacts.rows_path.display(),
                artifacts.summary_path.display()
            );
            Ok(())
        }
        "oracle" => {
            let cfg = load_config(path)?;
            let artifacts = cmd_oracle(&cfg)?;
            println!(
                "fixed point converged in {} iterations (residual {:.3e}); densities: {}",
                artifacts.iterations,
                artifacts.residual,
                artifacts.densities_path.display()
            );
            if let Some(trace) = artifacts.trace_path {
                println!("free-energy trace: {}", trace.display());
            }
            Ok(())
        }
        "validate" => {
            let cfg = load_config(path)?;
            println!("ok: {}", describe(&cfg));
            Ok(())
        }
        other => Err(CliError::config(format!(
            "unknown subcommand `{other}`\n\n{USAGE}"
        ))),
    }
}
