use clap::Parser;
use std::process::ExitCode;

use polaron_harness::commands::{run, Command};
use polaron_harness::config::{split_args, ConfigError, RunConfig};

/// Pekar polaron experiments: ground state, effective mass and dynamics.
#[derive(Parser)]
#[command(name = "polaron", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Config path (TOML, or a run manifest to replay) followed by `--key value` overrides.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    rest: Vec<String>,
}

fn usage_error(e: &ConfigError) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": { "kind": "config", "key": e.key, "message": e.message } }));
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(msg) = polaron_harness::init_threads() {
        return usage_error(&ConfigError::new(polaron_harness::THREADS_ENV, msg));
    }
    let cfg = match split_args(&cli.rest).and_then(|(path, overrides)| RunConfig::load(path.as_deref(), &overrides)) {
        Ok(c) => c,
        Err(e) => return usage_error(&e),
    };
    match run(cli.command, &cfg) {
        Ok(out) => {
            if cli.command != Command::Check {
                for l in &out.checks {
                    println!("{l}");
                }
            }
            println!("manifest: {}", out.manifest.display());
            if out.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.record() }));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
