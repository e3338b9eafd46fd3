use std::process::ExitCode;

use clap::Parser;
use planner::cli::{run, Cli};
use tracing_subscriber::EnvFilter;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    // clap exits with status 2 and usage text on bad flags
    let cli = Cli::parse();
    match run(cli) {
        Ok(Some(report)) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.body()).expect("error serializes"));
            ExitCode::from(1)
        }
    }
}
