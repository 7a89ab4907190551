use std::process::ExitCode;

use clap::Parser;

use entroute_cli::{parse_config, run_cli, CliArgs};

fn main() -> ExitCode {
    let args = CliArgs::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(args: &CliArgs) -> anyhow::Result<()> {
    let config = parse_config(args)?;
    // Echo the fully resolved configuration before running.
    for (key, value) in config.provenance() {
        println!("{key} = {value}");
    }
    let report = run_cli(&config)?;
    for line in &report.summaries {
        println!("{line}");
    }
    println!("wrote {}", config.output.display());
    Ok(())
}
