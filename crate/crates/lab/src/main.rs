use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use restoration_lab::{load_config, run_scenario, Scenario};

/// Runs a named toy restoration scenario and writes its report, samples and plots.
#[derive(Debug, Parser)]
#[command(name = "lab", version)]
struct Cli {
    scenario: Scenario,
    /// JSON overrides; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(cli.config.as_deref())
        .and_then(|(settings, _)| run_scenario(cli.scenario, &settings, &cli.out, cli.seed));
    match result {
        Ok(report) => {
            for (key, value) in &report.checks {
                println!("{key}: {value}");
            }
            println!("wrote {}", cli.out.join("report.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
