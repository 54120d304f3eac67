use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dpscale::harness::{
    mean_and_se, preset, run_experiment, run_repeats, run_schedule_experiment, run_sweep,
    ExperimentConfig, ScheduleConfig,
};
use dpscale::verify::run_all;
use dpscale::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dpscale",
    version,
    about = "Differentially private optimization with adaptive gradient scaling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigSource {
    /// Experiment config file (TOML).
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration name.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
}

impl ConfigSource {
    fn load(&self) -> Result<ExperimentConfig> {
        match (&self.config, &self.preset) {
            (Some(path), None) => ExperimentConfig::load(path),
            (None, Some(name)) => preset(name),
            _ => Err(Error::Config(
                "exactly one of --config or --preset is required".into(),
            )),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write per-epoch JSONL results.
    Run {
        #[command(flatten)]
        source: ConfigSource,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for results files.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Independent repetitions with derived seeds.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
    /// Run the base experiment once per scaling-coefficient value.
    Sweep {
        #[command(flatten)]
        source: ConfigSource,
        /// Grid of s values, comma separated.
        #[arg(long, value_delimiter = ',', value_name = "S,S,...")]
        grid: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Doubling-ladder convergence experiment with scheduled hyperparameters.
    Schedule {
        /// Schedule config file (TOML).
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        /// Write the report JSON here instead of stdout only.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Run the randomized property suites.
    Verify {
        /// Full-scale suites (slower).
        #[arg(long)]
        full: bool,
    },
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run {
            source,
            seed,
            out,
            repeats,
        } => {
            let mut config = source.load()?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if repeats == 1 {
                let out_path = out.map(|d| d.join(format!("{}.jsonl", config.name)));
                let (_, summary) = run_experiment(&config, None, out_path.as_deref())?;
                println!("{}", serde_json::to_string_pretty(&summary).unwrap());
            } else {
                let summaries = run_repeats(&config, repeats, out.as_deref())?;
                let accuracies: Vec<f64> = summaries
                    .iter()
                    .filter_map(|s| s.final_test_accuracy)
                    .collect();
                for summary in &summaries {
                    println!("{}", serde_json::to_string(summary).unwrap());
                }
                if !accuracies.is_empty() {
                    let (mean, se) = mean_and_se(&accuracies)?;
                    println!(
                        "{}",
                        serde_json::json!({
                            "record": "aggregate",
                            "repeats": repeats,
                            "mean_test_accuracy": mean,
                            "standard_error": se,
                        })
                    );
                }
            }
        }
        Command::Sweep {
            source,
            grid,
            seed,
            out,
        } => {
            let mut config = source.load()?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let summary = run_sweep(&config, &grid, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&summary).unwrap());
        }
        Command::Schedule { config, out } => {
            let text = std::fs::read_to_string(&config).map_err(|e| {
                Error::Config(format!("cannot read config {}: {e}", config.display()))
            })?;
            let schedule: ScheduleConfig =
                toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            let report = run_schedule_experiment(&schedule)?;
            let json = serde_json::to_string_pretty(&report).unwrap();
            if let Some(path) = out {
                if let Some(parent) = path.parent() {
                    if !parent.as_os_str().is_empty() {
                        std::fs::create_dir_all(parent)?;
                    }
                }
                std::fs::write(&path, &json)?;
            }
            println!("{json}");
        }
        Command::Verify { full } => {
            let results = run_all(!full)?;
            let mut failed = false;
            for result in &results {
                let status = if result.passed { "PASS" } else { "FAIL" };
                println!("{status} {} ({})", result.name, result.detail);
                failed |= !result.passed;
            }
            if failed {
                return Err(Error::InvalidArgument(
                    "one or more verification suites failed".into(),
                ));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({ "error": e.to_string(), "kind": format!("{e:?}") })
            );
            ExitCode::FAILURE
        }
    }
}
