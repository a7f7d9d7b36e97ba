use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use causal_testbed::disentangle::score_disentanglement;
use causal_testbed::experiment::{
    compare_agents, emit_report, load_scorecard, run_experiment, ComparisonReport, ExperimentConfig, ExperimentError,
    Metric, Task, TaskSection,
};
use causal_testbed::joint::JointTable;
use causal_testbed::numfmt::to_json_string;
use causal_testbed::planning::value_iteration_oracle;

#[derive(Parser)]
#[command(name = "ctb", version, about = "Causal testbed experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its report files.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bootstrap comparison of report directories on one metric.
    Compare {
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
        #[arg(long, value_parser = parse_metric)]
        metric: Metric,
    },
    /// Solve a task exactly by value iteration.
    Oracle { taskconfig: PathBuf },
    /// Disentanglement scores of a joint table.
    Score {
        #[arg(long)]
        joint: PathBuf,
    },
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse()
}

/// A file with a `[task]` section and an optional `tolerance`. Other
/// sections (as in a full experiment config) are ignored.
#[derive(Deserialize)]
struct TaskFile {
    task: TaskSection,
    #[serde(default = "default_tolerance")]
    tolerance: f64,
}

fn default_tolerance() -> f64 {
    1e-10
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct OracleOutput {
    task: Task,
    tolerance: f64,
    initial_value: f64,
    iterations: usize,
    values: Vec<f64>,
    policy: Vec<usize>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct CompareOutput {
    inputs: Vec<String>,
    #[serde(flatten)]
    report: ComparisonReport,
}

fn read(path: &Path) -> Result<String, ExperimentError> {
    std::fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.to_path_buf(), source })
}

fn config_error(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Config(format!("{}: {e}", path.display()))
}

fn execute(command: Command) -> Result<String, ExperimentError> {
    match command {
        Command::Run { config, out } => {
            let config = ExperimentConfig::from_file(&config)?;
            let card = run_experiment(&config)?;
            let paths = emit_report(&card, &out)?;
            Ok(paths.iter().map(|p| format!("{}\n", p.display())).collect())
        }
        Command::Compare { dirs, metric } => {
            let cards = dirs.iter().map(|d| load_scorecard(d)).collect::<Result<Vec<_>, _>>()?;
            let report = compare_agents(&cards, metric)?;
            let inputs = dirs.iter().map(|d| d.display().to_string()).collect();
            Ok(to_json_string(&CompareOutput { inputs, report }).expect("report serializes"))
        }
        Command::Oracle { taskconfig } => {
            let file: TaskFile = toml::from_str(&read(&taskconfig)?).map_err(|e| config_error(&taskconfig, e))?;
            if !(file.tolerance.is_finite() && file.tolerance > 0.0) {
                return Err(config_error(&taskconfig, format!("tolerance must be positive, got {}", file.tolerance)));
            }
            let task = file.task.resolve()?;
            let env = task.build()?;
            let mdp = env.base();
            let solution = value_iteration_oracle(mdp, file.tolerance);
            let output = OracleOutput {
                task,
                tolerance: file.tolerance,
                initial_value: solution.initial_value(mdp),
                iterations: solution.iterations,
                values: solution.values,
                policy: solution.policy,
            };
            Ok(to_json_string(&output).expect("oracle output serializes"))
        }
        Command::Score { joint } => {
            let table: JointTable = serde_json::from_str(&read(&joint)?).map_err(|e| config_error(&joint, e))?;
            let report = score_disentanglement(&table)?;
            Ok(to_json_string(&report).expect("score report serializes"))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
