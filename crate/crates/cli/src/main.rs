//! `mdhp`: run, sweep, and re-report planning campaigns from a TOML config.
//!
//! Exit codes are a stable contract: 0 success, 1 runtime failure,
//! 2 usage or configuration error (clap uses 2 on its own for bad flags).

mod report;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mdhp_core::config::{load_config, ConfigError, ProblemKind, RunConfig};
use mdhp_core::harness::{
    print_line, render_summary_table, sweep_weights, write_campaign_outputs, write_summary_csv,
    SweepCell,
};
use mdhp_core::problems::linear_gaussian::LinearGaussian;
use mdhp_core::problems::sda::SdaProblem;
use mdhp_core::problems::vdp::VdpProblem;
use mdhp_core::{HypothesisSet, Pomdp};

#[derive(Parser)]
#[command(name = "mdhp", version, about = "Hybrid-belief planning campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one campaign and write its artifact set.
    Run(JobArgs),
    /// Run the weight sweep: one subdirectory per weight, one consolidated
    /// summary at the root.
    Sweep(JobArgs),
    /// Rebuild summary and plot-ready tables from a stored campaign,
    /// without re-simulation.
    Report {
        /// Directory holding campaign.csv, traces/, effective_config.toml.
        campaign_dir: PathBuf,
        /// Where to write the regenerated tables. Defaults to
        /// `<campaign_dir>/report`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct JobArgs {
    /// TOML run configuration.
    config: PathBuf,
    /// Dotted-path override, repeatable: `--set solver.iterations=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Replaces campaign.seed_base.
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces output_dir.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Replaces campaign.workers.
    #[arg(long)]
    workers: Option<usize>,
}

pub enum CliError {
    Config(ConfigError),
    Usage(String),
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

fn load(args: &JobArgs) -> Result<RunConfig, CliError> {
    let mut overrides = args.set.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("campaign.seed_base={seed}"));
    }
    if let Some(workers) = args.workers {
        overrides.push(format!("campaign.workers={workers}"));
    }
    let mut cfg = load_config(&args.config, &overrides)?;
    if let Some(out) = &args.output {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run_cells<P: Pomdp>(
    base: &P,
    set: &HypothesisSet<P::Dynamics>,
    cfg: &RunConfig,
) -> Result<Vec<SweepCell>, CliError> {
    sweep_weights(
        base,
        set,
        cfg.resolved_updater(),
        cfg.resolved_resolution(),
        cfg.reward_kind,
        cfg.resolved_horizon(),
        &cfg.solver,
        &cfg.campaign,
    )
    .map_err(|e| CliError::Runtime(e.to_string()))
}

fn build_and_run(cfg: &RunConfig) -> Result<Vec<SweepCell>, CliError> {
    match cfg.problem {
        ProblemKind::VdpTrack => {
            let problem = VdpProblem::new(cfg.vdp.clone()).map_err(CliError::Runtime)?;
            let set = problem.hypothesis_set();
            run_cells(&problem, &set, cfg)
        }
        ProblemKind::Sda => {
            let problem = SdaProblem::new(cfg.sda.clone()).map_err(CliError::Runtime)?;
            let set = problem.hypothesis_set();
            run_cells(&problem, &set, cfg)
        }
        ProblemKind::LinearGaussianBench => {
            let (problem, set) = LinearGaussian::bench();
            run_cells(&problem, &set, cfg)
        }
    }
}

fn cmd_run(args: &JobArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    let cells = build_and_run(&cfg)?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    fs::write(
        dir.join("effective_config.toml"),
        cfg.effective().to_toml_string(),
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_campaign_outputs(&cells, dir).map_err(|e| CliError::Runtime(e.to_string()))?;
    print_line(&render_summary_table(&cells));
    print_line(&format!("wrote {}", dir.display()));
    Ok(())
}

fn cmd_sweep(args: &JobArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    let cells = build_and_run(&cfg)?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    fs::write(
        dir.join("effective_config.toml"),
        cfg.effective().to_toml_string(),
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    for (i, cell) in cells.iter().enumerate() {
        let sub = dir.join(format!("weight_{i}_{}", cell.weight));
        write_campaign_outputs(std::slice::from_ref(cell), &sub)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    write_summary_csv(&cells, &dir.join("summary.csv"))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    print_line(&render_summary_table(&cells));
    print_line(&format!("wrote {}", dir.display()));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Report {
            campaign_dir,
            output,
        } => report::cmd_report(campaign_dir, output.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
