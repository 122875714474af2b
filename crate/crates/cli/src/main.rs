use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dadpfl_core::{report, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "dadpfl",
    version,
    about = "Decentralized sparse federated learning simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train all clients and write metrics.csv, prune_events.csv and summary.json.
    Run(Common),
    /// Monte Carlo parallelism and waiting delay; writes schedule.json.
    ScheduleAnalyze(Common),
    /// Total cost over the theta grid from <out>/metrics.csv; writes cost.json.
    CostReport(Common),
    /// Per-client class histogram of the partition; writes partition.csv.
    PartitionInspect(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration; omitted means all defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; overrides the SEED environment variable and the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core). Results do not depend on this.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply_env_seed()?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(c) => {
            let cfg = c.config()?;
            let result = report::cmd_run(&cfg, c.workers, &c.out).context("run failed")?;
            if let Some(last) = result.metrics.rows.last() {
                eprintln!(
                    "round {}: mean accuracy {:.4}, mean sparsity {:.4}, t* {:?}",
                    last.round, last.mean_acc, last.mean_sparsity, result.plan.t_star
                );
            }
            eprintln!("wrote {}", c.out.display());
        }
        Command::ScheduleAnalyze(c) => {
            let path = report::cmd_schedule_analyze(&c.config()?, &c.out).context("schedule analysis failed")?;
            eprintln!("wrote {}", path.display());
        }
        Command::CostReport(c) => {
            let (path, cost) = report::cmd_cost_report(&c.config()?, &c.out).context("cost report failed")?;
            println!("{}", cost_line(&cost));
            eprintln!("wrote {}", path.display());
        }
        Command::PartitionInspect(c) => {
            let path = report::cmd_partition_inspect(&c.config()?, &c.out).context("partition inspection failed")?;
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn cost_line(cost: &report::CostReport) -> String {
    format!(
        "c_time {:.6} s, c_energy {:.6} J, c_total at theta {:?}: {:?}",
        cost.c_time, cost.c_energy, cost.theta_grid, cost.c_total
    )
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
