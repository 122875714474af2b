//! File outputs behind the command-line subcommands.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{DatasetSpec, ExperimentConfig};
use crate::cost::total_cost_curve;
use crate::engine::{
    load_dataset, partition_dataset, run_experiment, write_prune_records, ExperimentResult, MetricsLog,
};
use crate::error::{Error, Result};
use crate::rng::{SeedStreams, Stream};
use crate::topology::{estimate_parallelism_delay, DelaySummary, DurationModel};
use crate::Real;

pub const METRICS_FILE: &str = "metrics.csv";
pub const PRUNE_EVENTS_FILE: &str = "prune_events.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SCHEDULE_FILE: &str = "schedule.json";
pub const COST_FILE: &str = "cost.json";
pub const PARTITION_FILE: &str = "partition.csv";

/// Hex SHA-256 of `"blob <len>\0" + bytes`, the way git hashes file contents.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Serialize)]
pub struct InputHash {
    pub name: String,
    pub sha256: String,
}

/// Hashes of everything a run reads: the effective configuration and any dataset file.
pub fn input_hashes(config: &ExperimentConfig) -> Result<Vec<InputHash>> {
    let mut out = vec![InputHash {
        name: "config".into(),
        sha256: blob_hash(&serde_json::to_vec(config)?),
    }];
    if let DatasetSpec::Csv { path } = &config.dataset {
        out.push(InputHash {
            name: path.display().to_string(),
            sha256: blob_hash(&fs::read(path)?),
        });
    }
    Ok(out)
}

fn create(out: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    fs::create_dir_all(out)?;
    let path = out.join(name);
    let file = File::create(&path)?;
    Ok((path, BufWriter::new(file)))
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let (path, mut w) = create(out, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::write_all(&mut w, b"\n")?;
    Ok(path)
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a ExperimentConfig,
    inputs: Vec<InputHash>,
    input_hash: String,
    t_star: Option<usize>,
    pruning_rounds: &'a [usize],
    final_round: Option<&'a crate::engine::RoundMetrics>,
    c_time_s: f64,
    c_energy_j: f64,
    cum_bytes: u64,
    rounds: &'a [crate::engine::RoundDiagnostics],
}

/// `run`: trains and writes `metrics.csv`, `prune_events.csv` and `summary.json`.
pub fn cmd_run(config: &ExperimentConfig, workers: usize, out: &Path) -> Result<ExperimentResult> {
    let result = run_experiment::<Real>(config, workers)?;
    let (_, w) = create(out, METRICS_FILE)?;
    result.metrics.write_csv(w)?;
    let (_, w) = create(out, PRUNE_EVENTS_FILE)?;
    write_prune_records(&result.prune_records, w)?;

    let inputs = input_hashes(config)?;
    let joined: String = inputs.iter().map(|i| i.sha256.as_str()).collect::<Vec<_>>().join("\n");
    let summary = Summary {
        config,
        input_hash: blob_hash(joined.as_bytes()),
        inputs,
        t_star: result.plan.t_star,
        pruning_rounds: &result.plan.schedule,
        final_round: result.metrics.rows.last(),
        c_time_s: result.ledger.c_time,
        c_energy_j: result.ledger.c_energy,
        cum_bytes: result.ledger.cum_bytes,
        rounds: &result.diagnostics,
    };
    write_json(out, SUMMARY_FILE, &summary)?;
    Ok(result)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleReport {
    pub num_clients: usize,
    pub iterations: usize,
    pub duration: DurationModel,
    pub rows: Vec<DelaySummary>,
}

/// `(M, N)` pairs swept by `schedule-analyze`, in output order.
pub fn analysis_grid(config: &ExperimentConfig) -> Vec<(usize, usize)> {
    let a = &config.analysis;
    let ms = if a.m_values.is_empty() {
        vec![config.neighbors]
    } else {
        a.m_values.clone()
    };
    let ns = if a.n_values.is_empty() {
        vec![config.waiting_threshold]
    } else {
        a.n_values.clone()
    };
    let mut grid = Vec::new();
    for &m in &ms {
        for &n in &ns {
            if n <= m && !grid.contains(&(m, n)) {
                grid.push((m, n));
            }
        }
        if a.n_equals_m && !grid.contains(&(m, m)) {
            grid.push((m, m));
        }
    }
    grid
}

/// Monte Carlo parallelism and delay for every grid point.
pub fn schedule_analysis(config: &ExperimentConfig) -> Result<ScheduleReport> {
    let duration = config
        .analysis
        .duration
        .unwrap_or(DurationModel::Constant { value: 1.0 });
    let streams = SeedStreams::new(config.seed);
    let rows = analysis_grid(config)
        .into_iter()
        .map(|(m, n)| {
            let mut rng = streams.rng(Stream::Durations, m as u64, n as u64);
            estimate_parallelism_delay(
                config.num_clients,
                m,
                n,
                config.analysis.iterations,
                &duration,
                &mut rng,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScheduleReport {
        num_clients: config.num_clients,
        iterations: config.analysis.iterations,
        duration,
        rows,
    })
}

/// `schedule-analyze`: writes `schedule.json`.
pub fn cmd_schedule_analyze(config: &ExperimentConfig, out: &Path) -> Result<PathBuf> {
    write_json(out, SCHEDULE_FILE, &schedule_analysis(config)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub theta_grid: Vec<f64>,
    pub c_total: Vec<f64>,
    pub c_time: f64,
    pub c_energy: f64,
    pub busiest_bytes_per_round: Vec<u64>,
}

/// Total cost over the configured theta grid from a metrics log.
pub fn cost_report(metrics: &MetricsLog, config: &ExperimentConfig) -> Result<CostReport> {
    let c_time: f64 = metrics.rows.iter().map(|r| r.round_makespan_s).sum();
    let c_energy = metrics.rows.last().map_or(0.0, |r| r.cum_energy_j);
    Ok(CostReport {
        c_total: total_cost_curve(
            c_time,
            c_energy,
            &config.theta_grid,
            config.price_time,
            config.price_energy,
        )?,
        theta_grid: config.theta_grid.clone(),
        c_time,
        c_energy,
        busiest_bytes_per_round: metrics.rows.iter().map(|r| r.busiest_comm_bytes).collect(),
    })
}

/// `cost-report`: reads `<out>/metrics.csv` from an earlier run and writes `cost.json`.
pub fn cmd_cost_report(config: &ExperimentConfig, out: &Path) -> Result<(PathBuf, CostReport)> {
    let metrics_path = out.join(METRICS_FILE);
    let file = File::open(&metrics_path).map_err(|e| {
        Error::Config(format!(
            "cannot read {}: {e} (run the `run` subcommand with the same --out first)",
            metrics_path.display()
        ))
    })?;
    let report = cost_report(&MetricsLog::read_csv(file)?, config)?;
    Ok((write_json(out, COST_FILE, &report)?, report))
}

/// Per-client training-shard sizes and class counts (before the holdout split).
pub fn partition_table(config: &ExperimentConfig) -> Result<(usize, Vec<Vec<usize>>)> {
    let streams = SeedStreams::new(config.seed);
    let dataset = load_dataset::<Real>(config, &streams)?;
    let partition = partition_dataset(config, &dataset, &streams)?;
    let classes = dataset.num_classes;
    let rows = partition
        .iter()
        .map(|rows| {
            let mut counts = vec![0usize; classes];
            for &r in rows {
                counts[dataset.labels[r]] += 1;
            }
            counts
        })
        .collect();
    Ok((classes, rows))
}

/// `partition-inspect`: writes `partition.csv` with columns `client, n_samples, class_0, ...`.
pub fn cmd_partition_inspect(config: &ExperimentConfig, out: &Path) -> Result<PathBuf> {
    let (classes, table) = partition_table(config)?;
    let (path, w) = create(out, PARTITION_FILE)?;
    let mut w = csv::Writer::from_writer(w);
    let mut header = vec!["client".to_string(), "n_samples".to_string()];
    header.extend((0..classes).map(|c| format!("class_{c}")));
    w.write_record(&header)?;
    for (k, counts) in table.iter().enumerate() {
        let mut record = vec![k.to_string(), counts.iter().sum::<usize>().to_string()];
        record.extend(counts.iter().map(|c| c.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(path)
}
