//! Full decentralized training run: data setup, per-round topologies, pruning-time detection
//! and the per-round metrics log.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::config::{DatasetSpec, ExperimentConfig, PartitionSpec};
use crate::cost::CostLedger;
use crate::error::{Error, Result};
use crate::learner::{
    holdout_split, mlp_shapes, partition_dirichlet, partition_pathological, synthetic_blobs, Dataset, FlatModel,
    Partition,
};
use crate::rng::{SeedStreams, Stream};
use crate::scalar::Scalar;
use crate::sparse::erk_init;
use crate::topology::sample_topology_schedule;

use super::round::{run_round, RoundOutcome};
use super::state::{ClientState, PruningPlan};
use super::voting::compute_t_star;

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub mean_acc: f64,
    pub std_acc: f64,
    pub mean_sparsity: f64,
    pub t_star_flag: u8,
    pub sap_events: usize,
    pub busiest_comm_bytes: u64,
    pub cum_flops: f64,
    pub round_makespan_s: f64,
    #[serde(rename = "cum_energy_J")]
    pub cum_energy_j: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub rows: Vec<RoundMetrics>,
}

impl MetricsLog {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let rows = r.deserialize().collect::<std::result::Result<Vec<RoundMetrics>, _>>()?;
        Ok(Self { rows })
    }
}

/// One row of `prune_events.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneRecord {
    pub round: usize,
    pub client: usize,
    pub layer: String,
    pub pq_index: f64,
    pub pruned: usize,
    pub density: f64,
}

pub fn write_prune_records<W: Write>(records: &[PruneRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-round values that do not go into the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundDiagnostics {
    pub round: usize,
    pub vote_fraction: f64,
    pub mean_delta: f64,
    pub mean_train_loss: f64,
    pub parallelism: f64,
    pub max_wait_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub metrics: MetricsLog,
    #[serde(skip)]
    pub prune_records: Vec<PruneRecord>,
    pub diagnostics: Vec<RoundDiagnostics>,
    pub plan: PruningPlan,
    pub ledger: CostLedger,
}

pub fn load_dataset<S: Scalar>(config: &ExperimentConfig, streams: &SeedStreams) -> Result<Dataset<S>> {
    match &config.dataset {
        DatasetSpec::Csv { path } => Dataset::from_csv(path),
        spec @ DatasetSpec::Synthetic { .. } => {
            let synthetic = spec.synthetic().expect("synthetic variant");
            let mut rng = streams.rng(Stream::Data, 0, 0);
            Ok(synthetic_blobs(&synthetic, &mut rng))
        }
    }
}

pub fn partition_dataset<S: Scalar>(
    config: &ExperimentConfig,
    dataset: &Dataset<S>,
    streams: &SeedStreams,
) -> Result<Partition> {
    let mut rng = streams.rng(Stream::Data, 1, 0);
    match config.partition {
        PartitionSpec::Dirichlet { alpha } => partition_dirichlet(&dataset.labels, config.num_clients, alpha, &mut rng),
        PartitionSpec::Pathological { n_cls } => {
            partition_pathological(&dataset.labels, config.num_clients, n_cls, &mut rng)
        }
    }
}

/// Builds every client: its train/test split, a common initial model and its own ERK mask.
pub fn build_clients<S: Scalar>(config: &ExperimentConfig, streams: &SeedStreams) -> Result<Vec<ClientState<S>>> {
    let dataset = load_dataset::<S>(config, streams)?;
    let partition = partition_dataset(config, &dataset, streams)?;
    let shapes = mlp_shapes(dataset.dim, &[config.hidden], dataset.num_classes);
    let base = FlatModel::<S>::init_uniform(&shapes, &mut streams.rng(Stream::Init, 0, 0));
    partition
        .iter()
        .enumerate()
        .map(|(k, rows)| {
            if rows.is_empty() {
                return Err(Error::EmptyShard(k));
            }
            let (train, test) = holdout_split(
                rows,
                config.holdout_fraction,
                &mut streams.rng(Stream::Data, 2, k as u64),
            );
            let mask = erk_init(
                &shapes,
                config.initial_density,
                &mut streams.rng(Stream::Init, 1, k as u64),
            )?;
            let mut model = base.clone();
            mask.apply(&mut model);
            Ok(ClientState::new(
                k,
                model,
                mask,
                dataset.select(k, &train),
                dataset.select(k, &test),
            ))
        })
        .collect()
}

/// A run that can be advanced one round at a time.
pub struct Experiment<S> {
    config: ExperimentConfig,
    streams: SeedStreams,
    clients: Vec<ClientState<S>>,
    plan: PruningPlan,
    ledger: CostLedger,
    metrics: MetricsLog,
    prune_records: Vec<PruneRecord>,
    diagnostics: Vec<RoundDiagnostics>,
    vote_fractions: Vec<f64>,
}

impl<S: Scalar> Experiment<S> {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let streams = SeedStreams::new(config.seed);
        let clients = build_clients(config, &streams)?;
        Ok(Self {
            config: config.clone(),
            streams,
            plan: PruningPlan::new(config.b, config.c, config.target_sparsity),
            ledger: CostLedger::new(clients.len()),
            clients,
            metrics: MetricsLog::default(),
            prune_records: Vec::new(),
            diagnostics: Vec::new(),
            vote_fractions: Vec::new(),
        })
    }

    pub fn clients(&self) -> &[ClientState<S>] {
        &self.clients
    }

    pub fn plan(&self) -> &PruningPlan {
        &self.plan
    }

    pub fn metrics(&self) -> &MetricsLog {
        &self.metrics
    }

    pub fn rounds_done(&self) -> usize {
        self.metrics.rows.len()
    }

    pub fn finished(&self) -> bool {
        self.rounds_done() >= self.config.rounds
    }

    /// Runs the next round on the current rayon pool.
    pub fn step(&mut self) -> Result<RoundOutcome> {
        let round = self.rounds_done() + 1;
        let cfg = &self.config;
        let schedule = sample_topology_schedule(
            cfg.topology,
            round,
            cfg.num_clients,
            cfg.neighbors,
            cfg.waiting_threshold,
            &mut self.streams.rng(Stream::Topology, round as u64, 0),
        )?;
        let outcome = run_round(&mut self.clients, &schedule, &self.plan, cfg, &self.streams)?;

        self.vote_fractions.push(outcome.vote_fraction);
        let mut t_star_flag = 0;
        if self.plan.t_star.is_none() {
            if let Some(t) = compute_t_star(&self.vote_fractions, cfg.delta_v, cfg.tstar_rule) {
                self.plan.fix(t, cfg.rounds)?;
                t_star_flag = u8::from(t == round);
                log::info!(
                    "first further-pruning round t* = {t}; schedule {:?}",
                    self.plan.schedule
                );
            }
        }

        let span = self
            .ledger
            .record_round(&outcome.charges, outcome.timing.makespan, &cfg.cost);
        let k = outcome.accuracies.len() as f64;
        let mean_acc = outcome.accuracies.iter().sum::<f64>() / k;
        let var = outcome.accuracies.iter().map(|a| (a - mean_acc).powi(2)).sum::<f64>() / k;
        let mean_sparsity = self.clients.iter().map(|c| c.sparsity).sum::<f64>() / k;
        self.metrics.rows.push(RoundMetrics {
            round,
            mean_acc,
            std_acc: var.sqrt(),
            mean_sparsity,
            t_star_flag,
            sap_events: outcome.pruned_clients.len(),
            busiest_comm_bytes: *self.ledger.busiest_bytes_per_round.last().unwrap_or(&0),
            cum_flops: self.ledger.cum_flops,
            round_makespan_s: span,
            cum_energy_j: self.ledger.c_energy,
        });
        self.prune_records
            .extend(outcome.prune_events.iter().map(|(client, e)| PruneRecord {
                round,
                client: *client,
                layer: e.layer.clone(),
                pq_index: e.pq_index,
                pruned: e.pruned_count,
                density: e.resulting_density,
            }));
        self.diagnostics.push(RoundDiagnostics {
            round,
            vote_fraction: outcome.vote_fraction,
            mean_delta: outcome.deltas.iter().sum::<f64>() / k,
            mean_train_loss: outcome.train_losses.iter().sum::<f64>() / k,
            parallelism: outcome.timing.parallelism,
            max_wait_s: outcome.timing.max_wait,
        });
        log::debug!(
            "round {round}: acc {mean_acc:.4} sparsity {mean_sparsity:.4} votes {:.2}",
            outcome.vote_fraction
        );
        Ok(outcome)
    }

    pub fn into_result(self) -> ExperimentResult {
        ExperimentResult {
            metrics: self.metrics,
            prune_records: self.prune_records,
            diagnostics: self.diagnostics,
            plan: self.plan,
            ledger: self.ledger,
        }
    }
}

/// Builds a pool with `workers` threads (0 = one per core).
pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start {workers} workers: {e}")))
}

/// Runs all rounds on `workers` threads. Output is identical for any worker count.
pub fn run_experiment<S: Scalar>(config: &ExperimentConfig, workers: usize) -> Result<ExperimentResult> {
    let pool = worker_pool(workers)?;
    pool.install(|| {
        let mut experiment = Experiment::<S>::new(config)?;
        while !experiment.finished() {
            experiment.step()?;
        }
        Ok(experiment.into_result())
    })
}
