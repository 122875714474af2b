//! Protocol engine: reuse-index ordered aggregation, local training, pruning-time detection
//! and the experiment driver.

mod aggregate;
mod experiment;
mod round;
mod state;
mod voting;

pub use aggregate::{aggregate_masked, aggregate_masked_flat};
pub use experiment::{
    build_clients, load_dataset, partition_dataset, run_experiment, worker_pool, write_prune_records, Experiment,
    ExperimentResult, MetricsLog, PruneRecord, RoundDiagnostics, RoundMetrics,
};
pub use round::{round_flops, run_round, RoundOutcome};
pub use state::{ClientState, Contribution, PruningPlan, Vintage};
pub use voting::{compute_t_star, detection_vote, pruning_schedule};
