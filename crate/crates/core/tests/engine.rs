use dadpfl_core::config::{DatasetSpec, ExperimentConfig, PartitionSpec};
use dadpfl_core::engine::{build_clients, run_experiment, run_round, Experiment, PruningPlan, Vintage};
use dadpfl_core::rng::SeedStreams;
use dadpfl_core::topology::RoundSchedule;

fn tiny(k: usize, m: usize, n: usize, rounds: usize) -> ExperimentConfig {
    ExperimentConfig {
        seed: 3,
        num_clients: k,
        neighbors: m,
        waiting_threshold: n,
        rounds,
        local_epochs: 1,
        batch_size: 16,
        hidden: 8,
        dataset: DatasetSpec::Synthetic {
            classes: 4,
            dim: 6,
            samples: 60 * k,
            blob_sigma: 1.0,
            center_scale: 1.0,
        },
        partition: PartitionSpec::Dirichlet { alpha: 0.5 },
        ..ExperimentConfig::default()
    }
}

#[test]
fn two_clients_one_waits_for_the_other() {
    let cfg = tiny(2, 1, 1, 1);
    let streams = SeedStreams::new(cfg.seed);
    let mut clients = build_clients::<f32>(&cfg, &streams).unwrap();
    // client 1 holds reuse index 1 and trains first; client 0 waits for it
    let schedule = RoundSchedule::from_parts(1, vec![2, 1], vec![vec![1], vec![0]], 1).unwrap();
    let plan = PruningPlan::new(cfg.b, cfg.c, cfg.target_sparsity);
    let outcome = run_round(&mut clients, &schedule, &plan, &cfg, &streams).unwrap();
    assert_eq!(outcome.timing.waiting_set[0], vec![1]);
    assert!(outcome.timing.waiting_set[1].is_empty());
    assert_eq!(outcome.provenance[0][1].source, 1);
    assert_eq!(outcome.provenance[0][1].vintage, Vintage::Fresh);
    assert_eq!(outcome.provenance[1][1].source, 0);
    assert_eq!(outcome.provenance[1][1].vintage, Vintage::Previous);
    assert!(outcome.timing.start_time[0] >= outcome.timing.finish_time[1]);
}

#[test]
fn freshness_counts_match_waiting_sets() {
    let cfg = tiny(10, 4, 2, 3);
    let mut run = Experiment::<f32>::new(&cfg).unwrap();
    while !run.finished() {
        let o = run.step().unwrap();
        for (c, prov) in o.provenance.iter().enumerate() {
            let fresh = prov.iter().filter(|p| p.vintage == Vintage::Fresh).count();
            let previous = prov.iter().filter(|p| p.vintage != Vintage::Fresh).count();
            assert_eq!(prov[0].vintage, Vintage::Own);
            assert_eq!(fresh, o.timing.waiting_set[c].len());
            assert_eq!(previous, cfg.neighbors - fresh + 1);
        }
        for c in run.clients() {
            assert!(c.mask.holds_for(&c.model));
            assert_eq!(c.delta_history.len(), o.round);
            assert!(c.delta_history.iter().all(|d| *d >= 0.0));
        }
    }
}

#[test]
fn no_waiting_means_only_previous_models() {
    let cfg = ExperimentConfig {
        further_pruning: false,
        ..tiny(8, 3, 0, 4)
    };
    let mut run = Experiment::<f32>::new(&cfg).unwrap();
    let initial: Vec<usize> = run.clients().iter().map(|c| c.mask.total_active()).collect();
    while !run.finished() {
        let o = run.step().unwrap();
        assert_eq!(o.timing.parallelism, 1.0);
        assert!(o.provenance.iter().flatten().all(|p| p.vintage != Vintage::Fresh));
        assert!(o.pruned_clients.is_empty());
    }
    let after: Vec<usize> = run.clients().iter().map(|c| c.mask.total_active()).collect();
    assert_eq!(initial, after);
}

#[test]
fn single_round_logs_one_row() {
    let cfg = tiny(2, 1, 1, 1);
    let result = run_experiment::<f32>(&cfg, 1).unwrap();
    assert_eq!(result.metrics.rows.len(), 1);
    assert_eq!(result.metrics.rows[0].round, 1);
}

#[test]
fn unreachable_vote_threshold_never_prunes() {
    let cfg = ExperimentConfig {
        delta_v: 1.0,
        delta_pr: 1e-9,
        ..tiny(6, 2, 2, 8)
    };
    let result = run_experiment::<f32>(&cfg, 2).unwrap();
    assert_eq!(result.plan.t_star, None);
    assert!(result.metrics.rows.iter().all(|r| r.sap_events == 0));
    let first = result.metrics.rows[0].mean_sparsity;
    assert!(result.metrics.rows.iter().all(|r| r.mean_sparsity == first));
}

#[test]
fn same_seed_same_log_for_any_worker_count() {
    let cfg = tiny(9, 3, 2, 5);
    let csv = |workers| {
        let mut out = Vec::new();
        run_experiment::<f32>(&cfg, workers)
            .unwrap()
            .metrics
            .write_csv(&mut out)
            .unwrap();
        out
    };
    let one = csv(1);
    assert_eq!(one, csv(1));
    assert_eq!(one, csv(3));
    let header = String::from_utf8(one).unwrap();
    assert!(header.starts_with(
        "round,mean_acc,std_acc,mean_sparsity,t_star_flag,sap_events,busiest_comm_bytes,cum_flops,round_makespan_s,cum_energy_J\n"
    ));
}

#[test]
fn f64_engine_runs() {
    let cfg = tiny(4, 2, 1, 2);
    let result = run_experiment::<f64>(&cfg, 1).unwrap();
    assert_eq!(result.metrics.rows.len(), 2);
    assert!(result.metrics.rows.iter().all(|r| (0.0..=1.0).contains(&r.mean_acc)));
}
