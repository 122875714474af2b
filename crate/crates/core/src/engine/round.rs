//! One communication round: timing, waiting-DAG ordered aggregation, local training,
//! voting, scheduled further pruning and RigL.

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::cost::{comm_bytes, energy_time, training_flops, RoundCharge};
use crate::error::Result;
use crate::learner::{dense_gradient, evaluate, local_train, lr_at_round, FlatModel, SgdParams};
use crate::rng::{SeedStreams, Stream};
use crate::scalar::Scalar;
use crate::sparse::{rigl_update, sap_prune, sparsity, MaskSet, PruneEvent};
use crate::topology::{simulate_round_timing, RoundSchedule, TimingResult};

use super::aggregate::aggregate_masked;
use super::state::{ClientState, Contribution, PruningPlan, Vintage};
use super::voting::detection_vote;

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub round: usize,
    pub timing: TimingResult,
    /// Aggregation inputs per client, own model first.
    pub provenance: Vec<Vec<Contribution>>,
    pub votes: Vec<u8>,
    pub vote_fraction: f64,
    pub accuracies: Vec<f64>,
    pub train_losses: Vec<f64>,
    pub deltas: Vec<f64>,
    /// Clients that ran further pruning this round.
    pub pruned_clients: Vec<usize>,
    pub prune_events: Vec<(usize, PruneEvent)>,
    pub charges: Vec<RoundCharge>,
    /// Active weights lost to RigL regrowth shortfalls, summed over clients.
    pub rigl_shortfall: usize,
}

struct ClientUpdate<S> {
    model: FlatModel<S>,
    mask: MaskSet,
    delta: f64,
    vote: u8,
    train_loss: f64,
    accuracy: f64,
    pruned: bool,
    events: Vec<PruneEvent>,
    provenance: Vec<Contribution>,
    rigl_shortfall: usize,
}

/// FLOPs a client spends in one round: masked local epochs plus one dense RigL batch.
pub fn round_flops<S: Scalar>(state: &ClientState<S>, config: &ExperimentConfig) -> f64 {
    let shapes = state.model.shapes();
    let train = training_flops(
        shapes,
        &state.mask.layer_densities(),
        config.local_epochs * state.train.len(),
    );
    let batch = config.batch_size.min(state.train.len());
    let dense = vec![1.0; shapes.len()];
    train + training_flops(shapes, &dense, batch)
}

fn bias_params(model_shapes: &[crate::learner::LayerShape]) -> usize {
    model_shapes.iter().map(|s| s.n_out).sum()
}

/// Runs round `schedule.round` over all clients and commits the new models.
///
/// Clients are processed level by level along the waiting DAG; within a level they run
/// concurrently on the ambient rayon pool. Every client reads only previous-round state and
/// outputs of strictly lower levels, so results do not depend on the worker count.
pub fn run_round<S: Scalar>(
    states: &mut [ClientState<S>],
    schedule: &RoundSchedule,
    plan: &PruningPlan,
    config: &ExperimentConfig,
    streams: &SeedStreams,
) -> Result<RoundOutcome> {
    let round = schedule.round;
    let k = states.len();
    let flops: Vec<f64> = states.iter().map(|s| round_flops(s, config)).collect();
    let durations: Vec<f64> = flops
        .iter()
        .map(|&f| energy_time(f, 0.0, &config.cost).t_comp.max(f64::MIN_POSITIVE))
        .collect();
    let timing = simulate_round_timing(schedule, &durations)?;

    let mut level = vec![0usize; k];
    let mut levels: Vec<Vec<usize>> = Vec::new();
    for client in schedule.processing_order() {
        level[client] = timing.waiting_set[client]
            .iter()
            .map(|&j| level[j] + 1)
            .max()
            .unwrap_or(0);
        if levels.len() <= level[client] {
            levels.resize_with(level[client] + 1, Vec::new);
        }
        levels[level[client]].push(client);
    }

    let sgd = SgdParams {
        epochs: config.local_epochs,
        lr: lr_at_round(config.lr, config.lr_decay, round),
        weight_decay: config.weight_decay,
        batch_size: config.batch_size,
    };
    let prune_now = config.further_pruning && plan.prunes_at(round);

    let mut fresh: Vec<Option<ClientUpdate<S>>> = (0..k).map(|_| None).collect();
    for members in &levels {
        let snapshot: &[ClientState<S>] = states;
        let fresh_ref = &fresh;
        let updates: Vec<(usize, Result<ClientUpdate<S>>)> = members
            .par_iter()
            .map(|&c| {
                let waiting = &timing.waiting_set[c];
                let mut inputs: Vec<(&FlatModel<S>, &MaskSet)> = Vec::new();
                let mut provenance = vec![Contribution {
                    source: c,
                    vintage: Vintage::Own,
                }];
                for &j in &schedule.neighborhoods[c] {
                    if waiting.contains(&j) {
                        let f = fresh_ref[j]
                            .as_ref()
                            .expect("awaited neighbor finished in a lower level");
                        inputs.push((&f.model, &f.mask));
                        provenance.push(Contribution {
                            source: j,
                            vintage: Vintage::Fresh,
                        });
                    } else {
                        inputs.push((&snapshot[j].model, &snapshot[j].mask));
                        provenance.push(Contribution {
                            source: j,
                            vintage: Vintage::Previous,
                        });
                    }
                }
                let update = process_client(
                    &snapshot[c],
                    &inputs,
                    provenance,
                    round,
                    &sgd,
                    prune_now,
                    plan,
                    config,
                    streams,
                );
                (c, update)
            })
            .collect();
        for (c, update) in updates {
            fresh[c] = Some(update?);
        }
    }

    let m = schedule.neighborhood_size() as u64;
    let mut outcome = RoundOutcome {
        round,
        timing,
        provenance: Vec::with_capacity(k),
        votes: Vec::with_capacity(k),
        vote_fraction: 0.0,
        accuracies: Vec::with_capacity(k),
        train_losses: Vec::with_capacity(k),
        deltas: Vec::with_capacity(k),
        pruned_clients: Vec::new(),
        prune_events: Vec::new(),
        charges: Vec::with_capacity(k),
        rigl_shortfall: 0,
    };
    for (c, (state, update)) in states.iter_mut().zip(fresh).enumerate() {
        let u = update.expect("every client processed");
        state.model = u.model;
        state.mask = u.mask;
        state.sparsity = sparsity(&state.mask);
        state.delta_history.push(u.delta);
        state.vote_history.push(u.vote);
        let payload = comm_bytes(&state.mask, bias_params(state.model.shapes()), 4);
        outcome.charges.push(RoundCharge {
            flops: flops[c],
            bytes: m * payload,
        });
        if u.pruned {
            outcome.pruned_clients.push(c);
        }
        outcome.prune_events.extend(u.events.into_iter().map(|e| (c, e)));
        outcome.provenance.push(u.provenance);
        outcome.votes.push(u.vote);
        outcome.accuracies.push(u.accuracy);
        outcome.train_losses.push(u.train_loss);
        outcome.deltas.push(u.delta);
        outcome.rigl_shortfall += u.rigl_shortfall;
    }
    if outcome.rigl_shortfall > 0 {
        log::warn!(
            "round {round}: RigL found too few regrowth candidates; {} active weights lost across clients",
            outcome.rigl_shortfall
        );
    }
    outcome.vote_fraction = outcome.votes.iter().map(|&v| v as f64).sum::<f64>() / k as f64;
    Ok(outcome)
}

#[allow(clippy::too_many_arguments)]
fn process_client<S: Scalar>(
    state: &ClientState<S>,
    inputs: &[(&FlatModel<S>, &MaskSet)],
    provenance: Vec<Contribution>,
    round: usize,
    sgd: &SgdParams,
    prune_now: bool,
    plan: &PruningPlan,
    config: &ExperimentConfig,
    streams: &SeedStreams,
) -> Result<ClientUpdate<S>> {
    let mut rng = streams.rng(Stream::Training, round as u64, state.id as u64);
    let mut model = aggregate_masked((&state.model, &state.mask), inputs)?;
    let mut mask = state.mask.clone();
    let train_loss = local_train(&mut model, &mask, &state.train, sgd, &mut rng)?;

    let delta = model.sq_distance(&state.initial_model);
    let mut history = state.delta_history.clone();
    history.push(delta);
    let vote = detection_vote(&history, config.delta_pr)?;

    let mut events = Vec::new();
    let pruned = prune_now && sparsity(&mask) < plan.target_sparsity;
    if pruned {
        events = sap_prune(&mut model, &mut mask, &config.pqi, round)?;
    }

    let grad = dense_gradient(&model, &state.train, config.batch_size, &mut rng);
    let rigl = rigl_update(&mut model, &mut mask, &grad, round, config.rounds, config.rigl_alpha)?;

    let accuracy = evaluate(&model, &state.test)?.0;
    Ok(ClientUpdate {
        model,
        mask,
        delta,
        vote,
        train_loss,
        accuracy,
        pruned,
        events,
        provenance,
        rigl_shortfall: rigl.shortfall(),
    })
}
