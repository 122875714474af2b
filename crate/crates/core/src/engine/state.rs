use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::learner::{DataShard, FlatModel};
use crate::scalar::Scalar;
use crate::sparse::{sparsity, MaskSet};

use super::voting::pruning_schedule;

/// Everything one client carries across rounds.
#[derive(Debug, Clone)]
pub struct ClientState<S> {
    pub id: usize,
    pub model: FlatModel<S>,
    pub mask: MaskSet,
    pub train: DataShard<S>,
    pub test: DataShard<S>,
    /// Masked model right after initialisation; the reference for detection scores.
    pub initial_model: FlatModel<S>,
    pub delta_history: Vec<f64>,
    pub vote_history: Vec<u8>,
    pub sparsity: f64,
}

impl<S: Scalar> ClientState<S> {
    pub fn new(id: usize, model: FlatModel<S>, mask: MaskSet, train: DataShard<S>, test: DataShard<S>) -> Self {
        let sparsity = sparsity(&mask);
        Self {
            id,
            initial_model: model.clone(),
            model,
            mask,
            train,
            test,
            delta_history: Vec::new(),
            vote_history: Vec::new(),
            sparsity,
        }
    }
}

/// First further-pruning round and the rounds that follow it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningPlan {
    pub t_star: Option<usize>,
    pub schedule: Vec<usize>,
    pub b: f64,
    pub c: f64,
    pub target_sparsity: f64,
}

impl PruningPlan {
    pub fn new(b: f64, c: f64, target_sparsity: f64) -> Self {
        Self {
            t_star: None,
            schedule: Vec::new(),
            b,
            c,
            target_sparsity,
        }
    }

    /// Fixes `t*` and derives the schedule; later calls are ignored.
    pub fn fix(&mut self, t_star: usize, horizon: usize) -> Result<()> {
        if self.t_star.is_none() {
            self.schedule = pruning_schedule(t_star, self.b, self.c, horizon)?;
            self.t_star = Some(t_star);
        }
        Ok(())
    }

    pub fn prunes_at(&self, round: usize) -> bool {
        self.schedule.binary_search(&round).is_ok()
    }
}

/// Where an aggregation input came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Vintage {
    /// The client's own model as broadcast at the end of the previous round.
    Own,
    /// An awaited prior neighbor's output from this round.
    Fresh,
    /// A neighbor's model as broadcast at the end of the previous round.
    Previous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contribution {
    pub source: usize,
    pub vintage: Vintage,
}
