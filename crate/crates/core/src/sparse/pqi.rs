//! PQ-Index compressibility scoring and the layer-wise adaptive pruning built on it.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::learner::model::FlatModel;
use crate::scalar::Scalar;
use crate::sparse::mask::MaskSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PqiParams {
    pub p: f64,
    pub q: f64,
    pub gamma: f64,
    pub eta_c: f64,
    /// Per-event cap on the pruned fraction of a layer's active weights.
    pub beta: f64,
}

impl Default for PqiParams {
    fn default() -> Self {
        Self {
            p: 0.5,
            q: 1.0,
            gamma: 0.9,
            eta_c: 1.0,
            beta: 0.2,
        }
    }
}

impl PqiParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < self.q && self.q.is_finite()) {
            return Err(invalid(format!("need 0 < p < q, got p = {}, q = {}", self.p, self.q)));
        }
        if !(self.gamma > 0.0 && self.eta_c > 0.0) {
            return Err(invalid("gamma and eta_c must be positive"));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(invalid(format!("beta = {} outside [0, 1]", self.beta)));
        }
        Ok(())
    }
}

/// `I(w) = 1 - d^(1/q - 1/p) * ||w||_p / ||w||_q` over the `d` entries of `w`.
///
/// Zero for equal magnitudes, approaching `1 - d^(1/q - 1/p)` for one-hot vectors.
pub fn pq_index<S: Scalar>(weights: &[S], p: S, q: S) -> Result<S> {
    if !(p > S::zero() && p < q) {
        return Err(invalid(format!("need 0 < p < q, got p = {p}, q = {q}")));
    }
    if weights.iter().all(|w| *w == S::zero()) {
        return Err(Error::UndefinedInput("PQ index of a zero (or empty) vector".into()));
    }
    let d = S::of_usize(weights.len());
    let norm = |r: S| -> S { weights.iter().map(|w| w.abs().powf(r)).sum::<S>().powf(r.recip()) };
    let ratio = norm(p) / norm(q);
    let index = S::one() - d.powf(q.recip() - p.recip()) * ratio;
    Ok(index.max(S::zero()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneEvent {
    pub round: usize,
    pub layer: String,
    pub pruned_count: usize,
    pub pq_index: f64,
    pub resulting_density: f64,
}

pub fn layer_name(l: usize) -> String {
    format!("fc{}", l + 1)
}

/// Number of weights to prune from a layer with `active` weights and PQ index `index`.
pub fn sap_prune_count(active: usize, index: f64, params: &PqiParams) -> usize {
    let (p, q) = (params.p, params.q);
    let d = active as f64;
    let keep = d * (1.0 + params.eta_c).powf(-q / (q - p)) * (1.0 - index).powf(p / (q - p));
    let fraction = (params.gamma * (1.0 - keep / d)).min(params.beta).max(0.0);
    ((d * fraction).floor() as usize).min(active)
}

/// Indices of the `count` smallest-magnitude entries among `candidates`; ties go to the
/// lower index.
pub(crate) fn smallest_by_magnitude<S: Scalar>(
    values: &[S],
    candidates: impl Iterator<Item = usize>,
    count: usize,
) -> Vec<usize> {
    let mut c: Vec<usize> = candidates.collect();
    c.sort_by(|&a, &b| {
        values[a]
            .abs()
            .as_f64()
            .total_cmp(&values[b].abs().as_f64())
            .then(a.cmp(&b))
    });
    c.truncate(count);
    c
}

/// Layer-wise PQI-driven pruning. Weights and mask are updated in place; one event is
/// returned per layer that was scored.
///
/// Layers with no active weights, or whose active weights are all zero, are skipped.
pub fn sap_prune<S: Scalar>(
    model: &mut FlatModel<S>,
    mask: &mut MaskSet,
    params: &PqiParams,
    round: usize,
) -> Result<Vec<PruneEvent>> {
    params.validate()?;
    mask.check_aligned(model)?;
    let mut events = Vec::new();
    for l in 0..mask.num_layers() {
        let layer = mask.layer(l);
        if layer.active() == 0 {
            continue;
        }
        let weights = model.weights(l);
        let active: Vec<S> = layer.active_indices().map(|i| weights[i]).collect();
        let index = match pq_index(&active, S::of(params.p), S::of(params.q)) {
            Ok(v) => v.as_f64(),
            Err(Error::UndefinedInput(_)) => {
                log::warn!(
                    "round {round}: {} has only zero-valued active weights; not pruned",
                    layer_name(l)
                );
                continue;
            }
            Err(e) => return Err(e),
        };
        let count = sap_prune_count(layer.active(), index, params);
        let victims = smallest_by_magnitude(weights, layer.active_indices(), count);
        let weights = model.weights_mut(l);
        let layer = mask.layer_mut(l);
        for &i in &victims {
            weights[i] = S::zero();
            layer.set(i, false);
        }
        events.push(PruneEvent {
            round,
            layer: layer_name(l),
            pruned_count: victims.len(),
            pq_index: index,
            resulting_density: layer.density(),
        });
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::model::LayerShape;

    #[test]
    fn pq_index_examples() {
        assert_eq!(pq_index(&[1.0f64; 4], 0.5, 1.0).unwrap(), 0.0);
        // d^(1/q - 1/p) = 4^(-1), norm ratio 1
        let one_hot = pq_index(&[1.0f64, 0.0, 0.0, 0.0], 0.5, 1.0).unwrap();
        assert!((one_hot - 0.75).abs() < 1e-15);
        let expected = 1.0 - 4.0 / (2f64.sqrt() * 10f64.sqrt());
        let got = pq_index(&[3.0f64, 1.0], 1.0, 2.0).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.10557).abs() < 1e-5);
    }

    #[test]
    fn pq_index_errors() {
        assert!(matches!(
            pq_index(&[0.0f32; 3], 0.5, 1.0),
            Err(Error::UndefinedInput(_))
        ));
        assert!(pq_index::<f32>(&[], 0.5, 1.0).is_err());
        assert!(pq_index(&[1.0f32], 1.0, 1.0).is_err());
        assert!(pq_index(&[1.0f32], 0.0, 1.0).is_err());
    }

    fn uniform_layer(beta: f64) -> (FlatModel<f32>, MaskSet, Vec<PruneEvent>) {
        let shapes = [LayerShape::new(20, 1)];
        let mut params = vec![1.0f32; 20];
        params.push(0.0);
        let mut model = FlatModel::from_flat(&shapes, params).unwrap();
        let mut mask = MaskSet::dense(&shapes);
        let p = PqiParams {
            beta,
            ..PqiParams::default()
        };
        let events = sap_prune(&mut model, &mut mask, &p, 7).unwrap();
        (model, mask, events)
    }

    #[test]
    fn capped_uniform_layer_prunes_four() {
        // I = 0, r/d = 2^-2, gamma * 0.75 = 0.675 > beta = 0.2 -> floor(20 * 0.2) = 4
        let (model, mask, events) = uniform_layer(0.2);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].pruned_count, 4);
        assert_eq!(events[0].pq_index, 0.0);
        assert_eq!(mask.total_active(), 16);
        // equal magnitudes: the lowest indices go first
        assert_eq!(&mask.layer(0).bits()[..5], &[false, false, false, false, true]);
        assert!(mask.holds_for(&model));
    }

    #[test]
    fn uncapped_uniform_layer_prunes_thirteen() {
        let (_, mask, events) = uniform_layer(1.0);
        assert_eq!(events[0].pruned_count, 13);
        assert_eq!(mask.total_active(), 7);
        assert!((events[0].resulting_density - 0.35).abs() < 1e-12);
    }

    #[test]
    fn zero_beta_is_noop() {
        let (model, mask, events) = uniform_layer(0.0);
        assert_eq!(events[0].pruned_count, 0);
        assert_eq!(mask.total_active(), 20);
        assert!(model.weights(0).iter().all(|&w| w == 1.0));
    }

    #[test]
    fn prunes_smallest_magnitudes() {
        let shapes = [LayerShape::new(5, 1)];
        let mut model = FlatModel::from_flat(&shapes, vec![0.5f64, -0.1, 2.0, 0.05, -3.0, 0.0]).unwrap();
        let mut mask = MaskSet::dense(&shapes);
        let p = PqiParams {
            beta: 0.4,
            ..PqiParams::default()
        };
        let events = sap_prune(&mut model, &mut mask, &p, 1).unwrap();
        assert_eq!(events[0].pruned_count, 2);
        assert_eq!(mask.layer(0).bits(), &[true, false, true, false, true]);
        assert_eq!(model.weights(0), &[0.5, 0.0, 2.0, 0.0, -3.0]);
    }

    #[test]
    fn skips_empty_and_zero_layers() {
        let shapes = [LayerShape::new(2, 1), LayerShape::new(2, 1)];
        let mut model = FlatModel::<f32>::zeros(&shapes);
        let mut mask = MaskSet::from_bits(vec![vec![false, false], vec![true, true]]);
        let events = sap_prune(&mut model, &mut mask, &PqiParams::default(), 1).unwrap();
        assert!(events.is_empty());
        assert_eq!(mask.total_active(), 2);
    }
}
