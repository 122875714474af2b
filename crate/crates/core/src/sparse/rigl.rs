use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::learner::model::FlatModel;
use crate::scalar::Scalar;
use crate::sparse::mask::MaskSet;
use crate::sparse::pqi::{layer_name, smallest_by_magnitude};

/// Cosine-annealed drop fraction `alpha0/2 * (1 + cos(pi * t / T))`.
pub fn rigl_alpha(alpha0: f64, t: usize, horizon: usize) -> f64 {
    if horizon == 0 {
        return 0.0;
    }
    let phase = t.min(horizon) as f64 / horizon as f64;
    alpha0 / 2.0 * (1.0 + (phase * PI).cos())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RiglReport {
    pub dropped: usize,
    pub regrown: usize,
}

impl RiglReport {
    /// Weights lost because a layer had fewer regrowth candidates than drops.
    pub fn shortfall(&self) -> usize {
        self.dropped - self.regrown
    }
}

/// One prune/regrow step at annealed ratio `alpha_t`.
///
/// Per layer, `floor(alpha_t * active)` smallest-magnitude active weights are dropped and the
/// same number of previously inactive weights with the largest dense-gradient magnitude are
/// regrown at zero. With too few candidates all of them are regrown and the layer shrinks;
/// see [`RiglReport::shortfall`]. `dense_grad` uses the model's flat layout.
pub fn rigl_update_with_ratio<S: Scalar>(
    model: &mut FlatModel<S>,
    mask: &mut MaskSet,
    dense_grad: &[S],
    alpha_t: f64,
) -> Result<RiglReport> {
    mask.check_aligned(model)?;
    if dense_grad.len() != model.len() {
        return Err(Error::DimensionMismatch {
            expected: model.len(),
            got: dense_grad.len(),
        });
    }
    let mut report = RiglReport::default();
    for l in 0..mask.num_layers() {
        let active = mask.layer(l).active();
        let kappa = ((alpha_t * active as f64).floor() as usize).min(active);
        if kappa == 0 {
            continue;
        }
        let offset = model.offset(l);
        let n = model.shapes()[l].weights();
        let grad = &dense_grad[offset..offset + n];

        let layer = mask.layer(l);
        let mut inactive: Vec<usize> = (0..n).filter(|&i| !layer.get(i)).collect();
        let drop = smallest_by_magnitude(model.weights(l), layer.active_indices(), kappa);
        inactive.sort_by(|&a, &b| {
            grad[b]
                .abs()
                .as_f64()
                .total_cmp(&grad[a].abs().as_f64())
                .then(a.cmp(&b))
        });
        if inactive.len() < kappa {
            log::debug!(
                "{}: only {} regrowth candidates for {} dropped weights",
                layer_name(l),
                inactive.len(),
                kappa
            );
        }
        inactive.truncate(kappa);

        let weights = model.weights_mut(l);
        let layer = mask.layer_mut(l);
        for &i in &drop {
            layer.set(i, false);
            weights[i] = S::zero();
        }
        for &i in &inactive {
            layer.set(i, true);
            weights[i] = S::zero();
        }
        report.dropped += drop.len();
        report.regrown += inactive.len();
    }
    Ok(report)
}

/// [`rigl_update_with_ratio`] at the annealed ratio for round `t` of `horizon`.
pub fn rigl_update<S: Scalar>(
    model: &mut FlatModel<S>,
    mask: &mut MaskSet,
    dense_grad: &[S],
    t: usize,
    horizon: usize,
    alpha0: f64,
) -> Result<RiglReport> {
    rigl_update_with_ratio(model, mask, dense_grad, rigl_alpha(alpha0, t, horizon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::model::LayerShape;

    #[test]
    fn alpha_endpoints() {
        assert_eq!(rigl_alpha(0.3, 0, 100), 0.3);
        assert_eq!(rigl_alpha(0.3, 100, 100), 0.0);
        assert!((rigl_alpha(0.4, 50, 100) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn drop_small_regrow_large() {
        let shapes = [LayerShape::new(4, 1)];
        let mut model = FlatModel::from_flat(&shapes, vec![0.9f32, 0.1, 0.0, 0.0, 0.0]).unwrap();
        let mut mask = MaskSet::from_bits(vec![vec![true, true, false, false]]);
        let grad = vec![0.0f32, 0.0, 0.5, 0.2, 0.0];
        let r = rigl_update_with_ratio(&mut model, &mut mask, &grad, 0.5).unwrap();
        assert_eq!(r, RiglReport { dropped: 1, regrown: 1 });
        assert_eq!(mask.layer(0).bits(), &[true, false, true, false]);
        assert_eq!(model.weights(0), &[0.9, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn horizon_round_leaves_mask() {
        let shapes = [LayerShape::new(3, 1)];
        let mut model = FlatModel::from_flat(&shapes, vec![0.2f64, 0.0, 0.3, 0.0]).unwrap();
        let mut mask = MaskSet::from_bits(vec![vec![true, false, true]]);
        let before = mask.clone();
        rigl_update(&mut model, &mut mask, &[1.0; 4], 10, 10, 0.5).unwrap();
        assert_eq!(mask, before);
    }

    #[test]
    fn just_dropped_weights_are_not_regrown() {
        // the dropped weight carries the largest gradient but is not a candidate
        let shapes = [LayerShape::new(3, 1)];
        let mut model = FlatModel::from_flat(&shapes, vec![0.01f32, 0.5, 0.0, 0.0]).unwrap();
        let mut mask = MaskSet::from_bits(vec![vec![true, true, false]]);
        let grad = vec![9.0f32, 0.0, 0.1, 0.0];
        rigl_update_with_ratio(&mut model, &mut mask, &grad, 0.5).unwrap();
        assert_eq!(mask.layer(0).bits(), &[false, true, true]);
    }

    #[test]
    fn shortfall_shrinks_layer() {
        let shapes = [LayerShape::new(3, 1)];
        let mut model = FlatModel::from_flat(&shapes, vec![0.1f32, 0.2, 0.3, 0.0]).unwrap();
        let mut mask = MaskSet::dense(&shapes);
        let r = rigl_update_with_ratio(&mut model, &mut mask, &[0.0; 4], 0.7).unwrap();
        assert_eq!(r, RiglReport { dropped: 2, regrown: 0 });
        assert_eq!(mask.total_active(), 1);
    }
}
