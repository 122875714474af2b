use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::Result;
use crate::learner::data::DataShard;
use crate::learner::mlp::loss_and_grad;
use crate::learner::model::FlatModel;
use crate::scalar::Scalar;
use crate::sparse::MaskSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdParams {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
}

/// Learning rate for communication round `round` (1-based): `lr0 * decay^(round - 1)`.
pub fn lr_at_round(lr0: f64, decay: f64, round: usize) -> f64 {
    lr0 * decay.powi(round.saturating_sub(1) as i32)
}

/// Masked mini-batch SGD. Returns the mean training loss of the final epoch (NaN when no
/// epoch ran or the shard is empty, in which case the model is untouched).
pub fn local_train<S: Scalar, R: Rng + ?Sized>(
    model: &mut FlatModel<S>,
    mask: &MaskSet,
    shard: &DataShard<S>,
    params: &SgdParams,
    rng: &mut R,
) -> Result<f64> {
    mask.check_aligned(model)?;
    if params.epochs == 0 {
        return Ok(f64::NAN);
    }
    if shard.is_empty() {
        log::warn!(
            "client {} has an empty training shard; skipping local training",
            shard.owner
        );
        return Ok(f64::NAN);
    }
    let coord_mask = mask.coordinate_mask(model.shapes());
    let lr = S::of(params.lr);
    let wd = S::of(params.weight_decay);
    let batch = params.batch_size.max(1);
    let mut grad = vec![S::zero(); model.len()];
    let mut order: Vec<usize> = (0..shard.len()).collect();
    let mut epoch_loss = f64::NAN;
    for _ in 0..params.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for rows in order.chunks(batch) {
            let loss = loss_and_grad(model, shard, rows, &mut grad);
            total += loss.as_f64() * rows.len() as f64;
            for ((w, &g), &on) in model.as_mut_slice().iter_mut().zip(&grad).zip(&coord_mask) {
                if on {
                    *w -= lr * (g + wd * *w);
                }
            }
        }
        epoch_loss = total / shard.len() as f64;
    }
    Ok(epoch_loss)
}

/// Dense cross-entropy gradient on one uniformly sampled batch (mask lifted).
pub fn dense_gradient<S: Scalar, R: Rng + ?Sized>(
    model: &FlatModel<S>,
    shard: &DataShard<S>,
    batch_size: usize,
    rng: &mut R,
) -> Vec<S> {
    let mut grad = vec![S::zero(); model.len()];
    if shard.is_empty() {
        return grad;
    }
    let take = batch_size.clamp(1, shard.len());
    let mut rows = index::sample(rng, shard.len(), take).into_vec();
    rows.sort_unstable();
    loss_and_grad(model, shard, &rows, &mut grad);
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::model::mlp_shapes;
    use crate::rng::SimRng;
    use crate::sparse::erk_init;
    use rand::SeedableRng;

    fn shard() -> DataShard<f32> {
        let mut rng = SimRng::seed_from_u64(3);
        DataShard {
            owner: 0,
            inputs: (0..40 * 5).map(|_| rng.random_range(-1.0..1.0)).collect(),
            labels: (0..40).map(|i| i % 3).collect(),
            dim: 5,
        }
    }

    #[test]
    fn zero_epochs_is_identity() {
        let shapes = mlp_shapes(5, &[8], 3);
        let mut rng = SimRng::seed_from_u64(1);
        let mut model = FlatModel::<f32>::init_uniform(&shapes, &mut rng);
        let before = model.clone();
        let mask = MaskSet::dense(&shapes);
        let p = SgdParams {
            epochs: 0,
            lr: 0.1,
            weight_decay: 5e-4,
            batch_size: 8,
        };
        let loss = local_train(&mut model, &mask, &shard(), &p, &mut rng).unwrap();
        assert!(loss.is_nan());
        assert_eq!(model, before);
    }

    #[test]
    fn masked_coordinates_stay_zero() {
        let shapes = mlp_shapes(5, &[8], 3);
        let mut rng = SimRng::seed_from_u64(2);
        let mask = erk_init(&shapes, 0.4, &mut rng).unwrap();
        let mut model = FlatModel::<f32>::init_uniform(&shapes, &mut rng);
        mask.apply(&mut model);
        let p = SgdParams {
            epochs: 4,
            lr: 0.1,
            weight_decay: 5e-4,
            batch_size: 7,
        };
        let data = shard();
        let first = local_train(&mut model, &mask, &data, &p, &mut rng).unwrap();
        let second = local_train(&mut model, &mask, &data, &p, &mut rng).unwrap();
        assert!(first.is_finite() && second.is_finite());
        assert!(mask.holds_for(&model));
    }

    #[test]
    fn lr_decays_per_round() {
        assert_eq!(lr_at_round(0.1, 0.998, 1), 0.1);
        assert!((lr_at_round(0.1, 0.998, 3) - 0.1 * 0.998 * 0.998).abs() < 1e-15);
    }

    #[test]
    fn empty_shard_is_noop() {
        let shapes = mlp_shapes(5, &[4], 3);
        let mut model = FlatModel::<f32>::zeros(&shapes);
        let empty = DataShard {
            owner: 1,
            inputs: vec![],
            labels: vec![],
            dim: 5,
        };
        let p = SgdParams {
            epochs: 2,
            lr: 0.1,
            weight_decay: 0.0,
            batch_size: 4,
        };
        let loss = local_train(
            &mut model,
            &MaskSet::dense(&shapes),
            &empty,
            &p,
            &mut SimRng::seed_from_u64(0),
        )
        .unwrap();
        assert!(loss.is_nan());
    }
}
