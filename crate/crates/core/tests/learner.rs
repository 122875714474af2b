#![allow(clippy::needless_range_loop)]

use dadpfl_core::learner::{
    evaluate, local_train, loss_and_grad, mlp_shapes, partition_dirichlet, partition_pathological, synthetic_blobs,
    DataShard, FlatModel, SgdParams, SyntheticSpec,
};
use dadpfl_core::rng::SimRng;
use dadpfl_core::sparse::{erk_init, MaskSet};
use rand::{Rng, SeedableRng};

fn max_relative_error(model: &FlatModel<f64>, shard: &DataShard<f64>, rows: &[usize], h: f64) -> f64 {
    let mut grad = vec![0.0; model.len()];
    loss_and_grad(model, shard, rows, &mut grad);
    let mut scratch = vec![0.0; model.len()];
    let mut worst = 0.0f64;
    for i in 0..model.len() {
        let mut plus = model.clone();
        plus.as_mut_slice()[i] += h;
        let mut minus = model.clone();
        minus.as_mut_slice()[i] -= h;
        let fd = (loss_and_grad(&plus, shard, rows, &mut scratch) - loss_and_grad(&minus, shard, rows, &mut scratch))
            / (2.0 * h);
        let scale = fd.abs().max(grad[i].abs());
        if scale > 1e-10 {
            worst = worst.max((fd - grad[i]).abs() / scale);
        }
    }
    worst
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = SimRng::seed_from_u64(4);
    let shapes = mlp_shapes(4, &[2], 3);
    let mut model = FlatModel::<f64>::init_uniform(&shapes, &mut rng);
    model.bias_mut(0).iter_mut().for_each(|b| *b = 0.3);
    let shard = DataShard {
        owner: 0,
        inputs: (0..32).map(|_| rng.random_range(-1.0..1.0)).collect(),
        labels: (0..8).map(|i| i % 3).collect(),
        dim: 4,
    };
    let rows: Vec<usize> = (0..8).collect();
    assert!(max_relative_error(&model, &shard, &rows, 1e-3) < 1e-4);
}

#[test]
fn gradient_check_on_a_deeper_net() {
    let mut rng = SimRng::seed_from_u64(5);
    let shapes = mlp_shapes(5, &[4, 3], 4);
    let mut model = FlatModel::<f64>::init_uniform(&shapes, &mut rng);
    for l in 0..2 {
        model.bias_mut(l).iter_mut().for_each(|b| *b = 0.2);
    }
    let shard = DataShard {
        owner: 0,
        inputs: (0..50).map(|_| rng.random_range(-1.0..1.0)).collect(),
        labels: (0..10).map(|i| i % 4).collect(),
        dim: 5,
    };
    let rows: Vec<usize> = (0..10).collect();
    assert!(max_relative_error(&model, &shard, &rows, 1e-5) < 1e-4);
}

#[test]
fn training_separates_blobs() {
    let mut rng = SimRng::seed_from_u64(6);
    let spec = SyntheticSpec {
        classes: 4,
        dim: 8,
        samples: 800,
        blob_sigma: 0.3,
        center_scale: 1.0,
    };
    let data = synthetic_blobs::<f32, _>(&spec, &mut rng);
    let train = data.select(0, &(0..600).collect::<Vec<_>>());
    let test = data.select(0, &(600..800).collect::<Vec<_>>());
    let shapes = mlp_shapes(8, &[16], 4);
    let mut model = FlatModel::<f32>::init_uniform(&shapes, &mut rng);
    let mask = erk_init(&shapes, 0.5, &mut rng).unwrap();
    mask.apply(&mut model);
    let params = SgdParams {
        epochs: 20,
        lr: 0.1,
        weight_decay: 5e-4,
        batch_size: 32,
    };
    local_train(&mut model, &mask, &train, &params, &mut rng).unwrap();
    let (acc, loss) = evaluate(&model, &test).unwrap();
    assert!(acc >= 0.95, "accuracy {acc}, loss {loss}");
    assert!(mask.holds_for(&model));
}

#[test]
fn dense_mask_trains_every_weight() {
    let mut rng = SimRng::seed_from_u64(7);
    let shapes = mlp_shapes(3, &[4], 2);
    let mut model = FlatModel::<f64>::init_uniform(&shapes, &mut rng);
    let start = model.clone();
    let shard = DataShard {
        owner: 0,
        inputs: (0..30).map(|_| rng.random_range(-1.0..1.0)).collect(),
        labels: (0..10).map(|i| i % 2).collect(),
        dim: 3,
    };
    let params = SgdParams {
        epochs: 1,
        lr: 0.5,
        weight_decay: 0.0,
        batch_size: 10,
    };
    local_train(&mut model, &MaskSet::dense(&shapes), &shard, &params, &mut rng).unwrap();
    let changed = model
        .as_slice()
        .iter()
        .zip(start.as_slice())
        .filter(|(a, b)| a != b)
        .count();
    assert!(changed > model.len() / 2);
}

#[test]
fn partitions_cover_every_sample_once() {
    let mut rng = SimRng::seed_from_u64(8);
    let labels: Vec<usize> = (0..2000).map(|i| i % 10).collect();
    for parts in [
        partition_dirichlet(&labels, 20, 0.3, &mut rng).unwrap(),
        partition_pathological(&labels, 20, 2, &mut rng).unwrap(),
    ] {
        assert_eq!(parts.len(), 20);
        let mut seen = vec![false; labels.len()];
        for shard in &parts {
            assert!(!shard.is_empty());
            for &i in shard {
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }
    let pat = partition_pathological(&labels, 20, 2, &mut rng).unwrap();
    for shard in &pat {
        let mut classes: Vec<usize> = shard.iter().map(|&i| labels[i]).collect();
        classes.sort_unstable();
        classes.dedup();
        assert!(classes.len() <= 2);
    }
}
