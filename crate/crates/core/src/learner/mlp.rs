//! Forward and backward passes of the ReLU MLP over a [`FlatModel`], with softmax
//! cross-entropy loss.

use crate::error::{Error, Result};
use crate::learner::data::DataShard;
use crate::learner::model::FlatModel;
use crate::scalar::Scalar;

/// Logits for a batch of rows (`rows.len() * n_classes`, row-major).
pub fn logits<S: Scalar>(model: &FlatModel<S>, shard: &DataShard<S>, rows: &[usize]) -> Vec<S> {
    let acts = forward(model, shard, rows);
    acts.into_iter().last().expect("at least one layer")
}

/// Per-layer outputs; hidden layers are post-ReLU, the last entry holds the logits.
fn forward<S: Scalar>(model: &FlatModel<S>, shard: &DataShard<S>, rows: &[usize]) -> Vec<Vec<S>> {
    let b = rows.len();
    let layers = model.num_layers();
    let mut outs: Vec<Vec<S>> = Vec::with_capacity(layers);
    for l in 0..layers {
        let shape = model.shapes()[l];
        let w = model.weights(l);
        let bias = model.bias(l);
        let mut out = vec![S::zero(); b * shape.n_out];
        for (r, row_out) in out.chunks_exact_mut(shape.n_out).enumerate() {
            row_out.copy_from_slice(bias);
            let input: &[S] = if l == 0 {
                shard.row(rows[r])
            } else {
                &outs[l - 1][r * shape.n_in..(r + 1) * shape.n_in]
            };
            for (i, &x) in input.iter().enumerate() {
                if x == S::zero() {
                    continue;
                }
                let wrow = &w[i * shape.n_out..(i + 1) * shape.n_out];
                for (o, &wij) in row_out.iter_mut().zip(wrow) {
                    *o += x * wij;
                }
            }
            if l + 1 < layers {
                for o in row_out.iter_mut() {
                    if *o < S::zero() {
                        *o = S::zero();
                    }
                }
            }
        }
        outs.push(out);
    }
    outs
}

/// Softmax cross-entropy of one row of logits against `label`; writes probabilities into
/// `probs` and returns the loss.
fn softmax_xent<S: Scalar>(z: &[S], label: usize, probs: &mut [S]) -> S {
    let max = z.iter().copied().fold(S::neg_infinity(), S::max);
    let mut sum = S::zero();
    for (p, &v) in probs.iter_mut().zip(z) {
        *p = (v - max).exp();
        sum += *p;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    sum.ln() + max - z[label]
}

/// Mean cross-entropy over `rows` and its gradient w.r.t. every parameter (dense, no mask),
/// written into `grad` (overwrite semantics).
pub fn loss_and_grad<S: Scalar>(model: &FlatModel<S>, shard: &DataShard<S>, rows: &[usize], grad: &mut [S]) -> S {
    assert_eq!(grad.len(), model.len(), "gradient buffer must match the model");
    grad.iter_mut().for_each(|g| *g = S::zero());
    let b = rows.len();
    if b == 0 {
        return S::zero();
    }
    let acts = forward(model, shard, rows);
    let layers = model.num_layers();
    let classes = model.shapes()[layers - 1].n_out;
    let inv_b = S::one() / S::of_usize(b);

    // delta of the logits
    let mut delta = vec![S::zero(); b * classes];
    let mut loss = S::zero();
    for r in 0..b {
        let z = &acts[layers - 1][r * classes..(r + 1) * classes];
        let d = &mut delta[r * classes..(r + 1) * classes];
        let y = shard.labels[rows[r]];
        loss += softmax_xent(z, y, d);
        d[y] -= S::one();
        d.iter_mut().for_each(|v| *v *= inv_b);
    }

    for l in (0..layers).rev() {
        let shape = model.shapes()[l];
        let offset = model.offset(l);
        let (gw, rest) = grad[offset..offset + shape.params()].split_at_mut(shape.weights());
        let gb = rest;
        for r in 0..b {
            let d = &delta[r * shape.n_out..(r + 1) * shape.n_out];
            let input: &[S] = if l == 0 {
                shard.row(rows[r])
            } else {
                &acts[l - 1][r * shape.n_in..(r + 1) * shape.n_in]
            };
            for (g, &dv) in gb.iter_mut().zip(d) {
                *g += dv;
            }
            for (i, &x) in input.iter().enumerate() {
                if x == S::zero() {
                    continue;
                }
                for (g, &dv) in gw[i * shape.n_out..(i + 1) * shape.n_out].iter_mut().zip(d) {
                    *g += x * dv;
                }
            }
        }
        if l > 0 {
            let w = model.weights(l);
            let prev = &acts[l - 1];
            let mut next = vec![S::zero(); b * shape.n_in];
            for r in 0..b {
                let d = &delta[r * shape.n_out..(r + 1) * shape.n_out];
                for i in 0..shape.n_in {
                    if prev[r * shape.n_in + i] <= S::zero() {
                        continue;
                    }
                    let wrow = &w[i * shape.n_out..(i + 1) * shape.n_out];
                    next[r * shape.n_in + i] = wrow.iter().zip(d).map(|(&a, &c)| a * c).sum();
                }
            }
            delta = next;
        }
    }
    loss * inv_b
}

/// Top-1 accuracy and mean cross-entropy on a shard.
pub fn evaluate<S: Scalar>(model: &FlatModel<S>, shard: &DataShard<S>) -> Result<(f64, f64)> {
    if shard.is_empty() {
        return Err(Error::EmptyShard(shard.owner));
    }
    let classes = model.shapes().last().expect("layers").n_out;
    let rows: Vec<usize> = (0..shard.len()).collect();
    let mut correct = 0usize;
    let mut loss = 0.0f64;
    let mut probs = vec![S::zero(); classes];
    for chunk in rows.chunks(256) {
        let z = logits(model, shard, chunk);
        for (r, &row) in chunk.iter().enumerate() {
            let zr = &z[r * classes..(r + 1) * classes];
            let y = shard.labels[row];
            loss += softmax_xent(zr, y, &mut probs).as_f64();
            let mut best = 0;
            for c in 1..classes {
                if zr[c] > zr[best] {
                    best = c;
                }
            }
            correct += usize::from(best == y);
        }
    }
    let n = shard.len() as f64;
    Ok((correct as f64 / n, loss / n))
}
