use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::model::{FlatModel, LayerShape};
use crate::scalar::Scalar;

/// Binary mask over one layer's weight matrix, with a cached active count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerMask {
    bits: Vec<bool>,
    active: usize,
}

impl LayerMask {
    pub fn new(bits: Vec<bool>) -> Self {
        let active = bits.iter().filter(|&&b| b).count();
        Self { bits, active }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn active(&self) -> usize {
        self.active
    }

    pub fn density(&self) -> f64 {
        if self.bits.is_empty() {
            1.0
        } else {
            self.active as f64 / self.bits.len() as f64
        }
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, on: bool) {
        match (self.bits[i], on) {
            (false, true) => self.active += 1,
            (true, false) => self.active -= 1,
            _ => {}
        }
        self.bits[i] = on;
    }

    pub fn active_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }
}

/// Per-layer weight masks aligned with a [`FlatModel`]. Biases are never masked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSet {
    layers: Vec<LayerMask>,
}

impl MaskSet {
    pub fn dense(shapes: &[LayerShape]) -> Self {
        Self {
            layers: shapes.iter().map(|s| LayerMask::new(vec![true; s.weights()])).collect(),
        }
    }

    pub fn from_layers(layers: Vec<LayerMask>) -> Self {
        Self { layers }
    }

    pub fn from_bits(bits: Vec<Vec<bool>>) -> Self {
        Self::from_layers(bits.into_iter().map(LayerMask::new).collect())
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, l: usize) -> &LayerMask {
        &self.layers[l]
    }

    pub fn layer_mut(&mut self, l: usize) -> &mut LayerMask {
        &mut self.layers[l]
    }

    pub fn layers(&self) -> &[LayerMask] {
        &self.layers
    }

    pub fn total_active(&self) -> usize {
        self.layers.iter().map(LayerMask::active).sum()
    }

    pub fn total_len(&self) -> usize {
        self.layers.iter().map(LayerMask::len).sum()
    }

    pub fn density(&self) -> f64 {
        let total = self.total_len();
        if total == 0 {
            1.0
        } else {
            self.total_active() as f64 / total as f64
        }
    }

    pub fn layer_densities(&self) -> Vec<f64> {
        self.layers.iter().map(LayerMask::density).collect()
    }

    /// Whether every cached count equals a fresh recount.
    pub fn is_consistent(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.active == l.bits.iter().filter(|&&b| b).count())
    }

    pub fn check_aligned<S: Scalar>(&self, model: &FlatModel<S>) -> Result<()> {
        if self.layers.len() != model.num_layers() {
            return Err(Error::DimensionMismatch {
                expected: model.num_layers(),
                got: self.layers.len(),
            });
        }
        for (mask, shape) in self.layers.iter().zip(model.shapes()) {
            if mask.len() != shape.weights() {
                return Err(Error::DimensionMismatch {
                    expected: shape.weights(),
                    got: mask.len(),
                });
            }
        }
        Ok(())
    }

    /// Zeroes every masked-out weight.
    pub fn apply<S: Scalar>(&self, model: &mut FlatModel<S>) {
        for (l, mask) in self.layers.iter().enumerate() {
            for (w, &on) in model.weights_mut(l).iter_mut().zip(&mask.bits) {
                if !on {
                    *w = S::zero();
                }
            }
        }
    }

    /// True when every masked-out weight is stored as an exact zero.
    pub fn holds_for<S: Scalar>(&self, model: &FlatModel<S>) -> bool {
        self.layers.iter().enumerate().all(|(l, mask)| {
            model
                .weights(l)
                .iter()
                .zip(&mask.bits)
                .all(|(&w, &on)| on || w == S::zero())
        })
    }

    /// Mask expanded to every flat coordinate of the model; bias coordinates are `true`.
    pub fn coordinate_mask(&self, shapes: &[LayerShape]) -> Vec<bool> {
        let mut out = Vec::with_capacity(shapes.iter().map(LayerShape::params).sum());
        for (mask, shape) in self.layers.iter().zip(shapes) {
            out.extend_from_slice(&mask.bits);
            out.extend(std::iter::repeat_n(true, shape.n_out));
        }
        out
    }
}

/// Fraction of masked-out (zero) entries among all maskable weights.
pub fn sparsity(mask: &MaskSet) -> f64 {
    1.0 - mask.density()
}
