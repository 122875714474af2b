use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fully connected layer dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub n_in: usize,
    pub n_out: usize,
}

impl LayerShape {
    pub const fn new(n_in: usize, n_out: usize) -> Self {
        Self { n_in, n_out }
    }

    pub const fn weights(&self) -> usize {
        self.n_in * self.n_out
    }

    pub const fn params(&self) -> usize {
        self.n_in * self.n_out + self.n_out
    }
}

/// Shapes of an input -> hidden (ReLU) -> ... -> classes network.
pub fn mlp_shapes(input: usize, hidden: &[usize], classes: usize) -> Vec<LayerShape> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(input);
    dims.extend_from_slice(hidden);
    dims.push(classes);
    dims.windows(2).map(|w| LayerShape::new(w[0], w[1])).collect()
}

/// Parameters of a dense network stored as one flat vector.
///
/// Layer `l` occupies `[offset(l), offset(l) + n_in*n_out)` for its row-major weight matrix
/// (entry `(i, j)` at `i * n_out + j`) followed by `n_out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatModel<S> {
    shapes: Vec<LayerShape>,
    offsets: Vec<usize>,
    params: Vec<S>,
}

impl<S: Scalar> FlatModel<S> {
    pub fn zeros(shapes: &[LayerShape]) -> Self {
        let (offsets, len) = layout(shapes);
        Self {
            shapes: shapes.to_vec(),
            offsets,
            params: vec![S::zero(); len],
        }
    }

    pub fn from_flat(shapes: &[LayerShape], params: Vec<S>) -> Result<Self> {
        let (offsets, len) = layout(shapes);
        if params.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: params.len(),
            });
        }
        Ok(Self {
            shapes: shapes.to_vec(),
            offsets,
            params,
        })
    }

    /// Fan-based uniform init `U(-sqrt(6/(n_in+n_out)), +sqrt(6/(n_in+n_out)))`; zero biases.
    pub fn init_uniform<R: Rng + ?Sized>(shapes: &[LayerShape], rng: &mut R) -> Self {
        let mut model = Self::zeros(shapes);
        for (l, shape) in shapes.iter().enumerate() {
            let bound = (6.0 / (shape.n_in + shape.n_out) as f64).sqrt();
            for w in model.weights_mut(l) {
                *w = S::of(rng.random_range(-bound..bound));
            }
        }
        model
    }

    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn num_layers(&self) -> usize {
        self.shapes.len()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.params
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.params
    }

    pub fn into_vec(self) -> Vec<S> {
        self.params
    }

    /// Flat offset where layer `l` starts.
    pub fn offset(&self, l: usize) -> usize {
        self.offsets[l]
    }

    pub fn weights(&self, l: usize) -> &[S] {
        let o = self.offsets[l];
        &self.params[o..o + self.shapes[l].weights()]
    }

    pub fn weights_mut(&mut self, l: usize) -> &mut [S] {
        let o = self.offsets[l];
        let n = self.shapes[l].weights();
        &mut self.params[o..o + n]
    }

    pub fn bias(&self, l: usize) -> &[S] {
        let o = self.offsets[l] + self.shapes[l].weights();
        &self.params[o..o + self.shapes[l].n_out]
    }

    pub fn bias_mut(&mut self, l: usize) -> &mut [S] {
        let o = self.offsets[l] + self.shapes[l].weights();
        let n = self.shapes[l].n_out;
        &mut self.params[o..o + n]
    }

    /// Squared Euclidean distance over the full flat vector, accumulated in `f64`.
    pub fn sq_distance(&self, other: &Self) -> f64 {
        self.params
            .iter()
            .zip(&other.params)
            .map(|(a, b)| {
                let d = a.as_f64() - b.as_f64();
                d * d
            })
            .sum()
    }

    pub fn cast<T: Scalar>(&self) -> FlatModel<T> {
        FlatModel {
            shapes: self.shapes.clone(),
            offsets: self.offsets.clone(),
            params: self.params.iter().map(|x| T::of(x.as_f64())).collect(),
        }
    }
}

fn layout(shapes: &[LayerShape]) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(shapes.len());
    let mut acc = 0;
    for s in shapes {
        offsets.push(acc);
        acc += s.params();
    }
    (offsets, acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use rand::SeedableRng;

    #[test]
    fn flat_layout_matches_shapes() {
        let shapes = mlp_shapes(4, &[2], 3);
        assert_eq!(shapes, vec![LayerShape::new(4, 2), LayerShape::new(2, 3)]);
        let m = FlatModel::<f32>::zeros(&shapes);
        assert_eq!(m.len(), 4 * 2 + 2 + 2 * 3 + 3);
        assert_eq!(m.offset(1), 10);
        assert_eq!(m.bias(1).len(), 3);
        assert!(FlatModel::<f32>::from_flat(&shapes, vec![0.0; 3]).is_err());
    }

    #[test]
    fn init_respects_fan_bound() {
        let shapes = mlp_shapes(10, &[6], 4);
        let m = FlatModel::<f64>::init_uniform(&shapes, &mut SimRng::seed_from_u64(1));
        let bound = (6.0f64 / 16.0).sqrt();
        assert!(m.weights(0).iter().all(|w| w.abs() <= bound));
        assert!(m.bias(0).iter().all(|&b| b == 0.0));
        assert!(m.weights(0).iter().any(|&w| w != 0.0));
    }
}
