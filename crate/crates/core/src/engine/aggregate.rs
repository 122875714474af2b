use crate::error::{Error, Result};
use crate::learner::model::FlatModel;
use crate::scalar::Scalar;
use crate::sparse::MaskSet;

/// Coordinate-wise masked average over flat vectors:
/// `out_i = (sum_j w_ji) / (sum_j m_ji) * own_mask_i`, with `0/0 -> 0`.
///
/// `own` is part of the sums and is accumulated first, followed by `contributions` in order.
pub fn aggregate_masked_flat<S: Scalar>(own: (&[S], &[bool]), contributions: &[(&[S], &[bool])]) -> Result<Vec<S>> {
    let n = own.0.len();
    for (w, m) in std::iter::once(&own).chain(contributions) {
        for len in [w.len(), m.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
    }
    let mut num: Vec<S> = own.0.to_vec();
    let mut den: Vec<u32> = own.1.iter().map(|&b| u32::from(b)).collect();
    for (w, m) in contributions {
        for i in 0..n {
            num[i] += w[i];
            den[i] += u32::from(m[i]);
        }
    }
    Ok(num
        .into_iter()
        .zip(den)
        .zip(own.1)
        .map(|((s, d), &keep)| {
            if keep && d > 0 {
                s / S::from_u32(d).expect("count fits")
            } else {
                S::zero()
            }
        })
        .collect())
}

/// Masked aggregation of whole models; biases are treated as always active.
pub fn aggregate_masked<S: Scalar>(
    own: (&FlatModel<S>, &MaskSet),
    contributions: &[(&FlatModel<S>, &MaskSet)],
) -> Result<FlatModel<S>> {
    let shapes = own.0.shapes();
    own.1.check_aligned(own.0)?;
    let own_mask = own.1.coordinate_mask(shapes);
    let masks: Vec<Vec<bool>> = contributions
        .iter()
        .map(|(model, mask)| {
            mask.check_aligned(model)?;
            Ok(mask.coordinate_mask(model.shapes()))
        })
        .collect::<Result<_>>()?;
    let flat: Vec<(&[S], &[bool])> = contributions
        .iter()
        .zip(&masks)
        .map(|((model, _), m)| (model.as_slice(), m.as_slice()))
        .collect();
    let out = aggregate_masked_flat((own.0.as_slice(), &own_mask), &flat)?;
    FlatModel::from_flat(shapes, out)
}
