use rand::seq::index;
use rand::Rng;

use crate::error::{invalid, Result};
use crate::learner::model::LayerShape;
use crate::sparse::mask::{LayerMask, MaskSet};

/// Active-weight counts per layer under the Erdos-Renyi-Kernel allocation.
///
/// Layer density is `min(1, eps * (n_in + n_out) / (n_in * n_out))` with `eps` solved so the
/// total active count hits `round(global_density * total)`; saturated layers are clipped to
/// dense and `eps` re-solved over the rest. Fractional counts are rounded by largest
/// remainder so the global total is exact.
pub fn erk_counts(shapes: &[LayerShape], global_density: f64) -> Result<Vec<usize>> {
    if shapes.is_empty() {
        return Err(invalid("ERK needs at least one layer"));
    }
    if !(global_density > 0.0 && global_density <= 1.0) {
        return Err(invalid(format!("global density {global_density} outside (0, 1]")));
    }
    let sizes: Vec<usize> = shapes.iter().map(LayerShape::weights).collect();
    let total: usize = sizes.iter().sum();
    let target = ((global_density * total as f64).round() as usize).min(total);

    let mut dense = vec![false; shapes.len()];
    let mut eps;
    loop {
        let fixed: usize = sizes.iter().zip(&dense).filter(|(_, &d)| d).map(|(n, _)| n).sum();
        let raw: f64 = shapes
            .iter()
            .zip(&dense)
            .filter(|(_, &d)| !d)
            .map(|(s, _)| (s.n_in + s.n_out) as f64)
            .sum();
        if raw == 0.0 {
            eps = 0.0;
            break;
        }
        eps = (target as f64 - fixed as f64) / raw;
        let mut changed = false;
        for (l, s) in shapes.iter().enumerate() {
            if !dense[l] && eps * (s.n_in + s.n_out) as f64 >= sizes[l] as f64 {
                dense[l] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let ideal: Vec<f64> = shapes
        .iter()
        .enumerate()
        .map(|(l, s)| {
            if dense[l] {
                sizes[l] as f64
            } else {
                (eps * (s.n_in + s.n_out) as f64).max(0.0)
            }
        })
        .collect();
    let mut counts: Vec<usize> = ideal
        .iter()
        .zip(&sizes)
        .map(|(x, &n)| (x.floor() as usize).min(n))
        .collect();
    let mut order: Vec<usize> = (0..shapes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = ideal[a] - ideal[a].floor();
        let fb = ideal[b] - ideal[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut remaining = target.saturating_sub(counts.iter().sum());
    while remaining > 0 {
        let before = remaining;
        for &l in &order {
            if remaining > 0 && counts[l] < sizes[l] {
                counts[l] += 1;
                remaining -= 1;
            }
        }
        if before == remaining {
            break;
        }
    }
    Ok(counts)
}

/// ERK mask initialisation; active positions within each layer are uniform without
/// replacement.
pub fn erk_init<R: Rng + ?Sized>(shapes: &[LayerShape], global_density: f64, rng: &mut R) -> Result<MaskSet> {
    let counts = erk_counts(shapes, global_density)?;
    let layers = shapes
        .iter()
        .zip(counts)
        .map(|(s, count)| {
            let n = s.weights();
            let mut bits = vec![false; n];
            if count == n {
                bits.iter_mut().for_each(|b| *b = true);
            } else {
                for i in index::sample(rng, n, count) {
                    bits[i] = true;
                }
            }
            LayerMask::new(bits)
        })
        .collect();
    Ok(MaskSet::from_layers(layers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use crate::sparse::sparsity;
    use rand::SeedableRng;

    #[test]
    fn single_layer_exact() {
        let shapes = [LayerShape::new(10, 10)];
        let m = erk_init(&shapes, 0.5, &mut SimRng::seed_from_u64(0)).unwrap();
        assert_eq!(m.total_active(), 50);
    }

    #[test]
    fn full_density_is_dense() {
        let shapes = [LayerShape::new(7, 3), LayerShape::new(3, 2)];
        let m = erk_init(&shapes, 1.0, &mut SimRng::seed_from_u64(0)).unwrap();
        assert_eq!(m.total_active(), m.total_len());
    }

    #[test]
    fn two_layer_mlp_allocation() {
        // oracle: solve eps over both layers, clip, re-solve over the remainder
        let (a, b) = ((784 + 100) as f64, (100 + 10) as f64);
        let target = 0.5 * 79_400.0;
        let eps = target / (a + b);
        let d2 = eps * b / 1000.0;
        assert!(d2 > 1.0, "second layer saturates");
        let eps = (target - 1000.0) / a;
        let expected_first = (eps * a).round() as usize;
        assert_eq!(expected_first, 38_700);

        let shapes = [LayerShape::new(784, 100), LayerShape::new(100, 10)];
        assert_eq!(erk_counts(&shapes, 0.5).unwrap(), vec![expected_first, 1000]);
        let m = erk_init(&shapes, 0.5, &mut SimRng::seed_from_u64(1)).unwrap();
        assert!((sparsity(&m) - 0.5).abs() <= 1.0 / 79_400.0);
    }

    #[test]
    fn unsaturated_layers_keep_erk_ratio() {
        let shapes = [LayerShape::new(200, 100), LayerShape::new(100, 50)];
        let c = erk_counts(&shapes, 0.1).unwrap();
        assert_eq!(c.iter().sum::<usize>(), 2500);
        // counts proportional to n_in + n_out: 300 : 150
        assert_eq!(c, vec![1667, 833]);
    }

    #[test]
    fn rejects_bad_density() {
        let shapes = [LayerShape::new(2, 2)];
        assert!(erk_counts(&shapes, 0.0).is_err());
        assert!(erk_counts(&shapes, 1.5).is_err());
        assert!(erk_counts(&[], 0.5).is_err());
    }
}
