//! Non-i.i.d. client partitions. Both partitioners return one row-index set per client;
//! every row is assigned to exactly one client.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

pub type Partition = Vec<Vec<usize>>;

fn by_class(labels: &[usize]) -> Vec<Vec<usize>> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        out[y].push(i);
    }
    out
}

/// Per class, draws client proportions from `Dir(alpha * 1_K)` and splits that class's rows
/// accordingly. Empty shards are repaired by moving one row from the largest shard.
pub fn partition_dirichlet<R: Rng + ?Sized>(
    labels: &[usize],
    num_clients: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<Partition> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} must be positive")));
    }
    if num_clients == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    if labels.len() < num_clients {
        return Err(Error::InfeasiblePartition(format!(
            "{} samples cannot cover {} clients",
            labels.len(),
            num_clients
        )));
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut parts: Partition = vec![Vec::new(); num_clients];
    for mut rows in by_class(labels) {
        if rows.is_empty() {
            continue;
        }
        rows.shuffle(rng);
        let mut props: Vec<f64> = (0..num_clients).map(|_| gamma.sample(rng)).collect();
        let total: f64 = props.iter().sum();
        if total > 0.0 && total.is_finite() {
            props.iter_mut().for_each(|p| *p /= total);
        } else {
            // every gamma draw underflowed; give the class to one client
            props.iter_mut().for_each(|p| *p = 0.0);
            props[rng.random_range(0..num_clients)] = 1.0;
        }
        let n = rows.len();
        let mut cum = 0.0;
        let mut start = 0;
        for (k, p) in props.iter().enumerate() {
            cum += p;
            let end = if k + 1 == num_clients {
                n
            } else {
                ((cum * n as f64).round() as usize).clamp(start, n)
            };
            parts[k].extend_from_slice(&rows[start..end]);
            start = end;
        }
    }
    repair_empty(&mut parts);
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(parts)
}

fn repair_empty(parts: &mut Partition) {
    while let Some(empty) = parts.iter().position(Vec::is_empty) {
        let largest = (0..parts.len())
            .max_by(|&a, &b| parts[a].len().cmp(&parts[b].len()).then(b.cmp(&a)))
            .expect("non-empty partition");
        let row = parts[largest].pop().expect("largest shard has rows");
        parts[empty].push(row);
    }
}

/// Cuts the data into `n_cls * K` single-class shards (class `c` receives a share of shards
/// proportional to its size; shards of one class differ by at most one row) and deals
/// `n_cls` random shards to each client.
pub fn partition_pathological<R: Rng + ?Sized>(
    labels: &[usize],
    num_clients: usize,
    n_cls: usize,
    rng: &mut R,
) -> Result<Partition> {
    let classes = by_class(labels);
    let present: Vec<&Vec<usize>> = classes.iter().filter(|c| !c.is_empty()).collect();
    let c = present.len();
    if num_clients == 0 || n_cls == 0 {
        return Err(Error::InvalidParameter("K and n_cls must be at least 1".into()));
    }
    if n_cls > c {
        return Err(Error::InfeasiblePartition(format!(
            "n_cls = {n_cls} exceeds the {c} available classes"
        )));
    }
    let shards = n_cls * num_clients;
    if shards < c {
        return Err(Error::InfeasiblePartition(format!(
            "n_cls * K = {shards} cannot cover {c} classes"
        )));
    }
    if labels.len() < shards {
        return Err(Error::InfeasiblePartition(format!(
            "{} samples cannot fill {shards} shards",
            labels.len()
        )));
    }

    // largest-remainder allocation of shards to classes, at least one each, capped by size
    let n = labels.len() as f64;
    let quotas: Vec<f64> = present
        .iter()
        .map(|rows| rows.len() as f64 * shards as f64 / n)
        .collect();
    let mut alloc: Vec<usize> = quotas
        .iter()
        .zip(&present)
        .map(|(q, rows)| (q.floor() as usize).clamp(1, rows.len()))
        .collect();
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    loop {
        let total: usize = alloc.iter().sum();
        if total == shards {
            break;
        }
        if total > shards {
            let i = (0..c)
                .filter(|&i| alloc[i] > 1)
                .max_by(|&a, &b| alloc[a].cmp(&alloc[b]).then(b.cmp(&a)))
                .ok_or_else(|| Error::InfeasiblePartition("cannot balance shard allocation".into()))?;
            alloc[i] -= 1;
        } else {
            let i = order
                .iter()
                .copied()
                .filter(|&i| alloc[i] < present[i].len())
                .min_by(|&a, &b| {
                    let ra = alloc[a] as f64 - quotas[a];
                    let rb = alloc[b] as f64 - quotas[b];
                    ra.total_cmp(&rb).then(a.cmp(&b))
                })
                .ok_or_else(|| Error::InfeasiblePartition("cannot balance shard allocation".into()))?;
            alloc[i] += 1;
        }
    }

    let mut pieces: Vec<Vec<usize>> = Vec::with_capacity(shards);
    for (rows, &count) in present.iter().zip(&alloc) {
        let mut rows = (*rows).clone();
        rows.shuffle(rng);
        let base = rows.len() / count;
        let extra = rows.len() % count;
        let mut start = 0;
        for s in 0..count {
            let len = base + usize::from(s < extra);
            pieces.push(rows[start..start + len].to_vec());
            start += len;
        }
    }
    pieces.shuffle(rng);
    let mut parts: Partition = vec![Vec::new(); num_clients];
    for (i, piece) in pieces.into_iter().enumerate() {
        parts[i / n_cls].extend(piece);
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(parts)
}
