//! Time-varying neighborhoods, reuse-index scheduling and round timing.
//!
//! Every round each client receives a reuse index (a rank in a uniform permutation of all
//! clients) and a neighborhood of `M` peers. Neighbors with a smaller reuse index form the
//! prior set; the client waits for at most `N` of them (the first `N` to finish) before it
//! aggregates. Because every waiting edge points from a smaller to a larger reuse index the
//! waiting graph is always a DAG.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    /// Independent uniform `M`-subsets per client per round (directed).
    #[default]
    Random,
    /// The `M` nearest clients on a ring, alternating sides.
    Ring,
    /// Every other client; requires `M = K - 1`.
    FullyConnected,
}

/// One round's neighborhoods and reuse-index split.
///
/// Client ids are `0..K`; reuse indices are `1..=K`. The waiting set itself is resolved by
/// [`simulate_round_timing`] once durations are known: each client waits for the first
/// `min(N, |prior|)` prior neighbors to finish.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSchedule {
    pub round: usize,
    pub reuse_index: Vec<usize>,
    pub neighborhoods: Vec<Vec<usize>>,
    pub prior_set: Vec<Vec<usize>>,
    pub posterior_set: Vec<Vec<usize>>,
    /// Waiting threshold `N`.
    pub waiting_limit: usize,
}

impl RoundSchedule {
    /// Builds a schedule from explicit reuse indices and neighborhoods, validating every
    /// structural invariant and deriving the prior/posterior split.
    pub fn from_parts(
        round: usize,
        reuse_index: Vec<usize>,
        neighborhoods: Vec<Vec<usize>>,
        waiting_limit: usize,
    ) -> Result<Self> {
        let k = reuse_index.len();
        if neighborhoods.len() != k {
            return Err(invalid(format!(
                "{} neighborhoods for {} clients",
                neighborhoods.len(),
                k
            )));
        }
        let mut seen = vec![false; k];
        for &r in &reuse_index {
            if r == 0 || r > k || seen[r - 1] {
                return Err(invalid("reuse_index must be a bijection onto 1..=K"));
            }
            seen[r - 1] = true;
        }
        let m = neighborhoods.first().map_or(0, Vec::len);
        for (client, g) in neighborhoods.iter().enumerate() {
            if g.len() != m {
                return Err(invalid("all neighborhoods must have the same size M"));
            }
            let mut sorted = g.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != g.len() || g.iter().any(|&j| j >= k || j == client) {
                return Err(invalid(format!(
                    "neighborhood of client {client} must hold distinct peers other than itself"
                )));
            }
        }
        if waiting_limit > m {
            return Err(invalid(format!("N = {waiting_limit} exceeds M = {m}")));
        }
        let (prior_set, posterior_set) = neighborhoods
            .iter()
            .enumerate()
            .map(|(client, g)| {
                g.iter()
                    .partition::<Vec<usize>, _>(|&&j| reuse_index[j] < reuse_index[client])
            })
            .unzip();
        Ok(Self {
            round,
            reuse_index,
            neighborhoods,
            prior_set,
            posterior_set,
            waiting_limit,
        })
    }

    pub fn num_clients(&self) -> usize {
        self.reuse_index.len()
    }

    pub fn neighborhood_size(&self) -> usize {
        self.neighborhoods.first().map_or(0, Vec::len)
    }

    /// Clients sorted by ascending reuse index; a valid topological order of the waiting DAG.
    pub fn processing_order(&self) -> Vec<usize> {
        let mut order = vec![0; self.num_clients()];
        for (client, &r) in self.reuse_index.iter().enumerate() {
            order[r - 1] = client;
        }
        order
    }
}

fn check_sizes(k: usize, m: usize, n: usize) -> Result<()> {
    if k < 2 {
        return Err(invalid(format!("K = {k} must be at least 2")));
    }
    if m == 0 || m >= k {
        return Err(invalid(format!("M = {m} must satisfy 1 <= M <= K-1 (K = {k})")));
    }
    if n > m {
        return Err(invalid(format!("N = {n} exceeds M = {m}")));
    }
    Ok(())
}

/// Samples a round with uniform reuse indices and independent uniform `M`-neighborhoods.
pub fn sample_round_schedule<R: Rng + ?Sized>(k: usize, m: usize, n: usize, rng: &mut R) -> Result<RoundSchedule> {
    sample_topology_schedule(Topology::Random, 1, k, m, n, rng)
}

pub fn sample_topology_schedule<R: Rng + ?Sized>(
    topology: Topology,
    round: usize,
    k: usize,
    m: usize,
    n: usize,
    rng: &mut R,
) -> Result<RoundSchedule> {
    check_sizes(k, m, n)?;
    let mut reuse_index: Vec<usize> = (1..=k).collect();
    reuse_index.shuffle(rng);

    let neighborhoods: Vec<Vec<usize>> = match topology {
        Topology::Random => (0..k)
            .map(|client| {
                index::sample(rng, k - 1, m)
                    .into_iter()
                    .map(|j| if j >= client { j + 1 } else { j })
                    .collect()
            })
            .collect(),
        Topology::Ring => (0..k).map(|client| ring_neighbors(client, k, m)).collect(),
        Topology::FullyConnected => {
            if m != k - 1 {
                return Err(invalid(format!(
                    "fully-connected topology requires M = K-1 (M = {m}, K = {k})"
                )));
            }
            (0..k).map(|client| (0..k).filter(|&j| j != client).collect()).collect()
        }
    };

    let (prior_set, posterior_set) = neighborhoods
        .iter()
        .enumerate()
        .map(|(client, g)| {
            g.iter()
                .partition::<Vec<usize>, _>(|&&j| reuse_index[j] < reuse_index[client])
        })
        .unzip();
    Ok(RoundSchedule {
        round,
        reuse_index,
        neighborhoods,
        prior_set,
        posterior_set,
        waiting_limit: n,
    })
}

fn ring_neighbors(client: usize, k: usize, m: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(m);
    let mut step = 1;
    while out.len() < m {
        let right = (client + step) % k;
        if right != client && !out.contains(&right) {
            out.push(right);
        }
        if out.len() < m {
            let left = (client + k - step % k) % k;
            if left != client && !out.contains(&left) {
                out.push(left);
            }
        }
        step += 1;
    }
    out
}

fn binomial(n: usize, r: usize) -> f64 {
    if r > n {
        return 0.0;
    }
    let r = r.min(n - r);
    let mut c = 1.0f64;
    for i in 0..r {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// Probability that client with reuse index `k` has exactly `m` prior neighbors when its
/// `M` neighbors are drawn uniformly from the other `K - 1` clients.
pub fn hypergeometric_pmf(m: usize, k: usize, num_clients: usize, neighbors: usize) -> Result<f64> {
    if k == 0 || k > num_clients {
        return Err(invalid(format!("reuse index {k} outside 1..={num_clients}")));
    }
    if neighbors >= num_clients {
        return Err(invalid(format!("M = {neighbors} must be below K = {num_clients}")));
    }
    if m > neighbors {
        return Err(invalid(format!("m = {m} exceeds M = {neighbors}")));
    }
    let smaller = k - 1;
    let larger = num_clients - k;
    if m > smaller || neighbors - m > larger {
        return Ok(0.0);
    }
    Ok(binomial(smaller, m) * binomial(larger, neighbors - m) / binomial(num_clients - 1, neighbors))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingResult {
    pub start_time: Vec<f64>,
    pub finish_time: Vec<f64>,
    /// The prior neighbors each client actually waited for.
    pub waiting_set: Vec<Vec<usize>>,
    pub makespan: f64,
    pub parallelism: f64,
    pub max_wait: f64,
}

impl TimingResult {
    pub fn mean_wait(&self) -> f64 {
        self.start_time.iter().sum::<f64>() / self.start_time.len() as f64
    }
}

/// Resolves the waiting policy against per-client durations.
///
/// A client with a non-empty prior set starts once `min(N, |prior|)` of its prior neighbors
/// have finished; ties between equal finish times go to the smaller reuse index.
pub fn simulate_round_timing(schedule: &RoundSchedule, durations: &[f64]) -> Result<TimingResult> {
    let k = schedule.num_clients();
    if durations.len() != k {
        return Err(crate::Error::DimensionMismatch {
            expected: k,
            got: durations.len(),
        });
    }
    if let Some(d) = durations.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(invalid(format!("durations must be strictly positive, got {d}")));
    }
    let mut start_time = vec![0.0f64; k];
    let mut finish_time = vec![0.0f64; k];
    let mut waiting_set = vec![Vec::new(); k];
    for client in schedule.processing_order() {
        let prior = &schedule.prior_set[client];
        let wait_for = schedule.waiting_limit.min(prior.len());
        if wait_for > 0 {
            let mut ranked = prior.clone();
            ranked.sort_by(|&a, &b| {
                finish_time[a]
                    .total_cmp(&finish_time[b])
                    .then(schedule.reuse_index[a].cmp(&schedule.reuse_index[b]))
            });
            ranked.truncate(wait_for);
            start_time[client] = finish_time[*ranked.last().expect("non-empty")];
            waiting_set[client] = ranked;
        }
        finish_time[client] = start_time[client] + durations[client];
    }
    let makespan = finish_time.iter().copied().fold(0.0, f64::max);
    let max_wait = start_time.iter().copied().fold(0.0, f64::max);
    let idle = waiting_set.iter().filter(|w| w.is_empty()).count();
    Ok(TimingResult {
        start_time,
        finish_time,
        waiting_set,
        makespan,
        parallelism: idle as f64 / k as f64,
        max_wait,
    })
}

/// Per-client round duration model for Monte Carlo timing studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DurationModel {
    Constant { value: f64 },
    Uniform { low: f64, high: f64 },
    Lognormal { mu: f64, sigma: f64 },
}

impl DurationModel {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DurationModel::Constant { value } => value.is_finite() && value > 0.0,
            DurationModel::Uniform { low, high } => low.is_finite() && high.is_finite() && 0.0 < low && low <= high,
            DurationModel::Lognormal { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid duration model {self:?}")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DurationModel::Constant { value } => value,
            DurationModel::Uniform { low, high } => {
                if low == high {
                    low
                } else {
                    rng.random_range(low..high)
                }
            }
            DurationModel::Lognormal { mu, sigma } => LogNormal::new(mu, sigma)
                .expect("validated")
                .sample(rng)
                .max(f64::MIN_POSITIVE),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

impl Quantiles {
    pub fn of(values: &mut [f64]) -> Self {
        values.sort_by(f64::total_cmp);
        Self {
            q05: quantile_sorted(values, 0.05),
            q50: quantile_sorted(values, 0.50),
            q95: quantile_sorted(values, 0.95),
        }
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySummary {
    pub num_clients: usize,
    pub neighbors: usize,
    pub waiting_limit: usize,
    pub iterations: usize,
    pub mean_parallelism: f64,
    /// Mean over iterations of the largest client start time.
    pub mean_max_wait: f64,
    /// Mean over iterations and clients of the client start time.
    pub mean_client_wait: f64,
    pub mean_makespan: f64,
    pub parallelism_quantiles: Quantiles,
    pub max_wait_quantiles: Quantiles,
}

/// Monte Carlo estimate of parallelism and waiting delay over fresh random schedules.
///
/// `neighbors = K` is accepted and means the fully-connected neighborhood (all `K - 1`
/// peers); `waiting_limit` is then clamped to `K - 1`.
pub fn estimate_parallelism_delay<R: Rng + ?Sized>(
    num_clients: usize,
    neighbors: usize,
    waiting_limit: usize,
    iterations: usize,
    duration_model: &DurationModel,
    rng: &mut R,
) -> Result<DelaySummary> {
    if iterations == 0 {
        return Err(invalid("iterations must be at least 1"));
    }
    duration_model.validate()?;
    if waiting_limit > neighbors {
        return Err(invalid(format!("N = {waiting_limit} exceeds M = {neighbors}")));
    }
    let (m, n) = if neighbors == num_clients {
        (num_clients - 1, waiting_limit.min(num_clients - 1))
    } else {
        (neighbors, waiting_limit)
    };
    check_sizes(num_clients, m, n)?;
    let topology = if m == num_clients - 1 {
        Topology::FullyConnected
    } else {
        Topology::Random
    };

    let mut parallelism = Vec::with_capacity(iterations);
    let mut max_wait = Vec::with_capacity(iterations);
    let mut client_wait = 0.0;
    let mut makespan = 0.0;
    let mut durations = vec![0.0; num_clients];
    for it in 0..iterations {
        let schedule = sample_topology_schedule(topology, it + 1, num_clients, m, n, rng)?;
        for d in durations.iter_mut() {
            *d = duration_model.sample(rng);
        }
        let timing = simulate_round_timing(&schedule, &durations)?;
        parallelism.push(timing.parallelism);
        max_wait.push(timing.max_wait);
        client_wait += timing.mean_wait();
        makespan += timing.makespan;
    }
    let iters = iterations as f64;
    let mean_parallelism = parallelism.iter().sum::<f64>() / iters;
    let mean_max_wait = max_wait.iter().sum::<f64>() / iters;
    Ok(DelaySummary {
        num_clients,
        neighbors,
        waiting_limit,
        iterations,
        mean_parallelism,
        mean_max_wait,
        mean_client_wait: client_wait / iters,
        mean_makespan: makespan / iters,
        parallelism_quantiles: Quantiles::of(&mut parallelism),
        max_wait_quantiles: Quantiles::of(&mut max_wait),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use rand::SeedableRng;

    /// Fig. 1-style network: six clients labelled by reuse index 1..=6 (ids 0..=5).
    pub(crate) fn figure_one() -> RoundSchedule {
        RoundSchedule::from_parts(
            1,
            vec![1, 2, 3, 4, 5, 6],
            vec![vec![3, 4], vec![3, 5], vec![1, 3], vec![4, 5], vec![0, 5], vec![0, 4]],
            1,
        )
        .unwrap()
    }

    #[test]
    fn figure_one_waiting_pattern() {
        let s = figure_one();
        let t = simulate_round_timing(&s, &[1.0; 6]).unwrap();
        assert_eq!(t.waiting_set[2], vec![1]);
        assert_eq!(t.waiting_set[4], vec![0]);
        assert_eq!(t.waiting_set[5], vec![0]);
        for idle in [0, 1, 3] {
            assert!(t.waiting_set[idle].is_empty());
            assert_eq!(t.start_time[idle], 0.0);
        }
        assert_eq!(t.start_time[2], 1.0);
        assert_eq!(t.makespan, 2.0);
        assert_eq!(t.parallelism, 0.5);
    }

    #[test]
    fn zero_threshold_is_fully_parallel() {
        let mut rng = SimRng::seed_from_u64(3);
        let s = sample_round_schedule(20, 5, 0, &mut rng).unwrap();
        let d: Vec<f64> = (0..20).map(|i| 1.0 + i as f64).collect();
        let t = simulate_round_timing(&s, &d).unwrap();
        assert!(t.start_time.iter().all(|&x| x == 0.0));
        assert_eq!(t.makespan, 20.0);
        assert_eq!(t.parallelism, 1.0);
    }

    #[test]
    fn first_reuse_index_waits_for_nobody() {
        let mut rng = SimRng::seed_from_u64(9);
        let s = sample_round_schedule(3, 2, 2, &mut rng).unwrap();
        let first = s.processing_order()[0];
        assert!(s.prior_set[first].is_empty());
        let t = simulate_round_timing(&s, &[1.0; 3]).unwrap();
        assert!(t.waiting_set[first].is_empty());
    }

    #[test]
    fn fully_connected_unbounded_is_sequential() {
        let k = 7;
        let mut rng = SimRng::seed_from_u64(1);
        let s = sample_topology_schedule(Topology::FullyConnected, 1, k, k - 1, k - 1, &mut rng).unwrap();
        let t = simulate_round_timing(&s, &vec![1.0; k]).unwrap();
        for c in 0..k {
            assert_eq!(t.start_time[c], (s.reuse_index[c] - 1) as f64);
        }
        assert_eq!(t.makespan, k as f64);
    }

    #[test]
    fn invalid_sizes_rejected() {
        let mut rng = SimRng::seed_from_u64(0);
        assert!(sample_round_schedule(5, 5, 1, &mut rng).is_err());
        assert!(sample_round_schedule(5, 2, 3, &mut rng).is_err());
        assert!(sample_round_schedule(5, 0, 0, &mut rng).is_err());
        assert!(sample_topology_schedule(Topology::FullyConnected, 1, 5, 3, 1, &mut rng).is_err());
    }

    #[test]
    fn ring_neighbors_alternate() {
        assert_eq!(ring_neighbors(0, 6, 2), vec![1, 5]);
        assert_eq!(ring_neighbors(0, 6, 3), vec![1, 5, 2]);
        assert_eq!(ring_neighbors(2, 3, 2), vec![0, 1]);
        assert_eq!(ring_neighbors(0, 4, 3), vec![1, 3, 2]);
    }

    #[test]
    fn pmf_enumeration_oracle() {
        // enumerate all 2-subsets of {1,2,4,5} for the client with reuse index 3
        let others = [1usize, 2, 4, 5];
        let mut counts = [0usize; 3];
        for a in 0..others.len() {
            for b in a + 1..others.len() {
                let priors = [others[a], others[b]].iter().filter(|&&r| r < 3).count();
                counts[priors] += 1;
            }
        }
        assert_eq!(counts, [1, 4, 1]);
        for (m, &c) in counts.iter().enumerate() {
            let p = hypergeometric_pmf(m, 3, 5, 2).unwrap();
            assert!((p - c as f64 / 6.0).abs() < 1e-15);
        }
        assert_eq!(hypergeometric_pmf(0, 1, 50, 7).unwrap(), 1.0);
        assert!(hypergeometric_pmf(0, 0, 5, 2).is_err());
        assert!(hypergeometric_pmf(0, 1, 5, 5).is_err());
        assert!(hypergeometric_pmf(3, 1, 5, 2).is_err());
    }

    #[test]
    fn zero_threshold_monte_carlo_exact() {
        let mut rng = SimRng::seed_from_u64(5);
        let s = estimate_parallelism_delay(30, 6, 0, 50, &DurationModel::Constant { value: 1.0 }, &mut rng).unwrap();
        assert_eq!(s.mean_parallelism, 1.0);
        assert_eq!(s.mean_max_wait, 0.0);
        assert!(estimate_parallelism_delay(30, 6, 0, 0, &DurationModel::Constant { value: 1.0 }, &mut rng).is_err());
        assert!(estimate_parallelism_delay(30, 6, 0, 5, &DurationModel::Constant { value: 0.0 }, &mut rng).is_err());
        assert!(
            estimate_parallelism_delay(30, 6, 0, 5, &DurationModel::Uniform { low: 2.0, high: 1.0 }, &mut rng).is_err()
        );
    }

    #[test]
    fn quantiles_interpolate() {
        let q = Quantiles::of(&mut [3.0, 1.0, 2.0, 4.0, 5.0]);
        assert_eq!(q.q50, 3.0);
        assert!((q.q05 - 1.2).abs() < 1e-12);
        assert!((q.q95 - 4.8).abs() < 1e-12);
    }
}
