use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NetworkError, Topology, TopologySpec};
use crate::stats::RngStreams;

/// Number of shortest `s`–`t` paths once `compromised` nodes are removed.
///
/// Returns 0 when the endpoints are disconnected or when the residual
/// distance exceeds `hop_bound`. Counts saturate at `u128::MAX`.
pub fn count_viable_paths(
    topology: &Topology,
    endpoints: (usize, usize),
    compromised: &BTreeSet<usize>,
    hop_bound: Option<usize>,
) -> Result<u128, NetworkError> {
    let (s, t) = endpoints;
    topology.check_node(s)?;
    topology.check_node(t)?;
    for e in [s, t] {
        if compromised.contains(&e) {
            return Err(NetworkError::CompromisedEndpoint(e));
        }
    }
    if s == t {
        return Ok(1);
    }
    let n = topology.num_nodes();
    let mut dist = vec![usize::MAX; n];
    let mut ways = vec![0u128; n];
    dist[s] = 0;
    ways[s] = 1;
    let mut queue = VecDeque::from([s]);
    while let Some(u) = queue.pop_front() {
        if u == t || hop_bound.is_some_and(|b| dist[u] >= b) {
            continue;
        }
        for &v in topology.neighbors(u) {
            if compromised.contains(&v) {
                continue;
            }
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
            if dist[v] == dist[u] + 1 {
                ways[v] = ways[v].saturating_add(ways[u]);
            }
        }
    }
    Ok(ways[t])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayConfig {
    pub kinds: Vec<TopologySpec>,
    /// Compromised fraction of all nodes, ascending, each in `[0, 1]`.
    pub fractions: Vec<f64>,
    /// Independent topology draws per kind.
    pub trials: usize,
    pub pairs_per_trial: usize,
    /// Endpoint pairs closer than this in the intact graph are not sampled.
    pub min_pair_distance: usize,
    pub seed: u64,
}

impl DecayConfig {
    pub fn new(kinds: Vec<TopologySpec>, seed: u64) -> Self {
        Self {
            kinds,
            fractions: (0..10).map(|i| i as f64 / 10.0).collect(),
            trials: 20,
            pairs_per_trial: 20,
            min_pair_distance: 2,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub kind: String,
    pub fraction: f64,
    pub mean_paths: f64,
    pub std_paths: f64,
    /// `mean_paths` over the same kind's mean at the first fraction.
    pub relative_to_baseline: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayDistanceRow {
    pub kind: String,
    pub fraction: f64,
    /// Endpoint hop distance in the intact graph.
    pub distance: usize,
    pub mean_paths: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub rows: Vec<DecayRow>,
    pub distance_rows: Vec<DecayDistanceRow>,
    /// Pairs skipped because a drawn topology had no eligible pair.
    pub skipped_pairs: usize,
}

impl DecayReport {
    pub fn series(&self, kind: &str) -> Vec<&DecayRow> {
        self.rows.iter().filter(|r| r.kind == kind).collect()
    }
}

struct PairSample {
    distance: usize,
    /// One count per fraction.
    counts: Vec<u128>,
}

const PAIR_ATTEMPTS: usize = 10_000;

fn sample_pair<R: Rng + ?Sized>(topology: &Topology, min_distance: usize, rng: &mut R) -> Option<(usize, usize, usize)> {
    let n = topology.num_nodes();
    if n < 2 {
        return None;
    }
    for _ in 0..PAIR_ATTEMPTS {
        let s = rng.random_range(0..n);
        let t = rng.random_range(0..n);
        if s == t {
            continue;
        }
        if let Some(d) = topology.hop_distances(s)[t] {
            if d >= min_distance {
                return Some((s, t, d));
            }
        }
    }
    None
}

/// Removes growing random node sets and counts the surviving shortest paths.
///
/// For each pair the compromised sets are nested prefixes of one random
/// node order (endpoints excluded), so every pair's count is non-increasing
/// in the fraction. Only paths no longer than the intact distance count: a
/// detour that appears after removals is not a surviving path.
pub fn untrusted_node_experiment(config: &DecayConfig) -> Result<DecayReport, NetworkError> {
    if config.fractions.is_empty() || config.fractions.windows(2).any(|w| w[0] > w[1]) {
        return Err(NetworkError::InvalidSettings("fractions must be non-empty and ascending".into()));
    }
    if let Some(f) = config.fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(NetworkError::InvalidSettings(format!("fraction {f} outside [0, 1]")));
    }
    let streams = RngStreams::new(config.seed);
    let mut rows = Vec::new();
    let mut distance_rows = Vec::new();
    let mut skipped_pairs = 0;

    for spec in &config.kinds {
        let label = spec.to_string();
        let mut samples: Vec<PairSample> = Vec::new();
        for trial in 0..config.trials as u64 {
            let topo_seed: u64 = streams.stream(&format!("decay/topology/{label}"), trial).random();
            let topology = Topology::generate(*spec, topo_seed)?;
            let n = topology.num_nodes();
            let mut rng = streams.stream(&format!("decay/sample/{label}"), trial);
            for _ in 0..config.pairs_per_trial {
                let Some((s, t, distance)) = sample_pair(&topology, config.min_pair_distance, &mut rng) else {
                    skipped_pairs += 1;
                    continue;
                };
                let mut order: Vec<usize> = (0..n).filter(|&v| v != s && v != t).collect();
                order.shuffle(&mut rng);
                let counts = config
                    .fractions
                    .iter()
                    .map(|f| {
                        let k = ((f * n as f64).round() as usize).min(order.len());
                        let compromised: BTreeSet<usize> = order[..k].iter().copied().collect();
                        count_viable_paths(&topology, (s, t), &compromised, Some(distance))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                samples.push(PairSample { distance, counts });
            }
        }

        let mut baseline = None;
        for (i, &fraction) in config.fractions.iter().enumerate() {
            let values: Vec<f64> = samples.iter().map(|s| s.counts[i] as f64).collect();
            let (mean, std) = mean_std(&values);
            let base = *baseline.get_or_insert(mean);
            rows.push(DecayRow {
                kind: label.clone(),
                fraction,
                mean_paths: mean,
                std_paths: std,
                relative_to_baseline: if base > 0.0 { mean / base } else { 0.0 },
                samples: values.len(),
            });
            let mut by_distance: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for s in &samples {
                by_distance.entry(s.distance).or_default().push(s.counts[i] as f64);
            }
            for (distance, values) in by_distance {
                distance_rows.push(DecayDistanceRow {
                    kind: label.clone(),
                    fraction,
                    distance,
                    mean_paths: mean_std(&values).0,
                    samples: values.len(),
                });
            }
        }
    }
    Ok(DecayReport {
        rows,
        distance_rows,
        skipped_pairs,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
