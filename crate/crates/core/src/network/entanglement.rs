use std::collections::BTreeSet;

use rand::Rng;

use super::{check_probability, NetworkError, Topology};

/// Per-link entanglement generation probability per round.
pub const DEFAULT_P_GEN: f64 = 0.5;
pub const DEFAULT_P_SWAP: f64 = 0.85;

/// Links of `topology` holding a fresh entangled pair in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct InstantTopology<'a> {
    topology: &'a Topology,
    live: BTreeSet<(usize, usize)>,
    round: u64,
}

impl<'a> InstantTopology<'a> {
    pub fn topology(&self) -> &'a Topology {
        self.topology
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn live_links(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.live.iter().copied()
    }

    pub fn num_live(&self) -> usize {
        self.live.len()
    }

    pub fn is_live(&self, u: usize, v: usize) -> bool {
        self.live.contains(&(u.min(v), u.max(v)))
    }
}

pub fn sample_instant_topology<'a, R: Rng + ?Sized>(
    topology: &'a Topology,
    p_gen: f64,
    round: u64,
    rng: &mut R,
) -> Result<InstantTopology<'a>, NetworkError> {
    check_probability("p_gen", p_gen)?;
    let live = topology
        .edges()
        .iter()
        .copied()
        .filter(|_| rng.random::<f64>() < p_gen)
        .collect();
    Ok(InstantTopology { topology, live, round })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwapOutcome {
    pub success: bool,
    pub swaps_attempted: usize,
    /// Path links in order, normalized to `(min, max)`.
    pub consumed: Vec<(usize, usize)>,
}

/// Swaps at every intermediate node of `path`, in order. All path links are
/// consumed whatever the outcome.
pub fn establish_e2e<R: Rng + ?Sized>(
    instant: &mut InstantTopology<'_>,
    path: &[usize],
    p_swap: f64,
    rng: &mut R,
) -> Result<SwapOutcome, NetworkError> {
    check_probability("p_swap", p_swap)?;
    if path.len() < 2 {
        return Err(NetworkError::PathTooShort);
    }
    let links: Vec<(usize, usize)> = path.windows(2).map(|w| (w[0].min(w[1]), w[0].max(w[1]))).collect();
    if let Some(&(u, v)) = links.iter().find(|&&(u, v)| !instant.is_live(u, v)) {
        return Err(NetworkError::DeadLink(u, v));
    }
    let swaps_attempted = path.len() - 2;
    let mut success = true;
    for _ in 0..swaps_attempted {
        success &= rng.random::<f64>() < p_swap;
    }
    for link in &links {
        instant.live.remove(link);
    }
    Ok(SwapOutcome {
        success,
        swaps_attempted,
        consumed: links,
    })
}
