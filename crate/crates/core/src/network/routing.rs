use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{InstantTopology, NetworkError, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RoutingPolicy {
    ShortestHop,
    /// Node weight `error_rate + response_time_ms / tau_ms`; a link costs
    /// the mean weight of its two ends.
    TrustWeighted { tau_ms: f64 },
    /// Fewest hops avoiding untrusted intermediate nodes.
    PruneCompromised,
}

impl RoutingPolicy {
    pub const DEFAULT_TAU_MS: f64 = 10.0;

    pub fn trust_weighted() -> Self {
        RoutingPolicy::TrustWeighted {
            tau_ms: Self::DEFAULT_TAU_MS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub path: Vec<usize>,
    pub cost: f64,
}

impl Route {
    pub fn hops(&self) -> usize {
        self.path.len() - 1
    }

    pub fn intermediates(&self) -> &[usize] {
        &self.path[1..self.path.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Label {
    cost: f64,
    path: Vec<usize>,
}

impl Eq for Label {}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.path.len().cmp(&other.path.len()))
            .then_with(|| self.path.cmp(&other.path))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra on `(cost, hops, node sequence)`; the lexicographic component
/// makes ties deterministic.
fn best_path(
    topology: &Topology,
    s: usize,
    t: usize,
    link_usable: impl Fn(usize, usize) -> bool,
    node_usable: impl Fn(usize) -> bool,
    link_cost: impl Fn(usize, usize) -> f64,
) -> Option<Route> {
    let mut settled = vec![false; topology.num_nodes()];
    let mut heap = BinaryHeap::from([Reverse(Label { cost: 0.0, path: vec![s] })]);
    while let Some(Reverse(label)) = heap.pop() {
        let u = *label.path.last().unwrap();
        if settled[u] {
            continue;
        }
        settled[u] = true;
        if u == t {
            return Some(Route {
                path: label.path,
                cost: label.cost,
            });
        }
        for &v in topology.neighbors(u) {
            if settled[v] || !link_usable(u, v) || (v != t && !node_usable(v)) {
                continue;
            }
            let mut path = label.path.clone();
            path.push(v);
            heap.push(Reverse(Label {
                cost: label.cost + link_cost(u, v),
                path,
            }));
        }
    }
    None
}

fn node_weight(topology: &Topology, id: usize, tau_ms: f64) -> f64 {
    let qos = topology.nodes()[id].qos;
    qos.error_rate + qos.response_time_ms / tau_ms
}

fn route_filtered(
    topology: &Topology,
    (s, t): (usize, usize),
    policy: &RoutingPolicy,
    link_usable: impl Fn(usize, usize) -> bool,
) -> Result<Option<Route>, NetworkError> {
    topology.check_node(s)?;
    topology.check_node(t)?;
    if let RoutingPolicy::TrustWeighted { tau_ms } = policy {
        if !(*tau_ms > 0.0) {
            return Err(NetworkError::InvalidSettings(format!("tau must be positive, got {tau_ms}")));
        }
    }
    Ok(match *policy {
        RoutingPolicy::ShortestHop => best_path(topology, s, t, link_usable, |_| true, |_, _| 1.0),
        RoutingPolicy::PruneCompromised => {
            best_path(topology, s, t, link_usable, |v| topology.nodes()[v].trusted, |_, _| 1.0)
        }
        RoutingPolicy::TrustWeighted { tau_ms } => best_path(topology, s, t, link_usable, |_| true, |u, v| {
            (node_weight(topology, u, tau_ms) + node_weight(topology, v, tau_ms)) / 2.0
        }),
    })
}

/// `None` when the endpoints are disconnected under the policy.
pub fn route(topology: &Topology, endpoints: (usize, usize), policy: &RoutingPolicy) -> Result<Option<Route>, NetworkError> {
    route_filtered(topology, endpoints, policy, |_, _| true)
}

/// Routes over live links only.
pub fn route_instant(
    instant: &InstantTopology<'_>,
    endpoints: (usize, usize),
    policy: &RoutingPolicy,
) -> Result<Option<Route>, NetworkError> {
    route_filtered(instant.topology(), endpoints, policy, |u, v| instant.is_live(u, v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversionReport {
    pub requested_pairs: usize,
    pub routed_pairs: usize,
    /// Routed pairs whose honest route passes a hijacked node.
    pub honest_interception: f64,
    /// Routed pairs whose route passes a hijacked node once hijacked nodes
    /// advertise zero-cost links.
    pub adversarial_interception: f64,
    /// Mean of adversarial hops over honest hops.
    pub mean_stretch: f64,
}

/// Routes random endpoint pairs with [`RoutingPolicy::TrustWeighted`], first
/// on true QoS and then with every link touching a hijacked node costing 0.
pub fn diversion_experiment<R: Rng + ?Sized>(
    topology: &Topology,
    hijacked: &BTreeSet<usize>,
    n_pairs: usize,
    tau_ms: f64,
    rng: &mut R,
) -> Result<DiversionReport, NetworkError> {
    for &h in hijacked {
        topology.check_node(h)?;
    }
    let policy = RoutingPolicy::TrustWeighted { tau_ms };
    let candidates: Vec<usize> = (0..topology.num_nodes()).filter(|v| !hijacked.contains(v)).collect();
    if candidates.len() < 2 {
        return Err(NetworkError::InvalidSettings("need two non-hijacked endpoints".into()));
    }
    let passes = |r: &Route| r.intermediates().iter().any(|v| hijacked.contains(v));
    let (mut routed, mut honest_hits, mut adv_hits) = (0usize, 0usize, 0usize);
    let mut stretch_sum = 0.0;
    for _ in 0..n_pairs {
        let s = candidates[rng.random_range(0..candidates.len())];
        let t = loop {
            let t = candidates[rng.random_range(0..candidates.len())];
            if t != s {
                break t;
            }
        };
        let Some(honest) = route(topology, (s, t), &policy)? else {
            continue;
        };
        let adversarial = best_path(topology, s, t, |_, _| true, |_| true, |u, v| {
            if hijacked.contains(&u) || hijacked.contains(&v) {
                0.0
            } else {
                (node_weight(topology, u, tau_ms) + node_weight(topology, v, tau_ms)) / 2.0
            }
        })
        .expect("connected under honest routing");
        routed += 1;
        honest_hits += usize::from(passes(&honest));
        adv_hits += usize::from(passes(&adversarial));
        stretch_sum += adversarial.hops() as f64 / honest.hops() as f64;
    }
    let frac = |hits: usize| if routed == 0 { 0.0 } else { hits as f64 / routed as f64 };
    Ok(DiversionReport {
        requested_pairs: n_pairs,
        routed_pairs: routed,
        honest_interception: frac(honest_hits),
        adversarial_interception: frac(adv_hits),
        mean_stretch: if routed == 0 { 1.0 } else { stretch_sum / routed as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{sample_instant_topology, NodeQos, TopologySpec};
    use crate::stats::RngStreams;

    fn grid(n: usize) -> Topology {
        Topology::generate(TopologySpec::Grid { rows: n, cols: n }, 0).unwrap()
    }

    #[test]
    fn uniform_qos_matches_shortest_hop() {
        let g = grid(6);
        for (s, t) in [(0, 35), (3, 30), (7, 28)] {
            let a = route(&g, (s, t), &RoutingPolicy::ShortestHop).unwrap().unwrap();
            let b = route(&g, (s, t), &RoutingPolicy::trust_weighted()).unwrap().unwrap();
            assert_eq!(a.path, b.path);
        }
    }

    #[test]
    fn tie_break_is_smallest_sequence() {
        let g = grid(3);
        let r = route(&g, (0, 8), &RoutingPolicy::ShortestHop).unwrap().unwrap();
        assert_eq!(r.path, vec![0, 1, 2, 5, 8]);
    }

    #[test]
    fn bad_node_is_avoided() {
        let g = grid(3).with_qos(1, NodeQos { error_rate: 1.0, response_time_ms: 1.0 }).unwrap();
        let r = route(&g, (0, 2), &RoutingPolicy::trust_weighted()).unwrap().unwrap();
        assert!(!r.path.contains(&1), "{:?}", r.path);
        assert_eq!(route(&g, (0, 2), &RoutingPolicy::ShortestHop).unwrap().unwrap().path, vec![0, 1, 2]);
    }

    #[test]
    fn prune_skips_untrusted() {
        let g = grid(3).with_trust(1, false).unwrap();
        let r = route(&g, (0, 2), &RoutingPolicy::PruneCompromised).unwrap().unwrap();
        assert_eq!(r.path, vec![0, 3, 4, 5, 2]);
        let cut = grid(3).with_trust(3, false).unwrap().with_trust(4, false).unwrap().with_trust(5, false).unwrap();
        assert_eq!(route(&cut, (0, 8), &RoutingPolicy::PruneCompromised).unwrap(), None);
    }

    #[test]
    fn disconnected_gives_none() {
        let t = Topology::custom(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(route(&t, (0, 3), &RoutingPolicy::ShortestHop).unwrap(), None);
        assert!(route(&t, (0, 9), &RoutingPolicy::ShortestHop).is_err());
    }

    #[test]
    fn instant_routes_use_live_links() {
        let g = grid(3);
        let mut rng = RngStreams::new(1).stream("inst", 0);
        let dead = sample_instant_topology(&g, 0.0, 0, &mut rng).unwrap();
        assert_eq!(route_instant(&dead, (0, 8), &RoutingPolicy::ShortestHop).unwrap(), None);
        let live = sample_instant_topology(&g, 1.0, 0, &mut rng).unwrap();
        assert!(route_instant(&live, (0, 8), &RoutingPolicy::ShortestHop).unwrap().is_some());
    }

    #[test]
    fn diversion_trivial_cases() {
        let g = grid(5);
        let mut rng = RngStreams::new(1).stream("div", 0);
        let none = diversion_experiment(&g, &BTreeSet::new(), 50, 10.0, &mut rng).unwrap();
        assert_eq!((none.adversarial_interception, none.mean_stretch), (0.0, 1.0));

        let star = Topology::custom(4, &[(0, 1), (1, 2), (1, 3)]).unwrap();
        let cut = diversion_experiment(&star, &[1].into(), 30, 10.0, &mut rng).unwrap();
        assert_eq!((cut.honest_interception, cut.adversarial_interception), (1.0, 1.0));
        assert!(diversion_experiment(&star, &[9].into(), 1, 10.0, &mut rng).is_err());
    }

    #[test]
    fn central_hijack_draws_traffic() {
        let g = grid(10);
        let hijacked: BTreeSet<usize> = [44].into();
        let mut rng = RngStreams::new(11).stream("div", 1);
        let r = diversion_experiment(&g, &hijacked, 100, 10.0, &mut rng).unwrap();
        assert!(r.adversarial_interception > r.honest_interception, "{r:?}");
        assert!(r.mean_stretch >= 1.0);
    }
}
