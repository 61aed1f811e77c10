use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NetworkError;
use crate::stats::RngStreams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TopologySpec {
    Grid { rows: usize, cols: usize },
    ErdosRenyi { n: usize, p: f64 },
    /// Edge probability `beta · exp(-d / (alpha · L))` between uniform points
    /// in the unit square, `L` the largest pairwise distance.
    Waxman { n: usize, alpha: f64, beta: f64 },
    /// `rows × cols` hexagonal cells; `(rows + 1)(2·cols + 2) − 2` nodes.
    Hex { rows: usize, cols: usize },
    /// Every internal node has `branching` children, `height` levels below
    /// the root.
    Tree { branching: usize, height: usize },
    /// Preferential attachment of `m` edges per new node, grown from a star
    /// on `m + 1` nodes.
    BarabasiAlbert { n: usize, m: usize },
    /// Hand-built graph with `nodes` nodes.
    Custom { nodes: usize },
}

impl TopologySpec {
    /// The six families at the sizes used by the untrusted-repeater study.
    pub fn reference_families() -> Vec<TopologySpec> {
        vec![
            TopologySpec::Grid { rows: 10, cols: 10 },
            TopologySpec::ErdosRenyi { n: 100, p: 0.2 },
            TopologySpec::Waxman { n: 100, alpha: 0.1, beta: 0.4 },
            TopologySpec::Hex { rows: 6, cols: 7 },
            TopologySpec::Tree { branching: 3, height: 4 },
            TopologySpec::BarabasiAlbert { n: 100, m: 3 },
        ]
    }

    /// Short family name: `grid`, `erdos-renyi`, `waxman`, `hex`, `tree`,
    /// `ba` or `custom`.
    pub fn family(&self) -> &'static str {
        match self {
            TopologySpec::Grid { .. } => "grid",
            TopologySpec::ErdosRenyi { .. } => "erdos-renyi",
            TopologySpec::Waxman { .. } => "waxman",
            TopologySpec::Hex { .. } => "hex",
            TopologySpec::Tree { .. } => "tree",
            TopologySpec::BarabasiAlbert { .. } => "ba",
            TopologySpec::Custom { .. } => "custom",
        }
    }

    /// Family default used when only a family name is given.
    pub fn default_for(family: &str) -> Option<TopologySpec> {
        let all = Self::reference_families();
        all.into_iter().find(|s| s.family() == family || (family == "er" && s.family() == "erdos-renyi"))
    }

    pub fn expected_nodes(&self) -> usize {
        match *self {
            TopologySpec::Grid { rows, cols } => rows * cols,
            TopologySpec::ErdosRenyi { n, .. }
            | TopologySpec::Waxman { n, .. }
            | TopologySpec::BarabasiAlbert { n, .. } => n,
            TopologySpec::Hex { rows, cols } => (rows + 1) * (2 * cols + 2) - 2,
            TopologySpec::Tree { branching, height } => (0..=height).map(|l| branching.pow(l as u32)).sum(),
            TopologySpec::Custom { nodes } => nodes,
        }
    }

    fn validate(&self) -> Result<(), NetworkError> {
        let bad = |msg: String| Err(NetworkError::InvalidParams(msg));
        let prob = |name: &str, v: f64| -> Result<(), NetworkError> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(NetworkError::InvalidParams(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        match *self {
            TopologySpec::Grid { rows, cols } if rows == 0 || cols == 0 => bad("grid needs at least one row and column".into()),
            TopologySpec::ErdosRenyi { p, .. } => prob("p", p),
            TopologySpec::Waxman { alpha, beta, .. } => {
                prob("beta", beta)?;
                if alpha > 0.0 && alpha.is_finite() {
                    Ok(())
                } else {
                    bad(format!("alpha must be positive, got {alpha}"))
                }
            }
            TopologySpec::Hex { rows, cols } if rows == 0 || cols == 0 => bad("hex lattice needs at least one row and column of cells".into()),
            TopologySpec::Tree { branching: 0, .. } => bad("tree branching must be at least 1".into()),
            TopologySpec::BarabasiAlbert { n, m } if m == 0 || m >= n => bad(format!("need 1 <= m < n, got m={m} n={n}")),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for TopologySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TopologySpec::Grid { rows, cols } => write!(f, "grid:{rows}x{cols}"),
            TopologySpec::ErdosRenyi { n, p } => write!(f, "erdos-renyi:{n}:{p}"),
            TopologySpec::Waxman { n, alpha, beta } => write!(f, "waxman:{n}:{alpha}:{beta}"),
            TopologySpec::Hex { rows, cols } => write!(f, "hex:{rows}x{cols}"),
            TopologySpec::Tree { branching, height } => write!(f, "tree:{branching}:{height}"),
            TopologySpec::BarabasiAlbert { n, m } => write!(f, "ba:{n}:{m}"),
            TopologySpec::Custom { nodes } => write!(f, "custom:{nodes}"),
        }
    }
}

impl FromStr for TopologySpec {
    type Err = NetworkError;

    /// Parses the tokens written by `Display`; a bare family name gives the
    /// reference parameters.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || NetworkError::InvalidParams(format!("unrecognized topology kind `{s}`"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        if parts.len() == 1 {
            return Self::default_for(parts[0]).ok_or_else(err);
        }
        fn num<T: FromStr>(s: &str) -> Option<T> {
            s.parse().ok()
        }
        fn dims(s: &str) -> Option<(usize, usize)> {
            let (a, b) = s.split_once('x')?;
            Some((num(a)?, num(b)?))
        }
        let spec = match (parts[0], &parts[1..]) {
            ("grid", [d]) => dims(d).map(|(rows, cols)| TopologySpec::Grid { rows, cols }),
            ("erdos-renyi" | "er", [n, p]) => num(n).zip(num(p)).map(|(n, p)| TopologySpec::ErdosRenyi { n, p }),
            ("waxman", [n, a, b]) => match (num(n), num(a), num(b)) {
                (Some(n), Some(alpha), Some(beta)) => Some(TopologySpec::Waxman { n, alpha, beta }),
                _ => None,
            },
            ("hex", [d]) => dims(d).map(|(rows, cols)| TopologySpec::Hex { rows, cols }),
            ("tree", [r, h]) => num(r).zip(num(h)).map(|(branching, height)| TopologySpec::Tree { branching, height }),
            ("ba", [n, m]) => num(n).zip(num(m)).map(|(n, m)| TopologySpec::BarabasiAlbert { n, m }),
            ("custom", [n]) => num(n).map(|nodes| TopologySpec::Custom { nodes }),
            _ => None,
        };
        spec.ok_or_else(err)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeQos {
    pub error_rate: f64,
    pub response_time_ms: f64,
}

impl Default for NodeQos {
    fn default() -> Self {
        Self {
            error_rate: 0.0,
            response_time_ms: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub trusted: bool,
    pub qos: NodeQos,
}

/// Simple undirected graph with per-node trust and QoS. Edges are stored as
/// `(u, v)` with `u < v`, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    spec: TopologySpec,
    seed: u64,
    nodes: Vec<Node>,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Topology {
    pub fn generate(spec: TopologySpec, seed: u64) -> Result<Self, NetworkError> {
        spec.validate()?;
        let mut rng = RngStreams::new(seed).stream("topology", 0);
        let n = spec.expected_nodes();
        let edges = match spec {
            TopologySpec::Grid { rows, cols } => grid_edges(rows, cols),
            TopologySpec::ErdosRenyi { n, p } => {
                let mut edges = Vec::new();
                for u in 0..n {
                    for v in u + 1..n {
                        if rng.random::<f64>() < p {
                            edges.push((u, v));
                        }
                    }
                }
                edges
            }
            TopologySpec::Waxman { n, alpha, beta } => {
                let points: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
                let dist = |a: usize, b: usize| (points[a].0 - points[b].0).hypot(points[a].1 - points[b].1);
                let mut span: f64 = 0.0;
                for u in 0..n {
                    for v in u + 1..n {
                        span = span.max(dist(u, v));
                    }
                }
                let mut edges = Vec::new();
                for u in 0..n {
                    for v in u + 1..n {
                        let p = if span > 0.0 { beta * (-dist(u, v) / (alpha * span)).exp() } else { beta };
                        if rng.random::<f64>() < p {
                            edges.push((u, v));
                        }
                    }
                }
                edges
            }
            TopologySpec::Hex { rows, cols } => hex_edges(rows, cols),
            TopologySpec::Tree { branching, .. } => (1..n).map(|child| ((child - 1) / branching, child)).collect(),
            TopologySpec::BarabasiAlbert { n, m } => barabasi_albert_edges(n, m, &mut rng),
            TopologySpec::Custom { .. } => Vec::new(),
        };
        Self::from_parts(spec, seed, default_nodes(n), edges)
    }

    /// Hand-built graph; rejects self-loops, duplicates and unknown nodes.
    pub fn custom(nodes: usize, edges: &[(usize, usize)]) -> Result<Self, NetworkError> {
        Self::from_parts(TopologySpec::Custom { nodes }, 0, default_nodes(nodes), edges.to_vec())
    }

    fn from_parts(spec: TopologySpec, seed: u64, nodes: Vec<Node>, edges: Vec<(usize, usize)>) -> Result<Self, NetworkError> {
        let n = nodes.len();
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            for node in [u, v] {
                if node >= n {
                    return Err(NetworkError::NodeOutOfRange { node, nodes: n });
                }
            }
            if u == v {
                return Err(NetworkError::SelfLoop(u));
            }
            if !set.insert((u.min(v), u.max(v))) {
                return Err(NetworkError::DuplicateEdge(u.min(v), u.max(v)));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            spec,
            seed,
            nodes,
            edges,
            adjacency,
        })
    }

    pub fn spec(&self) -> &TopologySpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted neighbour ids.
    pub fn neighbors(&self, id: usize) -> &[usize] {
        &self.adjacency[id]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.nodes.len() && self.adjacency[u].binary_search(&v).is_ok()
    }

    pub fn check_node(&self, node: usize) -> Result<(), NetworkError> {
        if node < self.nodes.len() {
            Ok(())
        } else {
            Err(NetworkError::NodeOutOfRange {
                node,
                nodes: self.nodes.len(),
            })
        }
    }

    pub fn with_qos(mut self, id: usize, qos: NodeQos) -> Result<Self, NetworkError> {
        self.check_node(id)?;
        if !(0.0..=1.0).contains(&qos.error_rate) || !(qos.response_time_ms >= 0.0) {
            return Err(NetworkError::InvalidParams(format!("invalid qos for node {id}: {qos:?}")));
        }
        self.nodes[id].qos = qos;
        Ok(self)
    }

    pub fn with_trust(mut self, id: usize, trusted: bool) -> Result<Self, NetworkError> {
        self.check_node(id)?;
        self.nodes[id].trusted = trusted;
        Ok(self)
    }

    /// Hop distances from `source` over the whole graph (`None` if
    /// unreachable).
    pub fn hop_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.nodes.len()];
        let mut queue = std::collections::VecDeque::from([source]);
        dist[source] = Some(0);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap();
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!("nodes {} kind {} seed {}\n", self.nodes.len(), self.spec, self.seed);
        for (u, v) in &self.edges {
            out.push_str(&format!("edge {u} {v}\n"));
        }
        for node in &self.nodes {
            out.push_str(&format!(
                "node {} trusted {} err {} rt {}\n",
                node.id,
                u8::from(node.trusted),
                node.qos.error_rate,
                node.qos.response_time_ms
            ));
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self, NetworkError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let parse_err = |line: usize, msg: &str| NetworkError::Parse {
            line: line + 1,
            message: msg.to_string(),
        };
        let (hl, header) = lines.next().ok_or_else(|| parse_err(0, "empty input"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        let (n, spec, seed) = match h[..] {
            ["nodes", n, "kind", kind, "seed", seed] => (
                n.parse::<usize>().map_err(|_| parse_err(hl, "bad node count"))?,
                kind.parse::<TopologySpec>()?,
                seed.parse::<u64>().map_err(|_| parse_err(hl, "bad seed"))?,
            ),
            _ => return Err(parse_err(hl, "expected `nodes N kind K seed S`")),
        };
        let mut nodes = default_nodes(n);
        let mut edges = Vec::new();
        for (i, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            match f[..] {
                ["edge", u, v] => {
                    let u = u.parse().map_err(|_| parse_err(i, "bad edge endpoint"))?;
                    let v = v.parse().map_err(|_| parse_err(i, "bad edge endpoint"))?;
                    edges.push((u, v));
                }
                ["node", id, "trusted", t, "err", e, "rt", rt] => {
                    let id: usize = id.parse().map_err(|_| parse_err(i, "bad node id"))?;
                    let node = nodes.get_mut(id).ok_or(NetworkError::NodeOutOfRange { node: id, nodes: n })?;
                    node.trusted = match t {
                        "0" => false,
                        "1" => true,
                        _ => return Err(parse_err(i, "trusted must be 0 or 1")),
                    };
                    node.qos.error_rate = e.parse().map_err(|_| parse_err(i, "bad error rate"))?;
                    node.qos.response_time_ms = rt.parse().map_err(|_| parse_err(i, "bad response time"))?;
                }
                _ => return Err(parse_err(i, "unrecognized line")),
            }
        }
        Self::from_parts(spec, seed, nodes, edges)
    }
}

fn default_nodes(n: usize) -> Vec<Node> {
    (0..n)
        .map(|id| Node {
            id,
            trusted: true,
            qos: NodeQos::default(),
        })
        .collect()
}

fn grid_edges(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let id = r * cols + c;
            if c + 1 < cols {
                edges.push((id, id + 1));
            }
            if r + 1 < rows {
                edges.push((id, id + cols));
            }
        }
    }
    edges
}

// Brick-wall layout: columns 0..=cols of 2·rows + 2 sites each, vertical
// links inside a column, horizontal links where column and row parity
// agree. Two dangling corner sites are dropped.
fn hex_edges(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let height = 2 * rows + 2;
    let dropped = [(0, height - 1), (cols, if cols % 2 == 1 { height - 1 } else { 0 })];
    let mut ids = std::collections::BTreeMap::new();
    for i in 0..=cols {
        for j in 0..height {
            if !dropped.contains(&(i, j)) {
                let next = ids.len();
                ids.insert((i, j), next);
            }
        }
    }
    let mut edges = Vec::new();
    let mut link = |a: (usize, usize), b: (usize, usize)| {
        if let (Some(&u), Some(&v)) = (ids.get(&a), ids.get(&b)) {
            edges.push((u, v));
        }
    };
    for i in 0..=cols {
        for j in 0..height - 1 {
            link((i, j), (i, j + 1));
        }
    }
    for i in 0..cols {
        for j in 0..height {
            if i % 2 == j % 2 {
                link((i, j), (i + 1, j));
            }
        }
    }
    edges
}

fn barabasi_albert_edges<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = (1..=m).map(|leaf| (0, leaf)).collect();
    // Each node appears once per incident edge.
    let mut repeated: Vec<usize> = Vec::new();
    for &(u, v) in &edges {
        repeated.push(u);
        repeated.push(v);
    }
    for source in m + 1..n {
        let mut targets = BTreeSet::new();
        while targets.len() < m {
            targets.insert(*repeated.choose(rng).expect("non-empty seed graph"));
        }
        for &t in &targets {
            edges.push((t, source));
            repeated.push(t);
            repeated.push(source);
        }
    }
    edges
}
