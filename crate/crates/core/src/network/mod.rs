//! Network layer: topologies, entanglement swapping, untrusted repeaters,
//! trust-aware routing and denial of service.

mod dos;
mod entanglement;
mod paths;
mod routing;
mod topology;

use thiserror::Error;

pub use dos::{dos_simulate, DosConfig, DosReport, Mitigation};
pub use entanglement::{establish_e2e, sample_instant_topology, InstantTopology, SwapOutcome, DEFAULT_P_GEN, DEFAULT_P_SWAP};
pub use paths::{
    count_viable_paths, untrusted_node_experiment, DecayConfig, DecayDistanceRow, DecayReport, DecayRow,
};
pub use routing::{diversion_experiment, route, route_instant, DiversionReport, Route, RoutingPolicy};
pub use topology::{Node, NodeQos, Topology, TopologySpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("invalid topology parameters: {0}")]
    InvalidParams(String),
    #[error("node {node} out of range for a {nodes}-node topology")]
    NodeOutOfRange { node: usize, nodes: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(usize, usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("link {0}-{1} holds no live entanglement")]
    DeadLink(usize, usize),
    #[error("a path needs at least two nodes")]
    PathTooShort,
    #[error("endpoint {0} is compromised")]
    CompromisedEndpoint(usize),
    #[error("{name} must lie in [0, 1], got {value}")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("invalid experiment settings: {0}")]
    InvalidSettings(String),
}

fn check_probability(name: &'static str, value: f64) -> Result<(), NetworkError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(NetworkError::InvalidProbability { name, value })
    }
}
