//! Attack-readiness catalog, one entry per attack, ordered by layer from
//! application down to physical.
//!
//! The entries live in `data/threat_catalog.tsv` and are compiled in.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Raw catalog file.
pub const CATALOG_TSV: &str = include_str!("../data/threat_catalog.tsv");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CatalogError {
    #[error("unknown layer `{0}` (expected application, network, link or physical)")]
    UnknownLayer(String),
    #[error("unknown readiness `{0}`")]
    UnknownReadiness(String),
    #[error("catalog line {0} is malformed")]
    Malformed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layer {
    Application,
    Network,
    Link,
    Physical,
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layer::Application => "Application",
            Layer::Network => "Network",
            Layer::Link => "Link",
            Layer::Physical => "Physical",
        })
    }
}

impl FromStr for Layer {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "application" => Ok(Layer::Application),
            "network" => Ok(Layer::Network),
            "link" => Ok(Layer::Link),
            "physical" => Ok(Layer::Physical),
            _ => Err(CatalogError::UnknownLayer(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Readiness {
    Low,
    #[serde(rename = "Low-to-Moderate")]
    LowToModerate,
    Moderate,
    High,
}

impl fmt::Display for Readiness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Readiness::Low => "Low",
            Readiness::LowToModerate => "Low-to-Moderate",
            Readiness::Moderate => "Moderate",
            Readiness::High => "High",
        })
    }
}

impl FromStr for Readiness {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Low" => Ok(Readiness::Low),
            "Low-to-Moderate" => Ok(Readiness::LowToModerate),
            "Moderate" => Ok(Readiness::Moderate),
            "High" => Ok(Readiness::High),
            _ => Err(CatalogError::UnknownReadiness(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreatCatalogEntry {
    pub layer: Layer,
    pub attack: String,
    pub requirements: String,
    pub readiness: Readiness,
    pub rationale: String,
}

pub fn parse_catalog(tsv: &str) -> Result<Vec<ThreatCatalogEntry>, CatalogError> {
    tsv.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            let [layer, attack, requirements, readiness, rationale] = f[..] else {
                return Err(CatalogError::Malformed(i + 1));
            };
            Ok(ThreatCatalogEntry {
                layer: layer.parse()?,
                attack: attack.to_string(),
                requirements: requirements.to_string(),
                readiness: readiness.parse()?,
                rationale: rationale.to_string(),
            })
        })
        .collect()
}

/// Every entry in table order.
pub fn threat_catalog() -> Vec<ThreatCatalogEntry> {
    parse_catalog(CATALOG_TSV).expect("bundled catalog parses")
}

pub fn entries_for(layer: Option<Layer>) -> Vec<ThreatCatalogEntry> {
    threat_catalog()
        .into_iter()
        .filter(|e| layer.is_none_or(|l| e.layer == l))
        .collect()
}

/// Hex SHA-256 of the bundled file.
pub fn catalog_checksum() -> String {
    Sha256::digest(CATALOG_TSV.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eleven_rows_in_layer_order() {
        let all = threat_catalog();
        assert_eq!(all.len(), 11);
        let layers: Vec<Layer> = all.iter().map(|e| e.layer).collect();
        let mut counts = Vec::new();
        for l in [Layer::Application, Layer::Network, Layer::Link, Layer::Physical] {
            counts.push(layers.iter().filter(|&&x| x == l).count());
        }
        assert_eq!(counts, [2, 3, 3, 3]);
        assert!(layers.windows(2).all(|w| w[0] as u8 <= w[1] as u8));
    }

    #[test]
    fn network_filter() {
        let names: Vec<String> = entries_for(Some(Layer::Network)).into_iter().map(|e| e.attack).collect();
        assert_eq!(names, ["Untrusted Repeater Nodes", "DoS", "Routing Disruption"]);
        let pns = entries_for(Some(Layer::Physical)).into_iter().find(|e| e.attack == "PNS").unwrap();
        assert_eq!(pns.readiness, Readiness::Low);
    }

    #[test]
    fn layer_names_parse() {
        assert_eq!("NETWORK".parse::<Layer>().unwrap(), Layer::Network);
        assert!("transport".parse::<Layer>().is_err());
        assert_eq!("Low-to-Moderate".parse::<Readiness>().unwrap().to_string(), "Low-to-Moderate");
    }

    #[test]
    fn malformed_rows_rejected() {
        assert_eq!(parse_catalog("h\nPhysical\tX\n"), Err(CatalogError::Malformed(2)));
        assert!(parse_catalog("h\nOrbital\ta\tb\tLow\tc\n").is_err());
    }
}
