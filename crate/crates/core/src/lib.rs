//! Layer-wise security simulator for quantum networks.
//!
//! The crate models attacks and their mitigations at four layers of a
//! quantum internet stack:
//!
//! * physical: weak-coherent photon sources, photon-number-splitting and
//!   Trojan-horse photon gain ([`photonics`], [`attacks`]),
//! * link: entangling probes, interlock-detected man-in-the-middle and
//!   bit-flip code noise injection ([`attacks`], [`quantum`]),
//! * network: topology generation, entanglement swapping, trust-aware
//!   routing, untrusted repeaters and denial of service ([`network`]),
//! * application: BB84 / E91 key distribution and trusted relays ([`qkd`]).
//!
//! Every stochastic routine takes an explicit RNG; [`stats::RngStreams`]
//! derives independent reproducible streams from one root seed.

pub mod attacks;
pub mod catalog;
pub mod network;
pub mod photonics;
pub mod qkd;
pub mod quantum;
pub mod stats;

pub use stats::{RngStreams, SimRng};
