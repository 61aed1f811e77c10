//! Classical records of photon sources, pulses and lossy channels.
//!
//! Pulses carry their polarization symbolically (bit, basis, phase). They
//! become a [`PureState`](crate::quantum::PureState) only where a protocol
//! actually measures them.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantum::Basis;
use crate::stats::{binomial_sample, poisson_sample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhotonicsError {
    #[error("mean photon number must be finite and non-negative, got {0}")]
    InvalidMean(f64),
    #[error("transmittance must lie in [0, 1], got {0}")]
    InvalidTransmittance(f64),
    #[error("{name} must lie in [0, 1], got {value}")]
    InvalidProbability { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PhotonSource {
    /// Attenuated laser: Poisson photon number with the given mean.
    WeakCoherent { mean: f64 },
    IdealSinglePhoton,
}

impl PhotonSource {
    pub fn weak_coherent(mean: f64) -> Result<Self, PhotonicsError> {
        if !mean.is_finite() || mean < 0.0 {
            return Err(PhotonicsError::InvalidMean(mean));
        }
        Ok(Self::WeakCoherent { mean })
    }

    pub fn mean_photon_number(&self) -> f64 {
        match *self {
            PhotonSource::WeakCoherent { mean } => mean,
            PhotonSource::IdealSinglePhoton => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IntensityLabel {
    Signal,
    Decoy(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonPulse {
    pub photon_count: u64,
    pub encoded_bit: bool,
    pub basis: Basis,
    /// Phase in `[0, 2π)`.
    pub phase: f64,
    pub intensity_label: IntensityLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossChannel {
    transmittance: f64,
}

impl LossChannel {
    pub fn new(transmittance: f64) -> Result<Self, PhotonicsError> {
        if !(0.0..=1.0).contains(&transmittance) {
            return Err(PhotonicsError::InvalidTransmittance(transmittance));
        }
        Ok(Self { transmittance })
    }

    pub fn lossless() -> Self {
        Self { transmittance: 1.0 }
    }

    pub fn transmittance(&self) -> f64 {
        self.transmittance
    }
}

impl Default for LossChannel {
    fn default() -> Self {
        Self::lossless()
    }
}

/// Threshold detector. Defaults to perfect efficiency and no dark counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detector {
    pub efficiency: f64,
    pub dark_count_probability: f64,
}

impl Default for Detector {
    fn default() -> Self {
        Self {
            efficiency: 1.0,
            dark_count_probability: 0.0,
        }
    }
}

impl Detector {
    pub fn new(efficiency: f64, dark_count_probability: f64) -> Result<Self, PhotonicsError> {
        for (name, value) in [("efficiency", efficiency), ("dark count probability", dark_count_probability)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(PhotonicsError::InvalidProbability { name, value });
            }
        }
        Ok(Self {
            efficiency,
            dark_count_probability,
        })
    }

    /// Whether the detector clicks for a pulse of `photon_count` photons.
    pub fn clicks<R: Rng + ?Sized>(&self, photon_count: u64, rng: &mut R) -> bool {
        if self.dark_count_probability > 0.0 && rng.random::<f64>() < self.dark_count_probability {
            return true;
        }
        if self.efficiency >= 1.0 {
            return photon_count > 0;
        }
        binomial_sample(photon_count, self.efficiency, rng) > 0
    }
}

pub fn emit_pulse<R: Rng + ?Sized>(
    source: &PhotonSource,
    bit: bool,
    basis: Basis,
    phase: f64,
    intensity_label: IntensityLabel,
    rng: &mut R,
) -> PhotonPulse {
    let photon_count = match *source {
        PhotonSource::WeakCoherent { mean } => {
            poisson_sample(mean, rng).expect("source mean validated at construction")
        }
        PhotonSource::IdealSinglePhoton => 1,
    };
    PhotonPulse {
        photon_count,
        encoded_bit: bit,
        basis,
        phase: phase.rem_euclid(TAU),
        intensity_label,
    }
}

/// Each photon survives independently with the channel transmittance.
pub fn transmit<R: Rng + ?Sized>(pulse: &PhotonPulse, channel: &LossChannel, rng: &mut R) -> PhotonPulse {
    PhotonPulse {
        photon_count: binomial_sample(pulse.photon_count, channel.transmittance, rng),
        ..*pulse
    }
}
