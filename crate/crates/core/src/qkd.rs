//! Key distribution: BB84, E91, sifting, QBER estimation, privacy
//! amplification, trusted-relay forwarding and decoy-state analysis.
//!
//! Basis reconciliation happens over a free, authenticated classical
//! channel. There is no error-correction step, so on a noiseless channel
//! every disclosed error is attributable to an eavesdropper.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::{Rng, RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::photonics::{emit_pulse, transmit, Detector, IntensityLabel, LossChannel, PhotonPulse, PhotonSource};
use crate::quantum::{bell_pair, Basis, BellState, ChshSettings, PureState, QuantumError};
use crate::stats::{binary_entropy, ChshTally, SimRng};

pub const DEFAULT_ABORT_THRESHOLD: f64 = 0.11;
pub const DEFAULT_DISCLOSED_FRACTION: f64 = 0.1;
pub const DEFAULT_SECURITY_MARGIN_BITS: usize = 32;
pub const DEFAULT_CHSH_FRACTION: f64 = 0.25;
pub const DEFAULT_CHSH_DETECTION_MARGIN: f64 = 0.1;
pub const MIN_DECOY_PULSES: u64 = 1_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QkdError {
    #[error("{0} must be positive")]
    ZeroCount(&'static str),
    #[error("{name} must lie in {range}, got {value}")]
    OutOfRange {
        name: &'static str,
        range: &'static str,
        value: f64,
    },
    #[error("sifted key is empty")]
    EmptySiftedKey,
    #[error("disclosed sample is empty ({sifted} sifted bits at fraction {fraction})")]
    EmptyDisclosure { sifted: usize, fraction: f64 },
    #[error("key lengths differ ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("decoy analysis needs at least two intensities, got {0}")]
    TooFewIntensities(usize),
    #[error("intensity {label:?} has {pulses} pulses, need at least {MIN_DECOY_PULSES}")]
    InsufficientStatistics { label: IntensityLabel, pulses: u64 },
    #[error(transparent)]
    Quantum(#[from] QuantumError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AbortReason {
    NoSiftedBits,
    EmptyDisclosure,
    QberAboveThreshold { qber: f64, threshold: f64 },
    /// Leak estimate and margin consumed the whole remainder.
    KeyExhausted,
}

impl std::fmt::Display for AbortReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AbortReason::NoSiftedBits => f.write_str("no sifted bits"),
            AbortReason::EmptyDisclosure => f.write_str("nothing disclosed"),
            AbortReason::QberAboveThreshold { qber, threshold } => write!(f, "qber {qber} above {threshold}"),
            AbortReason::KeyExhausted => f.write_str("key exhausted"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QkdSession {
    pub raw_bits_alice: Vec<bool>,
    pub raw_bits_bob: Vec<bool>,
    pub bases_alice: Vec<Basis>,
    pub bases_bob: Vec<Basis>,
    pub sifted_key_alice: Vec<bool>,
    pub sifted_key_bob: Vec<bool>,
    pub disclosed_fraction: f64,
    pub disclosed_bits: usize,
    /// Mismatch rate over the disclosed positions; `None` if nothing was
    /// disclosed.
    pub qber: Option<f64>,
    pub leak_bits: usize,
    pub final_key: Vec<bool>,
    pub aborted: Option<AbortReason>,
}

impl QkdSession {
    fn empty(disclosed_fraction: f64) -> Self {
        Self {
            raw_bits_alice: Vec::new(),
            raw_bits_bob: Vec::new(),
            bases_alice: Vec::new(),
            bases_bob: Vec::new(),
            sifted_key_alice: Vec::new(),
            sifted_key_bob: Vec::new(),
            disclosed_fraction,
            disclosed_bits: 0,
            qber: None,
            leak_bits: 0,
            final_key: Vec::new(),
            aborted: None,
        }
    }

    pub fn sifted_len(&self) -> usize {
        self.sifted_key_alice.len()
    }

    pub fn is_aborted(&self) -> bool {
        self.aborted.is_some()
    }

    /// Sifting, disclosure, abort check and privacy amplification over the
    /// raw records already in the session.
    fn distill<R: Rng + ?Sized>(
        &mut self,
        abort_threshold: f64,
        security_margin_bits: usize,
        rng: &mut R,
    ) {
        let sifted = sift_keys(&self.raw_bits_alice, &self.raw_bits_bob, &self.bases_alice, &self.bases_bob);
        self.sifted_key_alice = sifted.alice.clone();
        self.sifted_key_bob = sifted.bob.clone();
        if sifted.is_empty() {
            self.aborted = Some(AbortReason::NoSiftedBits);
            return;
        }
        let estimate = match estimate_qber(&sifted, self.disclosed_fraction, rng) {
            Ok(e) => e,
            Err(_) => {
                self.aborted = Some(AbortReason::EmptyDisclosure);
                return;
            }
        };
        self.disclosed_bits = estimate.disclosed;
        self.qber = Some(estimate.qber);
        if estimate.qber > abort_threshold {
            self.aborted = Some(AbortReason::QberAboveThreshold {
                qber: estimate.qber,
                threshold: abort_threshold,
            });
            return;
        }
        let remaining = estimate.remainder_alice.len();
        self.leak_bits = estimated_leak_bits(estimate.qber, remaining);
        let hash_seed = rng.random::<u64>();
        self.final_key = privacy_amplify(&estimate.remainder_alice, self.leak_bits, security_margin_bits, hash_seed);
        if self.final_key.is_empty() {
            self.aborted = Some(AbortReason::KeyExhausted);
        }
    }
}

/// Bits an eavesdropper may hold on an `n`-bit remainder at error rate
/// `qber`: `⌈2·h(qber)·n⌉`, i.e. the key rate `1 − 2h(Q)` of BB84.
pub fn estimated_leak_bits(qber: f64, n: usize) -> usize {
    let leak = (2.0 * binary_entropy(qber) * n as f64).ceil() as usize;
    leak.min(n)
}

/// Context handed to a qubit tap. `alice_basis` is only meant for
/// oracle-mode test adversaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TapContext {
    pub index: usize,
    pub alice_basis: Basis,
}

/// Adversary sitting on the quantum channel of a prepare-and-measure run.
pub trait QubitTap {
    fn intercept(&mut self, qubit: PureState, ctx: &TapContext, rng: &mut dyn RngCore) -> PureState;
}

/// Adversary acting on an entangled pair before it reaches the parties.
///
/// Returns the (possibly enlarged) state; qubits 0 and 1 remain Alice's
/// and Bob's, anything after belongs to the adversary.
pub trait PairTap {
    fn tap(&mut self, pair: PureState) -> Result<PureState, QuantumError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bb84Config {
    pub n_pulses: usize,
    pub source: PhotonSource,
    pub channel: LossChannel,
    pub detector: Detector,
    pub disclosed_fraction: f64,
    pub abort_threshold: f64,
    pub security_margin_bits: usize,
}

impl Bb84Config {
    pub fn ideal(n_pulses: usize) -> Self {
        Self {
            n_pulses,
            source: PhotonSource::IdealSinglePhoton,
            channel: LossChannel::lossless(),
            detector: Detector::default(),
            disclosed_fraction: DEFAULT_DISCLOSED_FRACTION,
            abort_threshold: DEFAULT_ABORT_THRESHOLD,
            security_margin_bits: DEFAULT_SECURITY_MARGIN_BITS,
        }
    }
}

fn check_fraction(name: &'static str, value: f64) -> Result<(), QkdError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(QkdError::OutOfRange {
            name,
            range: "(0, 1)",
            value,
        })
    }
}

pub fn run_bb84<R: Rng>(
    config: &Bb84Config,
    mut tap: Option<&mut dyn QubitTap>,
    rng: &mut R,
) -> Result<QkdSession, QkdError> {
    if config.n_pulses == 0 {
        return Err(QkdError::ZeroCount("n_pulses"));
    }
    check_fraction("disclosed_fraction", config.disclosed_fraction)?;
    let mut session = QkdSession::empty(config.disclosed_fraction);
    for index in 0..config.n_pulses {
        let bit: bool = rng.random();
        let basis = Basis::random(rng);
        let pulse = emit_pulse(&config.source, bit, basis, 0.0, IntensityLabel::Signal, rng);
        let arrived = transmit(&pulse, &config.channel, rng);
        if !config.detector.clicks(arrived.photon_count, rng) {
            continue;
        }
        let mut qubit = PureState::encode(bit, basis);
        if let Some(tap) = tap.as_deref_mut() {
            let ctx = TapContext {
                index,
                alice_basis: basis,
            };
            qubit = tap.intercept(qubit, &ctx, rng);
        }
        let bob_basis = Basis::random(rng);
        let outcome = qubit.measure(0, bob_basis, rng)?;
        session.raw_bits_alice.push(bit);
        session.bases_alice.push(basis);
        session.raw_bits_bob.push(outcome.bit);
        session.bases_bob.push(bob_basis);
    }
    session.distill(config.abort_threshold, config.security_margin_bits, rng);
    Ok(session)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SiftedPair {
    pub alice: Vec<bool>,
    pub bob: Vec<bool>,
    /// Raw indices the sifted bits came from.
    pub positions: Vec<usize>,
}

impl SiftedPair {
    pub fn len(&self) -> usize {
        self.alice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alice.is_empty()
    }
}

/// Keeps exactly the positions where both bases agree.
pub fn sift_keys(bits_alice: &[bool], bits_bob: &[bool], bases_alice: &[Basis], bases_bob: &[Basis]) -> SiftedPair {
    let mut out = SiftedPair::default();
    for (i, ((a, b), (ba, bb))) in bits_alice
        .iter()
        .zip(bits_bob)
        .zip(bases_alice.iter().zip(bases_bob))
        .enumerate()
    {
        if ba == bb {
            out.alice.push(*a);
            out.bob.push(*b);
            out.positions.push(i);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct QberEstimate {
    pub qber: f64,
    pub disclosed: usize,
    pub mismatches: usize,
    pub remainder_alice: Vec<bool>,
    pub remainder_bob: Vec<bool>,
}

/// Publicly compares a uniformly sampled `round(len · fraction)` subset of
/// the sifted key and strips it from the key material.
pub fn estimate_qber<R: Rng + ?Sized>(
    sifted: &SiftedPair,
    disclosed_fraction: f64,
    rng: &mut R,
) -> Result<QberEstimate, QkdError> {
    if sifted.is_empty() {
        return Err(QkdError::EmptySiftedKey);
    }
    let len = sifted.len();
    let disclosed = ((len as f64) * disclosed_fraction).round() as usize;
    if disclosed == 0 || disclosed_fraction <= 0.0 {
        return Err(QkdError::EmptyDisclosure {
            sifted: len,
            fraction: disclosed_fraction,
        });
    }
    let disclosed = disclosed.min(len);
    let mut chosen = vec![false; len];
    for i in index::sample(rng, len, disclosed) {
        chosen[i] = true;
    }
    let mut mismatches = 0;
    let mut remainder_alice = Vec::with_capacity(len - disclosed);
    let mut remainder_bob = Vec::with_capacity(len - disclosed);
    for (i, &is_disclosed) in chosen.iter().enumerate() {
        if is_disclosed {
            mismatches += usize::from(sifted.alice[i] != sifted.bob[i]);
        } else {
            remainder_alice.push(sifted.alice[i]);
            remainder_bob.push(sifted.bob[i]);
        }
    }
    Ok(QberEstimate {
        qber: mismatches as f64 / disclosed as f64,
        disclosed,
        mismatches,
        remainder_alice,
        remainder_bob,
    })
}

/// Compresses `key` to `len − leak − margin` bits with a binary Toeplitz
/// matrix whose diagonals come from a ChaCha stream seeded by the public
/// `hash_seed`. Returns an empty key when nothing would be left.
pub fn privacy_amplify(key: &[bool], estimated_leak_bits: usize, security_margin_bits: usize, hash_seed: u64) -> Vec<bool> {
    let n = key.len();
    let out_len = match n
        .checked_sub(estimated_leak_bits)
        .and_then(|v| v.checked_sub(security_margin_bits))
    {
        Some(m) if m > 0 => m,
        _ => return Vec::new(),
    };
    // T[i][j] = r[i + n - 1 - j]; against the reversed key this is a
    // sliding window over r.
    let mut seeder = SimRng::seed_from_u64(hash_seed);
    let diag_words = (n + out_len) / 64 + 2;
    let diagonals: Vec<u64> = (0..diag_words).map(|_| seeder.random()).collect();
    let reversed = pack_bits(key.iter().rev().copied());
    (0..out_len)
        .map(|row| {
            let ones: u32 = reversed
                .iter()
                .enumerate()
                .map(|(w, &kw)| (bit_window(&diagonals, row + 64 * w) & kw).count_ones())
                .sum();
            ones % 2 == 1
        })
        .collect()
}

fn pack_bits<I: Iterator<Item = bool>>(bits: I) -> Vec<u64> {
    let mut words = Vec::new();
    for (i, bit) in bits.enumerate() {
        if i % 64 == 0 {
            words.push(0u64);
        }
        if bit {
            *words.last_mut().expect("pushed above") |= 1 << (i % 64);
        }
    }
    words
}

fn bit_window(words: &[u64], offset: usize) -> u64 {
    let (w, shift) = (offset / 64, offset % 64);
    if shift == 0 {
        words[w]
    } else {
        (words[w] >> shift) | (words[w + 1] << (64 - shift))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct E91Config {
    pub n_pairs: usize,
    /// Share of pairs spent on the CHSH estimate.
    pub chsh_fraction: f64,
    pub disclosed_fraction: f64,
    /// Eavesdropping is declared when the estimate is `<= 2 + margin`.
    pub detection_margin: f64,
    pub abort_threshold: f64,
    pub security_margin_bits: usize,
    pub settings: ChshSettings,
}

impl E91Config {
    pub fn new(n_pairs: usize) -> Self {
        Self {
            n_pairs,
            chsh_fraction: DEFAULT_CHSH_FRACTION,
            disclosed_fraction: DEFAULT_DISCLOSED_FRACTION,
            detection_margin: DEFAULT_CHSH_DETECTION_MARGIN,
            abort_threshold: DEFAULT_ABORT_THRESHOLD,
            security_margin_bits: DEFAULT_SECURITY_MARGIN_BITS,
            settings: ChshSettings::optimal(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E91Session {
    pub session: QkdSession,
    pub chsh_estimate: Option<f64>,
    pub chsh_samples: u64,
    /// Also set when no CHSH estimate could be formed: nonlocality was
    /// not certified.
    pub eavesdrop_detected: bool,
}

pub fn run_e91<R: Rng>(config: &E91Config, mut tap: Option<&mut dyn PairTap>, rng: &mut R) -> Result<E91Session, QkdError> {
    if config.n_pairs == 0 {
        return Err(QkdError::ZeroCount("n_pairs"));
    }
    check_fraction("disclosed_fraction", config.disclosed_fraction)?;
    check_fraction("chsh_fraction", config.chsh_fraction)?;
    let mut session = QkdSession::empty(config.disclosed_fraction);
    let mut tally = ChshTally::new();
    for _ in 0..config.n_pairs {
        let mut pair = bell_pair(BellState::PhiPlus);
        if let Some(tap) = tap.as_deref_mut() {
            pair = tap.tap(pair)?;
        }
        if rng.random::<f64>() < config.chsh_fraction {
            let (a, b) = (rng.random_range(0..2usize), rng.random_range(0..2usize));
            let first = pair.measure_at_angle(0, config.settings.alice[a], rng)?;
            let second = first.post_state.measure_at_angle(1, config.settings.bob[b], rng)?;
            tally.record(a, b, first.bit, second.bit);
        } else {
            let (ba, bb) = (Basis::random(rng), Basis::random(rng));
            let first = pair.measure(0, ba, rng)?;
            let second = first.post_state.measure(1, bb, rng)?;
            session.raw_bits_alice.push(first.bit);
            session.bases_alice.push(ba);
            session.raw_bits_bob.push(second.bit);
            session.bases_bob.push(bb);
        }
    }
    session.distill(config.abort_threshold, config.security_margin_bits, rng);
    let chsh_estimate = tally.estimate();
    let eavesdrop_detected = chsh_estimate.is_none_or(|s| s <= 2.0 + config.detection_margin);
    Ok(E91Session {
        session,
        chsh_estimate,
        chsh_samples: tally.samples(),
        eavesdrop_detected,
    })
}

/// One-time-pad packet a trusted relay sends downstream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelayKeyPacket {
    pub ciphertext: Vec<bool>,
}

impl RelayKeyPacket {
    pub fn len(&self) -> usize {
        self.ciphertext.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ciphertext.is_empty()
    }
}

fn xor_keys(a: &[bool], b: &[bool]) -> Result<Vec<bool>, QkdError> {
    if a.len() != b.len() {
        return Err(QkdError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x ^ y).collect())
}

pub fn relay_forward_key(key1: &[bool], key2: &[bool]) -> Result<RelayKeyPacket, QkdError> {
    Ok(RelayKeyPacket {
        ciphertext: xor_keys(key1, key2)?,
    })
}

pub fn relay_recover_key(packet: &RelayKeyPacket, key2: &[bool]) -> Result<Vec<bool>, QkdError> {
    xor_keys(&packet.ciphertext, key2)
}

/// Cleartext a relay had to hold while re-encrypting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelayExposure {
    pub relay: usize,
    pub cleartext: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelayChainTrace {
    pub alice_key: Vec<bool>,
    pub bob_key: Vec<bool>,
    pub packets: Vec<RelayKeyPacket>,
    pub exposures: Vec<RelayExposure>,
}

/// Hop-by-hop forwarding across `link_keys.len() - 1` trusted relays.
///
/// `link_keys[i]` is the QKD key shared over hop `i`; the end-to-end key is
/// the first hop's key. Each relay decrypts with its upstream key and
/// re-encrypts with its downstream key, exposing the end-to-end key.
pub fn relay_chain(link_keys: &[Vec<bool>]) -> Result<RelayChainTrace, QkdError> {
    let (first, rest) = link_keys.split_first().ok_or(QkdError::ZeroCount("link_keys"))?;
    if rest.is_empty() {
        return Err(QkdError::ZeroCount("relays"));
    }
    let mut packets = Vec::with_capacity(rest.len());
    let mut exposures = Vec::with_capacity(rest.len());
    let mut carried = first.clone();
    for (relay, downstream) in rest.iter().enumerate() {
        // relay `relay` holds link_keys[relay] with its upstream neighbour
        exposures.push(RelayExposure {
            relay,
            cleartext: carried.clone(),
        });
        let packet = relay_forward_key(&carried, downstream)?;
        carried = relay_recover_key(&packet, downstream)?;
        packets.push(packet);
    }
    Ok(RelayChainTrace {
        alice_key: first.clone(),
        bob_key: carried,
        packets,
        exposures,
    })
}

/// Where a tapped pulse goes next.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TappedPulse {
    /// Continues through the lossy channel.
    Channel(PhotonPulse),
    /// Handed to the receiver over the adversary's lossless line.
    Delivered(PhotonPulse),
}

/// Adversary acting on whole pulses (photon-number attacks).
pub trait PulseTap {
    fn tap(&mut self, pulse: PhotonPulse, rng: &mut dyn RngCore) -> TappedPulse;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyIntensity {
    pub label: IntensityLabel,
    pub mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyRecord {
    pub label: IntensityLabel,
    pub mean: f64,
    pub detected: bool,
}

/// Sends `pulses_each` pulses per intensity in a shuffled order and logs
/// whether the receiver's detector clicked.
pub fn simulate_decoy_transmission<R: Rng>(
    intensities: &[DecoyIntensity],
    pulses_each: usize,
    channel: &LossChannel,
    detector: &Detector,
    mut tap: Option<&mut dyn PulseTap>,
    rng: &mut R,
) -> Result<Vec<DecoyRecord>, QkdError> {
    let sources = intensities
        .iter()
        .map(|i| {
            PhotonSource::weak_coherent(i.mean).map_err(|_| QkdError::OutOfRange {
                name: "intensity mean",
                range: "[0, inf)",
                value: i.mean,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut schedule: Vec<usize> = (0..intensities.len())
        .flat_map(|i| std::iter::repeat_n(i, pulses_each))
        .collect();
    schedule.shuffle(rng);
    let mut log = Vec::with_capacity(schedule.len());
    for which in schedule {
        let intensity = intensities[which];
        let bit: bool = rng.random();
        let basis = Basis::random(rng);
        let pulse = emit_pulse(&sources[which], bit, basis, 0.0, intensity.label, rng);
        let received = match tap.as_deref_mut().map(|t| t.tap(pulse, rng)) {
            Some(TappedPulse::Delivered(p)) => p,
            Some(TappedPulse::Channel(p)) => transmit(&p, channel, rng),
            None => transmit(&pulse, channel, rng),
        };
        log.push(DecoyRecord {
            label: intensity.label,
            mean: intensity.mean,
            detected: detector.clicks(received.photon_count, rng),
        });
    }
    Ok(log)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityGain {
    pub label: IntensityLabel,
    pub mean: f64,
    pub sent: u64,
    pub detected: u64,
    pub gain: f64,
    pub model_gain: f64,
    /// Relative deviation from the model; absolute when the model gain is 0.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoyReport {
    pub intensities: Vec<IntensityGain>,
    /// Lower bound on the single-photon yield from the strongest and the
    /// weakest non-vacuum intensity.
    pub single_photon_yield: Option<f64>,
    pub max_deviation: f64,
    pub eavesdrop_flag: bool,
}

/// Compares per-intensity gains against the no-attack model
/// `gain(μ) = 1 − e^{−ημ}`.
pub fn decoy_state_analysis(log: &[DecoyRecord], channel: &LossChannel, tolerance: f64) -> Result<DecoyReport, QkdError> {
    let mut groups: BTreeMap<IntensityLabel, (f64, u64, u64)> = BTreeMap::new();
    for rec in log {
        let entry = groups.entry(rec.label).or_insert((rec.mean, 0, 0));
        entry.1 += 1;
        entry.2 += u64::from(rec.detected);
    }
    if groups.len() < 2 {
        return Err(QkdError::TooFewIntensities(groups.len()));
    }
    if let Some((&label, &(_, pulses, _))) = groups.iter().find(|(_, g)| g.1 < MIN_DECOY_PULSES) {
        return Err(QkdError::InsufficientStatistics { label, pulses });
    }
    let eta = channel.transmittance();
    let intensities: Vec<IntensityGain> = groups
        .into_iter()
        .map(|(label, (mean, sent, detected))| {
            let gain = detected as f64 / sent as f64;
            let model_gain = 1.0 - (-eta * mean).exp();
            let deviation = if model_gain > 0.0 {
                (gain - model_gain).abs() / model_gain
            } else {
                gain.abs()
            };
            IntensityGain {
                label,
                mean,
                sent,
                detected,
                gain,
                model_gain,
                deviation,
            }
        })
        .collect();
    let max_deviation = intensities.iter().map(|g| g.deviation).fold(0.0, f64::max);
    Ok(DecoyReport {
        single_photon_yield: single_photon_yield_bound(&intensities),
        max_deviation,
        eavesdrop_flag: max_deviation > tolerance,
        intensities,
    })
}

// Vacuum + weak decoy bound:
// Y1 >= μ/(μν − ν²) · (Qν e^ν − Qμ e^μ ν²/μ² − (μ² − ν²)/μ² · Y0)
fn single_photon_yield_bound(gains: &[IntensityGain]) -> Option<f64> {
    let y0 = gains.iter().find(|g| g.mean == 0.0).map_or(0.0, |g| g.gain);
    let mut nonzero: Vec<&IntensityGain> = gains.iter().filter(|g| g.mean > 0.0).collect();
    nonzero.sort_by(|a, b| a.mean.total_cmp(&b.mean));
    let (weak, strong) = (nonzero.first()?, nonzero.last()?);
    let (mu, nu) = (strong.mean, weak.mean);
    if mu <= nu {
        return None;
    }
    let bound = mu / (mu * nu - nu * nu)
        * (weak.gain * nu.exp() - strong.gain * mu.exp() * nu * nu / (mu * mu) - (mu * mu - nu * nu) / (mu * mu) * y0);
    Some(bound.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RngStreams;
    use proptest::prelude::*;
    use rand::Rng;

    fn bits(s: &str) -> Vec<bool> {
        s.chars().map(|c| c == '1').collect()
    }

    #[test]
    fn sifting_boundaries() {
        let a = bits("1011");
        let b = bits("1001");
        let same = [Basis::Rectilinear; 4];
        let all = sift_keys(&a, &b, &same, &same);
        assert_eq!(all.alice, a);
        assert_eq!(all.bob, b);
        let none = sift_keys(&a, &b, &same, &[Basis::Diagonal; 4]);
        assert!(none.is_empty());
    }

    #[test]
    fn sifted_length_is_binomial_half() {
        let mut rng = RngStreams::new(4).stream("sift", 0);
        let n = 10_000;
        let ba: Vec<Basis> = (0..n).map(|_| Basis::random(&mut rng)).collect();
        let bb: Vec<Basis> = (0..n).map(|_| Basis::random(&mut rng)).collect();
        let key = vec![false; n];
        let len = sift_keys(&key, &key, &ba, &bb).len() as f64;
        assert!((len - 5000.0).abs() <= 150.0, "{len}");
    }

    #[test]
    fn qber_of_identical_and_complementary_keys() {
        let mut rng = RngStreams::new(4).stream("qber", 0);
        let key = bits("0110100110010110");
        let flipped: Vec<bool> = key.iter().map(|b| !b).collect();
        let same = SiftedPair {
            alice: key.clone(),
            bob: key.clone(),
            positions: (0..16).collect(),
        };
        assert_eq!(estimate_qber(&same, 0.5, &mut rng).unwrap().qber, 0.0);
        let comp = SiftedPair {
            alice: key.clone(),
            bob: flipped,
            positions: (0..16).collect(),
        };
        let est = estimate_qber(&comp, 0.5, &mut rng).unwrap();
        assert_eq!(est.qber, 1.0);
        assert_eq!(est.disclosed, 8);
        assert_eq!(est.remainder_alice.len(), 8);
    }

    #[test]
    fn qber_sampling_of_quarter_errors() {
        let mut rng = RngStreams::new(4).stream("qber", 1);
        let n = 10_000;
        let alice: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let bob: Vec<bool> = alice.iter().enumerate().map(|(i, &b)| if i % 4 == 0 { !b } else { b }).collect();
        let pair = SiftedPair {
            alice,
            bob,
            positions: (0..n).collect(),
        };
        let est = estimate_qber(&pair, 0.5, &mut rng).unwrap();
        assert!((est.qber - 0.25).abs() < 0.02, "{}", est.qber);
    }

    #[test]
    fn qber_errors() {
        let mut rng = RngStreams::new(4).stream("qber", 2);
        assert_eq!(estimate_qber(&SiftedPair::default(), 0.5, &mut rng), Err(QkdError::EmptySiftedKey));
        let tiny = SiftedPair {
            alice: bits("1"),
            bob: bits("1"),
            positions: vec![0],
        };
        assert!(matches!(
            estimate_qber(&tiny, 0.1, &mut rng),
            Err(QkdError::EmptyDisclosure { .. })
        ));
    }

    // Direct matrix product with T[i][j] = r[i - j + n - 1].
    fn toeplitz_oracle(key: &[bool], out_len: usize, seed: u64) -> Vec<bool> {
        let n = key.len();
        let mut seeder = SimRng::seed_from_u64(seed);
        let words: Vec<u64> = (0..(n + out_len) / 64 + 2).map(|_| seeder.random()).collect();
        let r = |k: usize| (words[k / 64] >> (k % 64)) & 1 == 1;
        (0..out_len)
            .map(|i| (0..n).filter(|&j| r(i + n - 1 - j) && key[j]).count() % 2 == 1)
            .collect()
    }

    #[test]
    fn toeplitz_hash_matches_matrix_product() {
        let mut rng = RngStreams::new(6).stream("pa", 0);
        for n in [1usize, 63, 64, 65, 200, 515] {
            let key: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            for leak in [0, n / 3] {
                let out = privacy_amplify(&key, leak, 0, 99);
                assert_eq!(out.len(), n - leak);
                assert_eq!(out, toeplitz_oracle(&key, n - leak, 99));
            }
        }
    }

    #[test]
    fn privacy_amplification_lengths() {
        let key = vec![true; 1000];
        assert_eq!(privacy_amplify(&key, 0, 0, 1).len(), 1000);
        assert_eq!(privacy_amplify(&key, 100, 50, 1).len(), 850);
        assert!(privacy_amplify(&key, 1000, 0, 1).is_empty());
        assert!(privacy_amplify(&key, 2000, 5, 1).is_empty());
        assert_eq!(privacy_amplify(&key, 10, 0, 7), privacy_amplify(&key, 10, 0, 7));
    }

    #[test]
    fn ideal_bb84_has_zero_qber() {
        let mut rng = RngStreams::new(1).stream("bb84", 0);
        let s = run_bb84(&Bb84Config::ideal(100_000), None, &mut rng).unwrap();
        assert_eq!(s.qber, Some(0.0));
        assert_eq!(s.sifted_key_alice, s.sifted_key_bob);
        let frac = s.sifted_len() as f64 / 100_000.0;
        assert!((frac - 0.5).abs() < 0.01);
        assert!(!s.is_aborted());
        let remainder = s.sifted_len() - s.disclosed_bits;
        assert_eq!(s.final_key.len(), remainder - DEFAULT_SECURITY_MARGIN_BITS);
    }

    #[test]
    fn bb84_preconditions() {
        let mut rng = RngStreams::new(1).stream("bb84", 1);
        assert_eq!(run_bb84(&Bb84Config::ideal(0), None, &mut rng), Err(QkdError::ZeroCount("n_pulses")));
        let mut cfg = Bb84Config::ideal(10);
        cfg.disclosed_fraction = 1.0;
        assert!(run_bb84(&cfg, None, &mut rng).is_err());
    }

    #[test]
    fn opaque_channel_reports_no_sifted_bits() {
        let mut rng = RngStreams::new(1).stream("bb84", 2);
        let mut cfg = Bb84Config::ideal(100);
        cfg.channel = LossChannel::new(0.0).unwrap();
        let s = run_bb84(&cfg, None, &mut rng).unwrap();
        assert_eq!(s.aborted, Some(AbortReason::NoSiftedBits));
        assert!(s.final_key.is_empty());
    }

    #[test]
    fn e91_without_eavesdropper() {
        let mut rng = RngStreams::new(2).stream("e91", 0);
        let s = run_e91(&E91Config::new(10_000), None, &mut rng).unwrap();
        assert_eq!(s.session.qber, Some(0.0));
        assert!(s.chsh_estimate.unwrap() > 2.5, "{:?}", s.chsh_estimate);
        assert!(!s.eavesdrop_detected);
        assert!(run_e91(&E91Config::new(0), None, &mut rng).is_err());
    }

    #[test]
    fn relay_xor_examples() {
        let p = relay_forward_key(&bits("1010"), &bits("1100")).unwrap();
        assert_eq!(p.ciphertext, bits("0110"));
        assert_eq!(relay_recover_key(&p, &bits("1100")).unwrap(), bits("1010"));
        assert_eq!(relay_forward_key(&bits("1010"), &bits("0000")).unwrap().ciphertext, bits("1010"));
        assert!(matches!(
            relay_forward_key(&bits("10"), &bits("1")),
            Err(QkdError::LengthMismatch { left: 2, right: 1 })
        ));
    }

    #[test]
    fn three_relays_expose_key_everywhere() {
        let keys = vec![bits("1100101"), bits("0101010"), bits("1111000"), bits("0010011")];
        let trace = relay_chain(&keys).unwrap();
        assert_eq!(trace.bob_key, keys[0]);
        assert_eq!(trace.exposures.len(), 3);
        assert!(trace.exposures.iter().all(|e| e.cleartext == keys[0]));
        assert!(relay_chain(&keys[..1]).is_err());
    }

    #[test]
    fn decoy_without_attack_matches_model() {
        let mut rng = RngStreams::new(3).stream("decoy", 0);
        let ch = LossChannel::new(0.3).unwrap();
        let intens = [
            DecoyIntensity { label: IntensityLabel::Signal, mean: 0.5 },
            DecoyIntensity { label: IntensityLabel::Decoy(0), mean: 0.1 },
        ];
        let log = simulate_decoy_transmission(&intens, 100_000, &ch, &Detector::default(), None, &mut rng).unwrap();
        let report = decoy_state_analysis(&log, &ch, 0.05).unwrap();
        assert!(report.max_deviation < 0.05, "{report:?}");
        assert!(!report.eavesdrop_flag);
        let y1 = report.single_photon_yield.unwrap();
        assert!((y1 - 0.3).abs() < 0.05, "{y1}");
    }

    #[test]
    fn vacuum_decoy_has_zero_gain() {
        let mut rng = RngStreams::new(3).stream("decoy", 1);
        let ch = LossChannel::new(0.3).unwrap();
        let intens = [
            DecoyIntensity { label: IntensityLabel::Signal, mean: 0.5 },
            DecoyIntensity { label: IntensityLabel::Decoy(0), mean: 0.0 },
        ];
        let log = simulate_decoy_transmission(&intens, 2_000, &ch, &Detector::default(), None, &mut rng).unwrap();
        let report = decoy_state_analysis(&log, &ch, 0.2).unwrap();
        let vac = report.intensities.iter().find(|g| g.mean == 0.0).unwrap();
        assert_eq!(vac.gain, 0.0);
    }

    #[test]
    fn decoy_statistics_preconditions() {
        let rec = |label, n| (0..n).map(move |_| DecoyRecord { label, mean: 0.5, detected: false });
        let only_signal: Vec<_> = rec(IntensityLabel::Signal, 2000).collect();
        let ch = LossChannel::lossless();
        assert_eq!(decoy_state_analysis(&only_signal, &ch, 0.05), Err(QkdError::TooFewIntensities(1)));
        let thin: Vec<_> = rec(IntensityLabel::Signal, 2000).chain(rec(IntensityLabel::Decoy(1), 10)).collect();
        assert!(matches!(
            decoy_state_analysis(&thin, &ch, 0.05),
            Err(QkdError::InsufficientStatistics { pulses: 10, .. })
        ));
    }

    proptest! {
        #[test]
        fn amplified_length_contract(n in 0usize..600, leak in 0usize..700, margin in 0usize..100, seed in any::<u64>()) {
            let key: Vec<bool> = (0..n).map(|i| (i * 7 + seed as usize) % 3 == 0).collect();
            let out = privacy_amplify(&key, leak, margin, seed);
            prop_assert_eq!(out.len(), n.saturating_sub(leak).saturating_sub(margin));
        }

        #[test]
        fn relay_chain_recovers_exactly(relays in 1usize..6, len in 1usize..64, seed in any::<u64>()) {
            let mut rng = RngStreams::new(seed).stream("relay", 0);
            let keys: Vec<Vec<bool>> = (0..=relays).map(|_| (0..len).map(|_| rng.random()).collect()).collect();
            let trace = relay_chain(&keys).unwrap();
            prop_assert_eq!(&trace.bob_key, &keys[0]);
            prop_assert_eq!(trace.exposures.len(), relays);
        }

        #[test]
        fn sifted_keys_agree_without_eve(seed in any::<u64>()) {
            let mut rng = RngStreams::new(seed).stream("bb84", 0);
            let s = run_bb84(&Bb84Config::ideal(500), None, &mut rng).unwrap();
            prop_assert_eq!(&s.sifted_key_alice, &s.sifted_key_bob);
            let bound = s.sifted_len() as f64 * (1.0 - s.disclosed_fraction);
            prop_assert!((s.final_key.len() as f64) <= bound);
        }
    }
}
