//! Attack models across the physical and link layers.
//!
//! * photon-number splitting against weak-coherent pulses,
//! * Trojan-horse photon gain under sender phase policies,
//! * entangling probe (CNOT onto an ancilla) against a shared Bell pair,
//! * man-in-the-middle against the interlock exchange,
//! * intercept-resend individual probe against BB84,
//! * noise injection against the three-bit repetition code.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::photonics::{emit_pulse, IntensityLabel, PhotonPulse, PhotonSource};
use crate::qkd::{PairTap, PulseTap, QubitTap, TapContext, TappedPulse};
use crate::quantum::{Basis, PureState, QuantumError};
use crate::stats::{binomial_sample, zscore_compare, Histogram, RngStreams, StatsError, ZScoreSeries};

/// Smallest pulse count accepted by [`pns_experiment`].
pub const MIN_PNS_PULSES: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("{name} must lie in [0, 1], got {value}")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("need at least {min} {what}, got {got}")]
    TooFew { what: &'static str, min: usize, got: usize },
    #[error("interlock message length must be even and at least 2, got {0}")]
    MessageLength(usize),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

fn check_probability(name: &'static str, value: f64) -> Result<(), AttackError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(AttackError::InvalidProbability { name, value })
    }
}

// ---------------------------------------------------------------------------
// Photon-number splitting

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PnsStrategy {
    NoEve,
    /// Each photon is taken independently with probability `q`.
    RandomIntercept { q: f64 },
    /// One photon is taken from every non-empty pulse.
    AlwaysMinusOne,
}

impl fmt::Display for PnsStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PnsStrategy::NoEve => f.write_str("NoEve"),
            PnsStrategy::RandomIntercept { q } => write!(f, "Random({q})"),
            PnsStrategy::AlwaysMinusOne => f.write_str("AlwaysMinusOne"),
        }
    }
}

/// Splits a pulse between Eve and Bob. Returns `(eve_count, forwarded)`.
pub fn pns_intercept<R: Rng + ?Sized>(pulse: &PhotonPulse, strategy: &PnsStrategy, rng: &mut R) -> (u64, PhotonPulse) {
    let taken = match *strategy {
        PnsStrategy::NoEve => 0,
        PnsStrategy::RandomIntercept { q } => binomial_sample(pulse.photon_count, q, rng),
        PnsStrategy::AlwaysMinusOne => pulse.photon_count.min(1),
    };
    let forwarded = PhotonPulse {
        photon_count: pulse.photon_count - taken,
        ..*pulse
    };
    (taken, forwarded)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnsSeries {
    pub strategy: PnsStrategy,
    pub received: Histogram,
    pub stolen_photons: u64,
    /// Z-scores of `received` against the no-eavesdropper baseline.
    pub zscores: ZScoreSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnsExperiment {
    pub mean: f64,
    pub n_pulses: usize,
    pub baseline: Histogram,
    pub series: Vec<PnsSeries>,
}

fn pns_run(
    n_pulses: usize,
    source: &PhotonSource,
    strategy: &PnsStrategy,
    max_bin: usize,
    rng: &mut crate::SimRng,
) -> (Histogram, u64) {
    let mut hist = Histogram::new(max_bin);
    let mut stolen = 0;
    for _ in 0..n_pulses {
        let bit: bool = rng.random();
        let basis = Basis::random(rng);
        let pulse = emit_pulse(source, bit, basis, 0.0, IntensityLabel::Signal, rng);
        let (eve, forwarded) = pns_intercept(&pulse, strategy, rng);
        stolen += eve;
        hist.record(forwarded.photon_count);
    }
    (hist, stolen)
}

/// Received-photon histograms per strategy, each compared bin by bin
/// against an independently sampled no-eavesdropper baseline.
pub fn pns_experiment(
    n_pulses: usize,
    mean: f64,
    strategies: &[PnsStrategy],
    max_bin: usize,
    streams: &RngStreams,
) -> Result<PnsExperiment, AttackError> {
    if n_pulses < MIN_PNS_PULSES {
        return Err(AttackError::TooFew {
            what: "pulses",
            min: MIN_PNS_PULSES,
            got: n_pulses,
        });
    }
    for s in strategies {
        if let PnsStrategy::RandomIntercept { q } = s {
            check_probability("intercept probability", *q)?;
        }
    }
    let source = PhotonSource::weak_coherent(mean).map_err(|_| StatsError::InvalidMean(mean))?;
    let (baseline, _) = pns_run(n_pulses, &source, &PnsStrategy::NoEve, max_bin, &mut streams.stream("pns/baseline", 0));
    let series = strategies
        .iter()
        .enumerate()
        .map(|(i, strategy)| {
            let mut rng = streams.stream("pns/strategy", i as u64);
            let (received, stolen_photons) = pns_run(n_pulses, &source, strategy, max_bin, &mut rng);
            let zscores = zscore_compare(&received, &baseline)?;
            Ok(PnsSeries {
                strategy: *strategy,
                received,
                stolen_photons,
                zscores,
            })
        })
        .collect::<Result<Vec<_>, AttackError>>()?;
    Ok(PnsExperiment {
        mean,
        n_pulses,
        baseline,
        series,
    })
}

/// Decoy-state adversary: blocks every pulse with at most one photon and
/// delivers exactly one photon of every multi-photon pulse over a lossless
/// line, keeping the rest.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BlockingPns {
    pub stolen_photons: u64,
}

impl PulseTap for BlockingPns {
    fn tap(&mut self, pulse: PhotonPulse, _rng: &mut dyn RngCore) -> TappedPulse {
        if pulse.photon_count <= 1 {
            return TappedPulse::Delivered(PhotonPulse {
                photon_count: 0,
                ..pulse
            });
        }
        self.stolen_photons += pulse.photon_count - 1;
        TappedPulse::Delivered(PhotonPulse {
            photon_count: 1,
            ..pulse
        })
    }
}

// ---------------------------------------------------------------------------
// Trojan-horse photon gain

/// Sender-side phase policy applied to diagonal-basis photons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TrojanPolicy {
    NoShift,
    FixedShift { theta: f64 },
    RandomShift,
}

impl TrojanPolicy {
    pub fn quarter_turn() -> Self {
        TrojanPolicy::FixedShift { theta: FRAC_PI_2 }
    }

    fn draw_phase<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            TrojanPolicy::NoShift => 0.0,
            TrojanPolicy::FixedShift { theta } => theta.rem_euclid(TAU),
            TrojanPolicy::RandomShift => rng.random::<f64>() * TAU,
        }
    }
}

impl fmt::Display for TrojanPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrojanPolicy::NoShift => f.write_str("NoShift"),
            TrojanPolicy::FixedShift { theta } => write!(f, "FixedShift({theta})"),
            TrojanPolicy::RandomShift => f.write_str("RandomShift"),
        }
    }
}

/// Incremental gain of one intercepted photon.
///
/// * wrong basis guess: 0.5
/// * correct rectilinear guess: 1
/// * correct diagonal guess: `½cos²(θ/2) + ½sin²(θ/2)` for a shifted
///   photon, and 1 for an unshifted one (`θ = 0`), where Eve reads the
///   state exactly. The shifted expression is identically ½.
pub fn photon_gain(eve_basis: Basis, alice_basis: Basis, theta: f64) -> f64 {
    match (eve_basis == alice_basis, alice_basis) {
        (false, _) => 0.5,
        (true, Basis::Rectilinear) => 1.0,
        (true, Basis::Diagonal) if theta == 0.0 => 1.0,
        (true, Basis::Diagonal) => {
            let half = theta / 2.0;
            0.5 * half.cos().powi(2) + 0.5 * half.sin().powi(2)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainEntry {
    pub eve_basis: Basis,
    pub alice_basis: Basis,
    pub alice_bit: bool,
    /// Phase Alice applied; always 0 for rectilinear photons.
    pub theta: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainLedger {
    pub policy: TrojanPolicy,
    pub entries: Vec<GainEntry>,
    /// Sum of every entry's gain, accumulated in order.
    pub cumulative: f64,
}

impl GainLedger {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mean_gain(&self) -> f64 {
        if self.entries.is_empty() {
            0.0
        } else {
            self.cumulative / self.entries.len() as f64
        }
    }

    /// Recomputes every entry from its logged bases and phase, and the total.
    pub fn verify(&self) -> bool {
        let entries_ok = self
            .entries
            .iter()
            .all(|e| photon_gain(e.eve_basis, e.alice_basis, e.theta) == e.gain);
        let total: f64 = self.entries.iter().map(|e| e.gain).sum();
        entries_ok && total == self.cumulative
    }

    /// `(photons collected, G)` sampled every `step` photons, plus the final
    /// point.
    pub fn cumulative_series(&self, step: usize) -> Vec<(usize, f64)> {
        let step = step.max(1);
        let mut out = Vec::new();
        let mut running = 0.0;
        for (i, e) in self.entries.iter().enumerate() {
            running += e.gain;
            let n = i + 1;
            if n % step == 0 || n == self.entries.len() {
                out.push((n, running));
            }
        }
        out
    }
}

/// Alice sends uniformly random BB84 states, shifting diagonal ones by the
/// policy phase; Eve reads each reflected photon in a uniformly guessed
/// basis.
pub fn trojan_gain_experiment<R: Rng + ?Sized>(
    n_photons: usize,
    policy: TrojanPolicy,
    rng: &mut R,
) -> Result<GainLedger, AttackError> {
    if n_photons == 0 {
        return Err(AttackError::TooFew {
            what: "photons",
            min: 1,
            got: 0,
        });
    }
    let mut entries = Vec::with_capacity(n_photons);
    let mut cumulative = 0.0;
    for _ in 0..n_photons {
        let alice_bit: bool = rng.random();
        let alice_basis = Basis::random(rng);
        let theta = match alice_basis {
            Basis::Diagonal => policy.draw_phase(rng),
            Basis::Rectilinear => 0.0,
        };
        let eve_basis = Basis::random(rng);
        let gain = photon_gain(eve_basis, alice_basis, theta);
        cumulative += gain;
        entries.push(GainEntry {
            eve_basis,
            alice_basis,
            alice_bit,
            theta,
            gain,
        });
    }
    Ok(GainLedger {
        policy,
        entries,
        cumulative,
    })
}

// ---------------------------------------------------------------------------
// Entangling probe

/// Appends Eve's `|0⟩` as qubit 2 and applies CNOT(Bob → Eve).
pub fn probe_infiltrate(pair: &PureState) -> Result<PureState, AttackError> {
    if pair.num_qubits() != 2 {
        return Err(QuantumError::WrongArity {
            expected: 2,
            got: pair.num_qubits(),
        }
        .into());
    }
    Ok(pair.tensor(&PureState::zero())?.apply_cnot(1, 2)?)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EntanglingProbe {
    pub infiltrated: u64,
}

impl PairTap for EntanglingProbe {
    fn tap(&mut self, pair: PureState) -> Result<PureState, QuantumError> {
        self.infiltrated += 1;
        match probe_infiltrate(&pair) {
            Ok(state) => Ok(state),
            Err(AttackError::Quantum(e)) => Err(e),
            Err(_) => unreachable!("probe_infiltrate only fails with quantum errors"),
        }
    }
}

// ---------------------------------------------------------------------------
// Interlock

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
    Eve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Half {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterlockMessage {
    pub from: Party,
    pub to: Party,
    /// Whose message the half belongs to.
    pub owner: Party,
    pub half: Half,
    pub bits: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterlockTranscript {
    pub messages: Vec<InterlockMessage>,
    pub alice_message: Vec<bool>,
    pub bob_message: Vec<bool>,
    /// What Bob assembled as Alice's message.
    pub bob_received: Vec<bool>,
    /// What Alice assembled as Bob's message.
    pub alice_received: Vec<bool>,
    pub integrity_ok: bool,
    pub eve_present: bool,
    pub detected: bool,
}

/// Half-message exchange of `k`-bit messages.
///
/// Halves are commitments: they stay opaque until both halves arrive. A
/// relaying Eve therefore has to hand Bob a second half of Alice's message
/// before Alice reveals it, and guesses its `k/2` bits.
pub fn interlock_exchange<R: Rng + ?Sized>(k: usize, eve_present: bool, rng: &mut R) -> Result<InterlockTranscript, AttackError> {
    if k < 2 || k % 2 != 0 {
        return Err(AttackError::MessageLength(k));
    }
    let half = k / 2;
    let random_bits = |rng: &mut R, n: usize| -> Vec<bool> { (0..n).map(|_| rng.random()).collect() };
    let alice_message = random_bits(rng, k);
    let bob_message = random_bits(rng, k);
    let (a1, a2) = alice_message.split_at(half);
    let (b1, b2) = bob_message.split_at(half);
    let msg = |from, to, owner, half, bits: &[bool]| InterlockMessage {
        from,
        to,
        owner,
        half,
        bits: bits.to_vec(),
    };
    use Half::*;
    use Party::*;

    let (messages, bob_received) = if eve_present {
        let forged = random_bits(rng, half);
        let messages = vec![
            msg(Alice, Eve, Alice, First, a1),
            msg(Eve, Bob, Alice, First, a1),
            msg(Bob, Eve, Bob, First, b1),
            msg(Eve, Bob, Alice, Second, &forged),
            msg(Eve, Alice, Bob, First, b1),
            msg(Alice, Eve, Alice, Second, a2),
            msg(Bob, Eve, Bob, Second, b2),
            msg(Eve, Alice, Bob, Second, b2),
        ];
        let mut received = a1.to_vec();
        received.extend_from_slice(&forged);
        (messages, received)
    } else {
        let messages = vec![
            msg(Alice, Bob, Alice, First, a1),
            msg(Bob, Alice, Bob, First, b1),
            msg(Alice, Bob, Alice, Second, a2),
            msg(Bob, Alice, Bob, Second, b2),
        ];
        (messages, alice_message.clone())
    };
    let integrity_ok = bob_received == alice_message;
    Ok(InterlockTranscript {
        messages,
        alice_received: bob_message.clone(),
        bob_received,
        integrity_ok,
        eve_present,
        detected: !integrity_ok,
        alice_message,
        bob_message,
    })
}

// ---------------------------------------------------------------------------
// Intercept-resend individual probe

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EveBasisChoice {
    Random,
    /// Oracle mode: always Alice's basis.
    AlwaysCorrect,
    /// Oracle mode: always the other basis.
    AlwaysWrong,
}

/// Measures each qubit in Eve's basis and resends the eigenstate she saw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterceptResend {
    pub choice: EveBasisChoice,
    pub intercepted: u64,
}

impl InterceptResend {
    pub fn new(choice: EveBasisChoice) -> Self {
        Self { choice, intercepted: 0 }
    }
}

impl QubitTap for InterceptResend {
    fn intercept(&mut self, qubit: PureState, ctx: &TapContext, rng: &mut dyn RngCore) -> PureState {
        let basis = match self.choice {
            EveBasisChoice::Random => Basis::random(rng),
            EveBasisChoice::AlwaysCorrect => ctx.alice_basis,
            EveBasisChoice::AlwaysWrong => ctx.alice_basis.other(),
        };
        self.intercepted += 1;
        let outcome = qubit.measure(0, basis, rng).expect("qubit 0 exists");
        PureState::encode(outcome.bit, basis)
    }
}

// ---------------------------------------------------------------------------
// Three-bit repetition code

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitFlipCodeWord(pub [bool; 3]);

impl BitFlipCodeWord {
    pub fn encode(bit: bool) -> Self {
        Self([bit; 3])
    }

    pub fn is_valid(&self) -> bool {
        self.0[0] == self.0[1] && self.0[1] == self.0[2]
    }

    pub fn flip(&mut self, position: usize) {
        self.0[position] = !self.0[position];
    }

    /// Majority vote.
    pub fn decode(&self) -> bool {
        self.0.iter().filter(|&&b| b).count() >= 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseMode {
    /// Every physical bit flips independently with probability `p`.
    Iid,
    /// With probability `p`, one random adjacent pair flips together.
    Burst2,
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseMode::Iid => "iid",
            NoiseMode::Burst2 => "burst-2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QecReport {
    pub n_blocks: u64,
    pub p: f64,
    pub mode: NoiseMode,
    pub logical_errors: u64,
    pub logical_error_rate: f64,
    /// `3p² − 2p³`.
    pub iid_prediction: f64,
    /// Physical rate where the iid logical rate equals `p`.
    pub iid_break_even: f64,
    /// One of three bits may flip and still decode.
    pub correctable_fraction: f64,
}

pub fn qec_bitflip_experiment<R: Rng + ?Sized>(
    n_blocks: u64,
    p: f64,
    mode: NoiseMode,
    rng: &mut R,
) -> Result<QecReport, AttackError> {
    check_probability("physical flip probability", p)?;
    let mut logical_errors = 0;
    for _ in 0..n_blocks {
        let logical: bool = rng.random();
        let mut word = BitFlipCodeWord::encode(logical);
        match mode {
            NoiseMode::Iid => {
                for pos in 0..3 {
                    if rng.random::<f64>() < p {
                        word.flip(pos);
                    }
                }
            }
            NoiseMode::Burst2 => {
                if rng.random::<f64>() < p {
                    let start = rng.random_range(0..2);
                    word.flip(start);
                    word.flip(start + 1);
                }
            }
        }
        logical_errors += u64::from(word.decode() != logical);
    }
    Ok(QecReport {
        n_blocks,
        p,
        mode,
        logical_errors,
        logical_error_rate: if n_blocks == 0 {
            0.0
        } else {
            logical_errors as f64 / n_blocks as f64
        },
        iid_prediction: 3.0 * p * p - 2.0 * p * p * p,
        iid_break_even: 0.5,
        correctable_fraction: 1.0 / 3.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qkd::{run_bb84, Bb84Config};
    use crate::quantum::{bell_pair, BellState};
    use crate::stats::{chi_square_gof, RngStreams};
    use num_complex::Complex64;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn pulse(count: u64) -> PhotonPulse {
        PhotonPulse {
            photon_count: count,
            encoded_bit: true,
            basis: Basis::Rectilinear,
            phase: 0.0,
            intensity_label: IntensityLabel::Signal,
        }
    }

    fn poisson_pmf_oracle(k: u64, mean: f64) -> f64 {
        let fact: f64 = (1..=k).map(|v| v as f64).product();
        (-mean).exp() * mean.powi(k as i32) / fact
    }

    #[test]
    fn always_minus_one_takes_a_single_photon() {
        let mut rng = RngStreams::new(0).stream("pns", 0);
        let (eve, fwd) = pns_intercept(&pulse(5), &PnsStrategy::AlwaysMinusOne, &mut rng);
        assert_eq!((eve, fwd.photon_count), (1, 4));
        for s in [PnsStrategy::NoEve, PnsStrategy::AlwaysMinusOne, PnsStrategy::RandomIntercept { q: 0.7 }] {
            let (eve, fwd) = pns_intercept(&pulse(0), &s, &mut rng);
            assert_eq!((eve, fwd.photon_count), (0, 0));
        }
        let (eve, fwd) = pns_intercept(&pulse(3), &PnsStrategy::NoEve, &mut rng);
        assert_eq!((eve, fwd), (0, pulse(3)));
    }

    #[test]
    fn random_intercept_thins_poisson() {
        let mut rng = RngStreams::new(12).stream("pns", 1);
        let src = PhotonSource::weak_coherent(5.0).unwrap();
        let hist = Histogram::from_samples(
            20,
            (0..100_000).map(|_| {
                let p = emit_pulse(&src, false, Basis::Diagonal, 0.0, IntensityLabel::Signal, &mut rng);
                pns_intercept(&p, &PnsStrategy::RandomIntercept { q: 0.5 }, &mut rng).1.photon_count
            }),
        );
        let chi = chi_square_gof(&hist, |k| poisson_pmf_oracle(k, 2.5)).unwrap();
        assert!(chi.p_value > 0.01, "{chi:?}");
    }

    #[test]
    fn pns_experiment_shapes() {
        let streams = RngStreams::new(42);
        let strategies = [
            PnsStrategy::NoEve,
            PnsStrategy::RandomIntercept { q: 0.5 },
            PnsStrategy::AlwaysMinusOne,
        ];
        let exp = pns_experiment(100_000, 5.0, &strategies, 20, &streams).unwrap();
        let [no_eve, random, minus_one] = &exp.series[..] else { panic!() };
        assert!(no_eve.zscores.max_abs < 4.0, "{}", no_eve.zscores.max_abs);
        assert!(random.zscores.max_abs > minus_one.zscores.max_abs);
        let oracle = 6.0 * (-5.0f64).exp();
        assert!((minus_one.received.proportion(0) - oracle).abs() < 0.004);
        assert!(pns_experiment(100, 5.0, &strategies, 20, &streams).is_err());
        assert!(pns_experiment(10_000, 5.0, &[PnsStrategy::RandomIntercept { q: 2.0 }], 20, &streams).is_err());
    }

    #[test]
    fn gain_case_table() {
        use Basis::*;
        assert_eq!(photon_gain(Rectilinear, Diagonal, 0.0), 0.5);
        assert_eq!(photon_gain(Diagonal, Rectilinear, 0.0), 0.5);
        assert_eq!(photon_gain(Rectilinear, Rectilinear, 0.0), 1.0);
        assert_eq!(photon_gain(Diagonal, Diagonal, 0.0), 1.0);
        assert!((photon_gain(Diagonal, Diagonal, FRAC_PI_2) - 0.5).abs() < 1e-15);
        assert!((photon_gain(Diagonal, Diagonal, 2.0) - 0.5).abs() < 1e-15);
    }

    // Expectation over the uniform case table: ¼·1 + ¼·γ_diag + ½·½.
    fn expected_mean_gain(diag_gain: f64) -> f64 {
        0.25 + 0.25 * diag_gain + 0.25
    }

    #[test]
    fn trojan_policies_separate() {
        let streams = RngStreams::new(8);
        let n = 100_000;
        let none = trojan_gain_experiment(n, TrojanPolicy::NoShift, &mut streams.stream("t", 0)).unwrap();
        let fixed = trojan_gain_experiment(n, TrojanPolicy::quarter_turn(), &mut streams.stream("t", 1)).unwrap();
        let random = trojan_gain_experiment(n, TrojanPolicy::RandomShift, &mut streams.stream("t", 2)).unwrap();
        assert!((none.mean_gain() - expected_mean_gain(1.0)).abs() < 0.0075);
        assert!((fixed.mean_gain() - expected_mean_gain(0.5)).abs() < 0.00625);
        assert!((random.mean_gain() - expected_mean_gain(0.5)).abs() < 0.00625);
        assert!((none.mean_gain() - fixed.mean_gain() - 0.125).abs() < 0.005);
        assert!(none.verify() && fixed.verify() && random.verify());
        assert!(trojan_gain_experiment(0, TrojanPolicy::NoShift, &mut streams.stream("t", 3)).is_err());
    }

    #[test]
    fn ledger_series_ends_at_total() {
        let mut rng = RngStreams::new(1).stream("t", 0);
        let ledger = trojan_gain_experiment(1001, TrojanPolicy::RandomShift, &mut rng).unwrap();
        let series = ledger.cumulative_series(100);
        assert_eq!(series.len(), 11);
        assert_eq!(series.last().unwrap(), &(1001, ledger.cumulative));
    }

    #[test]
    fn probe_builds_tripartite_state() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let ghz = probe_infiltrate(&bell_pair(BellState::PhiPlus)).unwrap();
        let mut expected = vec![Complex64::new(0.0, 0.0); 8];
        expected[0] = Complex64::new(h, 0.0);
        expected[7] = Complex64::new(h, 0.0);
        assert!(ghz.approx_eq_up_to_phase(&PureState::from_amplitudes(expected).unwrap(), 1e-9));

        let product = probe_infiltrate(&PureState::basis_state(2, 0).unwrap()).unwrap();
        assert_eq!(product, PureState::basis_state(3, 0).unwrap());
        assert!(probe_infiltrate(&PureState::zero()).is_err());
    }

    #[test]
    fn probe_copies_bobs_bit() {
        let mut rng = RngStreams::new(5).stream("probe", 0);
        let ghz = probe_infiltrate(&bell_pair(BellState::PhiPlus)).unwrap();
        for _ in 0..1000 {
            let bob = ghz.measure(1, Basis::Rectilinear, &mut rng).unwrap();
            let eve = bob.post_state.measure(2, Basis::Rectilinear, &mut rng).unwrap();
            assert_eq!(bob.bit, eve.bit);
        }
        for bit in [false, true] {
            let p = ghz.measure(1, Basis::Rectilinear, &mut rng).unwrap().post_state;
            let q = p.probability(2, Basis::Rectilinear, bit).unwrap();
            assert!(q == 0.0 || (q - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn interlock_without_eve_reconstructs() {
        let mut rng = RngStreams::new(1).stream("lock", 0);
        let t = interlock_exchange(16, false, &mut rng).unwrap();
        assert_eq!(t.bob_received, t.alice_message);
        assert_eq!(t.alice_received, t.bob_message);
        assert!(!t.detected && t.integrity_ok);
        assert_eq!(t.messages.len(), 4);
        assert!(interlock_exchange(3, true, &mut rng).is_err());
        assert!(interlock_exchange(0, true, &mut rng).is_err());
    }

    fn detection_rate(k: usize, trials: usize, seed: u64) -> f64 {
        let mut rng = RngStreams::new(seed).stream("lock", k as u64);
        (0..trials)
            .filter(|_| interlock_exchange(k, true, &mut rng).unwrap().detected)
            .count() as f64
            / trials as f64
    }

    #[test]
    fn interlock_detection_rates() {
        let two = detection_rate(2, 10_000, 3);
        assert!((two - 0.5).abs() < 0.02, "{two}");
        assert_eq!(detection_rate(64, 10_000, 3), 1.0);
    }

    fn bb84_qber(choice: EveBasisChoice, seed: u64) -> f64 {
        let mut rng = RngStreams::new(seed).stream("ir", 0);
        let mut eve = InterceptResend::new(choice);
        let s = run_bb84(&Bb84Config::ideal(100_000), Some(&mut eve), &mut rng).unwrap();
        assert_eq!(eve.intercepted, 100_000);
        s.qber.unwrap()
    }

    #[test]
    fn intercept_resend_oracle_modes() {
        assert_eq!(bb84_qber(EveBasisChoice::AlwaysCorrect, 1), 0.0);
        assert!((bb84_qber(EveBasisChoice::AlwaysWrong, 1) - 0.5).abs() < 0.01 + 0.02);
        assert!((bb84_qber(EveBasisChoice::Random, 1) - 0.25).abs() < 0.01 + 0.015);
    }

    #[test]
    fn repetition_code_boundaries() {
        let mut rng = RngStreams::new(1).stream("qec", 0);
        let zero = qec_bitflip_experiment(10_000, 0.0, NoiseMode::Iid, &mut rng).unwrap();
        assert_eq!(zero.logical_errors, 0);
        let burst = qec_bitflip_experiment(10_000, 1.0, NoiseMode::Burst2, &mut rng).unwrap();
        assert_eq!(burst.logical_error_rate, 1.0);
        assert!(qec_bitflip_experiment(10, 1.5, NoiseMode::Iid, &mut rng).is_err());
        let mut w = BitFlipCodeWord::encode(true);
        assert!(w.is_valid());
        w.flip(1);
        assert!(!w.is_valid());
        assert!(w.decode());
    }

    // Enumerate all eight flip patterns of a codeword.
    fn enumerated_logical_rate(p: f64) -> f64 {
        (0u8..8)
            .filter(|pattern| pattern.count_ones() >= 2)
            .map(|pattern| {
                let k = pattern.count_ones() as i32;
                p.powi(k) * (1.0 - p).powi(3 - k)
            })
            .sum()
    }

    #[test]
    fn iid_rate_at_ten_percent() {
        let oracle = enumerated_logical_rate(0.1);
        assert!((oracle - 0.028).abs() < 1e-12);
        let mut rng = RngStreams::new(2).stream("qec", 1);
        let r = qec_bitflip_experiment(1_000_000, 0.1, NoiseMode::Iid, &mut rng).unwrap();
        assert!((r.logical_error_rate - oracle).abs() < 0.001, "{}", r.logical_error_rate);
        assert!((r.iid_prediction - oracle).abs() < 1e-12);
    }

    #[test]
    fn blocking_pns_forwards_only_multiphoton() {
        let mut tap = BlockingPns::default();
        let mut rng = RngStreams::new(1).stream("b", 0);
        assert_eq!(tap.tap(pulse(1), &mut rng), TappedPulse::Delivered(pulse(0)));
        assert_eq!(tap.tap(pulse(4), &mut rng), TappedPulse::Delivered(pulse(1)));
        assert_eq!(tap.stolen_photons, 3);
    }

    proptest! {
        #[test]
        fn pns_conserves_photons(count in 0u64..40, q in 0.0f64..=1.0, which in 0usize..3, seed in any::<u64>()) {
            let strategy = [PnsStrategy::NoEve, PnsStrategy::RandomIntercept { q }, PnsStrategy::AlwaysMinusOne][which];
            let mut rng = RngStreams::new(seed).stream("pns", 0);
            let (eve, fwd) = pns_intercept(&pulse(count), &strategy, &mut rng);
            prop_assert_eq!(eve + fwd.photon_count, count);
        }

        #[test]
        fn ledger_rows_recompute(n in 1usize..300, which in 0usize..3, theta in 0.0f64..(2.0 * PI), seed in any::<u64>()) {
            let policy = [TrojanPolicy::NoShift, TrojanPolicy::FixedShift { theta }, TrojanPolicy::RandomShift][which];
            let mut rng = RngStreams::new(seed).stream("trojan", 0);
            let ledger = trojan_gain_experiment(n, policy, &mut rng).unwrap();
            prop_assert!(ledger.verify());
            prop_assert!(ledger.entries.iter().all(|e| (0.0..=1.0).contains(&e.gain)));
        }

        #[test]
        fn interlock_never_accuses_without_eve(k in 1usize..40, seed in any::<u64>()) {
            let mut rng = RngStreams::new(seed).stream("lock", 0);
            let t = interlock_exchange(2 * k, false, &mut rng).unwrap();
            prop_assert!(!t.detected);
            let t = interlock_exchange(2 * k, true, &mut rng).unwrap();
            prop_assert!(!t.detected || t.eve_present);
        }
    }
}
