use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;
use std::str::FromStr;

use qntl::attacks::{
    interlock_exchange, pns_experiment, qec_bitflip_experiment, trojan_gain_experiment, BlockingPns, EntanglingProbe,
    EveBasisChoice, InterceptResend, NoiseMode, PnsStrategy, TrojanPolicy,
};
use qntl::network::{
    diversion_experiment, dos_simulate, untrusted_node_experiment, DecayConfig, DosConfig, Mitigation, Topology, TopologySpec,
};
use qntl::photonics::{Detector, IntensityLabel, LossChannel, PhotonSource};
use qntl::qkd::{
    decoy_state_analysis, relay_chain, run_bb84, run_e91, simulate_decoy_transmission, Bb84Config, DecoyIntensity, E91Config,
    PairTap, PulseTap, QubitTap,
};
use qntl::quantum::{bell_pair, chsh_value, BellState, ChshSettings};
use qntl::stats::{chi_square_gof, poisson_pmf};
use qntl::RngStreams;
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::config::ResolvedConfig;
use crate::CliError;

pub type Row = Map<String, Value>;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<Row>,
    pub summary: Row,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Pns,
    Trojan,
    Bb84,
    E91,
    Relay,
    Decoy,
    Qec,
    Interlock,
    TopologyDecay,
    Diversion,
    Dos,
}

impl Experiment {
    pub const ALL: [Experiment; 11] = [
        Experiment::Pns,
        Experiment::Trojan,
        Experiment::Bb84,
        Experiment::E91,
        Experiment::Relay,
        Experiment::Decoy,
        Experiment::Qec,
        Experiment::Interlock,
        Experiment::TopologyDecay,
        Experiment::Diversion,
        Experiment::Dos,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Pns => "pns",
            Experiment::Trojan => "trojan",
            Experiment::Bb84 => "bb84",
            Experiment::E91 => "e91",
            Experiment::Relay => "relay",
            Experiment::Decoy => "decoy",
            Experiment::Qec => "qec",
            Experiment::Interlock => "interlock",
            Experiment::TopologyDecay => "topology-decay",
            Experiment::Diversion => "diversion",
            Experiment::Dos => "dos",
        }
    }

    pub fn default_params(&self) -> Map<String, Value> {
        fn to_map<P: Serialize + Default>() -> Map<String, Value> {
            match serde_json::to_value(P::default()).expect("params serialize") {
                Value::Object(m) => m,
                _ => unreachable!("params are structs"),
            }
        }
        match self {
            Experiment::Pns => to_map::<PnsParams>(),
            Experiment::Trojan => to_map::<TrojanParams>(),
            Experiment::Bb84 => to_map::<Bb84Params>(),
            Experiment::E91 => to_map::<E91Params>(),
            Experiment::Relay => to_map::<RelayParams>(),
            Experiment::Decoy => to_map::<DecoyParams>(),
            Experiment::Qec => to_map::<QecParams>(),
            Experiment::Interlock => to_map::<InterlockParams>(),
            Experiment::TopologyDecay => to_map::<DecayParams>(),
            Experiment::Diversion => to_map::<DiversionParams>(),
            Experiment::Dos => to_map::<DosParams>(),
        }
    }

    /// Type-checks the parameter map and parses every enumerated string.
    pub fn validate(&self, params: &Map<String, Value>) -> Result<(), CliError> {
        match self {
            Experiment::Pns => typed::<PnsParams>(params)?.strategies().map(drop),
            Experiment::Trojan => typed::<TrojanParams>(params)?.policies().map(drop),
            Experiment::Bb84 => typed::<Bb84Params>(params)?.eve().map(drop),
            Experiment::E91 => typed::<E91Params>(params).map(drop),
            Experiment::Relay => typed::<RelayParams>(params).map(drop),
            Experiment::Decoy => typed::<DecoyParams>(params)?.attack().map(drop),
            Experiment::Qec => typed::<QecParams>(params)?.modes().map(drop),
            Experiment::Interlock => typed::<InterlockParams>(params).map(drop),
            Experiment::TopologyDecay => typed::<DecayParams>(params)?.kinds().map(drop),
            Experiment::Diversion => typed::<DiversionParams>(params)?.topology().map(drop),
            Experiment::Dos => typed::<DosParams>(params)?.mitigations().map(drop),
        }
    }

    pub fn run(&self, config: &ResolvedConfig) -> Result<RunOutput, CliError> {
        let streams = RngStreams::new(config.seed);
        let p = &config.params;
        match self {
            Experiment::Pns => run_pns(typed(p)?, &streams),
            Experiment::Trojan => run_trojan(typed(p)?, &streams),
            Experiment::Bb84 => run_bb84_exp(typed(p)?, &streams),
            Experiment::E91 => run_e91_exp(typed(p)?, &streams),
            Experiment::Relay => run_relay(typed(p)?, &streams),
            Experiment::Decoy => run_decoy(typed(p)?, &streams),
            Experiment::Qec => run_qec(typed(p)?, &streams),
            Experiment::Interlock => run_interlock(typed(p)?, &streams),
            Experiment::TopologyDecay => run_decay(typed(p)?, config.seed),
            Experiment::Diversion => run_diversion(typed(p)?, config.seed, &streams),
            Experiment::Dos => run_dos(typed(p)?, &streams),
        }
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
            CliError::config(format!("unknown experiment `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

fn typed<P: DeserializeOwned>(params: &Map<String, Value>) -> Result<P, CliError> {
    serde_json::from_value(Value::Object(params.clone())).map_err(|e| CliError::config(format!("invalid parameters: {e}")))
}

fn obj(v: Value) -> Row {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("rows are built from object literals"),
    }
}

fn bad_value(what: &str, value: &str) -> CliError {
    CliError::config(format!("unrecognized {what} `{value}`"))
}

fn parse_f64(what: &str, s: &str) -> Result<f64, CliError> {
    s.parse().map_err(|_| bad_value(what, s))
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PnsParams {
    pub mu: f64,
    pub pulses: usize,
    pub max_bin: usize,
    /// `no-eve`, `random:<q>` or `always-minus-one`.
    pub strategies: Vec<String>,
}

impl Default for PnsParams {
    fn default() -> Self {
        Self {
            mu: 5.0,
            pulses: 100_000,
            max_bin: 20,
            strategies: vec!["no-eve".into(), "random:0.5".into(), "always-minus-one".into()],
        }
    }
}

impl PnsParams {
    fn strategies(&self) -> Result<Vec<PnsStrategy>, CliError> {
        self.strategies
            .iter()
            .map(|s| match s.split_once(':') {
                None if s == "no-eve" => Ok(PnsStrategy::NoEve),
                None if s == "always-minus-one" => Ok(PnsStrategy::AlwaysMinusOne),
                None if s == "random" => Ok(PnsStrategy::RandomIntercept { q: 0.5 }),
                Some(("random", q)) => Ok(PnsStrategy::RandomIntercept { q: parse_f64("intercept probability", q)? }),
                _ => Err(bad_value("PNS strategy", s)),
            })
            .collect()
    }
}

fn run_pns(p: PnsParams, streams: &RngStreams) -> Result<RunOutput, CliError> {
    let strategies = p.strategies()?;
    let exp = pns_experiment(p.pulses, p.mu, &strategies, p.max_bin, streams).map_err(CliError::runtime)?;
    let mut rows = Vec::new();
    let mut per_strategy = Vec::new();
    for series in &exp.series {
        let name = series.strategy.to_string();
        for bin in 0..series.received.num_bins() {
            rows.push(obj(json!({
                "strategy": name,
                "bin": bin,
                "count": series.received.counts()[bin],
                "proportion": series.received.proportion(bin),
                "baseline_count": exp.baseline.counts()[bin],
                "baseline_proportion": exp.baseline.proportion(bin),
                "z": series.zscores.z[bin],
            })));
        }
        let poisson_mean = match series.strategy {
            PnsStrategy::NoEve => Some(p.mu),
            PnsStrategy::RandomIntercept { q } => Some(p.mu * (1.0 - q)),
            PnsStrategy::AlwaysMinusOne => None,
        };
        let chi2_p = poisson_mean
            .map(|m| chi_square_gof(&series.received, |k| poisson_pmf(k, m)).map(|c| c.p_value))
            .transpose()
            .map_err(CliError::runtime)?;
        per_strategy.push(json!({
            "strategy": name,
            "p_zero": series.received.proportion(0),
            "mean_received": series.received.mean(),
            "max_abs_z": series.zscores.max_abs,
            "stolen_photons": series.stolen_photons,
            "poisson_chi2_p": chi2_p,
        }));
    }
    Ok(RunOutput {
        rows,
        summary: obj(json!({ "strategies": per_strategy })),
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrojanParams {
    pub photons: usize,
    /// `no-shift`, `fixed` (a quarter turn), `fixed:<radians>` or `random`.
    pub policies: Vec<String>,
    /// Cumulative gain is reported every `checkpoint` photons.
    pub checkpoint: usize,
}

impl Default for TrojanParams {
    fn default() -> Self {
        Self {
            photons: 100_000,
            policies: vec!["no-shift".into(), "fixed".into(), "random".into()],
            checkpoint: 1000,
        }
    }
}

impl TrojanParams {
    fn policies(&self) -> Result<Vec<TrojanPolicy>, CliError> {
        self.policies
            .iter()
            .map(|s| match s.split_once(':') {
                None if s == "no-shift" => Ok(TrojanPolicy::NoShift),
                None if s == "fixed" => Ok(TrojanPolicy::FixedShift { theta: FRAC_PI_2 }),
                None if s == "random" => Ok(TrojanPolicy::RandomShift),
                Some(("fixed", theta)) => Ok(TrojanPolicy::FixedShift { theta: parse_f64("phase", theta)? }),
                _ => Err(bad_value("Trojan policy", s)),
            })
            .collect()
    }
}

fn run_trojan(p: TrojanParams, streams: &RngStreams) -> Result<RunOutput, CliError> {
    let mut rows = Vec::new();
    let mut per_policy = Vec::new();
    for (i, policy) in p.policies()?.into_iter().enumerate() {
        let mut rng = streams.stream("trojan", i as u64);
        let ledger = trojan_gain_experiment(p.photons, policy, &mut rng).map_err(CliError::runtime)?;
        let name = policy.to_string();
        for (n, g) in ledger.cumulative_series(p.checkpoint) {
            rows.push(obj(json!({
                "policy": name,
                "photons": n,
                "cumulative_gain": g,
                "gain_per_photon": g / n as f64,
            })));
        }
        per_policy.push(json!({
            "policy": name,
            "total_gain": ledger.cumulative,
            "gain_per_photon": ledger.mean_gain(),
            "ledger_verified": ledger.verify(),
        }));
    }
    Ok(RunOutput {
        rows,
        summary: obj(json!({ "policies": per_policy })),
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bb84Params {
    pub pulses: usize,
    /// `none`, `random`, `always-correct` or `always-wrong`.
    pub eve: String,
    pub runs: usize,
    /// Mean photon number of a weak-coherent source; 0 selects an ideal
    /// single-photon source.
    pub mu: f64,
    pub transmittance: f64,
    pub efficiency: f64,
    pub dark_count: f64,
    pub disclosed_fraction: f64,
    pub abort_threshold: f64,
    pub security_margin_bits: usize,
}

impl Default for Bb84Params {
    fn default() -> Self {
        let ideal = Bb84Config::ideal(0);
        Self {
            pulses: 10_000,
            eve: "none".into(),
            runs: 1,
            mu: 0.0,
            transmittance: 1.0,
            efficiency: 1.0,
            dark_count: 0.0,
            disclosed_fraction: ideal.disclosed_fraction,
            abort_threshold: ideal.abort_threshold,
            security_margin_bits: ideal.security_margin_bits,
        }
    }
}

impl Bb84Params {
    fn eve(&self) -> Result<Option<EveBasisChoice>, CliError> {
        match self.eve.as_str() {
            "none" => Ok(None),
            "random" | "intercept-resend" => Ok(Some(EveBasisChoice::Random)),
            "always-correct" => Ok(Some(EveBasisChoice::AlwaysCorrect)),
            "always-wrong" => Ok(Some(EveBasisChoice::AlwaysWrong)),
            other => Err(bad_value("eavesdropper", other)),
        }
    }
}

fn run_bb84_exp(p: Bb84Params, streams: &RngStreams) -> Result<RunOutput, CliError> {
    let eve = p.eve()?;
    let source = if p.mu == 0.0 {
        PhotonSource::IdealSinglePhoton
    } else {
        PhotonSource::weak_coherent(p.mu).map_err(CliError::runtime)?
    };
    let config = Bb84Config {
        n_pulses: p.pulses,
        source,
        channel: LossChannel::new(p.transmittance).map_err(CliError::runtime)?,
        detector: Detector::new(p.efficiency, p.dark_count).map_err(CliError::runtime)?,
        disclosed_fraction: p.disclosed_fraction,
        abort_threshold: p.abort_threshold,
        security_margin_bits: p.security_margin_bits,
    };
    let mut rows = Vec::new();
    let (mut qber_sum, mut qber_runs, mut aborts, mut sifted_sum) = (0.0, 0usize, 0usize, 0.0);
    for run in 0..p.runs {
        let mut rng = streams.stream("bb84", run as u64);
        let mut tap = eve.map(InterceptResend::new);
        let session = run_bb84(&config, tap.as_mut().map(|t| t as &mut dyn QubitTap), &mut rng).map_err(CliError::runtime)?;
        let detected = session.raw_bits_alice.len();
        let sifted = session.sifted_len();
        if let Some(q) = session.qber {
            qber_sum += q;
            qber_runs += 1;
        }
        aborts += usize::from(session.aborted.is_some());
        sifted_sum += if detected == 0 { 0.0 } else { sifted as f64 / detected as f64 };
        rows.push(obj(json!({
            "run": run,
            "detected": detected,
            "sifted": sifted,
            "sifted_fraction": if detected == 0 { 0.0 } else { sifted as f64 / detected as f64 },
            "disclosed": session.disclosed_bits,
            "qber": session.qber,
            "leak_bits": session.leak_bits,
            "final_key_bits": session.final_key.len(),
            "aborted": session.aborted.map(|a| a.to_string()).unwrap_or_default(),
        })));
    }
    Ok(RunOutput {
        rows,
        summary: obj(json!({
            "runs": p.runs,
            "mean_qber": if qber_runs == 0 { None } else { Some(qber_sum / qber_runs as f64) },
            "mean_sifted_fraction": if p.runs == 0 { 0.0 } else { sifted_sum / p.runs as f64 },
            "aborted_runs": aborts,
        })),
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct E91Params {
    pub pairs: usize,
    /// Entangle a probe with Bob's half of every pair.
    pub probe: bool,
    pub runs: usize,
    pub chsh_fraction: f64,
    pub detection_margin: f64,
    pub disclosed_fraction: f64,
    pub abort_threshold: f64,
}

impl Default for E91Params {
    fn default() -> Self {
        let c = E91Config::new(0);
        Self {
            pairs: 10_000,
            probe: false,
            runs: 1,
            chsh_fraction: c.chsh_fraction,
            detection_margin: c.detection_margin,
            disclosed_fraction: c.disclosed_fraction,
            abort_threshold: c.abort_threshold,
        }
    }
}

fn run_e91_exp(p: E91Params, streams: &RngStreams) -> Result<RunOutput, CliError> {
    let config = E91Config {
        chsh_fraction: p.chsh_fraction,
        detection_margin: p.detection_margin,
        disclosed_fraction: p.disclosed_fraction,
        abort_threshold: p.abort_threshold,
        ..E91Config::new(p.pairs)
    };
    let mut rows = Vec::new();
    let mut detected_runs = 0;
    for run in 0..p.runs {
        let mut rng = streams.stream("e91", run as u64);
        let mut probe = EntanglingProbe::default();
        let tap = p.probe.then_some(&mut probe as &mut dyn PairTap);
        let s = run_e91(&config, tap, &mut rng).map_err(CliError::runtime)?;
        detected_runs += usize::from(s.eavesdrop_detected);
        rows.push(obj(json!({
            "run": run,
            "chsh": s.chsh_estimate,
            "chsh_samples": s.chsh_samples,
            "eavesdrop_detected": s.eavesdrop_detected,
            "sifted": s.session.sifted_len(),
            "qber": s.session.qber,
            "final_key_bits": s.session.final_key.len(),
            "aborted": s.session.aborted.map(|a| a.to_string()).unwrap_or_default(),
        })));
    }
    let settings = ChshSettings::optimal();
    let phi = bell_pair(BellState::PhiPlus);
    let analytic = chsh_value(&phi, &settings, &[]).map_err(CliError::runtime)?;
    let infiltrated = qntl::attacks::probe_infiltrate(&phi)
        .map_err(CliError::runtime)
        .and_then(|s| chsh_value(&s, &settings, &[2]).map_err(CliError::runtime))?;
    Ok(RunOutput {
        rows,
        summary: obj(json!({
            "runs": p.runs,
            "detected_runs": detected_runs,
            "analytic_chsh": analytic,
            "analytic_chsh_infiltrated": infiltrated,
        })),
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelayParams {
    pub relays: usize,
    pub key_bits: usize,
    pub runs: usize,
}

impl Default for RelayParams {
    fn default() -> Self {
        Self {
            relays: 3,
            key_bits: 128,
            runs: 1,
        }
    }
}

fn run_relay(p: RelayParams, streams: &RngStreams) -> Result<RunOutput, CliError> {
    let mut rows = Vec::new();
    let mut recovered_runs = 0;
    for run in 0..p.runs {
        let mut rng = streams.stream("relay", run as u64);
        let links: Vec<Vec<bool>> = (0..=p.relays)
            .map(|_| (0..p.key_bits).map(|_| rng.random()).collect())
            .collect();
        let trace = relay_chain(&links).map_err(CliError::runtime)?;
        let ok = trace.alice_key == trace.bob_key;
        recovered_runs += usize::from(ok);
        rows.push(obj(json!({
            "run": run,
            "relays": p.relays,
            "key_bits": p.key_bits,
            "key_recovered": ok,
            "exposures": trace.exposures.len(),
            "every_relay_saw_key": trace.exposures.iter().all(|e| e.cleartext == trace.alice_key),
        })));
    }
    Ok(RunOutput {
        rows,
        summary: obj(json!({ "runs": p.runs, "recovered_runs": recovered_runs })),
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoyParams {
    pub pulses_each: usize,
    /// Signal mean first, then decoy means.
    pub intensities: Vec<f64>,
    pub transmittance: f64,
    /// `none` or `blocking-pns`.
    pub attack: String,
    pub tolerance: f64,
}

impl Default for DecoyParams {
    fn default() -> Self {
        Self {
            pulses_each: 100_000,
            intensities: vec![0.5, 0.1, 0.0],
            transmittance: 0.1,
            attack: "none".into(),
            tolerance: 0.1,
        }
    }
}

impl DecoyParams {
    fn attack(&self) -> Result<bool, CliError> {
        match self.attack.as_str() {
            "none" => Ok(false),
            "blocking-pns" => Ok(true),
            other => Err(bad_value("decoy attack", other)),
        }
    }
}

fn label_name(label: IntensityLabel) -> String {
    match label {
        IntensityLabel::Signal => "signal".into(),
        IntensityLabel::Decoy(i) => format!("decoy-{i}"),
    }
}

fn run_decoy(p: DecoyParams, streams: &RngStreams) -> Result<RunOutput, CliError> {
    let attacked = p.attack()?;
    if p.intensities.len() > 256 {
        return Err(CliError::config("at most 256 intensities"));
    }
    let intensities: Vec<DecoyIntensity> = p
        .intensities
        .iter()
        .enumerate()
        .map(|(i, &mean)| DecoyIntensity {
            label: if i == 0 { IntensityLabel::Signal } else { IntensityLabel::Decoy((i - 1) as u8) },
            mean,
        })
        .collect();
    let channel = LossChannel::new(p.transmittance).map_err(CliError::runtime)?;
    let mut rng = streams.stream("decoy", 0);
    let mut eve = BlockingPns::default();
    let tap = attacked.then_some(&mut eve as &mut dyn PulseTap);
    let log = simulate_decoy_transmission(&intensities, p.pulses_each, &channel, &Detector::default(), tap, &mut rng)
        .map_err(CliError::runtime)?;
    let report = decoy_state_analysis(&log, &channel, p.tolerance).map_err(CliError::runtime)?;
    let rows = report
        .intensities
        .iter()
        .map(|g| {
            obj(json!({
                "label": label_name(g.label),
                "mean": g.mean,
                "sent": g.sent,
                "detected": g.detected,
                "gain": g.gain,
                "model_gain": g.model_gain,
                "deviation": g.deviation,
            }))
        })
        .collect();
    Ok(RunOutput {
        rows,
        summary: obj(json!({
            "single_photon_yield": report.single_photon_yield,
            "max_deviation": report.max_deviation,
            "eavesdrop_flag": report.eavesdrop_flag,
        })),
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QecParams {
    pub blocks: u64,
    pub p: Vec<f64>,
    /// `iid` and/or `burst-2`.
    pub modes: Vec<String>,
}

impl Default for QecParams {
    fn default() -> Self {
        Self {
            blocks: 100_000,
            p: vec![0.05, 0.1, 0.2, 0.3],
            modes: vec!["iid".into(), "burst-2".into()],
        }
    }
}

impl QecParams {
    fn modes(&self) -> Result<Vec<NoiseMode>, CliError> {
        self.modes
            .iter()
            .map(|m| match m.as_str() {
                "iid" => Ok(NoiseMode::Iid),
                "burst-2" | "burst2" => Ok(NoiseMode::Burst2),
                other => Err(bad_value("noise mode", other)),
            })
            .collect()
    }
}

fn run_qec(params: QecParams, streams: &RngStreams) -> Result<RunOutput, CliError> {
    let mut rows = Vec::new();
    let mut extras = None;
    for (mi, mode) in params.modes()?.into_iter().enumerate() {
        for (pi, &p) in params.p.iter().enumerate() {
            let mut rng = streams.stream(&format!("qec/{mi}"), pi as u64);
            let r = qec_bitflip_experiment(params.blocks, p, mode, &mut rng).map_err(CliError::runtime)?;
            let expected = match mode {
                NoiseMode::Iid => r.iid_prediction,
                NoiseMode::Burst2 => p,
            };
            rows.push(obj(json!({
                "mode": mode.to_string(),
                "p": p,
                "blocks": r.n_blocks,
                "logical_errors": r.logical_errors,
                "logical_rate": r.logical_error_rate,
                "expected_rate": expected,
                "sigma": (expected * (1.0 - expected) / r.n_blocks.max(1) as f64).sqrt(),
            })));
            extras = Some((r.iid_break_even, r.correctable_fraction));
        }
    }
    let (break_even, correctable) = extras.unwrap_or((0.5, 1.0 / 3.0));
    Ok(RunOutput {
        rows,
        summary: obj(json!({
            "iid_break_even": break_even,
            "correctable_fraction": correctable,
        })),
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterlockParams {
    pub k: Vec<u64>,
    pub trials: usize,
    pub eve: bool,
}

impl Default for InterlockParams {
    fn default() -> Self {
        Self {
            k: vec![2, 8, 16],
            trials: 10_000,
            eve: true,
        }
    }
}

fn run_interlock(p: InterlockParams, streams: &RngStreams) -> Result<RunOutput, CliError> {
    let mut rows = Vec::new();
    for &k in &p.k {
        let mut rng = streams.stream("interlock", k);
        let mut detected = 0usize;
        for _ in 0..p.trials {
            detected += usize::from(interlock_exchange(k as usize, p.eve, &mut rng).map_err(CliError::runtime)?.detected);
        }
        let predicted = if p.eve { 1.0 - 2f64.powf(-(k as f64) / 2.0) } else { 0.0 };
        rows.push(obj(json!({
            "k": k,
            "trials": p.trials,
            "detected": detected,
            "detection_rate": if p.trials == 0 { 0.0 } else { detected as f64 / p.trials as f64 },
            "predicted_rate": predicted,
        })));
    }
    Ok(RunOutput {
        rows,
        summary: obj(json!({ "eve_present": p.eve })),
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayParams {
    /// Family names (`grid`, `erdos-renyi`, `waxman`, `hex`, `tree`, `ba`)
    /// or full kind tokens such as `grid:10x10`.
    pub kinds: Vec<String>,
    pub fractions: Vec<f64>,
    pub trials: usize,
    pub pairs: usize,
    pub min_pair_distance: usize,
}

impl Default for DecayParams {
    fn default() -> Self {
        let d = DecayConfig::new(Vec::new(), 0);
        Self {
            kinds: TopologySpec::reference_families().iter().map(|s| s.family().to_string()).collect(),
            fractions: d.fractions,
            trials: d.trials,
            pairs: d.pairs_per_trial,
            min_pair_distance: d.min_pair_distance,
        }
    }
}

impl DecayParams {
    fn kinds(&self) -> Result<Vec<TopologySpec>, CliError> {
        self.kinds
            .iter()
            .map(|k| k.parse::<TopologySpec>().map_err(|_| bad_value("topology kind", k)))
            .collect()
    }
}

fn run_decay(p: DecayParams, seed: u64) -> Result<RunOutput, CliError> {
    let config = DecayConfig {
        kinds: p.kinds()?,
        fractions: p.fractions.clone(),
        trials: p.trials,
        pairs_per_trial: p.pairs,
        min_pair_distance: p.min_pair_distance,
        seed,
    };
    let report = untrusted_node_experiment(&config).map_err(CliError::runtime)?;
    let mut rows = Vec::new();
    for r in &report.rows {
        rows.push(obj(json!({
            "kind": r.kind,
            "fraction": r.fraction,
            "distance": "all",
            "mean_paths": r.mean_paths,
            "std_paths": r.std_paths,
            "relative_to_baseline": r.relative_to_baseline,
            "samples": r.samples,
        })));
    }
    for r in &report.distance_rows {
        rows.push(obj(json!({
            "kind": r.kind,
            "fraction": r.fraction,
            "distance": r.distance.to_string(),
            "mean_paths": r.mean_paths,
            "std_paths": "",
            "relative_to_baseline": "",
            "samples": r.samples,
        })));
    }
    Ok(RunOutput {
        rows,
        summary: obj(json!({ "skipped_pairs": report.skipped_pairs })),
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiversionParams {
    pub topology: String,
    pub hijacked: Vec<u64>,
    pub pairs: usize,
    pub tau_ms: f64,
}

impl Default for DiversionParams {
    fn default() -> Self {
        Self {
            topology: "grid:10x10".into(),
            hijacked: vec![44],
            pairs: 100,
            tau_ms: 10.0,
        }
    }
}

impl DiversionParams {
    fn topology(&self) -> Result<TopologySpec, CliError> {
        self.topology.parse().map_err(|_| bad_value("topology kind", &self.topology))
    }
}

fn run_diversion(p: DiversionParams, seed: u64, streams: &RngStreams) -> Result<RunOutput, CliError> {
    let topology = Topology::generate(p.topology()?, seed).map_err(CliError::runtime)?;
    let hijacked: BTreeSet<usize> = p.hijacked.iter().map(|&h| h as usize).collect();
    let mut rng = streams.stream("diversion", 0);
    let r = diversion_experiment(&topology, &hijacked, p.pairs, p.tau_ms, &mut rng).map_err(CliError::runtime)?;
    Ok(RunOutput {
        rows: vec![obj(json!({
            "topology": topology.spec().to_string(),
            "hijacked": hijacked.len(),
            "requested_pairs": r.requested_pairs,
            "routed_pairs": r.routed_pairs,
            "honest_interception": r.honest_interception,
            "adversarial_interception": r.adversarial_interception,
            "mean_stretch": r.mean_stretch,
        }))],
        summary: obj(json!({ "edges": topology.num_edges() })),
    })
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DosParams {
    pub duration_s: f64,
    pub legit_rate: f64,
    pub attack_rate: f64,
    pub servers: usize,
    pub backlog: usize,
    pub handshake_ms: f64,
    pub embryonic_timeout_ms: f64,
    pub mean_service_ms: f64,
    pub legit_sources: usize,
    pub attack_sources: usize,
    pub suspicion_window_ms: f64,
    /// `none`, `rate-limit:<per s>:<burst>`, `embryonic-cap:<c>` or
    /// `suspicion`.
    pub mitigations: Vec<String>,
    pub runs: usize,
}

impl Default for DosParams {
    fn default() -> Self {
        let d = DosConfig::default();
        Self {
            duration_s: d.duration_s,
            legit_rate: d.legit_rate,
            attack_rate: d.attack_rate,
            servers: d.servers,
            backlog: d.backlog,
            handshake_ms: d.handshake_ms,
            embryonic_timeout_ms: d.embryonic_timeout_ms,
            mean_service_ms: d.mean_service_ms,
            legit_sources: d.legit_sources,
            attack_sources: d.attack_sources,
            suspicion_window_ms: d.suspicion_window_ms,
            mitigations: vec!["none".into(), "rate-limit:5:10".into(), "embryonic-cap:8".into(), "suspicion".into()],
            runs: 1,
        }
    }
}

impl DosParams {
    fn mitigations(&self) -> Result<Vec<(String, Mitigation)>, CliError> {
        self.mitigations
            .iter()
            .map(|m| {
                let parts: Vec<&str> = m.split(':').collect();
                let parsed = match parts[..] {
                    ["none"] => Mitigation::None,
                    ["suspicion"] => Mitigation::SuspicionSched,
                    ["rate-limit"] => Mitigation::RateLimit { rate_per_s: 5.0, burst: 10.0 },
                    ["rate-limit", r] => Mitigation::RateLimit { rate_per_s: parse_f64("rate", r)?, burst: 10.0 },
                    ["rate-limit", r, b] => Mitigation::RateLimit {
                        rate_per_s: parse_f64("rate", r)?,
                        burst: parse_f64("burst", b)?,
                    },
                    ["embryonic-cap", c] => Mitigation::EmbryonicCap {
                        cap: c.parse().map_err(|_| bad_value("embryonic cap", c))?,
                    },
                    _ => return Err(bad_value("mitigation", m)),
                };
                Ok((m.clone(), parsed))
            })
            .collect()
    }
}

fn run_dos(p: DosParams, streams: &RngStreams) -> Result<RunOutput, CliError> {
    let mitigations = p.mitigations()?;
    let mut rows = Vec::new();
    let mut served = vec![0.0; mitigations.len()];
    let mut conserved = true;
    for run in 0..p.runs {
        // Every mitigation in a run sees the same arrivals.
        let run_root: u64 = streams.stream("dos/run", run as u64).random();
        for (i, (name, mitigation)) in mitigations.iter().enumerate() {
            let cfg = DosConfig {
                duration_s: p.duration_s,
                legit_rate: p.legit_rate,
                attack_rate: p.attack_rate,
                servers: p.servers,
                backlog: p.backlog,
                handshake_ms: p.handshake_ms,
                embryonic_timeout_ms: p.embryonic_timeout_ms,
                mean_service_ms: p.mean_service_ms,
                legit_sources: p.legit_sources,
                attack_sources: p.attack_sources,
                suspicion_window_ms: p.suspicion_window_ms,
                mitigation: *mitigation,
            };
            let r = dos_simulate(&cfg, &RngStreams::new(run_root)).map_err(CliError::runtime)?;
            conserved &= r.conserves_arrivals();
            served[i] += r.legit_served_fraction;
            rows.push(obj(json!({
                "run": run,
                "mitigation": name,
                "legit_arrivals": r.legit_arrivals,
                "attack_arrivals": r.attack_arrivals,
                "legit_served": r.legit_served,
                "attack_served": r.attack_served,
                "dropped": r.dropped,
                "blocked": r.blocked,
                "pending": r.pending,
                "attack_admitted": r.attack_admitted,
                "legit_served_fraction": r.legit_served_fraction,
                "attack_served_fraction": r.attack_served_fraction,
                "mean_legit_latency_ms": r.mean_legit_latency_ms,
            })));
        }
    }
    let means: Vec<Value> = mitigations
        .iter()
        .zip(&served)
        .map(|((name, _), s)| json!({ "mitigation": name, "mean_legit_served_fraction": s / p.runs.max(1) as f64 }))
        .collect();
    Ok(RunOutput {
        rows,
        summary: obj(json!({ "runs": p.runs, "conserved": conserved, "mitigations": means })),
    })
}
