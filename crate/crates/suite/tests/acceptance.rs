//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::f64::consts::{FRAC_PI_2, SQRT_2};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use qntl::attacks::{
    interlock_exchange, pns_experiment, probe_infiltrate, qec_bitflip_experiment, trojan_gain_experiment, EntanglingProbe,
    EveBasisChoice, InterceptResend, NoiseMode, PnsStrategy, TrojanPolicy,
};
use qntl::catalog::{catalog_checksum, threat_catalog};
use qntl::network::{dos_simulate, untrusted_node_experiment, DecayConfig, DosConfig, Mitigation, TopologySpec};
use qntl::qkd::{relay_chain, run_bb84, run_e91, AbortReason, Bb84Config, E91Config};
use qntl::quantum::{bell_pair, chsh_value, Basis, BellState, ChshSettings, PureState};
use qntl::stats::chi_square_gof;
use qntl::RngStreams;
use qntl_cli::config::{resolve, Overrides};
use qntl_cli::experiments::Experiment;
use qntl_cli::report::{rows_to_csv, run_scenario};

const SEED: u64 = 42;
const CATALOG_SHA256: &str = "271862fb0762744479078862adc19da445f66beada34e889ce0872a01174ea97";

struct Outcome {
    checks: Vec<(bool, String)>,
}

impl Outcome {
    fn new() -> Self {
        Self { checks: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.checks.push((ok, what.into()));
    }

    fn passed(&self) -> bool {
        self.checks.iter().all(|(ok, _)| *ok)
    }
}

fn poisson_pmf(k: u64, mean: f64) -> f64 {
    // recurrence from P(0), avoids factorials
    let mut p = (-mean).exp();
    for i in 1..=k {
        p *= mean / i as f64;
    }
    p
}

fn criterion_1() -> Outcome {
    let mut o = Outcome::new();
    let strategies = [PnsStrategy::NoEve, PnsStrategy::RandomIntercept { q: 0.5 }, PnsStrategy::AlwaysMinusOne];
    let exp = pns_experiment(100_000, 5.0, &strategies, 20, &RngStreams::new(SEED)).expect("pns runs");
    let random = &exp.series[1];
    let minus_one = &exp.series[2];

    // P(N - 1 = 0) with N ~ Poisson(5): pulses of 0 or 1 photons
    let oracle = poisson_pmf(0, 5.0) + poisson_pmf(1, 5.0);
    let p0 = minus_one.received.proportion(0);
    o.check((p0 - 0.0404).abs() <= 0.004, format!("AlwaysMinusOne P(0)={p0:.5} (oracle {oracle:.5}, target 0.0404±0.004)"));
    o.check((oracle - 0.0404).abs() < 1e-4, format!("oracle 6e^-5={oracle:.5}"));

    let chi = chi_square_gof(&random.received, |k| poisson_pmf(k, 2.5)).expect("chi-square computes");
    o.check(chi.p_value > 0.01, format!("Random(0.5) vs Poisson(2.5): chi2={:.2} dof={} p={:.4}", chi.statistic, chi.dof, chi.p_value));

    let (zr, zm) = (random.zscores.max_abs, minus_one.zscores.max_abs);
    o.check(zr > zm, format!("max|Z| Random={zr:.2} > AlwaysMinusOne={zm:.2}"));
    o
}

fn criterion_2() -> Outcome {
    let mut o = Outcome::new();
    let streams = RngStreams::new(SEED);
    let policies = [
        (TrojanPolicy::NoShift, 0.750),
        (TrojanPolicy::FixedShift { theta: FRAC_PI_2 }, 0.625),
        (TrojanPolicy::RandomShift, 0.625),
    ];
    let mut means = Vec::new();
    for (i, (policy, target)) in policies.into_iter().enumerate() {
        let ledger = trojan_gain_experiment(100_000, policy, &mut streams.stream("acceptance/trojan", i as u64)).expect("trojan runs");
        let g = ledger.mean_gain();
        o.check((g - target).abs() <= 0.008, format!("{policy}: G/n={g:.4} (target {target}±0.008)"));
        o.check(ledger.verify(), format!("{policy}: ledger sums to cumulative gain"));
        means.push(g);
    }
    let gap = (means[1] - means[2]).abs();
    o.check(gap < 0.01, format!("shifted policies differ by {gap:.4} < 0.01"));
    o
}

fn criterion_3() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let cfg = DecayConfig::new(TopologySpec::reference_families(), SEED);
    let report = untrusted_node_experiment(&cfg).expect("decay runs");
    let elapsed = start.elapsed();
    o.check(cfg.trials >= 20 && cfg.pairs_per_trial >= 20, format!("{} seeds x {} pairs per kind", cfg.trials, cfg.pairs_per_trial));
    o.check(elapsed <= Duration::from_secs(300), format!("runtime {:.2}s <= 300s", elapsed.as_secs_f64()));

    let kinds: Vec<String> = cfg.kinds.iter().map(|k| k.to_string()).collect();
    for kind in &kinds {
        let series = report.series(kind);
        let decreasing = series.windows(2).all(|w| {
            if w[0].mean_paths == 0.0 {
                w[1].mean_paths == 0.0
            } else {
                w[1].mean_paths < w[0].mean_paths
            }
        });
        let means: Vec<String> = series.iter().map(|r| format!("{:.3}", r.mean_paths)).collect();
        o.check(decreasing, format!("{kind}: strictly decreasing until collapse [{}]", means.join(" ")));
        let at = series.iter().find(|r| (r.fraction - 0.6).abs() < 1e-9).expect("fraction 0.6 present");
        o.check(
            at.relative_to_baseline <= 0.01,
            format!("{kind}: {:.2}% of baseline at fraction 0.6 (<= 1%)", 100.0 * at.relative_to_baseline),
        );
    }

    let grid = report.series(&TopologySpec::Grid { rows: 10, cols: 10 }.to_string());
    let tree = report.series(&TopologySpec::Tree { branching: 3, height: 4 }.to_string());
    let robust = grid
        .iter()
        .zip(&tree)
        .filter(|(g, _)| g.fraction <= 0.5 + 1e-9)
        .all(|(g, t)| g.mean_paths >= t.mean_paths);
    o.check(robust, "grid mean >= tree mean at every fraction <= 0.5");
    o
}

/// Intercept-resend QBER by enumerating Alice's basis and bit, Eve's basis
/// and Bob's basis, weighting each sifted case by Eve's outcome
/// probabilities.
fn intercept_resend_oracle() -> f64 {
    let bases = [Basis::Rectilinear, Basis::Diagonal];
    let (mut err, mut weight) = (0.0, 0.0);
    for alice_basis in bases {
        for alice_bit in [false, true] {
            for eve_basis in bases {
                for bob_basis in bases {
                    if bob_basis != alice_basis {
                        continue;
                    }
                    let sent = PureState::encode(alice_bit, alice_basis);
                    for eve_bit in [false, true] {
                        let p_eve = sent.probability(0, eve_basis, eve_bit).unwrap();
                        let resent = PureState::encode(eve_bit, eve_basis);
                        err += p_eve * resent.probability(0, bob_basis, !alice_bit).unwrap();
                    }
                    weight += 1.0;
                }
            }
        }
    }
    err / weight
}

fn mismatch_rate(a: &[bool], b: &[bool]) -> f64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / a.len() as f64
}

fn criterion_4() -> Outcome {
    let mut o = Outcome::new();
    let streams = RngStreams::new(SEED);
    let cfg = Bb84Config::ideal(100_000);

    let clean = run_bb84(&cfg, None, &mut streams.stream("acceptance/bb84", 0)).expect("bb84 runs");
    o.check(clean.qber == Some(0.0), format!("no attacker: QBER={:?}", clean.qber));
    o.check(clean.sifted_key_alice == clean.sifted_key_bob, "no attacker: sifted keys agree");
    let sifted = clean.sifted_len() as f64 / cfg.n_pulses as f64;
    o.check((sifted - 0.5).abs() <= 0.01, format!("sifted fraction {sifted:.4} (0.5±0.01)"));
    o.check(!clean.is_aborted(), "no attacker: no abort");

    let oracle = intercept_resend_oracle();
    o.check((oracle - 0.25).abs() < 1e-12, format!("16-case oracle QBER={oracle}"));
    let mut eve = InterceptResend::new(EveBasisChoice::Random);
    let attacked = run_bb84(&cfg, Some(&mut eve), &mut streams.stream("acceptance/bb84", 1)).expect("bb84 runs");
    let q = mismatch_rate(&attacked.sifted_key_alice, &attacked.sifted_key_bob);
    o.check((q - oracle).abs() <= 0.01, format!("intercept-resend QBER over sifted key={q:.4} (0.25±0.01)"));
    let disclosed = attacked.qber.unwrap_or(f64::NAN);
    o.check((disclosed - oracle).abs() <= 0.03, format!("intercept-resend QBER on disclosed sample={disclosed:.4}"));
    let aborted = matches!(attacked.aborted, Some(AbortReason::QberAboveThreshold { threshold, .. }) if threshold == 0.11);
    o.check(aborted && attacked.final_key.is_empty(), format!("abort at threshold 0.11: {:?}", attacked.aborted));
    o
}

fn criterion_5() -> Outcome {
    let mut o = Outcome::new();
    let settings = ChshSettings::optimal();
    let [a, a2] = settings.alice;
    let [b, b2] = settings.bob;

    // Φ+ correlator for analyzers at a and b is cos 2(a − b)
    let e = |x: f64, y: f64| (2.0 * (x - y)).cos();
    let oracle = (e(a, b) - e(a, b2) + e(a2, b) + e(a2, b2)).abs();
    let phi = bell_pair(BellState::PhiPlus);
    let s = chsh_value(&phi, &settings, &[]).expect("chsh evaluates");
    o.check((s - 2.0 * SQRT_2).abs() <= 1e-9, format!("Φ+ optimal S={s:.12} (2√2={:.12})", 2.0 * SQRT_2));
    o.check((oracle - 2.0 * SQRT_2).abs() <= 1e-9, format!("closed-form oracle S={oracle:.12}"));

    let infiltrated = probe_infiltrate(&phi).expect("probe applies");
    let s_inf = chsh_value(&infiltrated, &settings, &[2]).expect("chsh evaluates");
    // dephased pair: correlator cos 2x · cos 2y
    let e_inf = |x: f64, y: f64| (2.0 * x).cos() * (2.0 * y).cos();
    let oracle_inf = (e_inf(a, b) - e_inf(a, b2) + e_inf(a2, b) + e_inf(a2, b2)).abs();
    o.check(s_inf <= 2.0 + 1e-9, format!("infiltrated S={s_inf:.12} <= 2"));
    o.check((s_inf - oracle_inf).abs() <= 1e-9, format!("infiltrated oracle S={oracle_inf:.12}"));

    let streams = RngStreams::new(SEED);
    let cfg = E91Config::new(10_000);
    let mut detected = 0;
    for run in 0..100 {
        let mut probe = EntanglingProbe::default();
        let session = run_e91(&cfg, Some(&mut probe), &mut streams.stream("acceptance/e91", run)).expect("e91 runs");
        detected += session.eavesdrop_detected as u32;
    }
    o.check(detected >= 99, format!("E91 flagged {detected}/100 probe-infiltrated runs (>= 99)"));
    let honest = run_e91(&cfg, None, &mut streams.stream("acceptance/e91-honest", 0)).expect("e91 runs");
    o.check(!honest.eavesdrop_detected, format!("honest E91 run not flagged (S={:?})", honest.chsh_estimate));
    o
}

/// Probability that at least two of three independent bits flip, summed
/// over all eight flip patterns.
fn majority_failure_oracle(p: f64) -> f64 {
    (0u8..8)
        .filter(|m| m.count_ones() >= 2)
        .map(|m| p.powi(m.count_ones() as i32) * (1.0 - p).powi(3 - m.count_ones() as i32))
        .sum()
}

fn criterion_6() -> Outcome {
    let mut o = Outcome::new();
    let streams = RngStreams::new(SEED);
    let n = 100_000u64;
    for (i, p) in [0.05, 0.1, 0.2, 0.3].into_iter().enumerate() {
        for (mode, expected) in [(NoiseMode::Iid, majority_failure_oracle(p)), (NoiseMode::Burst2, p)] {
            let r = qec_bitflip_experiment(n, p, mode, &mut streams.stream(&format!("acceptance/qec/{mode}"), i as u64)).expect("qec runs");
            let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
            let dev = (r.logical_error_rate - expected).abs();
            o.check(
                dev <= 3.0 * sigma,
                format!("{mode} p={p}: rate={:.5} expected={expected:.5} ({:.2}σ)", r.logical_error_rate, dev / sigma),
            );
            if mode == NoiseMode::Iid {
                let closed = 3.0 * p * p - 2.0 * p * p * p;
                o.check((closed - expected).abs() < 1e-12, format!("8-pattern oracle matches 3p²−2p³ at p={p}"));
            }
        }
    }
    o
}

fn criterion_7() -> Outcome {
    let mut o = Outcome::new();
    let streams = RngStreams::new(SEED);
    let trials = 10_000u64;
    for k in [2usize, 8, 16] {
        let mut rng = streams.stream("acceptance/interlock", k as u64);
        let mut detected = 0u64;
        for _ in 0..trials {
            detected += interlock_exchange(k, true, &mut rng).expect("interlock runs").detected as u64;
        }
        let predicted = 1.0 - 0.5f64.powi(k as i32 / 2);
        let rate = detected as f64 / trials as f64;
        let sigma = (predicted * (1.0 - predicted) / trials as f64).sqrt();
        o.check(
            (rate - predicted).abs() <= 3.0 * sigma,
            format!("k={k}: detection {rate:.4} vs 1−2^(−k/2)={predicted:.4} (3σ={:.4})", 3.0 * sigma),
        );
    }
    let clean = interlock_exchange(8, false, &mut streams.stream("acceptance/interlock-clean", 0)).expect("interlock runs");
    o.check(!clean.detected && clean.integrity_ok, "no false detection without Eve");
    o
}

fn criterion_8() -> Outcome {
    let mut o = Outcome::new();
    let mut runner = TestRunner::new(PropConfig {
        cases: 1_000,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let strategy = (1usize..=5, 1usize..=256).prop_flat_map(|(relays, len)| prop::collection::vec(prop::collection::vec(any::<bool>(), len), relays + 1));
    let result = runner.run(&strategy, |keys| {
        let trace = relay_chain(&keys).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(&trace.bob_key, &keys[0]);
        prop_assert_eq!(trace.exposures.len(), keys.len() - 1);
        for (i, exposure) in trace.exposures.iter().enumerate() {
            prop_assert_eq!(exposure.relay, i);
            prop_assert_eq!(&exposure.cleartext, &keys[0]);
        }
        Ok(())
    });
    o.check(result.is_ok(), format!("1000 random chains of 1–5 relays: {}", result.map(|_| "key recovered, every relay exposure logged".to_string()).unwrap_or_else(|e| e.to_string())));
    o
}

fn criterion_9() -> Outcome {
    let mut o = Outcome::new();
    let base = DosConfig::default();
    o.check(
        (base.attack_rate - 10.0 * base.legit_rate).abs() < 1e-12,
        format!("attack rate {} = 10 × legit rate {}", base.attack_rate, base.legit_rate),
    );
    let capped = DosConfig {
        mitigation: Mitigation::EmbryonicCap { cap: 8 },
        ..base.clone()
    };
    let (mut wins, mut conserved) = (0, 0);
    for run in 0..100 {
        let streams = RngStreams::new(SEED.wrapping_add(run));
        let none = dos_simulate(&base, &streams).expect("dos runs");
        let cap = dos_simulate(&capped, &streams).expect("dos runs");
        wins += (cap.legit_served_fraction > none.legit_served_fraction) as u32;
        for r in [&none, &cap] {
            let total = r.legit_served + r.attack_served + r.dropped + r.blocked + r.pending;
            conserved += (total == r.legit_arrivals + r.attack_arrivals) as u32;
        }
    }
    o.check(wins >= 95, format!("embryonic cap(8) beats no mitigation in {wins}/100 paired runs (>= 95)"));
    o.check(conserved == 200, format!("arrival conservation exact in {conserved}/200 runs"));
    o
}

fn criterion_10() -> Outcome {
    let mut o = Outcome::new();
    for experiment in Experiment::ALL {
        let overrides = Overrides {
            experiment: Some(experiment.name().to_string()),
            seed: Some(SEED),
            ..Overrides::default()
        };
        let config = resolve(None, overrides, None).expect("defaults resolve");
        let first = run_scenario(&config).expect("experiment runs");
        let echoed = resolve(Some(first.config.to_scenario()), Overrides::default(), None).expect("echo resolves");
        let second = run_scenario(&echoed).expect("experiment runs");
        let csv = (rows_to_csv(&first.rows).unwrap(), rows_to_csv(&second.rows).unwrap());
        let json = (serde_json::to_string(&first.rows).unwrap(), serde_json::to_string(&second.rows).unwrap());
        o.check(
            echoed == config && csv.0 == csv.1 && json.0 == json.1 && !first.rows.is_empty(),
            format!("{}: {} rows byte-identical on re-run from echoed config", experiment.name(), first.rows.len()),
        );
    }
    let sum = catalog_checksum();
    o.check(sum == CATALOG_SHA256, format!("catalog sha256 {sum}"));
    o.check(threat_catalog().len() == 11, "catalog has 11 entries");
    o
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "PNS photon distributions", criterion_1),
        (2, "Trojan-horse gain", criterion_2),
        (3, "untrusted-repeater path decay", criterion_3),
        (4, "BB84 oracle suite", criterion_4),
        (5, "CHSH suite", criterion_5),
        (6, "QEC suite", criterion_6),
        (7, "interlock suite", criterion_7),
        (8, "relay chain", criterion_8),
        (9, "DoS suite", criterion_9),
        (10, "determinism and catalog pin", criterion_10),
    ];
    let mut failed = 0;
    for (n, name, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let status = if outcome.passed() { "PASS" } else { "FAIL" };
        println!("{status} criterion {n}: {name} ({:.1}s)", start.elapsed().as_secs_f64());
        for (ok, what) in &outcome.checks {
            println!("    [{}] {what}", if *ok { "ok" } else { "FAILED" });
        }
        failed += !outcome.passed() as u32;
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
