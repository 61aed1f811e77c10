//! Seeded randomness, distribution sampling, histograms and the test
//! statistics used to compare photon-count distributions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Generator used by every simulation in the crate.
///
/// ChaCha8 output is specified bit-for-bit, so a seed reproduces the same
/// stream on every platform.
pub type SimRng = ChaCha8Rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("mean photon number must be finite and non-negative, got {0}")]
    InvalidMean(f64),
    #[error("histogram bins do not align ({left} vs {right})")]
    BinMismatch { left: usize, right: usize },
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("chi-square test needs at least two bins after merging, got {0}")]
    Degenerate(usize),
}

/// Root of the seeded stream hierarchy.
///
/// Streams are keyed by `(root seed, label, index)`. The triple is hashed
/// with SHA-256 and the digest seeds a fresh [`SimRng`], so streams with
/// distinct keys are independent and can be consumed from any thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStreams {
    root: u64,
}

impl RngStreams {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn stream(&self, label: &str, index: u64) -> SimRng {
        let mut hasher = Sha256::new();
        hasher.update(self.root.to_le_bytes());
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
        hasher.update(index.to_le_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        SimRng::from_seed(seed)
    }
}

/// Draws from Poisson(`mean`).
///
/// Means below 10 use CDF inversion on a single uniform variate, which is
/// exact and reproducible given the uniform stream. Larger means fall back
/// to `rand_distr`.
pub fn poisson_sample<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64, StatsError> {
    if !mean.is_finite() || mean < 0.0 {
        return Err(StatsError::InvalidMean(mean));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    if mean >= 10.0 {
        let dist = rand_distr::Poisson::new(mean).map_err(|_| StatsError::InvalidMean(mean))?;
        return Ok(rng.sample(dist) as u64);
    }
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u >= cdf {
        k += 1;
        p *= mean / k as f64;
        // rounding can leave the cdf a hair under 1
        if p <= cdf * f64::EPSILON && k as f64 > mean {
            break;
        }
        cdf += p;
    }
    Ok(k)
}

/// Number of successes in `trials` independent Bernoulli(`p`) draws.
///
/// Photon counts are small, so this draws one uniform per trial.
pub fn binomial_sample<R: Rng + ?Sized>(trials: u64, p: f64, rng: &mut R) -> u64 {
    if p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return trials;
    }
    (0..trials).filter(|_| rng.random::<f64>() < p).count() as u64
}

/// Poisson probability mass at `k`.
pub fn poisson_pmf(k: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let ln = k as f64 * mean.ln() - mean - statrs::function::gamma::ln_gamma(k as f64 + 1.0);
    ln.exp()
}

/// Integer-valued histogram with bins `0..=max_bin`; the last bin collects
/// every value `>= max_bin`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    counts: Vec<u64>,
    total: u64,
}

impl Histogram {
    pub fn new(max_bin: usize) -> Self {
        Self {
            counts: vec![0; max_bin + 1],
            total: 0,
        }
    }

    pub fn from_samples<I: IntoIterator<Item = u64>>(max_bin: usize, samples: I) -> Self {
        let mut hist = Self::new(max_bin);
        for value in samples {
            hist.record(value);
        }
        hist
    }

    pub fn record(&mut self, value: u64) {
        let last = self.counts.len() - 1;
        let bin = usize::try_from(value).map_or(last, |v| v.min(last));
        self.counts[bin] += 1;
        self.total += 1;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn num_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn max_bin(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn proportion(&self, bin: usize) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.counts[bin] as f64 / self.total as f64
    }

    pub fn mean(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let sum: u64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(bin, &c)| bin as u64 * c)
            .sum();
        sum as f64 / self.total as f64
    }

    /// Folds every bin above `max_bin` into a new overflow bin.
    pub fn rebin(&self, max_bin: usize) -> Self {
        if max_bin >= self.max_bin() {
            let mut counts = self.counts.clone();
            // the old overflow bin stays where it was; widen with empty bins
            counts.resize(max_bin + 1, 0);
            return Self {
                counts,
                total: self.total,
            };
        }
        let mut counts = self.counts[..=max_bin].to_vec();
        counts[max_bin] += self.counts[max_bin + 1..].iter().sum::<u64>();
        Self {
            counts,
            total: self.total,
        }
    }

    pub fn merge(&mut self, other: &Histogram) -> Result<(), StatsError> {
        if other.counts.len() != self.counts.len() {
            return Err(StatsError::BinMismatch {
                left: self.counts.len(),
                right: other.counts.len(),
            });
        }
        for (mine, theirs) in self.counts.iter_mut().zip(&other.counts) {
            *mine += theirs;
        }
        self.total += other.total;
        Ok(())
    }

    /// Two-column `bin,count` CSV with a header row and LF endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,count\n");
        for (bin, count) in self.counts.iter().enumerate() {
            out.push_str(&format!("{bin},{count}\n"));
        }
        out
    }
}

/// Per-bin z statistics of one histogram against another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreSeries {
    pub z: Vec<f64>,
    pub max_abs: f64,
    pub n_a: u64,
    pub n_b: u64,
}

/// Pooled two-proportion z-score per bin.
///
/// `z = (p_a - p_b) / sqrt(p (1 - p) (1/n_a + 1/n_b))` with `p` the pooled
/// proportion of the bin. Bins empty in both inputs, and bins holding every
/// sample of both, give `z = 0`.
pub fn zscore_compare(a: &Histogram, b: &Histogram) -> Result<ZScoreSeries, StatsError> {
    if a.num_bins() != b.num_bins() {
        return Err(StatsError::BinMismatch {
            left: a.num_bins(),
            right: b.num_bins(),
        });
    }
    if a.total == 0 || b.total == 0 {
        return Err(StatsError::EmptyHistogram);
    }
    let (na, nb) = (a.total as f64, b.total as f64);
    let z: Vec<f64> = a
        .counts
        .iter()
        .zip(&b.counts)
        .map(|(&ca, &cb)| {
            let pooled = (ca + cb) as f64 / (na + nb);
            let var = pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb);
            if var <= 0.0 {
                0.0
            } else {
                (ca as f64 / na - cb as f64 / nb) / var.sqrt()
            }
        })
        .collect();
    let max_abs = z.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    Ok(ZScoreSeries {
        z,
        max_abs,
        n_a: a.total,
        n_b: b.total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness-of-fit of `hist` against the pmf `pmf(bin)`.
///
/// The overflow bin is tested against the pmf's tail mass. Adjacent bins
/// are merged left to right until each group expects at least five
/// samples; a short remainder folds into the last group.
pub fn chi_square_gof<F>(hist: &Histogram, pmf: F) -> Result<ChiSquare, StatsError>
where
    F: Fn(u64) -> f64,
{
    if hist.total == 0 {
        return Err(StatsError::EmptyHistogram);
    }
    let n = hist.total as f64;
    let last = hist.max_bin();
    let mut probs: Vec<f64> = (0..last).map(|k| pmf(k as u64)).collect();
    let head: f64 = probs.iter().sum();
    probs.push((1.0 - head).max(0.0));

    let mut groups: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for (bin, p) in probs.iter().enumerate() {
        obs += hist.counts[bin] as f64;
        exp += p * n;
        if exp >= 5.0 {
            groups.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if obs > 0.0 || exp > 0.0 {
        match groups.last_mut() {
            Some(g) => {
                g.0 += obs;
                g.1 += exp;
            }
            None => groups.push((obs, exp)),
        }
    }
    if groups.len() < 2 {
        return Err(StatsError::Degenerate(groups.len()));
    }
    let statistic: f64 = groups
        .iter()
        .map(|&(o, e)| if e > 0.0 { (o - e).powi(2) / e } else { 0.0 })
        .sum();
    let dof = groups.len() - 1;
    let p_value = statrs::function::gamma::gamma_ur(dof as f64 / 2.0, statistic / 2.0);
    Ok(ChiSquare {
        statistic,
        dof,
        p_value,
    })
}

/// Sampled CHSH estimator: tallies ±1 outcome products for the four
/// analyzer-setting pairs `(a, b), (a, b'), (a', b), (a', b')`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChshTally {
    sums: [i64; 4],
    counts: [u64; 4],
}

impl ChshTally {
    pub fn new() -> Self {
        Self::default()
    }

    /// `alice_setting` / `bob_setting` are 0 for the primed-free angle and 1
    /// for the primed one; bits follow the 0 ↔ +1 convention.
    pub fn record(&mut self, alice_setting: usize, bob_setting: usize, alice_bit: bool, bob_bit: bool) {
        let slot = alice_setting * 2 + bob_setting;
        self.sums[slot] += if alice_bit == bob_bit { 1 } else { -1 };
        self.counts[slot] += 1;
    }

    pub fn correlator(&self, alice_setting: usize, bob_setting: usize) -> Option<f64> {
        let slot = alice_setting * 2 + bob_setting;
        (self.counts[slot] > 0).then(|| self.sums[slot] as f64 / self.counts[slot] as f64)
    }

    pub fn samples(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `|E(a,b) - E(a,b') + E(a',b) + E(a',b')|`, or `None` while any
    /// setting pair is still unsampled.
    pub fn estimate(&self) -> Option<f64> {
        let e = |a, b| self.correlator(a, b);
        Some((e(0, 0)? - e(0, 1)? + e(1, 0)? + e(1, 1)?).abs())
    }
}

/// One-sided sign-test p-value: `P(X >= wins)` for `X ~ Binomial(trials, 1/2)`.
pub fn sign_test_p_value(wins: u64, trials: u64) -> f64 {
    if wins == 0 {
        return 1.0;
    }
    let ln_half = 0.5f64.ln() * trials as f64;
    (wins..=trials)
        .map(|k| (ln_choose(trials, k) + ln_half).exp())
        .sum::<f64>()
        .min(1.0)
}

fn ln_choose(n: u64, k: u64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}
