//! SYN-backlog denial of service as a discrete-event queue.
//!
//! Legitimate requests finish their handshake after `handshake_ms` and join
//! the service queue. Attack requests stay embryonic until the embryonic
//! timeout, holding a backlog slot the whole time.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::NetworkError;
use crate::stats::RngStreams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mitigation {
    None,
    /// Per-source token bucket refilled at `rate_per_s`, holding at most
    /// `burst` tokens.
    RateLimit { rate_per_s: f64, burst: f64 },
    /// A source may hold at most `cap` embryonic entries at once.
    EmbryonicCap { cap: usize },
    /// Suspicion-ordered admission and service.
    SuspicionSched,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DosConfig {
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
    pub mitigation: Mitigation,
}

impl Default for DosConfig {
    fn default() -> Self {
        Self {
            duration_s: 10.0,
            legit_rate: 20.0,
            attack_rate: 200.0,
            servers: 4,
            backlog: 64,
            handshake_ms: 50.0,
            embryonic_timeout_ms: 3000.0,
            mean_service_ms: 100.0,
            legit_sources: 100,
            attack_sources: 1,
            suspicion_window_ms: 1000.0,
            mitigation: Mitigation::None,
        }
    }
}

impl DosConfig {
    fn validate(&self) -> Result<(), NetworkError> {
        let bad = |m: String| Err(NetworkError::InvalidSettings(m));
        if !(self.legit_rate >= 0.0 && self.attack_rate >= 0.0) {
            return bad("arrival rates must be non-negative".into());
        }
        if self.servers == 0 {
            return bad("need at least one server".into());
        }
        if self.legit_sources == 0 || (self.attack_rate > 0.0 && self.attack_sources == 0) {
            return bad("every active traffic class needs a source".into());
        }
        if !(self.duration_s >= 0.0 && self.mean_service_ms > 0.0 && self.handshake_ms >= 0.0 && self.embryonic_timeout_ms >= 0.0) {
            return bad("durations must be non-negative and mean service time positive".into());
        }
        if let Mitigation::RateLimit { rate_per_s, burst } = self.mitigation {
            if !(rate_per_s >= 0.0 && burst >= 1.0) {
                return bad(format!("rate limit needs rate >= 0 and burst >= 1, got {rate_per_s}/{burst}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosReport {
    pub legit_arrivals: u64,
    pub attack_arrivals: u64,
    pub legit_served: u64,
    pub attack_served: u64,
    /// Rejected for a full backlog, evicted, or timed out while embryonic.
    pub dropped: u64,
    /// Rejected by the mitigation before reaching the backlog.
    pub blocked: u64,
    /// Still in the backlog or service queue when the run ends.
    pub pending: u64,
    /// Attack requests that entered the backlog.
    pub attack_admitted: u64,
    pub legit_served_fraction: f64,
    pub attack_served_fraction: f64,
    pub mean_legit_latency_ms: f64,
}

impl DosReport {
    pub fn conserves_arrivals(&self) -> bool {
        self.legit_served + self.attack_served + self.dropped + self.blocked + self.pending
            == self.legit_arrivals + self.attack_arrivals
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    LegitArrival,
    AttackArrival,
    HandshakeDone(usize),
    EmbryonicTimeout(usize),
    ServiceDone(usize),
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Embryonic,
    Queued,
    InService,
    Finished,
}

#[derive(Debug, Clone)]
struct Request {
    source: usize,
    legitimate: bool,
    arrival_ms: f64,
    suspicion: f64,
    stage: Stage,
}

struct TokenBucket {
    tokens: f64,
    last_ms: f64,
}

/// Per-source arrival counts over a trailing window.
struct RateWindow {
    window_ms: f64,
    recent: VecDeque<(f64, usize)>,
    counts: Vec<u64>,
    seen: Vec<bool>,
    num_seen: usize,
}

impl RateWindow {
    fn new(sources: usize, window_ms: f64) -> Self {
        Self {
            window_ms,
            recent: VecDeque::new(),
            counts: vec![0; sources],
            seen: vec![false; sources],
            num_seen: 0,
        }
    }

    /// Records an arrival and returns the source's rate z-score against
    /// every source seen so far, floored at 0.
    fn observe(&mut self, now: f64, source: usize) -> f64 {
        while let Some(&(t, s)) = self.recent.front() {
            if t > now - self.window_ms {
                break;
            }
            self.counts[s] -= 1;
            self.recent.pop_front();
        }
        self.recent.push_back((now, source));
        self.counts[source] += 1;
        if !self.seen[source] {
            self.seen[source] = true;
            self.num_seen += 1;
        }
        let n = self.num_seen as f64;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for (c, _) in self.counts.iter().zip(&self.seen).filter(|(_, &seen)| seen) {
            let c = *c as f64;
            sum += c;
            sum_sq += c * c;
        }
        let mean = sum / n;
        let var = (sum_sq / n - mean * mean).max(0.0);
        if var == 0.0 {
            0.0
        } else {
            ((self.counts[source] as f64 - mean) / var.sqrt()).max(0.0)
        }
    }
}

struct Sim<'a> {
    cfg: &'a DosConfig,
    now: f64,
    seq: u64,
    heap: BinaryHeap<Reverse<Event>>,
    requests: Vec<Request>,
    backlog: Vec<usize>,
    embryonic_by_source: Vec<usize>,
    queue: Vec<usize>,
    busy: usize,
    buckets: Vec<TokenBucket>,
    window: RateWindow,
    report: DosReport,
    latency_sum: f64,
}

impl Sim<'_> {
    fn schedule(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Reverse(Event {
            time,
            seq: self.seq,
            kind,
        }));
    }

    fn rate_limited(&mut self, source: usize) -> bool {
        let Mitigation::RateLimit { rate_per_s, burst } = self.cfg.mitigation else {
            return false;
        };
        let bucket = &mut self.buckets[source];
        bucket.tokens = (bucket.tokens + (self.now - bucket.last_ms) * rate_per_s / 1000.0).min(burst);
        bucket.last_ms = self.now;
        if bucket.tokens >= 1.0 {
            bucket.tokens -= 1.0;
            false
        } else {
            true
        }
    }

    fn leave_backlog(&mut self, id: usize) {
        if let Some(pos) = self.backlog.iter().position(|&b| b == id) {
            self.backlog.remove(pos);
            self.embryonic_by_source[self.requests[id].source] -= 1;
        }
    }

    fn arrive(&mut self, source: usize, legitimate: bool) {
        let suspicion = self.window.observe(self.now, source);
        let id = self.requests.len();
        self.requests.push(Request {
            source,
            legitimate,
            arrival_ms: self.now,
            suspicion,
            stage: Stage::Finished,
        });
        if legitimate {
            self.report.legit_arrivals += 1;
        } else {
            self.report.attack_arrivals += 1;
        }

        if self.rate_limited(source) {
            self.report.blocked += 1;
            return;
        }
        if let Mitigation::EmbryonicCap { cap } = self.cfg.mitigation {
            if self.embryonic_by_source[source] >= cap {
                self.report.blocked += 1;
                return;
            }
        }
        if self.backlog.len() >= self.cfg.backlog {
            let evict = match self.cfg.mitigation {
                Mitigation::SuspicionSched => self
                    .backlog
                    .iter()
                    .copied()
                    .max_by(|&a, &b| {
                        let (ra, rb) = (&self.requests[a], &self.requests[b]);
                        ra.suspicion.total_cmp(&rb.suspicion).then(b.cmp(&a))
                    })
                    .filter(|&v| self.requests[v].suspicion > suspicion),
                _ => None,
            };
            match evict {
                Some(victim) => {
                    self.leave_backlog(victim);
                    self.requests[victim].stage = Stage::Finished;
                    self.report.dropped += 1;
                }
                None => {
                    self.report.dropped += 1;
                    return;
                }
            }
        }
        self.requests[id].stage = Stage::Embryonic;
        self.backlog.push(id);
        self.embryonic_by_source[source] += 1;
        if !legitimate {
            self.report.attack_admitted += 1;
        }
        if legitimate {
            self.schedule(self.now + self.cfg.handshake_ms, EventKind::HandshakeDone(id));
        } else {
            self.schedule(self.now + self.cfg.embryonic_timeout_ms, EventKind::EmbryonicTimeout(id));
        }
    }

    fn next_from_queue(&mut self) -> Option<usize> {
        if self.queue.is_empty() {
            return None;
        }
        let pos = match self.cfg.mitigation {
            Mitigation::SuspicionSched => {
                let key = |&(_, &id): &(usize, &usize)| (self.requests[id].suspicion, id);
                self.queue
                    .iter()
                    .enumerate()
                    .min_by(|a, b| {
                        let (sa, ia) = key(a);
                        let (sb, ib) = key(b);
                        sa.total_cmp(&sb).then(ia.cmp(&ib))
                    })
                    .map(|(pos, _)| pos)
                    .unwrap()
            }
            _ => 0,
        };
        Some(self.queue.remove(pos))
    }

    fn dispatch<R: Rng + ?Sized>(&mut self, service: &Exp<f64>, rng: &mut R) {
        while self.busy < self.cfg.servers {
            let Some(id) = self.next_from_queue() else { break };
            self.busy += 1;
            self.requests[id].stage = Stage::InService;
            let t = self.now + service.sample(rng);
            self.schedule(t, EventKind::ServiceDone(id));
        }
    }
}

/// Runs arrivals for `duration_s`, then drains every pending event.
///
/// Arrival and service times come from separate streams of `streams`, so two
/// mitigations run with the same seed see the same arrival sequence.
pub fn dos_simulate(config: &DosConfig, streams: &RngStreams) -> Result<DosReport, NetworkError> {
    config.validate()?;
    let mut legit_rng = streams.stream("dos/legit", 0);
    let mut attack_rng = streams.stream("dos/attack", 0);
    let mut service_rng = streams.stream("dos/service", 0);
    let service = Exp::new(1.0 / config.mean_service_ms).expect("positive mean");
    let horizon_ms = config.duration_s * 1000.0;
    let sources = config.legit_sources + config.attack_sources;

    let mut sim = Sim {
        cfg: config,
        now: 0.0,
        seq: 0,
        heap: BinaryHeap::new(),
        requests: Vec::new(),
        backlog: Vec::new(),
        embryonic_by_source: vec![0; sources],
        queue: Vec::new(),
        busy: 0,
        buckets: (0..sources)
            .map(|_| TokenBucket {
                tokens: match config.mitigation {
                    Mitigation::RateLimit { burst, .. } => burst,
                    _ => 0.0,
                },
                last_ms: 0.0,
            })
            .collect(),
        window: RateWindow::new(sources, config.suspicion_window_ms),
        report: DosReport {
            legit_arrivals: 0,
            attack_arrivals: 0,
            legit_served: 0,
            attack_served: 0,
            dropped: 0,
            blocked: 0,
            pending: 0,
            attack_admitted: 0,
            legit_served_fraction: 0.0,
            attack_served_fraction: 0.0,
            mean_legit_latency_ms: 0.0,
        },
        latency_sum: 0.0,
    };

    let gap = |rate: f64, rng: &mut crate::SimRng| -> Option<f64> {
        (rate > 0.0).then(|| Exp::new(rate / 1000.0).expect("positive rate").sample(rng))
    };
    if let Some(t) = gap(config.legit_rate, &mut legit_rng) {
        sim.schedule(t, EventKind::LegitArrival);
    }
    if let Some(t) = gap(config.attack_rate, &mut attack_rng) {
        sim.schedule(t, EventKind::AttackArrival);
    }

    while let Some(Reverse(event)) = sim.heap.pop() {
        if matches!(event.kind, EventKind::LegitArrival | EventKind::AttackArrival) && event.time >= horizon_ms {
            continue;
        }
        sim.now = event.time;
        match event.kind {
            EventKind::LegitArrival => {
                let source = legit_rng.random_range(0..config.legit_sources);
                sim.arrive(source, true);
                if let Some(t) = gap(config.legit_rate, &mut legit_rng) {
                    sim.schedule(sim.now + t, EventKind::LegitArrival);
                }
            }
            EventKind::AttackArrival => {
                let source = config.legit_sources + attack_rng.random_range(0..config.attack_sources);
                sim.arrive(source, false);
                if let Some(t) = gap(config.attack_rate, &mut attack_rng) {
                    sim.schedule(sim.now + t, EventKind::AttackArrival);
                }
            }
            EventKind::HandshakeDone(id) => {
                if sim.requests[id].stage == Stage::Embryonic {
                    sim.leave_backlog(id);
                    sim.requests[id].stage = Stage::Queued;
                    sim.queue.push(id);
                }
            }
            EventKind::EmbryonicTimeout(id) => {
                if sim.requests[id].stage == Stage::Embryonic {
                    sim.leave_backlog(id);
                    sim.requests[id].stage = Stage::Finished;
                    sim.report.dropped += 1;
                }
            }
            EventKind::ServiceDone(id) => {
                sim.busy -= 1;
                let req = &mut sim.requests[id];
                req.stage = Stage::Finished;
                if req.legitimate {
                    sim.report.legit_served += 1;
                    sim.latency_sum += sim.now - req.arrival_ms;
                } else {
                    sim.report.attack_served += 1;
                }
            }
        }
        sim.dispatch(&service, &mut service_rng);
    }

    let mut report = sim.report;
    report.pending = sim
        .requests
        .iter()
        .filter(|r| r.stage != Stage::Finished)
        .count() as u64;
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    report.legit_served_fraction = if report.legit_arrivals == 0 {
        1.0
    } else {
        ratio(report.legit_served, report.legit_arrivals)
    };
    report.attack_served_fraction = ratio(report.attack_served, report.attack_arrivals);
    report.mean_legit_latency_ms = if report.legit_served == 0 {
        0.0
    } else {
        sim.latency_sum / report.legit_served as f64
    };
    Ok(report)
}
