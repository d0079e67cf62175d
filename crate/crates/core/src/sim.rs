//! Slot-level simulation of the MQMS queue recursion
//! `X(t) = (X(t−1) − (C(t) ⊛ I(t))·1ᵀ)⁺ + A(t)` under Max-Weight or AS/LCQ.
//!
//! Channel states and arrivals are drawn i.i.d. across slots from one
//! ChaCha stream per replication; replication `r` is seeded with
//! `seed + r`, so results do not depend on how replications are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelMatrix, ChannelSampler, DiscreteChannelModel};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::region::{membership_margin, StabilityRegion, Verdict};
use crate::TieRule;

/// Arrival process of a single queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ArrivalProcess {
    /// Token scheme emitting `⌊rate·t⌋ − ⌊rate·(t−1)⌋` packets in slot `t`.
    Deterministic { rate: f64 },
    /// `batch` packets with probability `prob`, otherwise none.
    BernoulliBatch { batch: u64, prob: f64 },
    /// Explicit pmf over `{0, …, pmf.len() − 1}`.
    BoundedPmf { pmf: Vec<f64> },
}

impl ArrivalProcess {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        match self {
            ArrivalProcess::Deterministic { rate } => {
                if !rate.is_finite() || *rate < 0.0 {
                    return bad(format!("deterministic rate {rate} must be finite and >= 0"));
                }
            }
            ArrivalProcess::BernoulliBatch { prob, .. } => {
                if !(0.0..=1.0).contains(prob) {
                    return bad(format!("batch probability {prob} outside [0, 1]"));
                }
            }
            ArrivalProcess::BoundedPmf { pmf } => {
                if pmf.is_empty() {
                    return bad("empty arrival pmf".into());
                }
                if let Some(&p) = pmf.iter().find(|p| !p.is_finite() || **p < 0.0) {
                    return Err(Error::NegativeProbability {
                        what: "arrival pmf".into(),
                        value: p,
                    });
                }
                let sum: f64 = pmf.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::NotNormalized {
                        what: "arrival pmf".into(),
                        sum,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            ArrivalProcess::Deterministic { rate } => *rate,
            ArrivalProcess::BernoulliBatch { batch, prob } => prob * *batch as f64,
            ArrivalProcess::BoundedPmf { pmf } => {
                pmf.iter().enumerate().map(|(a, p)| a as f64 * p).sum()
            }
        }
    }

    /// Largest realization.
    pub fn support_cap(&self) -> u64 {
        match self {
            ArrivalProcess::Deterministic { rate } => rate.ceil() as u64,
            ArrivalProcess::BernoulliBatch { batch, prob } => {
                if *prob > 0.0 {
                    *batch
                } else {
                    0
                }
            }
            ArrivalProcess::BoundedPmf { pmf } => {
                pmf.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u64
            }
        }
    }

    /// `max_t E[A(t)²]`.
    pub fn max_second_moment(&self) -> f64 {
        match self {
            // deterministic: every slot emits either floor(rate) or ceil(rate)
            ArrivalProcess::Deterministic { rate } => {
                let top = if rate.fract() == 0.0 {
                    *rate
                } else {
                    rate.ceil()
                };
                top * top
            }
            ArrivalProcess::BernoulliBatch { batch, prob } => prob * (*batch as f64).powi(2),
            ArrivalProcess::BoundedPmf { pmf } => pmf
                .iter()
                .enumerate()
                .map(|(a, p)| (a as f64).powi(2) * p)
                .sum(),
        }
    }

    /// Arrivals during slot `t ≥ 1`.
    pub fn sample<R: Rng + ?Sized>(&self, t: u64, rng: &mut R) -> u64 {
        match self {
            ArrivalProcess::Deterministic { rate } => {
                ((rate * t as f64).floor() - (rate * (t - 1) as f64).floor()) as u64
            }
            ArrivalProcess::BernoulliBatch { batch, prob } => {
                if rng.random::<f64>() < *prob {
                    *batch
                } else {
                    0
                }
            }
            ArrivalProcess::BoundedPmf { pmf } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (a, p) in pmf.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return a as u64;
                    }
                }
                self.support_cap()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalModel {
    pub queues: Vec<ArrivalProcess>,
}

impl ArrivalModel {
    pub fn new(queues: Vec<ArrivalProcess>) -> Result<Self> {
        let model = Self { queues };
        model.validate()?;
        Ok(model)
    }

    /// Identical Bernoulli(prob) single-packet arrivals at every queue.
    pub fn bernoulli(probs: &[f64]) -> Result<Self> {
        Self::new(
            probs
                .iter()
                .map(|&prob| ArrivalProcess::BernoulliBatch { batch: 1, prob })
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.queues.is_empty() {
            return Err(Error::InvalidArgument("arrival model has no queues".into()));
        }
        self.queues.iter().try_for_each(ArrivalProcess::validate)
    }

    pub fn len(&self) -> usize {
        self.queues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queues.is_empty()
    }

    pub fn means(&self) -> Vec<f64> {
        self.queues.iter().map(ArrivalProcess::mean).collect()
    }

    /// `A_max²`: the largest per-queue second moment.
    pub fn a_max_sq(&self) -> f64 {
        self.queues
            .iter()
            .map(ArrivalProcess::max_second_moment)
            .fold(0.0, f64::max)
    }
}

/// Server-to-queue assignment; every server is always assigned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    n: usize,
    queue_of_server: Vec<usize>,
}

impl Allocation {
    pub fn new(n: usize, queue_of_server: Vec<usize>) -> Result<Self> {
        if queue_of_server.iter().any(|&q| q >= n) {
            return Err(Error::InvalidArgument(
                "server assigned to unknown queue".into(),
            ));
        }
        Ok(Self { n, queue_of_server })
    }

    pub fn queue_of_server(&self) -> &[usize] {
        &self.queue_of_server
    }

    /// 0/1 matrix `I` with one 1 per column.
    pub fn to_matrix(&self) -> Vec<Vec<u8>> {
        let mut m = vec![vec![0u8; self.queue_of_server.len()]; self.n];
        for (k, &q) in self.queue_of_server.iter().enumerate() {
            m[q][k] = 1;
        }
        m
    }

    /// Per-queue offered service `(C ⊛ I)·1ᵀ`.
    pub fn service(&self, c: &ChannelMatrix) -> Vec<u64> {
        let mut s = vec![0u64; self.n];
        for (k, &q) in self.queue_of_server.iter().enumerate() {
            s[q] += u64::from(c.get(q, k));
        }
        s
    }

    /// Weighted service `Σ_n X_n Σ_k C[n,k] I[n,k]`.
    pub fn weight(&self, x: &[u64], c: &ChannelMatrix) -> u128 {
        self.queue_of_server
            .iter()
            .enumerate()
            .map(|(k, &q)| u128::from(x[q]) * u128::from(c.get(q, k)))
            .sum()
    }
}

fn mw_assign(x: &[u64], c: &ChannelMatrix, tie: TieRule, out: &mut [usize]) {
    for (k, slot) in out.iter_mut().enumerate() {
        let mut best = (0usize, 0u128);
        for (n, &xn) in x.iter().enumerate() {
            let w = u128::from(xn) * u128::from(c.get(n, k));
            let better = match tie {
                TieRule::LowestIndex => n == 0 || w > best.1,
                TieRule::HighestIndex => n == 0 || w >= best.1,
            };
            if better {
                best = (n, w);
            }
        }
        *slot = best.0;
    }
}

/// Max-Weight: each server independently goes to `argmax_n X_n·C[n,k]`.
pub fn mw_allocate(x: &[u64], c: &ChannelMatrix, tie: TieRule) -> Allocation {
    let mut out = vec![0; c.cols()];
    mw_assign(x, c, tie, &mut out);
    Allocation {
        n: c.rows(),
        queue_of_server: out,
    }
}

fn lcq_assign(x: &[u64], c: &ChannelMatrix, order: &[usize], out: &mut [usize]) {
    for &k in order {
        let mut best: Option<usize> = None;
        for (n, &xn) in x.iter().enumerate() {
            if c.get(n, k) == 1 && best.is_none_or(|b| xn > x[b]) {
                best = Some(n);
            }
        }
        out[k] = best.unwrap_or(0);
    }
}

/// Any Server / Longest Connected Queue on an ON-OFF channel. Servers are
/// visited in `server_order` (all servers by default); a server with no
/// connected queue is parked on queue 0 and delivers nothing.
pub fn as_lcq_allocate(
    x: &[u64],
    c: &ChannelMatrix,
    server_order: Option<&[usize]>,
) -> Result<Allocation> {
    if c.entries().iter().any(|&v| v > 1) {
        return Err(Error::InvalidArgument(
            "AS/LCQ needs a binary channel matrix".into(),
        ));
    }
    let default: Vec<usize> = (0..c.cols()).collect();
    let order = server_order.unwrap_or(&default);
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != default {
        return Err(Error::InvalidArgument(
            "server order must be a permutation of 0..K".into(),
        ));
    }
    let mut out = vec![0; c.cols()];
    lcq_assign(x, c, order, &mut out);
    Ok(Allocation {
        n: c.rows(),
        queue_of_server: out,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub next: Vec<u64>,
    /// Offered service `(C ⊛ I)·1ᵀ`.
    pub served: Vec<u64>,
    /// Packets actually removed, `min(X_n, served_n)`.
    pub departed: Vec<u64>,
}

/// One application of the queue recursion: service first, then arrivals.
pub fn step(x: &[u64], c: &ChannelMatrix, alloc: &Allocation, arrivals: &[u64]) -> StepOutcome {
    let served = alloc.service(c);
    let departed: Vec<u64> = x.iter().zip(&served).map(|(&x, &s)| x.min(s)).collect();
    let next = x
        .iter()
        .zip(&departed)
        .zip(arrivals)
        .map(|((&x, &d), &a)| x - d + a)
        .collect();
    StepOutcome {
        next,
        served,
        departed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Mw,
    AsLcq,
}

/// Queue vector and running totals of one replication.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimState {
    pub t: u64,
    pub queues: Vec<u64>,
    pub arrived: Vec<u64>,
    pub departed: Vec<u64>,
}

impl SimState {
    fn new(n: usize) -> Self {
        Self {
            t: 0,
            queues: vec![0; n],
            arrived: vec![0; n],
            departed: vec![0; n],
        }
    }

    /// `X_n(t) = X_n(0) + arrivals − departures` with `X(0) = 0`.
    pub fn is_conserved(&self) -> bool {
        self.queues
            .iter()
            .zip(&self.arrived)
            .zip(&self.departed)
            .all(|((&x, &a), &d)| a >= d && x == a - d)
    }
}

/// One row of a slot trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRow {
    pub t: u64,
    pub queues: Vec<u64>,
    pub served: Vec<u64>,
    pub arrived: Vec<u64>,
}

/// Single-replication simulator, advanced slot by slot.
pub struct Simulation<'a> {
    sampler: ChannelSampler,
    arrivals: &'a ArrivalModel,
    policy: Policy,
    tie: TieRule,
    rng: ChaCha8Rng,
    state: SimState,
    channel: ChannelMatrix,
    assignment: Vec<usize>,
    server_order: Vec<usize>,
    served: Vec<u64>,
    arrived_now: Vec<u64>,
    occupancy: Vec<u128>,
}

impl<'a> Simulation<'a> {
    pub fn new(
        model: &DiscreteChannelModel,
        arrivals: &'a ArrivalModel,
        policy: Policy,
        tie: TieRule,
        seed: u64,
    ) -> Result<Self> {
        let (n, k) = (model.num_queues(), model.num_servers());
        if arrivals.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} arrival processes for {n} queues",
                arrivals.len()
            )));
        }
        if policy == Policy::AsLcq && model.max_capacity() > 1 {
            return Err(Error::InvalidArgument(format!(
                "AS/LCQ needs ON-OFF channels, model has M = {}",
                model.max_capacity()
            )));
        }
        Ok(Self {
            sampler: model.sampler(),
            arrivals,
            policy,
            tie,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: SimState::new(n),
            channel: ChannelMatrix::new(n, k, vec![0; n * k])?,
            assignment: vec![0; k],
            server_order: (0..k).collect(),
            served: vec![0; n],
            arrived_now: vec![0; n],
            occupancy: vec![0; n],
        })
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    /// Advances one slot and returns `(served, arrived)` for that slot.
    pub fn advance(&mut self) -> (&[u64], &[u64]) {
        for (acc, &x) in self.occupancy.iter_mut().zip(&self.state.queues) {
            *acc += u128::from(x);
        }
        self.state.t += 1;
        let t = self.state.t;
        self.sampler.sample_into(&mut self.rng, &mut self.channel);
        for (slot, process) in self.arrived_now.iter_mut().zip(&self.arrivals.queues) {
            *slot = process.sample(t, &mut self.rng);
        }
        match self.policy {
            Policy::Mw => mw_assign(
                &self.state.queues,
                &self.channel,
                self.tie,
                &mut self.assignment,
            ),
            Policy::AsLcq => lcq_assign(
                &self.state.queues,
                &self.channel,
                &self.server_order,
                &mut self.assignment,
            ),
        }
        self.served.iter_mut().for_each(|s| *s = 0);
        for (k, &q) in self.assignment.iter().enumerate() {
            self.served[q] += u64::from(self.channel.get(q, k));
        }
        let st = &mut self.state;
        for n in 0..st.queues.len() {
            let gone = st.queues[n].min(self.served[n]);
            st.queues[n] = st.queues[n] - gone + self.arrived_now[n];
            st.departed[n] += gone;
            st.arrived[n] += self.arrived_now[n];
        }
        (&self.served, &self.arrived_now)
    }

    /// Per-queue `(1/t) Σ_{τ<t} X_n(τ)`.
    pub fn per_queue_averages(&self) -> Vec<f64> {
        let t = self.state.t.max(1) as f64;
        self.occupancy.iter().map(|&s| s as f64 / t).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub slots: u64,
    pub seed: u64,
    pub replications: usize,
    pub tie: TieRule,
    pub exec: Execution,
    /// Record every slot of replication 0.
    pub trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            slots: 100_000,
            seed: 1,
            replications: 1,
            tie: TieRule::LowestIndex,
            exec: Execution::default(),
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    pub replication: usize,
    pub seed: u64,
    pub horizon: u64,
    /// `(1/T) Σ_{τ=0}^{T−1} Σ_n X_n(τ)`.
    pub avg_aggregate_occupancy: f64,
    pub per_queue_avgs: Vec<f64>,
    /// Departures per slot.
    pub throughput: Vec<f64>,
    /// Arrivals per slot.
    pub arrival_rate: Vec<f64>,
    pub final_queues: Vec<u64>,
}

impl SimStats {
    pub fn final_aggregate(&self) -> u64 {
        self.final_queues.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub replications: Vec<SimStats>,
    pub mean_avg_aggregate_occupancy: f64,
    pub stderr_avg_aggregate_occupancy: f64,
    pub mean_throughput: Vec<f64>,
    pub stderr_throughput: Vec<f64>,
    #[serde(skip)]
    pub trace: Option<Vec<TraceRow>>,
}

fn mean_stderr(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn run_one(
    model: &DiscreteChannelModel,
    arrivals: &ArrivalModel,
    policy: Policy,
    cfg: &SimConfig,
    replication: usize,
    trace: bool,
) -> Result<(SimStats, Option<Vec<TraceRow>>)> {
    let seed = cfg.seed.wrapping_add(replication as u64);
    let mut sim = Simulation::new(model, arrivals, policy, cfg.tie, seed)?;
    let mut rows = trace.then(Vec::new);
    for _ in 0..cfg.slots {
        let (served, arrived) = sim.advance();
        if let Some(rows) = rows.as_mut() {
            let (served, arrived) = (served.to_vec(), arrived.to_vec());
            rows.push(TraceRow {
                t: sim.state.t,
                queues: sim.state.queues.clone(),
                served,
                arrived,
            });
        }
    }
    let t = cfg.slots as f64;
    let per_queue_avgs = sim.per_queue_averages();
    let stats = SimStats {
        replication,
        seed,
        horizon: cfg.slots,
        avg_aggregate_occupancy: sim.occupancy.iter().sum::<u128>() as f64 / t,
        per_queue_avgs,
        throughput: sim.state.departed.iter().map(|&d| d as f64 / t).collect(),
        arrival_rate: sim.state.arrived.iter().map(|&a| a as f64 / t).collect(),
        final_queues: sim.state.queues.clone(),
    };
    Ok((stats, rows))
}

/// Runs `cfg.replications` independent replications from `X(0) = 0`.
pub fn run(
    model: &DiscreteChannelModel,
    arrivals: &ArrivalModel,
    policy: Policy,
    cfg: &SimConfig,
) -> Result<SimReport> {
    if cfg.slots == 0 || cfg.replications == 0 {
        return Err(Error::InvalidArgument(
            "need at least one slot and one replication".into(),
        ));
    }
    arrivals.validate()?;
    // fail fast on configuration errors before spawning work
    Simulation::new(model, arrivals, policy, cfg.tie, cfg.seed)?;
    let results = cfg.exec.map_range(0..cfg.replications, |r| {
        run_one(model, arrivals, policy, cfg, r, cfg.trace && r == 0)
    });
    let mut replications = Vec::with_capacity(results.len());
    let mut trace = None;
    for res in results {
        let (stats, rows) = res?;
        if rows.is_some() {
            trace = rows;
        }
        replications.push(stats);
    }
    let (mean_occ, se_occ) = mean_stderr(replications.iter().map(|s| s.avg_aggregate_occupancy));
    let n = model.num_queues();
    let (mean_throughput, stderr_throughput) = (0..n)
        .map(|q| mean_stderr(replications.iter().map(move |s| s.throughput[q])))
        .unzip();
    Ok(SimReport {
        replications,
        mean_avg_aggregate_occupancy: mean_occ,
        stderr_avg_aggregate_occupancy: se_occ,
        mean_throughput,
        stderr_throughput,
        trace,
    })
}

/// Upper bound `(N·A_max² + (MK)²) / (2δ)` on the long-run average aggregate
/// occupancy under MW when the mean arrival vector has margin `δ > 0`.
pub fn delay_bound(n: usize, a_max_sq: f64, m: u32, k: usize, delta: f64) -> Result<f64> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::NotInterior(delta));
    }
    let mk = f64::from(m) * k as f64;
    Ok((n as f64 * a_max_sq + mk * mk) / (2.0 * delta))
}

/// Region-aware digest of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    pub avg_aggregate_occupancy: f64,
    pub stderr_avg_aggregate_occupancy: f64,
    pub per_queue_avgs: Vec<f64>,
    pub throughput: Vec<f64>,
    pub arrival_means: Vec<f64>,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    /// Position of the mean arrival vector relative to the region.
    pub verdict: Verdict,
    /// Every replication stayed under the bound (only when a bound exists).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_respected: Option<bool>,
}

pub fn summarize(
    report: &SimReport,
    region: &StabilityRegion,
    model: &DiscreteChannelModel,
    arrivals: &ArrivalModel,
) -> Result<SimSummary> {
    let means = arrivals.means();
    let delta = membership_margin(region, &means)?;
    let verdict = Verdict::from_margin(delta);
    let bound = (verdict == Verdict::Interior)
        .then(|| {
            delay_bound(
                model.num_queues(),
                arrivals.a_max_sq(),
                model.max_capacity(),
                model.num_servers(),
                delta,
            )
        })
        .transpose()?;
    let n = model.num_queues();
    let reps = report.replications.len() as f64;
    let per_queue_avgs = (0..n)
        .map(|q| {
            report
                .replications
                .iter()
                .map(|s| s.per_queue_avgs[q])
                .sum::<f64>()
                / reps
        })
        .collect();
    Ok(SimSummary {
        avg_aggregate_occupancy: report.mean_avg_aggregate_occupancy,
        stderr_avg_aggregate_occupancy: report.stderr_avg_aggregate_occupancy,
        per_queue_avgs,
        throughput: report.mean_throughput.clone(),
        arrival_means: means,
        delta,
        bound,
        verdict,
        bound_respected: bound.map(|b| {
            report
                .replications
                .iter()
                .all(|s| s.avg_aggregate_occupancy <= b)
        }),
    })
}
