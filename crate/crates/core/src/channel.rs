//! Stationary channel-state distributions for the N×K queue-to-server link matrix.
//!
//! Discrete models carry integer capacities in `{0, …, M}` and support exact
//! enumeration of their state space; continuous models are sampled only.
//! Channel states are drawn independently across slots.

use std::borrow::Cow;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::Caps;

const PMF_TOL: f64 = 1e-12;

/// Row-major N×K grid of link capacities. Row `n` is a queue, column `k` a server.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChannelMatrix<T = u32> {
    rows: usize,
    cols: usize,
    entries: Vec<T>,
}

impl<T: Copy> ChannelMatrix<T> {
    pub fn new(rows: usize, cols: usize, entries: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 || entries.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch("ragged matrix rows".into()));
        }
        Self::new(n, k, rows.iter().flatten().copied().collect())
    }

    /// Builds a matrix from server-major columns (`columns[k][n]`).
    pub fn from_columns(rows: usize, columns: &[Vec<T>]) -> Result<Self> {
        let cols = columns.len();
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::DimensionMismatch(
                "column length differs from N".into(),
            ));
        }
        let mut entries = Vec::with_capacity(rows * cols);
        for n in 0..rows {
            for col in columns {
                entries.push(col[n]);
            }
        }
        Self::new(rows, cols, entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize) -> T {
        self.entries[n * self.cols + k]
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    pub fn column(&self, k: usize) -> impl Iterator<Item = T> + '_ {
        (0..self.rows).map(move |n| self.get(n, k))
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.entries.chunks(self.cols).map(<[T]>::to_vec).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DiscreteKind {
    /// Explicit joint distribution over whole matrices.
    ExplicitJoint(Vec<(ChannelMatrix, f64)>),
    /// Independent links, row-major, each a pmf over `{0, …, M}`.
    Factored(Vec<Vec<f64>>),
    /// Independent ON-OFF links (`M = 1`), row-major success probabilities.
    Bernoulli(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteChannelModel {
    n: usize,
    k: usize,
    max_capacity: u32,
    kind: DiscreteKind,
}

impl DiscreteChannelModel {
    /// Independent ON-OFF links with `p[n][k] = Pr(C[n,k] = 1)`.
    pub fn bernoulli(p: &[Vec<f64>]) -> Result<Self> {
        let m = ChannelMatrix::from_rows(p)?;
        let model = Self {
            n: m.rows,
            k: m.cols,
            max_capacity: 1,
            kind: DiscreteKind::Bernoulli(m.entries),
        };
        model.validate()?;
        Ok(model)
    }

    /// Independent links; `pmf[n][k]` is the distribution of `C[n,k]` over `{0, …, M}`.
    pub fn factored(max_capacity: u32, pmf: &[Vec<Vec<f64>>]) -> Result<Self> {
        let n = pmf.len();
        let k = pmf.first().map_or(0, Vec::len);
        if n == 0 || k == 0 || pmf.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch(
                "factored pmf must be N x K".into(),
            ));
        }
        let model = Self {
            n,
            k,
            max_capacity,
            kind: DiscreteKind::Factored(pmf.iter().flatten().cloned().collect()),
        };
        model.validate()?;
        Ok(model)
    }

    /// Explicit joint distribution. Zero-probability states are dropped.
    pub fn explicit_joint(max_capacity: u32, states: Vec<(ChannelMatrix, f64)>) -> Result<Self> {
        let (n, k) = match states.first() {
            Some((m, _)) => (m.rows, m.cols),
            None => {
                return Err(Error::InvalidModel(
                    "explicit_joint needs at least one state".into(),
                ))
            }
        };
        let mut model = Self {
            n,
            k,
            max_capacity,
            kind: DiscreteKind::ExplicitJoint(states),
        };
        model.validate()?;
        if let DiscreteKind::ExplicitJoint(states) = &mut model.kind {
            states.retain(|(_, p)| *p > 0.0);
        }
        Ok(model)
    }

    /// A channel that is always in state `matrix`.
    pub fn deterministic(matrix: ChannelMatrix) -> Result<Self> {
        let m = matrix.entries.iter().copied().max().unwrap_or(0).max(1);
        Self::explicit_joint(m, vec![(matrix, 1.0)])
    }

    pub fn num_queues(&self) -> usize {
        self.n
    }

    pub fn num_servers(&self) -> usize {
        self.k
    }

    pub fn max_capacity(&self) -> u32 {
        self.max_capacity
    }

    pub fn kind(&self) -> &DiscreteKind {
        &self.kind
    }

    pub fn is_bernoulli(&self) -> bool {
        matches!(self.kind, DiscreteKind::Bernoulli(_))
    }

    /// Success probabilities of a Bernoulli model as an N×K grid.
    pub fn bernoulli_probabilities(&self) -> Option<Vec<Vec<f64>>> {
        match &self.kind {
            DiscreteKind::Bernoulli(p) => Some(p.chunks(self.k).map(<[f64]>::to_vec).collect()),
            _ => None,
        }
    }

    /// Checks every type invariant; the error names the first violation.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 {
            return Err(Error::DimensionMismatch("N and K must be positive".into()));
        }
        if self.max_capacity == 0 {
            return Err(Error::InvalidModel("M must be at least 1".into()));
        }
        match &self.kind {
            DiscreteKind::Bernoulli(p) => {
                if self.max_capacity != 1 {
                    return Err(Error::InvalidModel("bernoulli model requires M = 1".into()));
                }
                if p.len() != self.n * self.k {
                    return Err(Error::DimensionMismatch("p must be N x K".into()));
                }
                if let Some(&bad) = p.iter().find(|&&x| !(0.0..=1.0).contains(&x)) {
                    return Err(Error::InvalidModel(format!(
                        "bernoulli probability {bad} outside [0, 1]"
                    )));
                }
            }
            DiscreteKind::Factored(pmfs) => {
                if pmfs.len() != self.n * self.k {
                    return Err(Error::DimensionMismatch("pmf must be N x K".into()));
                }
                for (idx, pmf) in pmfs.iter().enumerate() {
                    let what = format!("link ({}, {}) pmf", idx / self.k, idx % self.k);
                    if pmf.len() != self.max_capacity as usize + 1 {
                        return Err(Error::DimensionMismatch(format!(
                            "{what} has {} entries, expected M + 1 = {}",
                            pmf.len(),
                            self.max_capacity + 1
                        )));
                    }
                    check_pmf(&what, pmf.iter().copied())?;
                }
            }
            DiscreteKind::ExplicitJoint(states) => {
                for (idx, (m, _)) in states.iter().enumerate() {
                    if m.rows != self.n || m.cols != self.k {
                        return Err(Error::DimensionMismatch(format!(
                            "state {idx} is {}x{}, expected {}x{}",
                            m.rows, m.cols, self.n, self.k
                        )));
                    }
                    if let Some(&c) = m.entries.iter().find(|&&c| c > self.max_capacity) {
                        return Err(Error::InvalidModel(format!(
                            "state {idx} has capacity {c} above M = {}",
                            self.max_capacity
                        )));
                    }
                }
                check_pmf("explicit_joint", states.iter().map(|(_, p)| *p))?;
                for i in 0..states.len() {
                    for j in i + 1..states.len() {
                        if states[i].0 == states[j].0 {
                            return Err(Error::InvalidModel(format!(
                                "states {i} and {j} are identical"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Marginal pmf of link `(n, k)` over `{0, …, M}`. Not available for explicit models.
    pub fn link_pmf(&self, n: usize, k: usize) -> Option<Cow<'_, [f64]>> {
        match &self.kind {
            DiscreteKind::Bernoulli(p) => {
                let p = p[n * self.k + k];
                Some(Cow::Owned(vec![1.0 - p, p]))
            }
            DiscreteKind::Factored(pmfs) => Some(Cow::Borrowed(&pmfs[n * self.k + k])),
            DiscreteKind::ExplicitJoint(_) => None,
        }
    }

    /// Mean capacity of every link, row-major.
    pub fn mean_matrix(&self) -> Vec<f64> {
        match &self.kind {
            DiscreteKind::Bernoulli(p) => p.clone(),
            DiscreteKind::Factored(pmfs) => pmfs
                .iter()
                .map(|pmf| pmf.iter().enumerate().map(|(c, p)| c as f64 * p).sum())
                .collect(),
            DiscreteKind::ExplicitJoint(states) => {
                let mut mean = vec![0.0; self.n * self.k];
                for (m, p) in states {
                    for (acc, &c) in mean.iter_mut().zip(&m.entries) {
                        *acc += p * f64::from(c);
                    }
                }
                mean
            }
        }
    }

    /// Number of states the model can take, `(M+1)^{NK}` for product models.
    pub fn state_space_size(&self) -> u128 {
        match &self.kind {
            DiscreteKind::ExplicitJoint(states) => states.len() as u128,
            _ => saturating_pow(u128::from(self.max_capacity) + 1, self.n * self.k),
        }
    }

    /// Every channel state with positive probability, in lexicographic
    /// row-major order for product models.
    pub fn enumerate_states(&self, caps: &Caps) -> Result<Vec<(ChannelMatrix, f64)>> {
        let size = self.state_space_size();
        if size > u128::from(caps.state_space) {
            return Err(Error::CapExceeded {
                what: "channel state space",
                size,
                cap: caps.state_space,
            });
        }
        match &self.kind {
            DiscreteKind::ExplicitJoint(states) => Ok(states.clone()),
            _ => {
                let pmfs: Vec<Cow<'_, [f64]>> = (0..self.n)
                    .flat_map(|n| (0..self.k).map(move |k| (n, k)))
                    .map(|(n, k)| self.link_pmf(n, k).expect("product model"))
                    .collect();
                let refs: Vec<&[f64]> = pmfs.iter().map(|c| c.as_ref()).collect();
                product_pmf(&refs)
                    .into_iter()
                    .map(|(entries, p)| Ok((ChannelMatrix::new(self.n, self.k, entries)?, p)))
                    .collect()
            }
        }
    }

    /// Exact joint pmf of column `k`, i.e. of `(C[1,k], …, C[N,k])`.
    pub fn per_server_column_distribution(
        &self,
        k: usize,
        caps: &Caps,
    ) -> Result<Vec<(Vec<u32>, f64)>> {
        if matches!(self.kind, DiscreteKind::ExplicitJoint(_)) {
            return Err(Error::InvalidArgument(
                "column factorization needs independent links; use enumerate_states".into(),
            ));
        }
        if k >= self.k {
            return Err(Error::InvalidArgument(format!(
                "server index {k} out of range"
            )));
        }
        let size = saturating_pow(u128::from(self.max_capacity) + 1, self.n);
        if size > u128::from(caps.state_space) {
            return Err(Error::CapExceeded {
                what: "per-server column space",
                size,
                cap: caps.state_space,
            });
        }
        let pmfs: Vec<Cow<'_, [f64]>> = (0..self.n)
            .map(|n| self.link_pmf(n, k).expect("product model"))
            .collect();
        let refs: Vec<&[f64]> = pmfs.iter().map(|c| c.as_ref()).collect();
        Ok(product_pmf(&refs))
    }

    /// Stable hex digest of the model parameters.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let text = format!(
            "discrete;N={};K={};M={};{:?}",
            self.n, self.k, self.max_capacity, self.kind
        );
        Sha256::digest(text.as_bytes())
            .iter()
            .take(16)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn sampler(&self) -> ChannelSampler {
        let kind = match &self.kind {
            DiscreteKind::Bernoulli(p) => SamplerKind::Bernoulli(p.clone()),
            DiscreteKind::Factored(pmfs) => {
                SamplerKind::Factored(pmfs.iter().map(|p| cumulative(p)).collect())
            }
            DiscreteKind::ExplicitJoint(states) => SamplerKind::Explicit {
                matrices: states.iter().map(|(m, _)| m.clone()).collect(),
                cdf: cumulative(&states.iter().map(|(_, p)| *p).collect::<Vec<_>>()),
            },
        };
        ChannelSampler {
            n: self.n,
            k: self.k,
            kind,
        }
    }

    /// Draws one channel state. Builds a sampler on every call; hold on to
    /// [`DiscreteChannelModel::sampler`] in hot loops.
    pub fn sample_state<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelMatrix {
        self.sampler().sample(rng)
    }
}

fn check_pmf(what: &str, probs: impl Iterator<Item = f64>) -> Result<()> {
    let mut sum = 0.0;
    for p in probs {
        if p < 0.0 || !p.is_finite() {
            return Err(Error::NegativeProbability {
                what: what.to_string(),
                value: p,
            });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PMF_TOL {
        return Err(Error::NotNormalized {
            what: what.to_string(),
            sum,
        });
    }
    Ok(())
}

fn saturating_pow(base: u128, exp: usize) -> u128 {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.saturating_mul(base);
    }
    acc
}

/// Joint pmf of independent discrete variables, `pmfs[i][v] = Pr(X_i = v)`.
/// Zero-probability outcomes are skipped; order is lexicographic in `(X_0, X_1, …)`.
pub(crate) fn product_pmf(pmfs: &[&[f64]]) -> Vec<(Vec<u32>, f64)> {
    fn recurse(pmfs: &[&[f64]], prefix: &mut Vec<u32>, prob: f64, out: &mut Vec<(Vec<u32>, f64)>) {
        let Some((head, tail)) = pmfs.split_first() else {
            out.push((prefix.clone(), prob));
            return;
        };
        for (v, &p) in head.iter().enumerate() {
            if p > 0.0 {
                prefix.push(v as u32);
                recurse(tail, prefix, prob * p, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    recurse(pmfs, &mut Vec::with_capacity(pmfs.len()), 1.0, &mut out);
    out
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

fn draw_index(cdf: &[f64], u: f64) -> usize {
    // u is in [0, 1); the last bucket absorbs rounding in the cumulative sum
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Bernoulli(Vec<f64>),
    Factored(Vec<Vec<f64>>),
    Explicit {
        matrices: Vec<ChannelMatrix>,
        cdf: Vec<f64>,
    },
}

/// Precomputed sampling tables for a discrete model.
#[derive(Debug, Clone)]
pub struct ChannelSampler {
    n: usize,
    k: usize,
    kind: SamplerKind,
}

impl ChannelSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelMatrix {
        let mut out = ChannelMatrix {
            rows: self.n,
            cols: self.k,
            entries: vec![0; self.n * self.k],
        };
        self.sample_into(rng, &mut out);
        out
    }

    /// Overwrites `out` with a fresh draw.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut ChannelMatrix) {
        match &self.kind {
            SamplerKind::Bernoulli(p) => {
                for (c, &p) in out.entries.iter_mut().zip(p) {
                    *c = u32::from(rng.random::<f64>() < p);
                }
            }
            SamplerKind::Factored(cdfs) => {
                for (c, cdf) in out.entries.iter_mut().zip(cdfs) {
                    *c = draw_index(cdf, rng.random::<f64>()) as u32;
                }
            }
            SamplerKind::Explicit { matrices, cdf } => {
                let idx = draw_index(cdf, rng.random::<f64>());
                out.entries.copy_from_slice(&matrices[idx].entries);
            }
        }
    }
}

/// Distribution of a single continuous link capacity.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum LinkDistribution {
    Exponential { mean: f64 },
    Uniform { upper: f64 },
    Empirical { values: Vec<f64> },
}

impl LinkDistribution {
    pub fn mean(&self) -> f64 {
        match self {
            LinkDistribution::Exponential { mean } => *mean,
            LinkDistribution::Uniform { upper } => upper / 2.0,
            LinkDistribution::Empirical { values } => {
                values.iter().sum::<f64>() / values.len() as f64
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            LinkDistribution::Exponential { mean } => mean.is_finite() && *mean > 0.0,
            LinkDistribution::Uniform { upper } => upper.is_finite() && *upper > 0.0,
            LinkDistribution::Empirical { values } => {
                !values.is_empty() && values.iter().all(|v| v.is_finite() && *v >= 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!(
                "bad link distribution {self:?}"
            )))
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            LinkDistribution::Exponential { mean } => {
                Exp::new(1.0 / mean).expect("validated rate").sample(rng)
            }
            LinkDistribution::Uniform { upper } => rng.random::<f64>() * upper,
            LinkDistribution::Empirical { values } => values[rng.random_range(0..values.len())],
        }
    }
}

/// Continuous per-link capacities, links mutually independent.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousChannelModel {
    n: usize,
    k: usize,
    links: Vec<LinkDistribution>,
}

impl ContinuousChannelModel {
    pub fn new(links: &[Vec<LinkDistribution>]) -> Result<Self> {
        let n = links.len();
        let k = links.first().map_or(0, Vec::len);
        if n == 0 || k == 0 || links.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch("links must be N x K".into()));
        }
        let model = Self {
            n,
            k,
            links: links.iter().flatten().cloned().collect(),
        };
        model.validate()?;
        Ok(model)
    }

    /// Independent exponential links with `means[n][k]`.
    pub fn exponential(means: &[Vec<f64>]) -> Result<Self> {
        let links: Vec<Vec<LinkDistribution>> = means
            .iter()
            .map(|r| {
                r.iter()
                    .map(|&mean| LinkDistribution::Exponential { mean })
                    .collect()
            })
            .collect();
        Self::new(&links)
    }

    pub fn validate(&self) -> Result<()> {
        self.links.iter().try_for_each(LinkDistribution::validate)
    }

    pub fn num_queues(&self) -> usize {
        self.n
    }

    pub fn num_servers(&self) -> usize {
        self.k
    }

    pub fn link(&self, n: usize, k: usize) -> &LinkDistribution {
        &self.links[n * self.k + k]
    }

    pub fn links(&self) -> Vec<Vec<LinkDistribution>> {
        self.links.chunks(self.k).map(<[_]>::to_vec).collect()
    }

    pub fn sample_state<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelMatrix<f64> {
        ChannelMatrix {
            rows: self.n,
            cols: self.k,
            entries: self.links.iter().map(|l| l.sample(rng)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel {
    Discrete(DiscreteChannelModel),
    Continuous(ContinuousChannelModel),
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            ChannelModel::Discrete(m) => m.validate(),
            ChannelModel::Continuous(m) => m.validate(),
        }
    }

    pub fn num_queues(&self) -> usize {
        match self {
            ChannelModel::Discrete(m) => m.num_queues(),
            ChannelModel::Continuous(m) => m.num_queues(),
        }
    }
}
