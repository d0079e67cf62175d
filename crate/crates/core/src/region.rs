//! The stability-region polytope: support values, support vertices, the
//! inequality description over `V̂`, and the uniform margin `δ`.
//!
//! The objective `α·(C ⊛ I)·1ᵀ` separates over servers because each column
//! of an allocation matrix is chosen independently, so
//! `h(α) = Σ_s π_s Σ_k max_n α_n C_s[n,k]`. For independent-link models the
//! expectation factorizes further into per-server column distributions,
//! costing `K·(M+1)^N` instead of `(M+1)^{NK}` state visits.

use serde::{Deserialize, Serialize};

use crate::alpha::{build_vhat, AlphaVector};
use crate::channel::{ChannelMatrix, DiscreteChannelModel};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::{Caps, TieRule};

/// Nonnegative rate vector in packets/slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RatePoint(Vec<f64>);

impl RatePoint {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rates must be finite and nonnegative: {rates:?}"
            )));
        }
        Ok(Self(rates))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn rates(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for RatePoint {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// One half-space `α·λᵀ ≤ β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub alpha: AlphaVector,
    pub beta: f64,
}

impl Inequality {
    pub fn slack(&self, lambda: &[f64]) -> f64 {
        self.beta - dot_int(&self.alpha, lambda)
    }
}

fn dot_int(alpha: &AlphaVector, x: &[f64]) -> f64 {
    alpha
        .coords()
        .iter()
        .zip(x)
        .map(|(&a, &x)| a as f64 * x)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRegion {
    #[serde(rename = "N")]
    pub n: usize,
    pub inequalities: Vec<Inequality>,
    /// Fingerprint of the channel model the region was built from.
    pub provenance: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Interior,
    Boundary,
    Outside,
}

/// `|δ|` at or below this counts as on the boundary.
pub const BOUNDARY_TOL: f64 = 1e-12;

impl Verdict {
    pub fn from_margin(delta: f64) -> Self {
        if delta > BOUNDARY_TOL {
            Verdict::Interior
        } else if delta < -BOUNDARY_TOL {
            Verdict::Outside
        } else {
            Verdict::Boundary
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Interior => "interior",
            Verdict::Boundary => "boundary",
            Verdict::Outside => "outside",
        }
    }
}

impl StabilityRegion {
    pub fn margin(&self, lambda: &[f64]) -> Result<f64> {
        membership_margin(self, lambda)
    }

    /// True when `lambda` violates no inequality by more than `tol`.
    pub fn contains(&self, lambda: &[f64], tol: f64) -> bool {
        self.inequalities
            .iter()
            .all(|ineq| ineq.slack(lambda) >= -tol)
    }

    pub fn slacks(&self, lambda: &[f64]) -> Vec<f64> {
        self.inequalities.iter().map(|i| i.slack(lambda)).collect()
    }
}

/// `δ = min (β − α·λᵀ)/(α·1ᵀ)` over all inequalities: positive strictly inside,
/// zero on the boundary, negative outside.
pub fn membership_margin(region: &StabilityRegion, lambda: &[f64]) -> Result<f64> {
    if lambda.len() != region.n {
        return Err(Error::DimensionMismatch(format!(
            "rate vector has {} entries, region has N = {}",
            lambda.len(),
            region.n
        )));
    }
    if region.inequalities.is_empty() {
        return Err(Error::InvalidArgument("empty region".into()));
    }
    Ok(region
        .inequalities
        .iter()
        .map(|ineq| ineq.slack(lambda) / ineq.alpha.l1() as f64)
        .fold(f64::INFINITY, f64::min))
}

/// Winner of `max_n α_n c_n` and its weight.
#[inline]
fn best_queue(alpha: &[f64], column: impl Iterator<Item = u32>, tie: TieRule) -> (usize, f64, u32) {
    let mut best = (0usize, f64::NEG_INFINITY, 0u32);
    for (n, c) in column.enumerate() {
        let w = alpha[n] * f64::from(c);
        let better = match tie {
            TieRule::LowestIndex => w > best.1,
            TieRule::HighestIndex => w >= best.1,
        };
        if better {
            best = (n, w, c);
        }
    }
    best
}

#[derive(Debug, Clone)]
enum Tables {
    /// Per-server column pmfs, flattened: `entries[i*N..(i+1)*N]` pairs with `probs[i]`.
    Columns(Vec<(Vec<u32>, Vec<f64>)>),
    States(Vec<(ChannelMatrix, f64)>),
}

/// Precomputed expectation tables for repeated support queries on one model.
#[derive(Debug, Clone)]
pub struct SupportEvaluator {
    n: usize,
    k: usize,
    tables: Tables,
}

impl SupportEvaluator {
    pub fn new(model: &DiscreteChannelModel, caps: &Caps) -> Result<Self> {
        let (n, k) = (model.num_queues(), model.num_servers());
        let tables = if matches!(model.kind(), crate::channel::DiscreteKind::ExplicitJoint(_)) {
            Tables::States(model.enumerate_states(caps)?)
        } else {
            let mut cols = Vec::with_capacity(k);
            for server in 0..k {
                let dist = model.per_server_column_distribution(server, caps)?;
                let probs = dist.iter().map(|(_, p)| *p).collect();
                let entries = dist.into_iter().flat_map(|(c, _)| c).collect();
                cols.push((entries, probs));
            }
            Tables::Columns(cols)
        };
        Ok(Self { n, k, tables })
    }

    pub fn num_queues(&self) -> usize {
        self.n
    }

    fn check_alpha(&self, alpha: &[f64]) -> Result<()> {
        if alpha.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "direction has {} entries, model has N = {}",
                alpha.len(),
                self.n
            )));
        }
        if alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "direction must be finite and nonnegative: {alpha:?}"
            )));
        }
        if alpha.iter().all(|&a| a == 0.0) {
            return Err(Error::InvalidArgument("zero direction vector".into()));
        }
        Ok(())
    }

    /// Support function `h(α)`.
    pub fn value(&self, alpha: &[f64]) -> Result<f64> {
        self.check_alpha(alpha)?;
        let n = self.n;
        let total = match &self.tables {
            Tables::Columns(cols) => cols
                .iter()
                .map(|(entries, probs)| {
                    probs
                        .iter()
                        .zip(entries.chunks_exact(n))
                        .map(|(p, col)| {
                            p * best_queue(alpha, col.iter().copied(), TieRule::LowestIndex).1
                        })
                        .sum::<f64>()
                })
                .sum(),
            Tables::States(states) => states
                .iter()
                .map(|(c, p)| {
                    p * (0..self.k)
                        .map(|k| best_queue(alpha, c.column(k), TieRule::LowestIndex).1)
                        .sum::<f64>()
                })
                .sum(),
        };
        Ok(total)
    }

    /// Expected per-queue service under the `α`-maximizing allocation.
    pub fn vertex(&self, alpha: &[f64], tie: TieRule) -> Result<RatePoint> {
        self.check_alpha(alpha)?;
        let n = self.n;
        let mut rates = vec![0.0; n];
        match &self.tables {
            Tables::Columns(cols) => {
                for (entries, probs) in cols {
                    for (p, col) in probs.iter().zip(entries.chunks_exact(n)) {
                        let (q, _, c) = best_queue(alpha, col.iter().copied(), tie);
                        rates[q] += p * f64::from(c);
                    }
                }
            }
            Tables::States(states) => {
                for (m, p) in states {
                    for k in 0..self.k {
                        let (q, _, c) = best_queue(alpha, m.column(k), tie);
                        rates[q] += p * f64::from(c);
                    }
                }
            }
        }
        Ok(RatePoint(rates))
    }
}

pub fn support_function(model: &DiscreteChannelModel, alpha: &[f64], caps: &Caps) -> Result<f64> {
    SupportEvaluator::new(model, caps)?.value(alpha)
}

pub fn support_vertex(
    model: &DiscreteChannelModel,
    alpha: &[f64],
    tie: TieRule,
    caps: &Caps,
) -> Result<RatePoint> {
    SupportEvaluator::new(model, caps)?.vertex(alpha, tie)
}

/// Size limit for both the state list and the allocation set of the brute-force oracle.
pub const BRUTE_FORCE_CAP: u64 = 4096;

/// `Σ_s π_s max_{I ∈ 𝓘} α(C_s ⊛ I)1ᵀ` by literal enumeration of every state
/// and all `N^K` allocation matrices. Oracle for [`support_function`].
pub fn brute_force_support(model: &DiscreteChannelModel, alpha: &[f64]) -> Result<f64> {
    let (n, k) = (model.num_queues(), model.num_servers());
    if alpha.len() != n {
        return Err(Error::DimensionMismatch(
            "direction length differs from N".into(),
        ));
    }
    let allocations = (n as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if allocations > u128::from(BRUTE_FORCE_CAP) {
        return Err(Error::CapExceeded {
            what: "allocation set N^K",
            size: allocations,
            cap: BRUTE_FORCE_CAP,
        });
    }
    let caps = Caps {
        state_space: BRUTE_FORCE_CAP,
        ..Caps::default()
    };
    let states = model.enumerate_states(&caps)?;
    let mut matrix = vec![0u8; n * k];
    let mut total = 0.0;
    for (c, p) in &states {
        let mut best = f64::NEG_INFINITY;
        for idx in 0..allocations as usize {
            matrix.iter_mut().for_each(|x| *x = 0);
            let mut rest = idx;
            for server in 0..k {
                matrix[(rest % n) * k + server] = 1;
                rest /= n;
            }
            let mut value = 0.0;
            for q in 0..n {
                for server in 0..k {
                    value +=
                        alpha[q] * f64::from(c.get(q, server)) * f64::from(matrix[q * k + server]);
                }
            }
            best = best.max(value);
        }
        total += p * best;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RegionOptions {
    pub caps: Caps,
    pub exec: Execution,
    /// For Bernoulli models, emit the `2^N − 1` closed-form subset inequalities.
    pub onoff_fast_path: bool,
}

/// One inequality `(α, h(α))` per `α ∈ V̂`, in `V̂` order.
pub fn build_region(model: &DiscreteChannelModel, opts: &RegionOptions) -> Result<StabilityRegion> {
    if opts.onoff_fast_path {
        if let Some(p) = model.bernoulli_probabilities() {
            return onoff_region(&p);
        }
    }
    let vhat = build_vhat(
        model.max_capacity(),
        model.num_queues(),
        &opts.caps,
        opts.exec,
    )?;
    let eval = SupportEvaluator::new(model, &opts.caps)?;
    let betas = opts.exec.map(&vhat, |alpha| eval.value(&alpha.to_f64()));
    let inequalities = vhat
        .into_iter()
        .zip(betas)
        .map(|(alpha, beta)| Ok(Inequality { alpha, beta: beta? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(StabilityRegion {
        n: model.num_queues(),
        inequalities,
        provenance: model.fingerprint(),
    })
}

/// Closed form for independent ON-OFF links:
/// `Σ_{n∈Q} λ_n ≤ K − Σ_k Π_{n∈Q} (1 − p_{n,k})` for every nonempty `Q`.
pub fn onoff_region(p: &[Vec<f64>]) -> Result<StabilityRegion> {
    let model = DiscreteChannelModel::bernoulli(p)?;
    let n = p.len();
    if n >= 63 {
        return Err(Error::InvalidArgument(
            "too many queues for subset enumeration".into(),
        ));
    }
    let k = p[0].len();
    let mut inequalities: Vec<Inequality> = (1u64..(1u64 << n))
        .map(|mask| {
            let blocked: f64 = (0..k)
                .map(|server| {
                    (0..n)
                        .filter(|&q| (mask >> q) & 1 == 1)
                        .map(|q| 1.0 - p[q][server])
                        .product::<f64>()
                })
                .sum();
            Inequality {
                alpha: AlphaVector::indicator(n, mask),
                beta: k as f64 - blocked,
            }
        })
        .collect();
    inequalities.sort_by(|a, b| a.alpha.cmp(&b.alpha));
    Ok(StabilityRegion {
        n,
        inequalities,
        provenance: model.fingerprint(),
    })
}
