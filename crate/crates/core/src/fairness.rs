//! Utility-fair rate allocation over the stability region.
//!
//! Maximizes `g(r) = Σ_n f_n(min(r_n, λ_n))` over the region with Frank-Wolfe.
//! `g` is concave and nondecreasing, so its (super)gradient is a nonnegative
//! direction and, without binding caps, the linear maximization step is
//! exactly a support vertex. The region is down-closed, so when a cap cuts
//! into it the same optimum is reached over the region intersected with the
//! box `r ≤ λ`; there the linear step is a small LP over the region's
//! inequalities. Iterates stay convex combinations of oracle points, hence
//! inside the region.

use serde::{Deserialize, Serialize};

use crate::channel::DiscreteChannelModel;
use crate::error::{Error, Result};
use crate::region::{build_region, RatePoint, RegionOptions, StabilityRegion, SupportEvaluator};
use crate::{AlphaVector, Caps, TieRule};

/// Tolerance on region membership for points handed to [`fw_gap`].
pub const MEMBERSHIP_TOL: f64 = 1e-7;
/// Slack below which an inequality is reported as binding.
pub const BINDING_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Utility {
    /// `w·r`
    WeightedLinear { weight: f64 },
    /// `log(r + ε)`
    LogShifted { eps: f64 },
    /// `r^{1−a}/(1−a)`, `a ≥ 0`, `a ≠ 1`
    AlphaFair { a: f64 },
}

impl Utility {
    pub const DEFAULT_LOG_EPS: f64 = 1e-6;

    pub fn log() -> Self {
        Utility::LogShifted {
            eps: Self::DEFAULT_LOG_EPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Utility::WeightedLinear { weight } => weight.is_finite() && weight >= 0.0,
            Utility::LogShifted { eps } => eps.is_finite() && eps > 0.0,
            Utility::AlphaFair { a } => a.is_finite() && a >= 0.0 && a != 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid utility {self:?}")))
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        match *self {
            Utility::WeightedLinear { weight } => weight * r,
            Utility::LogShifted { eps } => (r + eps).ln(),
            Utility::AlphaFair { a } => r.powf(1.0 - a) / (1.0 - a),
        }
    }

    pub fn derivative(&self, r: f64) -> f64 {
        match *self {
            Utility::WeightedLinear { weight } => weight,
            Utility::LogShifted { eps } => 1.0 / (r + eps),
            Utility::AlphaFair { a } => r.powf(-a),
        }
    }
}

/// Per-queue utilities and admission caps `λ_n` (may be infinite).
#[derive(Debug, Clone, PartialEq)]
pub struct UtilitySpec {
    utilities: Vec<Utility>,
    caps: Vec<f64>,
}

impl UtilitySpec {
    pub fn new(utilities: Vec<Utility>, caps: Vec<f64>) -> Result<Self> {
        if utilities.len() != caps.len() || utilities.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "{} utilities for {} caps",
                utilities.len(),
                caps.len()
            )));
        }
        utilities.iter().try_for_each(Utility::validate)?;
        if caps.iter().any(|c| c.is_nan() || *c < 0.0) {
            return Err(Error::InvalidArgument("caps must be nonnegative".into()));
        }
        Ok(Self { utilities, caps })
    }

    /// The same utility on every queue, uncapped.
    pub fn uniform(utility: Utility, n: usize) -> Result<Self> {
        Self::new(vec![utility; n], vec![f64::INFINITY; n])
    }

    pub fn len(&self) -> usize {
        self.utilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utilities.is_empty()
    }

    pub fn caps(&self) -> &[f64] {
        &self.caps
    }

    pub fn utilities(&self) -> &[Utility] {
        &self.utilities
    }

    pub fn objective(&self, r: &[f64]) -> f64 {
        self.utilities
            .iter()
            .zip(&self.caps)
            .zip(r)
            .map(|((u, &cap), &x)| u.value(x.min(cap)))
            .sum()
    }

    /// Gradient of the capped objective: the left derivative at a cap, `0` beyond it.
    pub fn gradient(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.utilities
            .iter()
            .zip(&self.caps)
            .zip(r)
            .enumerate()
            .map(|(n, ((u, &cap), &x))| {
                let d = if x > cap { 0.0 } else { u.derivative(x) };
                if d.is_finite() {
                    Ok(d)
                } else {
                    Err(Error::NonFiniteGradient(n))
                }
            })
            .collect()
    }

    pub fn clamp(&self, r: &[f64]) -> Vec<f64> {
        r.iter().zip(&self.caps).map(|(&x, &c)| x.min(c)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Exact line search by golden section on `[0, 1]`.
    LineSearch,
    /// The open-loop step `2/(t+2)`.
    Fixed,
}

#[derive(Debug, Clone, Copy)]
pub struct FwOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub step: StepRule,
    pub caps: Caps,
}

impl Default for FwOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 10_000,
            step: StepRule::LineSearch,
            caps: Caps::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessSolution {
    pub r_star: RatePoint,
    pub objective: f64,
    /// Frank-Wolfe gap at the final iterate; bounds the optimality gap.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `β − α·r*` for every region inequality.
    pub slacks: Vec<f64>,
    pub binding_constraints: Vec<AlphaVector>,
    /// Objective before the first step and after each step.
    #[serde(skip)]
    pub objective_history: Vec<f64>,
}

/// A model, its region and a utility specification, ready to solve.
pub struct FairnessProblem {
    evaluator: SupportEvaluator,
    region: StabilityRegion,
    utilities: UtilitySpec,
    /// Some cap lies below the region's extent along its axis.
    boxed: bool,
}

impl FairnessProblem {
    pub fn new(model: &DiscreteChannelModel, utilities: UtilitySpec, caps: &Caps) -> Result<Self> {
        if utilities.len() != model.num_queues() {
            return Err(Error::DimensionMismatch(format!(
                "{} utilities for {} queues",
                utilities.len(),
                model.num_queues()
            )));
        }
        let opts = RegionOptions {
            caps: *caps,
            ..RegionOptions::default()
        };
        let evaluator = SupportEvaluator::new(model, caps)?;
        let n = model.num_queues();
        let mut boxed = false;
        for (q, &cap) in utilities.caps().iter().enumerate() {
            let extent = evaluator.value(&AlphaVector::unit(n, q).to_f64())?;
            boxed |= cap < extent;
        }
        Ok(Self {
            evaluator,
            region: build_region(model, &opts)?,
            utilities,
            boxed,
        })
    }

    pub fn region(&self) -> &StabilityRegion {
        &self.region
    }

    pub fn utilities(&self) -> &UtilitySpec {
        &self.utilities
    }

    fn oracle(&self, grad: &[f64]) -> Result<Vec<f64>> {
        if self.boxed {
            self.boxed_oracle(grad)
        } else {
            Ok(self
                .evaluator
                .vertex(grad, TieRule::LowestIndex)?
                .into_inner())
        }
    }

    /// `argmax grad·v` over the region intersected with `0 ≤ v ≤ λ`.
    fn boxed_oracle(&self, grad: &[f64]) -> Result<Vec<f64>> {
        use minilp::{ComparisonOp, OptimizationDirection, Problem};
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<_> = grad
            .iter()
            .zip(self.utilities.caps())
            .map(|(&g, &cap)| lp.add_var(g, (0.0, cap)))
            .collect();
        for ineq in &self.region.inequalities {
            let terms: Vec<_> = vars
                .iter()
                .zip(ineq.alpha.coords())
                .filter(|(_, &a)| a > 0)
                .map(|(&v, &a)| (v, a as f64))
                .collect();
            lp.add_constraint(terms.as_slice(), ComparisonOp::Le, ineq.beta);
        }
        let sol = lp
            .solve()
            .map_err(|e| Error::InvalidArgument(format!("capped linear step failed: {e}")))?;
        Ok(vars.iter().map(|&v| sol[v].max(0.0)).collect())
    }

    /// `∇g(r)·(v − r)` with `v` the support vertex in direction `∇g(r)`.
    pub fn fw_gap(&self, r: &[f64]) -> Result<f64> {
        let margin = self.region.margin(r)?;
        if margin < -MEMBERSHIP_TOL {
            return Err(Error::OutsideRegion(margin));
        }
        let grad = self.utilities.gradient(r)?;
        if grad.iter().all(|&g| g == 0.0) {
            return Ok(0.0);
        }
        let v = self.oracle(&grad)?;
        Ok(dot_diff(&grad, &v, r))
    }

    fn start(&self) -> Result<Vec<f64>> {
        let n = self.region.n;
        let mut r = vec![0.0; n];
        for q in 0..n {
            let mut e = vec![0.0; n];
            e[q] = 1.0;
            let v = self.oracle(&e)?;
            for (acc, x) in r.iter_mut().zip(v) {
                *acc += x / n as f64;
            }
        }
        Ok(self.utilities.clamp(&r))
    }

    pub fn solve(&self, opts: &FwOptions) -> Result<FairnessSolution> {
        if opts.tol.is_nan() || opts.tol <= 0.0 {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        let u = &self.utilities;
        let mut r = self.start()?;
        let mut history = vec![u.objective(&r)];
        let mut gap = f64::INFINITY;
        let mut iterations = 0;
        let mut converged = false;
        while iterations < opts.max_iters {
            let grad = u.gradient(&r)?;
            if grad.iter().all(|&g| g == 0.0) {
                gap = 0.0;
                converged = true;
                break;
            }
            let v = self.oracle(&grad)?;
            gap = dot_diff(&grad, &v, &r);
            if gap <= opts.tol {
                converged = true;
                break;
            }
            let dir: Vec<f64> = v.iter().zip(&r).map(|(a, b)| a - b).collect();
            let gamma = match opts.step {
                StepRule::Fixed => 2.0 / (iterations as f64 + 2.0),
                StepRule::LineSearch => line_search(|g| u.objective(&axpy(&r, g, &dir))),
            };
            iterations += 1;
            if gamma == 0.0 {
                // no representable improvement along the FW direction
                history.push(*history.last().expect("nonempty"));
                break;
            }
            r = axpy(&r, gamma, &dir);
            history.push(u.objective(&r));
        }
        if !converged {
            gap = self.fw_gap(&r)?;
            converged = gap <= opts.tol;
        }
        let r_star = u.clamp(&r);
        let slacks = self.region.slacks(&r_star);
        let binding_constraints = self
            .region
            .inequalities
            .iter()
            .zip(&slacks)
            .filter(|(_, &s)| s <= BINDING_TOL)
            .map(|(i, _)| i.alpha.clone())
            .collect();
        Ok(FairnessSolution {
            objective: u.objective(&r_star),
            r_star: RatePoint::new(r_star)?,
            gap,
            iterations,
            converged,
            slacks,
            binding_constraints,
            objective_history: history,
        })
    }
}

fn dot_diff(g: &[f64], v: &[f64], r: &[f64]) -> f64 {
    g.iter().zip(v).zip(r).map(|((g, v), r)| g * (v - r)).sum()
}

fn axpy(x: &[f64], a: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(x, d)| (x + a * d).max(0.0)).collect()
}

/// Maximizer of a concave `phi` on `[0, 1]`. Never returns a point worse than
/// either endpoint, so the objective cannot decrease.
fn line_search(phi: impl Fn(f64) -> f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (phi(x1), phi(x2));
    while hi - lo > 1e-13 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = phi(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = phi(x1);
        }
    }
    let mid = 0.5 * (lo + hi);
    [(0.0, phi(0.0)), (mid, phi(mid)), (1.0, phi(1.0))]
        .into_iter()
        .fold((0.0, f64::NEG_INFINITY), |best, cand| {
            if cand.1 > best.1 {
                cand
            } else {
                best
            }
        })
        .0
}

pub fn solve_fairness(
    model: &DiscreteChannelModel,
    utilities: UtilitySpec,
    tol: f64,
    max_iters: usize,
) -> Result<FairnessSolution> {
    let opts = FwOptions {
        tol,
        max_iters,
        ..FwOptions::default()
    };
    FairnessProblem::new(model, utilities, &opts.caps)?.solve(&opts)
}

pub fn fw_gap(model: &DiscreteChannelModel, r: &[f64], utilities: UtilitySpec) -> Result<f64> {
    FairnessProblem::new(model, utilities, &Caps::default())?.fw_gap(r)
}
