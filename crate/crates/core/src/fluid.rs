//! Fluid-model stability surface for continuous channel distributions.
//!
//! With real-valued capacities every nonnegative direction contributes a
//! half-space `α·λᵀ ≤ E[Σ_k max_n α_n C[n,k]]`, so the region is estimated
//! by Monte Carlo support values. Boundary tracing for two queues evaluates
//! a grid of directions on one shared sample block (common random numbers)
//! and takes the lower envelope of the resulting lines.

use std::f64::consts::FRAC_PI_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::channel::ContinuousChannelModel;
use crate::error::{Error, Result};
use crate::exec::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    /// Sample standard deviation over `√samples`.
    pub stderr: f64,
}

/// `samples` i.i.d. channel matrices stored contiguously.
#[derive(Debug, Clone)]
pub struct SampleBlock {
    n: usize,
    k: usize,
    samples: usize,
    data: Vec<f64>,
}

impl SampleBlock {
    pub fn draw(model: &ContinuousChannelModel, samples: usize, seed: u64) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InvalidArgument("need at least one sample".into()));
        }
        let (n, k) = (model.num_queues(), model.num_servers());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(samples * n * k);
        for _ in 0..samples {
            data.extend_from_slice(model.sample_state(&mut rng).entries());
        }
        Ok(Self {
            n,
            k,
            samples,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples == 0
    }

    /// Monte Carlo mean of `Σ_k max_n α_n C[n,k]` over the block.
    pub fn support(&self, alpha: &[f64]) -> Result<McEstimate> {
        check_direction(alpha, self.n)?;
        let (n, k) = (self.n, self.k);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for c in self.data.chunks_exact(n * k) {
            let v: f64 = (0..k)
                .map(|server| {
                    (0..n)
                        .map(|q| alpha[q] * c[q * k + server])
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .sum();
            sum += v;
            sum_sq += v * v;
        }
        let m = self.samples as f64;
        let mean = sum / m;
        let stderr = if self.samples > 1 {
            let var = ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0);
            (var / m).sqrt()
        } else {
            0.0
        };
        Ok(McEstimate {
            estimate: mean,
            stderr,
        })
    }
}

fn check_direction(alpha: &[f64], n: usize) -> Result<()> {
    if alpha.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "direction has {} entries, model has N = {n}",
            alpha.len()
        )));
    }
    if alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
        return Err(Error::InvalidArgument(
            "direction must be finite and nonnegative".into(),
        ));
    }
    if alpha.iter().all(|&a| a == 0.0) {
        return Err(Error::InvalidArgument("zero direction vector".into()));
    }
    Ok(())
}

pub fn mc_support_function(
    model: &ContinuousChannelModel,
    alpha: &[f64],
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_direction(alpha, model.num_queues())?;
    SampleBlock::draw(model, samples, seed)?.support(alpha)
}

/// Upper boundary `λ₂ = μ₂·s·(2 − s)`, `s = √(1 − λ₁/μ₁)`, of the two-queue,
/// one-server fluid region with independent exponential channels.
pub fn exp_2q_boundary(mu1: f64, mu2: f64, lambda1: f64) -> Result<f64> {
    if !(mu1 > 0.0 && mu2 > 0.0) {
        return Err(Error::InvalidArgument("means must be positive".into()));
    }
    if lambda1 < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "lambda1 = {lambda1} is negative"
        )));
    }
    if lambda1 > mu1 {
        return Err(Error::OutsideCapacity { lambda1, mu1 });
    }
    let s = (1.0 - lambda1 / mu1).sqrt();
    Ok(mu2 * s * (2.0 - s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectionSupport {
    pub theta: f64,
    pub h: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryPoint {
    pub lambda1: f64,
    pub lambda2: f64,
    pub stderr: f64,
}

/// Traced upper boundary of a two-queue fluid region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryCurve {
    /// λ₁ grid from 0 to the λ₁ intercept; the last point is `(intercept, 0)`.
    pub points: Vec<BoundaryPoint>,
    pub directions: Vec<DirectionSupport>,
    /// Box constraints `λ_n ≤ E[Σ_k C[n,k]]` from the axis directions.
    pub axis: [McEstimate; 2],
    pub samples: usize,
}

impl BoundaryCurve {
    /// Envelope value `min(box₂, min_θ (h(θ) − λ₁ cos θ)/sin θ)` at `lambda1`,
    /// with the stderr of whichever constraint binds.
    pub fn lambda2_at(&self, lambda1: f64) -> Option<BoundaryPoint> {
        if !(0.0..=self.axis[0].estimate).contains(&lambda1) {
            return None;
        }
        let mut best = (self.axis[1].estimate, self.axis[1].stderr);
        for d in &self.directions {
            let (s, c) = d.theta.sin_cos();
            let v = (d.h - lambda1 * c) / s;
            if v < best.0 {
                best = (v, d.stderr / s);
            }
        }
        Some(BoundaryPoint {
            lambda1,
            lambda2: best.0.max(0.0),
            stderr: best.1,
        })
    }

    /// The λ₁ intercept: largest λ₁ with `(λ₁, 0)` in the region.
    pub fn lambda1_intercept(&self) -> McEstimate {
        let mut best = self.axis[0];
        for d in &self.directions {
            let c = d.theta.cos();
            let v = d.h / c;
            if v < best.estimate {
                best = McEstimate {
                    estimate: v,
                    stderr: d.stderr / c,
                };
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TraceOptions {
    pub directions: usize,
    pub samples: usize,
    pub seed: u64,
    /// Number of λ₁ grid points, endpoints included.
    pub grid: usize,
    pub exec: Execution,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            directions: 181,
            samples: 100_000,
            seed: 1,
            grid: 201,
            exec: Execution::default(),
        }
    }
}

/// Uniform grid of `d` angles strictly inside `(0, π/2)`.
pub fn direction_grid(d: usize) -> Vec<f64> {
    let step = FRAC_PI_2 / (d + 1) as f64;
    (1..=d).map(|i| i as f64 * step).collect()
}

pub fn boundary_trace(
    model: &ContinuousChannelModel,
    opts: &TraceOptions,
) -> Result<BoundaryCurve> {
    if model.num_queues() != 2 {
        return Err(Error::InvalidArgument(format!(
            "boundary tracing needs N = 2, model has N = {}",
            model.num_queues()
        )));
    }
    if opts.directions < 3 {
        return Err(Error::InvalidArgument("need at least 3 directions".into()));
    }
    if opts.grid < 2 {
        return Err(Error::InvalidArgument("need at least 2 grid points".into()));
    }
    let block = SampleBlock::draw(model, opts.samples, opts.seed)?;
    let axis = [block.support(&[1.0, 0.0])?, block.support(&[0.0, 1.0])?];
    let thetas = direction_grid(opts.directions);
    let directions = opts
        .exec
        .map(&thetas, |&theta| {
            let (s, c) = theta.sin_cos();
            block.support(&[c, s]).map(|est| DirectionSupport {
                theta,
                h: est.estimate,
                stderr: est.stderr,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut curve = BoundaryCurve {
        points: Vec::new(),
        directions,
        axis,
        samples: opts.samples,
    };
    let end = curve.lambda1_intercept();
    let mut points: Vec<BoundaryPoint> = (0..opts.grid)
        .filter_map(|i| curve.lambda2_at(end.estimate * i as f64 / (opts.grid - 1) as f64))
        .collect();
    points.push(BoundaryPoint {
        lambda1: end.estimate,
        lambda2: 0.0,
        stderr: end.stderr,
    });
    curve.points = points;
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp2(mu1: f64, mu2: f64) -> ContinuousChannelModel {
        ContinuousChannelModel::exponential(&[vec![mu1], vec![mu2]]).unwrap()
    }

    /// Exact `E[max(a X, b Y)]` for independent exponentials with means
    /// `mu1, mu2`, via `max = X + Y − min` and `min ~ Exp(1/a + 1/b)`.
    fn exact_h(alpha: [f64; 2], mu1: f64, mu2: f64) -> f64 {
        let (a, b) = (alpha[0] * mu1, alpha[1] * mu2);
        if a == 0.0 || b == 0.0 {
            return a + b;
        }
        a + b - 1.0 / (1.0 / a + 1.0 / b)
    }

    #[test]
    fn exp_boundary_examples() {
        assert_eq!(exp_2q_boundary(2.0, 1.0, 0.0).unwrap(), 1.0);
        assert_eq!(exp_2q_boundary(2.0, 1.0, 2.0).unwrap(), 0.0);
        let mid = exp_2q_boundary(2.0, 1.0, 1.0).unwrap();
        assert!((mid - 0.914_213_562_373).abs() < 1e-9, "{mid}");
        assert!(matches!(
            exp_2q_boundary(2.0, 1.0, 2.5),
            Err(Error::OutsideCapacity { .. })
        ));
    }

    #[test]
    fn closed_form_matches_exact_envelope() {
        // envelope of the exact support lines on a fine angle grid
        let (mu1, mu2) = (2.0, 1.0);
        let thetas = direction_grid(20_000);
        for l1 in [0.0, 0.25, 0.5, 1.0, 1.5, 1.9] {
            let env = thetas
                .iter()
                .map(|&t| (exact_h([t.cos(), t.sin()], mu1, mu2) - l1 * t.cos()) / t.sin())
                .fold(mu2, f64::min);
            let closed = exp_2q_boundary(mu1, mu2, l1).unwrap();
            assert!((env - closed).abs() < 1e-6, "l1={l1}: {env} vs {closed}");
        }
    }

    #[test]
    fn mc_support_max_of_two_exponentials() {
        let m = exp2(1.0, 1.0);
        let est = mc_support_function(&m, &[1.0, 1.0], 1_000_000, 7).unwrap();
        assert!((est.estimate - 1.5).abs() < 3.0 * est.stderr, "{est:?}");
        assert!((exact_h([1.0, 1.0], 1.0, 1.0) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn mc_support_axis_direction_sums_means() {
        let m = ContinuousChannelModel::exponential(&[vec![1.0, 3.0], vec![2.0, 2.0]]).unwrap();
        let est = mc_support_function(&m, &[1.0, 0.0], 200_000, 3).unwrap();
        assert!((est.estimate - 4.0).abs() < 3.0 * est.stderr, "{est:?}");
        assert!(mc_support_function(&m, &[0.0, 0.0], 10, 3).is_err());
    }

    #[test]
    fn mc_support_deterministic_in_seed() {
        let m = exp2(2.0, 1.0);
        let a = mc_support_function(&m, &[0.3, 0.7], 1000, 9).unwrap();
        let b = mc_support_function(&m, &[0.3, 0.7], 1000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_channel_gives_unit_simplex() {
        let m = ContinuousChannelModel::new(&[
            vec![crate::LinkDistribution::Empirical { values: vec![1.0] }],
            vec![crate::LinkDistribution::Empirical { values: vec![1.0] }],
        ])
        .unwrap();
        let curve = boundary_trace(
            &m,
            &TraceOptions {
                directions: 31,
                samples: 10,
                grid: 11,
                ..TraceOptions::default()
            },
        )
        .unwrap();
        for p in &curve.points {
            assert!((p.lambda1 + p.lambda2 - 1.0).abs() < 1e-12, "{p:?}");
        }
    }

    #[test]
    fn trace_rejects_bad_input() {
        let three =
            ContinuousChannelModel::exponential(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        assert!(boundary_trace(&three, &TraceOptions::default()).is_err());
        let opts = TraceOptions {
            directions: 2,
            ..TraceOptions::default()
        };
        assert!(boundary_trace(&exp2(1.0, 1.0), &opts).is_err());
    }
}
