//! Instance generators and invariant checks shared by the property and
//! acceptance suites. Each check returns a description of the first
//! violation it finds.

#![allow(dead_code)]

use mqms_core::alpha::{build_vhat, build_w, AlphaVector};
use mqms_core::sim::{mw_allocate, ArrivalModel, Policy, Simulation};
use mqms_core::{
    brute_force_support, build_region, onoff_region, Caps, ChannelMatrix, DiscreteChannelModel,
    Execution, RegionOptions, SupportEvaluator, TieRule,
};
use rand::Rng;

pub type Check = Result<(), String>;

pub fn caps() -> Caps {
    Caps::default()
}

fn random_pmf<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    loop {
        // sprinkle exact zeros so degenerate links get exercised
        let w: Vec<f64> = (0..len)
            .map(|_| {
                if rng.random::<f64>() < 0.2 {
                    0.0
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            let mut p: Vec<f64> = w.iter().map(|x| x / s).collect();
            // push the rounding residue into the largest entry
            let resid = 1.0 - p.iter().sum::<f64>();
            let imax = (0..len).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
            p[imax] += resid;
            return p;
        }
    }
}

pub fn random_factored<R: Rng>(rng: &mut R, n: usize, k: usize, m: u32) -> DiscreteChannelModel {
    let pmf: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|_| (0..k).map(|_| random_pmf(rng, m as usize + 1)).collect())
        .collect();
    DiscreteChannelModel::factored(m, &pmf).expect("valid random model")
}

pub fn random_bernoulli<R: Rng>(rng: &mut R, n: usize, k: usize) -> DiscreteChannelModel {
    let p: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..k)
                .map(|_| match rng.random_range(0..10) {
                    0 => 0.0,
                    1 => 1.0,
                    _ => rng.random::<f64>(),
                })
                .collect()
        })
        .collect();
    DiscreteChannelModel::bernoulli(&p).expect("valid random model")
}

pub fn random_explicit<R: Rng>(rng: &mut R, n: usize, k: usize, m: u32) -> DiscreteChannelModel {
    let count = rng.random_range(1..=6);
    let mut states: Vec<ChannelMatrix> = Vec::new();
    while states.len() < count {
        let entries = (0..n * k).map(|_| rng.random_range(0..=m)).collect();
        let c = ChannelMatrix::new(n, k, entries).unwrap();
        if !states.contains(&c) {
            states.push(c);
        }
        if states.len() as u128 >= (u128::from(m) + 1).pow((n * k) as u32) {
            break;
        }
    }
    let probs = random_pmf(rng, states.len());
    DiscreteChannelModel::explicit_joint(m, states.into_iter().zip(probs).collect())
        .expect("valid random model")
}

/// A random discrete model of one of the three kinds.
pub fn random_model<R: Rng>(rng: &mut R, n: usize, k: usize, m: u32) -> DiscreteChannelModel {
    match rng.random_range(0..3) {
        0 if m == 1 => random_bernoulli(rng, n, k),
        0 | 1 => random_factored(rng, n, k, m),
        _ => random_explicit(rng, n, k, m),
    }
}

pub fn random_direction<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let a: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random::<f64>() < 0.2 {
                    0.0
                } else {
                    rng.random::<f64>() * 3.0
                }
            })
            .collect();
        if a.iter().any(|&x| x > 0.0) {
            return a;
        }
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

pub fn check_homogeneity(model: &DiscreteChannelModel, alpha: &[f64]) -> Check {
    let eval = SupportEvaluator::new(model, &caps()).map_err(|e| e.to_string())?;
    let base = eval.value(alpha).unwrap();
    for q in [0.5, 2.0, 10.0] {
        let scaled: Vec<f64> = alpha.iter().map(|a| a * q).collect();
        let v = eval.value(&scaled).unwrap();
        if !rel_close(v, q * base, 1e-9) {
            return Err(format!("h({q}·α) = {v} but {q}·h(α) = {}", q * base));
        }
    }
    Ok(())
}

pub fn check_subadditivity(model: &DiscreteChannelModel, a: &[f64], b: &[f64]) -> Check {
    let eval = SupportEvaluator::new(model, &caps()).map_err(|e| e.to_string())?;
    let sum: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
    let lhs = eval.value(&sum).unwrap();
    let rhs = eval.value(a).unwrap() + eval.value(b).unwrap();
    if lhs > rhs + 1e-9 {
        return Err(format!("h(a+b) = {lhs} > h(a)+h(b) = {rhs}"));
    }
    Ok(())
}

/// `bump` is added to `a` to get a componentwise larger direction.
pub fn check_monotonicity(model: &DiscreteChannelModel, a: &[f64], bump: &[f64]) -> Check {
    let eval = SupportEvaluator::new(model, &caps()).map_err(|e| e.to_string())?;
    let bigger: Vec<f64> = a.iter().zip(bump).map(|(x, y)| x + y.abs()).collect();
    let (lo, hi) = (eval.value(a).unwrap(), eval.value(&bigger).unwrap());
    if lo > hi + 1e-12 {
        return Err(format!("h(α) = {lo} > h(α') = {hi} with α ≤ α'"));
    }
    Ok(())
}

/// Support function equals the brute-force oracle on every `α ∈ V̂`.
pub fn check_oracle_equivalence(model: &DiscreteChannelModel) -> Check {
    let vhat = build_vhat(
        model.max_capacity(),
        model.num_queues(),
        &caps(),
        Execution::Sequential,
    )
    .map_err(|e| e.to_string())?;
    let eval = SupportEvaluator::new(model, &caps()).map_err(|e| e.to_string())?;
    for alpha in vhat {
        let a = alpha.to_f64();
        let fast = eval.value(&a).unwrap();
        let brute = brute_force_support(model, &a).map_err(|e| e.to_string())?;
        if (fast - brute).abs() > 1e-9 {
            return Err(format!(
                "α = {alpha}: support {fast} vs brute force {brute}"
            ));
        }
    }
    Ok(())
}

/// Indicator directions reproduce `K − Σ_k Π_{n∈Q}(1 − p_{n,k})`.
pub fn check_onoff(model: &DiscreteChannelModel) -> Check {
    let p = model
        .bernoulli_probabilities()
        .ok_or("not a bernoulli model")?;
    let (n, k) = (model.num_queues(), model.num_servers());
    let eval = SupportEvaluator::new(model, &caps()).map_err(|e| e.to_string())?;
    for mask in 1u64..(1 << n) {
        let alpha = AlphaVector::indicator(n, mask);
        let closed: f64 = k as f64
            - (0..k)
                .map(|s| {
                    (0..n)
                        .filter(|&q| (mask >> q) & 1 == 1)
                        .map(|q| 1.0 - p[q][s])
                        .product::<f64>()
                })
                .sum::<f64>();
        let h = eval.value(&alpha.to_f64()).unwrap();
        if (h - closed).abs() > 1e-12 {
            return Err(format!("Q = {alpha}: support {h} vs closed form {closed}"));
        }
    }
    let region = onoff_region(&p).map_err(|e| e.to_string())?;
    if region.inequalities.len() != (1 << n) - 1 {
        return Err("closed-form region has the wrong size".into());
    }
    Ok(())
}

pub fn check_vertex_consistency(model: &DiscreteChannelModel, alpha: &[f64]) -> Check {
    let eval = SupportEvaluator::new(model, &caps()).map_err(|e| e.to_string())?;
    let region = build_region(model, &RegionOptions::default()).map_err(|e| e.to_string())?;
    let h = eval.value(alpha).unwrap();
    for tie in [TieRule::LowestIndex, TieRule::HighestIndex] {
        let v = eval.vertex(alpha, tie).unwrap();
        let dot: f64 = alpha.iter().zip(v.rates()).map(|(a, r)| a * r).sum();
        if !rel_close(dot, h, 1e-9) {
            return Err(format!("α·r(α) = {dot} vs h(α) = {h} ({tie:?})"));
        }
        let margin = region.margin(v.rates()).unwrap();
        if margin < -1e-9 {
            return Err(format!("vertex {:?} has margin {margin}", v.rates()));
        }
    }
    Ok(())
}

/// Relabelling queues permutes the region and nothing else.
pub fn check_permutation_invariance(model: &DiscreteChannelModel, perm: &[usize]) -> Check {
    let n = model.num_queues();
    let k = model.num_servers();
    let states = model.enumerate_states(&caps()).map_err(|e| e.to_string())?;
    // queue perm[i] of the new model is queue i of the old one
    let permuted: Vec<(ChannelMatrix, f64)> = states
        .iter()
        .map(|(c, p)| {
            let mut entries = vec![0; n * k];
            for q in 0..n {
                for s in 0..k {
                    entries[perm[q] * k + s] = c.get(q, s);
                }
            }
            (ChannelMatrix::new(n, k, entries).unwrap(), *p)
        })
        .collect();
    let other = DiscreteChannelModel::explicit_joint(model.max_capacity(), permuted)
        .map_err(|e| e.to_string())?;
    let opts = RegionOptions::default();
    let a = build_region(model, &opts).map_err(|e| e.to_string())?;
    let b = build_region(&other, &opts).map_err(|e| e.to_string())?;
    if a.inequalities.len() != b.inequalities.len() {
        return Err("regions differ in size".into());
    }
    for ineq in &b.inequalities {
        let back: Vec<u64> = (0..n).map(|q| ineq.alpha.coords()[perm[q]]).collect();
        let back = AlphaVector::new(back);
        let Some(orig) = a.inequalities.iter().find(|i| i.alpha == back) else {
            return Err(format!("direction {back} missing after permutation"));
        };
        if (orig.beta - ineq.beta).abs() > 1e-12 {
            return Err(format!("β for {back}: {} vs {}", orig.beta, ineq.beta));
        }
    }
    Ok(())
}

fn parallel(u: &[u64], v: &[u64]) -> bool {
    (0..u.len()).all(|i| {
        (0..u.len())
            .all(|j| u128::from(u[i]) * u128::from(v[j]) == u128::from(u[j]) * u128::from(v[i]))
    })
}

pub fn check_scaling_free(vhat: &[AlphaVector]) -> Check {
    for (i, u) in vhat.iter().enumerate() {
        for v in &vhat[i + 1..] {
            if parallel(u.coords(), v.coords()) {
                return Err(format!("{u} and {v} are positive multiples"));
            }
        }
    }
    Ok(())
}

/// Every `W^N` member passing the partition test is an integer multiple of
/// exactly one `V̂` element.
pub fn check_completeness(m: u32, n: usize) -> Check {
    let vhat = build_vhat(m, n, &caps(), Execution::Sequential).map_err(|e| e.to_string())?;
    let w = build_w(m, n).map_err(|e| e.to_string())?;
    let total = w.len().pow(n as u32);
    for idx in 1..total {
        let mut rest = idx;
        let coords: Vec<u64> = (0..n)
            .map(|_| {
                let c = w[rest % w.len()];
                rest /= w.len();
                c
            })
            .collect();
        let v = AlphaVector::new(coords.clone());
        if v.is_zero() || !v.in_v(m).unwrap() {
            continue;
        }
        let owners = vhat
            .iter()
            .filter(|u| {
                let i = u.coords().iter().position(|&c| c != 0).unwrap();
                coords[i].is_multiple_of(u.coords()[i])
                    && coords
                        .iter()
                        .zip(u.coords())
                        .all(|(&c, &b)| c == b * (coords[i] / u.coords()[i]))
            })
            .count();
        if owners != 1 {
            return Err(format!("{v} is a multiple of {owners} V̂ elements"));
        }
    }
    Ok(())
}

/// MW's per-server argmax attains the maximum over all `N^K` allocations.
pub fn check_mw_maximality(x: &[u64], c: &ChannelMatrix) -> Check {
    let (n, k) = (c.rows(), c.cols());
    let mw = mw_allocate(x, c, TieRule::LowestIndex);
    let got = mw.weight(x, c);
    let mut best = 0u128;
    for idx in 0..n.pow(k as u32) {
        let mut rest = idx;
        let mut value = 0u128;
        for s in 0..k {
            let q = rest % n;
            rest /= n;
            value += u128::from(x[q]) * u128::from(c.get(q, s));
        }
        best = best.max(value);
    }
    if got != best {
        return Err(format!(
            "MW weight {got} below exhaustive max {best} at X={x:?}, C={c:?}"
        ));
    }
    if mw
        .to_matrix()
        .iter()
        .map(|r| r.iter().map(|&b| b as usize).sum::<usize>())
        .sum::<usize>()
        != k
    {
        return Err("allocation does not assign every server exactly once".into());
    }
    Ok(())
}

/// Queues stay nonnegative and conserve packets in every slot.
pub fn check_conservation(
    model: &DiscreteChannelModel,
    arrivals: &ArrivalModel,
    policy: Policy,
    slots: u64,
    seed: u64,
) -> Check {
    let mut sim = Simulation::new(model, arrivals, policy, TieRule::LowestIndex, seed)
        .map_err(|e| e.to_string())?;
    for _ in 0..slots {
        let before = sim.state().queues.clone();
        let (served, arrived) = sim.advance();
        let (served, arrived) = (served.to_vec(), arrived.to_vec());
        let st = sim.state();
        for q in 0..before.len() {
            let expect = before[q].saturating_sub(served[q]) + arrived[q];
            if st.queues[q] != expect {
                return Err(format!(
                    "slot {}: queue {q} is {} not {expect}",
                    st.t, st.queues[q]
                ));
            }
        }
        if !st.is_conserved() {
            return Err(format!("slot {}: conservation broken {st:?}", st.t));
        }
    }
    Ok(())
}

/// Per-server column pmfs assemble into the enumerated joint pmf.
pub fn check_factorization(model: &DiscreteChannelModel) -> Check {
    let (n, k) = (model.num_queues(), model.num_servers());
    let states = model.enumerate_states(&caps()).map_err(|e| e.to_string())?;
    let cols: Vec<Vec<(Vec<u32>, f64)>> = (0..k)
        .map(|s| model.per_server_column_distribution(s, &caps()).unwrap())
        .collect();
    let col_prob = |s: usize, col: &[u32]| {
        cols[s]
            .iter()
            .find(|(c, _)| c.as_slice() == col)
            .map_or(0.0, |(_, p)| *p)
    };
    for (c, p) in &states {
        let assembled: f64 = (0..k)
            .map(|s| col_prob(s, &c.column(s).collect::<Vec<_>>()))
            .product();
        if (assembled - p).abs() > 1e-12 {
            return Err(format!(
                "state {c:?}: joint {p} vs column product {assembled}"
            ));
        }
    }
    // marginals
    for q in 0..n {
        for s in 0..k {
            let pmf = model.link_pmf(q, s).unwrap();
            for (v, &want) in pmf.iter().enumerate() {
                let got: f64 = states
                    .iter()
                    .filter(|(c, _)| c.get(q, s) as usize == v)
                    .map(|(_, p)| p)
                    .sum();
                if (got - want).abs() > 1e-12 {
                    return Err(format!(
                        "link ({q},{s}) value {v}: marginal {got} vs {want}"
                    ));
                }
            }
        }
    }
    Ok(())
}
