//! Cross-checks of the support function against independent routes.

use serde::Serialize;

use crate::alpha::{build_vhat, AlphaVector};
use crate::channel::DiscreteChannelModel;
use crate::error::Result;
use crate::exec::Execution;
use crate::region::{brute_force_support, onoff_region, SupportEvaluator};
use crate::Caps;

/// Agreement required between the fast and brute-force support values.
pub const ORACLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub alpha: AlphaVector,
    pub support: f64,
    pub brute_force: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub directions: usize,
    pub agreeing: usize,
    pub max_abs_dev_brute_force: f64,
    /// Only for Bernoulli models: deviation from the subset closed form.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_abs_dev_closed_form: Option<f64>,
    pub rows: Vec<OracleRow>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.agreeing == self.directions
            && self.max_abs_dev_closed_form.is_none_or(|d| d <= ORACLE_TOL)
    }
}

/// Compares the support function with brute force on every `α ∈ V̂` and, for
/// Bernoulli models, with the subset closed form on indicator directions.
pub fn oracle_check(model: &DiscreteChannelModel, caps: &Caps) -> Result<OracleReport> {
    let vhat = build_vhat(
        model.max_capacity(),
        model.num_queues(),
        caps,
        Execution::Sequential,
    )?;
    let eval = SupportEvaluator::new(model, caps)?;
    let closed = match model.bernoulli_probabilities() {
        Some(p) => Some(onoff_region(&p)?),
        None => None,
    };
    let mut rows = Vec::with_capacity(vhat.len());
    for alpha in vhat {
        let a = alpha.to_f64();
        let support = eval.value(&a)?;
        let brute_force = brute_force_support(model, &a)?;
        let closed_form = closed.as_ref().and_then(|r| {
            r.inequalities
                .iter()
                .find(|i| i.alpha == alpha)
                .map(|i| i.beta)
        });
        rows.push(OracleRow {
            alpha,
            support,
            brute_force,
            closed_form,
        });
    }
    let max_abs_dev_brute_force = rows
        .iter()
        .map(|r| (r.support - r.brute_force).abs())
        .fold(0.0, f64::max);
    let agreeing = rows
        .iter()
        .filter(|r| (r.support - r.brute_force).abs() <= ORACLE_TOL)
        .count();
    let max_abs_dev_closed_form = closed.as_ref().map(|_| {
        rows.iter()
            .filter_map(|r| r.closed_form.map(|c| (c - r.support).abs()))
            .fold(0.0, f64::max)
    });
    Ok(OracleReport {
        directions: rows.len(),
        agreeing,
        max_abs_dev_brute_force,
        max_abs_dev_closed_form,
        rows,
    })
}
