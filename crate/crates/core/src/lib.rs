//! Stability regions of multi-queue multi-server (MQMS) time-slotted systems.
//!
//! The crate computes the exact polytope of arrival rates that some server
//! allocation policy can stabilize when link capacities follow a stationary
//! distribution, simulates Max-Weight scheduling against it, traces the
//! region of the fluid model with continuous channels, and solves utility
//! fairness problems over the region.
//!
//! Module map:
//! - [`channel`]: channel-state distributions, enumeration and sampling
//! - [`alpha`]: the direction sets `W`, `Wᴺ` and `V̂`
//! - [`region`]: support function, support vertices, inequality sets, margin `δ`
//! - [`sim`]: slot-level MW and AS/LCQ simulation and the occupancy bound
//! - [`fluid`]: Monte Carlo support values and boundary tracing for continuous channels
//! - [`fairness`]: Frank-Wolfe utility maximization over the region
//! - [`model`]: JSON descriptors for channel and arrival models
//! - [`oracle`]: self-checks of the support function against brute force

pub mod alpha;
pub mod channel;
pub mod error;
pub mod exec;
pub mod fairness;
pub mod fluid;
pub mod model;
pub mod oracle;
pub mod region;
pub mod sim;

pub use alpha::{build_vhat, build_w, in_v, wn_count, AlphaVector};
pub use channel::{
    ChannelMatrix, ChannelModel, ContinuousChannelModel, DiscreteChannelModel, DiscreteKind,
    LinkDistribution,
};
pub use error::{Error, Result};
pub use exec::Execution;
pub use region::{
    brute_force_support, build_region, membership_margin, onoff_region, support_function,
    support_vertex, Inequality, RatePoint, RegionOptions, StabilityRegion, SupportEvaluator,
    Verdict,
};

use serde::{Deserialize, Serialize};

/// Upper limits on exhaustive enumerations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    /// Channel states (or per-server columns) enumerated for one model.
    pub state_space: u64,
    /// Candidate directions in `Wᴺ` scanned while building `V̂`.
    pub vhat_candidates: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            state_space: 10_000_000,
            vhat_candidates: 10_000_000,
        }
    }
}

/// Which queue wins when several share the maximal weight.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    #[default]
    LowestIndex,
    HighestIndex,
}
