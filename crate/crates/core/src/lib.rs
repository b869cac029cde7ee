//! Exact values and competitive ratios of reward-lookahead agents in
//! finite-horizon tabular MDPs.
//!
//! A lookahead agent observes the realized rewards of the next `L` steps
//! before acting. This crate computes, at desk scale:
//!
//! * exact values of optimal no-lookahead and lookahead policies,
//! * worst-case-distribution lookahead values (suprema over reward
//!   distributions with fixed expectations),
//! * competitive ratios against worst-case reward expectations via an
//!   exact max-min linear program over occupancy measures,
//! * a zoo of structured environments with known analytic bounds,
//! * simulation and brute-force oracles that cross-check everything.
//!
//! Step indices are 0-based throughout: a horizon-`H` episode visits steps
//! `0..H`, and an `L`-step lookahead at step `h` reveals the realized
//! rewards of steps `h..min(h+L, H)`.

pub mod cr;
pub mod envs;
pub mod lookahead;
pub mod mdp;
pub mod reach;
pub mod sim;
pub mod simplex;
pub mod wire;

pub use cr::{
    analytic_lower_bound, cr_fixed, cr_worst_expectations, cr_worst_expectations_heuristic,
    maxmin_occupancy_lp, reward_grid_oracle, AlphaWeights, AnalyticBounds, CrMode, CrReport,
};
pub use lookahead::{modified_reward, sup_lookahead_value, LookaheadSpec, LookaheadValue};
pub use mdp::{
    mix_occupancies, occupancy_of_policy, optimal_value_no_lookahead, policy_from_occupancy,
    value_of_policy, DiscreteSupport, MarkovPolicy, OccupancyMeasure, RewardFamily, RewardSpec,
    TabularMdp, Violation,
};
pub use reach::{conditional_reach, optimal_reach, ReachTable};
pub use sim::{
    exact_lookahead_value, sample_episode, simulate_greedy_lookahead,
    simulate_transition_lookahead, EpisodeTrace, McEstimate,
};

/// Errors reported by fallible operations. Validation of constructed
/// objects reports [`Violation`] lists instead; these are for inputs or
/// resource limits that prevent an operation from running at all.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Array shapes or sizes do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// A parameter is outside the operation's domain.
    #[error("parameter out of domain: {0}")]
    Domain(String),
    /// The input object fails its own invariants.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// An enumeration or table would exceed its resource cap.
    #[error("resource cap exceeded: {0}")]
    CapExceeded(String),
    /// The linear program has no feasible point.
    #[error("infeasible program: {0}")]
    Infeasible(String),
    /// The linear program is unbounded.
    #[error("unbounded program: {0}")]
    Unbounded(String),
}

/// Tolerances used across the crate, pinned in one place.
pub mod tol {
    /// Construction invariants: row sums, distribution masses.
    pub const CONSTRUCT: f64 = 1e-12;
    /// Propagated quantities: occupancies, values, flows.
    pub const PROPAGATED: f64 = 1e-9;
    /// Linear-program optimality certificates.
    pub const LP_CERT: f64 = 1e-8;
    /// Mass below which a state is treated as unvisited.
    pub const UNVISITED: f64 = 1e-15;
}
