//! Groves redistribution mechanisms for assigning heterogeneous objects to
//! unit-demand agents.
//!
//! Efficient allocations and Clarke payments come from [`assignment`] and
//! [`clarke`]. Rebate rules: [`wco`] for identical objects, [`scaling`] for
//! values of the form `gamma_j * v_i`, and BAILEY-CAVALLO and HETERO in
//! [`rebates`] for general profiles. [`experiments`] runs them over
//! generated profile streams.

pub mod assignment;
pub mod clarke;
pub mod error;
pub mod experiments;
pub mod money;
pub mod ordering;
pub mod profile;
pub mod rebates;
pub mod scaling;
pub mod wco;

pub use assignment::{optimal_allocation, optimal_allocation_among, optimal_value, TieBreak};
pub use clarke::{
    averaged_surplus, clarke_payments, clarke_surplus, leave_one_out_surpluses, ClarkeOutcome, SurplusCache,
};
pub use error::{Error, Result};
pub use experiments::{
    adversarial_profile, evaluate, figure1_experiment, random_profile, worst_case_index, ExperimentConfig,
    ExperimentReport, Generator, Mechanism, MechanismKind,
};
pub use money::Money;
pub use ordering::{rank_agents, AgentRanking};
pub use profile::{AgentSet, Allocation, BidProfile, MechanismOutcome, ProfileFile};
pub use rebates::{bailey_cavallo_rebates, hetero_alphas, hetero_rebates, HeteroCoefficients};
pub use scaling::{solve_lp, ScalingModel};
pub use wco::{wco_coefficients, wco_index, wco_rebates, RebateCoefficients};
