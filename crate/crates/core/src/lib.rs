//! Planning over competing dynamics hypotheses.
//!
//! A base partially observable problem is augmented with a finite set of
//! candidate dynamics models. The planner searches in the space of hybrid
//! beliefs (categorical over hypotheses x conditional state beliefs) and
//! earns a configurable bonus for resolving which model is correct before
//! a deadline, on top of the base task reward.

pub mod belief;
pub mod config;
pub mod estimators;
pub mod harness;
pub mod mdh;
pub mod problem;
pub mod problems;
pub mod rng;
pub mod solver;

pub use belief::{
    CategoricalBelief, ConditionalBelief, GaussianBelief, HybridBelief, ParticleBelief,
};
pub use estimators::{mm_update, UpdaterConfig, UpdaterKind};
pub use mdh::{HypothesisRewardKind, HypothesisSet, MdhProblem, ResolutionSpec};
pub use problem::Pomdp;
pub use solver::{plan, BeliefMdp, SolverConfig};
