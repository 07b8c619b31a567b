//! Status-update policies for energy-harvesting sensors whose battery level is
//! only known through the updates they send.
//!
//! The crate turns the partially observed problem into an MDP over a truncated
//! table of battery beliefs, solves it with sparse relative value iteration,
//! and checks the resulting policies in a seeded Monte-Carlo environment. A
//! Lagrangian relax-then-truncate layer extends the single-sensor solver to
//! many sensors sharing a per-slot transmission budget.

pub mod baselines;
pub mod belief;
pub mod belief_mdp;
pub mod chain;
pub mod error;
pub mod export;
pub mod model;
pub mod multi;
pub mod rvi;
pub mod sim;
pub mod sparse;
pub mod structure;

pub use belief::{Belief, BeliefIndex, Observation, TruncatedBeliefSpace};
pub use belief_mdp::{BeliefMdp, BeliefState, StateIndexer};
pub use error::{Error, Result};
pub use model::{Action, Depth, EnvState, ModelParams};
pub use multi::{MultiModel, MultiPolicy, Network, RelaxedPolicy};
pub use rvi::{rvia_solve, RviOptions, SolveResult, SparseKernel};
pub use sim::{simulate, CostEstimate, EpisodeConfig, Policy};

// Runs the guide's listings as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/beliefs.md")]
    mod beliefs {}
    #[doc = include_str!("../../../book/src/solving.md")]
    mod solving {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/multisensor.md")]
    mod multisensor {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
