//! Bayes-adaptive MDPs over finite priors of tabular MDPs: exact
//! regularized solutions, uniform trust-region mirror descent, and
//! stability and generalization measurements for empirical priors.

pub mod bayes;
pub mod bounds;
pub mod envgen;
pub mod error;
pub mod format;
pub mod history;
pub mod mdp;
pub mod mirror;
pub mod rng;
pub mod sim;
pub mod stability;

pub use bayes::{evaluate, loss, regret, solve_exact, RegConfig, ValueVector};
pub use error::{Error, Result};
pub use history::{posteriors, step_kernel, visitation, BeliefMdp, History, HistorySpace, Policy, PosteriorTable};
pub use mdp::{smooth, validate, CostSet, Kernel, Prior, TabularMdp};
pub use mirror::{project_simplex, utrpo_run, utrpo_step, IterateTrace, StepSchedule};
