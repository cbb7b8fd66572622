//! Run configuration: a TOML file whose every field has a default.

use std::path::PathBuf;

use brl_core::bounds::BoundInputs;
use brl_core::envgen::{self, LowerBoundParams, RandomShape};
use brl_core::history::DEFAULT_NODE_CAP;
use brl_core::mdp::{CostSet, Prior};
use brl_core::rng::derive_seed;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Jsonl,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root seed; every random draw is derived from it.
    pub seed: u64,
    /// Evaluation horizon T.
    pub horizon: usize,
    pub lambda: f64,
    pub max_nodes: usize,
    pub format: OutputFormat,
    /// Also write the history tree with visitation masses.
    pub dump_histories: bool,
    pub prior: PriorSource,
    pub erm: ErmConfig,
    pub stability: StabilityConfig,
    pub sweep: SweepSection,
    pub convergence: ConvergenceConfig,
    pub lowerbound: LowerBoundConfig,
    pub bounds: BoundsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            horizon: 2,
            lambda: 0.0,
            max_nodes: DEFAULT_NODE_CAP,
            format: OutputFormat::Csv,
            dump_histories: false,
            prior: PriorSource::default(),
            erm: ErmConfig::default(),
            stability: StabilityConfig::default(),
            sweep: SweepSection::default(),
            convergence: ConvergenceConfig::default(),
            lowerbound: LowerBoundConfig::default(),
            bounds: BoundsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorSource {
    File {
        path: PathBuf,
    },
    Random {
        states: usize,
        actions: usize,
        members: usize,
        mdp_horizon: usize,
        concentration: f64,
        /// Mix every kernel with the uniform distribution at this weight.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        smooth: Option<f64>,
    },
    LowerBound {
        identifier_length: usize,
        eps_prime: f64,
    },
    Restricted {
        states: usize,
        actions: usize,
        mdp_horizon: usize,
        k: usize,
        variants: usize,
        gate_prob: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        smooth: Option<f64>,
    },
}

impl Default for PriorSource {
    fn default() -> Self {
        PriorSource::Random { states: 2, actions: 2, members: 3, mdp_horizon: 2, concentration: 1.0, smooth: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErmConfig {
    /// Sample size drawn from the prior.
    pub n: usize,
}

impl Default for ErmConfig {
    fn default() -> Self {
        Self { n: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    pub n: usize,
    /// Measure per-MDP gaps on every prior member instead of the sample's.
    pub eval_population: bool,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self { n: 4, eval_population: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub n_list: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub n_seeds: usize,
    pub delta_conf: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { n_list: vec![1, 2, 4, 8], lambdas: vec![0.0, 0.1, 1.0], n_seeds: 5, delta_conf: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub iterations: usize,
    /// Fixed step size; the harmonic schedule 1 / (lambda (k + 2)) when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constant_step: Option<f64>,
    /// Random reference policies for the one-step inequality, besides the optimum.
    pub references: usize,
    /// Steps checked against the one-step inequality.
    pub fundamental_steps: usize,
    /// Random starting policies for the quadratic-growth check.
    pub growth_starts: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self { iterations: 500, constant_step: None, references: 5, fundamental_steps: 200, growth_starts: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LowerBoundConfig {
    pub identifier_length: usize,
    pub eps_prime: f64,
    /// Sample size; 2^identifier_length when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub n_seeds: usize,
    /// Required fraction of runs meeting the lower-bound expression.
    pub min_hold_fraction: f64,
    /// Regularization used for the finite-family bound value.
    pub bound_lambda: f64,
    pub delta_conf: f64,
}

impl Default for LowerBoundConfig {
    fn default() -> Self {
        Self {
            identifier_length: 4,
            eps_prime: 0.1,
            n: None,
            n_seeds: 100,
            min_hold_fraction: 0.95,
            bound_lambda: 1.0,
            delta_conf: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    pub d_const: f64,
    pub q_const: f64,
    pub c_max: f64,
    pub horizon: f64,
    pub n_actions: f64,
    pub lambda: f64,
    pub n_samples: f64,
    pub delta_conf: f64,
    pub p_min: f64,
    /// Loss bound B; C_max T when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_loss: Option<f64>,
    /// Number of histories entering the naive bound.
    pub history_count: f64,
    /// Stability coefficient for the hypothesis-stability bounds.
    pub beta: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            d_const: 1.0,
            q_const: 1.0,
            c_max: 1.0,
            horizon: 2.0,
            n_actions: 2.0,
            lambda: 1.0,
            n_samples: 100.0,
            delta_conf: 0.25,
            p_min: 0.25,
            b_loss: None,
            history_count: 7.0,
            beta: 0.01,
        }
    }
}

impl BoundsConfig {
    pub fn inputs(&self) -> BoundInputs {
        BoundInputs {
            d_const: self.d_const,
            q_const: self.q_const,
            c_max: self.c_max,
            horizon: self.horizon,
            n_actions: self.n_actions,
            lambda: self.lambda,
            n_samples: self.n_samples,
            delta_conf: self.delta_conf,
            p_min: self.p_min,
            b_loss: self.b_loss.unwrap_or(self.c_max * self.horizon),
        }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn in_conf(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(bad(format!("{name} must lie in (0, 1), got {v}")))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| bad(e.message().to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Range checks shared by all subcommands.
    pub fn validate(&self) -> CliResult<()> {
        if self.horizon == 0 {
            return Err(bad("horizon must be at least 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(bad(format!("lambda must be finite and nonnegative, got {}", self.lambda)));
        }
        if self.max_nodes == 0 {
            return Err(bad("max_nodes must be positive"));
        }
        if let PriorSource::File { path } = &self.prior {
            if !path.is_file() {
                return Err(bad(format!("prior file {} does not exist", path.display())));
            }
        }
        if self.erm.n == 0 {
            return Err(bad("erm.n must be at least 1"));
        }
        if self.stability.n < 2 {
            return Err(bad("stability.n must be at least 2"));
        }
        let s = &self.sweep;
        if s.n_list.is_empty() || s.n_list.contains(&0) {
            return Err(bad("sweep.n_list must list positive sample sizes"));
        }
        if s.lambdas.is_empty() || s.lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(bad("sweep.lambdas must list finite nonnegative values"));
        }
        if s.n_seeds == 0 {
            return Err(bad("sweep.n_seeds must be positive"));
        }
        in_conf("sweep.delta_conf", s.delta_conf)?;
        let c = &self.convergence;
        if let Some(a) = c.constant_step {
            if !(a > 0.0) {
                return Err(bad(format!("convergence.constant_step must be positive, got {a}")));
            }
        }
        let l = &self.lowerbound;
        if l.identifier_length == 0 || l.identifier_length > 16 {
            return Err(bad("lowerbound.identifier_length must lie in 1..=16"));
        }
        in_conf("lowerbound.eps_prime", l.eps_prime)?;
        in_conf("lowerbound.delta_conf", l.delta_conf)?;
        if l.n == Some(0) || l.n_seeds == 0 {
            return Err(bad("lowerbound.n and lowerbound.n_seeds must be positive"));
        }
        if !(0.0..=1.0).contains(&l.min_hold_fraction) {
            return Err(bad("lowerbound.min_hold_fraction must lie in [0, 1]"));
        }
        if !(l.bound_lambda > 0.0) {
            return Err(bad("lowerbound.bound_lambda must be positive"));
        }
        self.bounds.inputs().check().map_err(|e| bad(format!("bounds: {e}")))?;
        if !(self.bounds.history_count > 0.0 && self.bounds.beta >= 0.0) {
            return Err(bad("bounds.history_count must be positive and bounds.beta nonnegative"));
        }
        Ok(())
    }

    /// Seed of one named part of the run.
    pub fn derived(&self, key: &str) -> u64 {
        derive_seed(self.seed, key)
    }

    /// Per-cell seeds for repeated experiments.
    pub fn cell_seeds(&self, what: &str, count: usize) -> Vec<u64> {
        (0..count).map(|i| self.derived(&format!("{what}/{i}"))).collect()
    }

    pub fn build_prior(&self) -> CliResult<Prior> {
        let seed = self.derived("prior");
        let prior = match &self.prior {
            PriorSource::File { path } => brl_core::format::read_prior(path)?,
            PriorSource::Random { states, actions, members, mdp_horizon, concentration, smooth } => {
                let shape = RandomShape {
                    n_states: *states,
                    n_actions: *actions,
                    costs: CostSet::binary(),
                    horizon: *mdp_horizon,
                    members: *members,
                };
                let p = envgen::random_prior(&shape, *concentration, seed)?;
                match smooth {
                    Some(a) => p.smoothed(*a)?,
                    None => p,
                }
            }
            PriorSource::LowerBound { identifier_length, eps_prime } => {
                let params = LowerBoundParams::random_labels(*identifier_length, *eps_prime, seed)?;
                envgen::lower_bound_family(&params, envgen::DEFAULT_MEMBER_CAP)?
            }
            PriorSource::Restricted { states, actions, mdp_horizon, k, variants, gate_prob, smooth } => {
                let shape = RandomShape {
                    n_states: *states,
                    n_actions: *actions,
                    costs: CostSet::binary(),
                    horizon: *mdp_horizon,
                    members: 1,
                };
                let base = envgen::random_prior(&shape, 1.0, seed)?;
                let p = envgen::restricted_difference_family(
                    base.member(0),
                    base.costs(),
                    *k,
                    *variants,
                    *gate_prob,
                    self.derived("prior/variants"),
                )?;
                match smooth {
                    Some(a) => p.smoothed(*a)?,
                    None => p,
                }
            }
        };
        Ok(prior)
    }
}
