//! Text format for priors.
//!
//! A prior is a TOML document:
//!
//! ```toml
//! states = 2
//! actions = 1
//! horizon = 3
//! costs = [0.0, 1.0]
//! c_max = 1.0
//! init = [1.0, 0.0]
//! weights = [0.5, 0.5]
//!
//! [[mdp]]
//! cost = [[0], [1]]                 # [state][action] -> cost index
//! trans = [[[0.9, 0.1]], [[0.5, 0.5]]]  # [state][action][next state]
//!
//! [[mdp]]
//! joint = [[[0.4, 0.1, 0.4, 0.1]], [[0.5, 0.0, 0.0, 0.5]]]  # [state][action][c * states + s']
//! ```
//!
//! Each member gives either `cost` and `trans`, or `joint`. Floats are
//! written in shortest round-trip form, so a write/read cycle is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{CostSet, Kernel, Prior, TabularMdp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorDoc {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    pub costs: Vec<f64>,
    pub c_max: f64,
    pub init: Vec<f64>,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<usize>>,
    pub mdp: Vec<MdpDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trans: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<Vec<Vec<Vec<f64>>>>,
}

fn nest<T: Clone>(flat: &[T], n_actions: usize) -> Vec<Vec<T>> {
    flat.chunks(n_actions).map(|c| c.to_vec()).collect()
}

impl PriorDoc {
    pub fn from_prior(prior: &Prior) -> Self {
        let a_n = prior.n_actions();
        let mdp = prior
            .members()
            .iter()
            .map(|m| match &m.kernel {
                Kernel::Deterministic { cost_index, trans } => MdpDoc {
                    cost: Some(nest(cost_index, a_n)),
                    trans: Some(nest(trans, a_n)),
                    joint: None,
                },
                Kernel::Joint { rows } => MdpDoc { cost: None, trans: None, joint: Some(nest(rows, a_n)) },
            })
            .collect();
        let ids = prior.ids();
        let default_ids = ids.iter().enumerate().all(|(i, &x)| i == x);
        PriorDoc {
            states: prior.n_states(),
            actions: a_n,
            horizon: prior.horizon(),
            costs: prior.costs().values().to_vec(),
            c_max: prior.costs().c_max(),
            init: prior.init_dist().to_vec(),
            weights: prior.weights().to_vec(),
            ids: if default_ids { None } else { Some(ids.to_vec()) },
            mdp,
        }
    }

    pub fn to_prior(&self) -> Result<Prior> {
        let costs = CostSet::new(self.costs.clone(), self.c_max)?;
        let mut members = Vec::with_capacity(self.mdp.len());
        for (i, m) in self.mdp.iter().enumerate() {
            let built = match (&m.cost, &m.trans, &m.joint) {
                (Some(c), Some(t), None) => {
                    TabularMdp::deterministic(self.init.clone(), c.clone(), t.clone(), self.horizon, &costs)
                }
                (None, None, Some(j)) => TabularMdp::joint(self.init.clone(), j.clone(), self.horizon, &costs),
                _ => return Err(Error::Format(format!("mdp {i} must give either cost and trans, or joint"))),
            }
            .map_err(|e| Error::Format(format!("mdp {i}: {e}")))?;
            if built.n_states != self.states || built.n_actions != self.actions {
                return Err(Error::Format(format!(
                    "mdp {i} has {} states and {} actions, header says {} and {}",
                    built.n_states, built.n_actions, self.states, self.actions
                )));
            }
            members.push(std::sync::Arc::new(built));
        }
        let ids = self.ids.clone().unwrap_or_else(|| (0..members.len()).collect());
        Prior::from_shared(members, self.weights.clone(), ids, costs)
    }
}

pub fn prior_to_string(prior: &Prior) -> Result<String> {
    toml::to_string(&PriorDoc::from_prior(prior)).map_err(|e| Error::Format(e.to_string()))
}

pub fn prior_from_str(text: &str) -> Result<Prior> {
    let doc: PriorDoc = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    doc.to_prior()
}

pub fn write_prior(prior: &Prior, path: &Path) -> Result<()> {
    std::fs::write(path, prior_to_string(prior)?)?;
    Ok(())
}

pub fn read_prior(path: &Path) -> Result<Prior> {
    prior_from_str(&std::fs::read_to_string(path)?)
}
