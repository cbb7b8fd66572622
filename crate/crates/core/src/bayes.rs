//! Exact evaluation and solution of the L2-regularized Bayes-adaptive MDP.
//!
//! Costs and the regularizer are charged at every history of length
//! 0..=T, so a value sums T + 1 terms.

use crate::error::{param, Result};
use crate::history::{BeliefMdp, Policy};
use crate::mirror::project_simplex;

/// Regularization strength. The regularizer is fixed to R(p) = ||p||^2 / 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegConfig {
    pub lambda: f64,
}

impl RegConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return param(format!("lambda must be finite and nonnegative, got {lambda}"));
        }
        Ok(Self { lambda })
    }

    pub fn none() -> Self {
        Self { lambda: 0.0 }
    }

    /// lambda * R(p).
    pub fn penalty(&self, p: &[f64]) -> f64 {
        if self.lambda == 0.0 {
            return 0.0;
        }
        self.lambda * half_sq_norm(p)
    }
}

/// ||p||^2 / 2.
pub fn half_sq_norm(p: &[f64]) -> f64 {
    0.5 * p.iter().map(|x| x * x).sum::<f64>()
}

/// One value per history.
pub type ValueVector = Vec<f64>;

/// Unregularized action values at `node`: posterior-mean cost plus the
/// expected value of the next history.
pub fn q_values(model: &BeliefMdp, values: &[f64], node: usize) -> Vec<f64> {
    (0..model.n_actions())
        .map(|a| model.cost(node, a) + model.transitions(node, a).map(|(p, c)| p * values[c]).sum::<f64>())
        .collect()
}

/// Backward induction for V^pi.
pub fn evaluate(model: &BeliefMdp, policy: &Policy, reg: RegConfig) -> ValueVector {
    let mut v = vec![0.0; model.len()];
    for i in (0..model.len()).rev() {
        let row = policy.row(i);
        let q = q_values(model, &v, i);
        v[i] = row.iter().zip(&q).map(|(p, q)| p * q).sum::<f64>() + reg.penalty(row);
    }
    v
}

/// Root-weighted value.
pub fn root_loss(model: &BeliefMdp, values: &[f64]) -> f64 {
    let space = model.space();
    space.roots().zip(space.root_weights()).map(|(r, w)| w * values[r]).sum()
}

/// Regularized loss of `policy`, the initial-state average of V^pi.
pub fn loss(model: &BeliefMdp, policy: &Policy, reg: RegConfig) -> f64 {
    root_loss(model, &evaluate(model, policy, reg))
}

/// Minimizer of the regularized objective at one history: the projection of
/// -q / lambda onto the simplex, or the lowest-index argmin when lambda = 0.
pub fn greedy_row(q: &[f64], reg: RegConfig) -> Vec<f64> {
    if reg.lambda > 0.0 {
        let v: Vec<f64> = q.iter().map(|x| -x / reg.lambda).collect();
        return project_simplex(&v);
    }
    let mut best = 0;
    for (a, &x) in q.iter().enumerate() {
        if x < q[best] {
            best = a;
        }
    }
    let mut row = vec![0.0; q.len()];
    row[best] = 1.0;
    row
}

/// Exact optimal policy and value by backward induction.
pub fn solve_exact(model: &BeliefMdp, reg: RegConfig) -> (Policy, ValueVector) {
    let a_n = model.n_actions();
    let mut v = vec![0.0; model.len()];
    let mut probs = vec![0.0; model.len() * a_n];
    for i in (0..model.len()).rev() {
        let q = q_values(model, &v, i);
        let row = greedy_row(&q, reg);
        v[i] = row.iter().zip(&q).map(|(p, q)| p * q).sum::<f64>() + reg.penalty(&row);
        probs[i * a_n..(i + 1) * a_n].copy_from_slice(&row);
    }
    let policy = Policy::from_rows(a_n, probs).expect("projected rows are distributions");
    (policy, v)
}

/// Unregularized loss of the Bayes-optimal policy.
pub fn bayes_optimal_loss(model: &BeliefMdp) -> f64 {
    root_loss(model, &solve_exact(model, RegConfig::none()).1)
}

/// Average regret of `policy` against the Bayes-optimal policy, both
/// unregularized and evaluated on `model`.
pub fn regret(model: &BeliefMdp, policy: &Policy) -> f64 {
    let r = loss(model, policy, RegConfig::none()) - bayes_optimal_loss(model);
    r.max(0.0)
}
