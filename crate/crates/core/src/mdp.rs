//! Tabular MDPs over a finite cost set, and finite priors over them.

use std::fmt;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::error::{param, Error, Result};
use crate::rng;

/// Rows must sum to one within this tolerance once constructed.
pub const ROW_TOL: f64 = 1e-12;
/// Largest pre-normalization deviation that construction silently repairs.
pub const RENORM_TOL: f64 = 1e-6;

/// Ordered, finite set of cost values.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSet {
    values: Vec<f64>,
    c_max: f64,
}

impl CostSet {
    pub fn new(values: Vec<f64>, c_max: f64) -> Result<Self> {
        if values.is_empty() {
            return param("cost set is empty");
        }
        if !c_max.is_finite() || c_max < 0.0 {
            return param(format!("c_max must be finite and nonnegative, got {c_max}"));
        }
        for (i, &v) in values.iter().enumerate() {
            if !(0.0..=c_max).contains(&v) {
                return param(format!("cost value {v} outside [0, {c_max}]"));
            }
            if i > 0 && v <= values[i - 1] {
                return param("cost values must be strictly increasing");
            }
        }
        Ok(Self { values, c_max })
    }

    /// The set {0, 1} with c_max = 1.
    pub fn binary() -> Self {
        Self { values: vec![0.0, 1.0], c_max: 1.0 }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }
}

/// Transition and cost structure of one MDP.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// A fixed cost index per (s, a) and a next-state distribution.
    /// Both are indexed by `s * n_actions + a`.
    Deterministic {
        cost_index: Vec<usize>,
        trans: Vec<Vec<f64>>,
    },
    /// A joint distribution over (cost index, next state) per (s, a), entry
    /// `c * n_states + s'`.
    Joint { rows: Vec<Vec<f64>> },
}

/// One environment. Fields are public so malformed instances can be built
/// and reported by [`validate`]; the constructors only return valid ones.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_costs: usize,
    pub horizon: usize,
    pub init_dist: Vec<f64>,
    pub kernel: Kernel,
}

/// First violated invariant of a [`TabularMdp`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.field, self.detail)
    }
}

fn short(x: f64) -> String {
    let s = format!("{x:.10}");
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}

fn check_row(field: String, row: &[f64], len: usize) -> std::result::Result<(), Violation> {
    if row.len() != len {
        return Err(Violation { field, detail: format!("has length {} (expected {len})", row.len()) });
    }
    if let Some(x) = row.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Violation { field, detail: format!("has invalid entry {x}") });
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_TOL {
        return Err(Violation { field, detail: format!("sums to {}", short(sum)) });
    }
    Ok(())
}

/// Checks every invariant of `mdp` against `costs`, reporting the first failure.
pub fn validate(mdp: &TabularMdp, costs: &CostSet) -> std::result::Result<(), Violation> {
    let (s_n, a_n) = (mdp.n_states, mdp.n_actions);
    let bad = |field: &str, detail: String| Err(Violation { field: field.into(), detail });
    if s_n == 0 {
        return bad("n_states", "must be positive".into());
    }
    if a_n == 0 {
        return bad("n_actions", "must be positive".into());
    }
    if mdp.horizon == 0 {
        return bad("horizon", "must be at least 1".into());
    }
    if mdp.n_costs != costs.len() {
        return bad("n_costs", format!("is {} but the cost set has {}", mdp.n_costs, costs.len()));
    }
    check_row("init".into(), &mdp.init_dist, s_n)?;
    match &mdp.kernel {
        Kernel::Deterministic { cost_index, trans } => {
            if trans.len() != s_n * a_n {
                return bad("trans", format!("has {} rows (expected {})", trans.len(), s_n * a_n));
            }
            if cost_index.len() != s_n * a_n {
                return bad("cost_index", format!("has {} entries (expected {})", cost_index.len(), s_n * a_n));
            }
            for (i, row) in trans.iter().enumerate() {
                check_row(format!("trans[{}][{}]", i / a_n, i % a_n), row, s_n)?;
            }
            for (i, &c) in cost_index.iter().enumerate() {
                if c >= costs.len() {
                    return Err(Violation {
                        field: format!("cost_index[{}][{}]", i / a_n, i % a_n),
                        detail: format!("cost_index out of range ({c} >= {})", costs.len()),
                    });
                }
            }
        }
        Kernel::Joint { rows } => {
            if rows.len() != s_n * a_n {
                return bad("joint", format!("has {} rows (expected {})", rows.len(), s_n * a_n));
            }
            for (i, row) in rows.iter().enumerate() {
                check_row(format!("joint[{}][{}]", i / a_n, i % a_n), row, s_n * costs.len())?;
            }
        }
    }
    Ok(())
}

fn normalized(field: &str, mut row: Vec<f64>) -> Result<Vec<f64>> {
    if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Model(format!("{field} has a negative or non-finite entry")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > RENORM_TOL {
        return Err(Error::Model(format!("{field} sums to {}", short(sum))));
    }
    if (sum - 1.0).abs() > ROW_TOL {
        row.iter_mut().for_each(|x| *x /= sum);
    }
    Ok(row)
}

impl TabularMdp {
    /// Deterministic-cost MDP from `[s][a]` tables. Rows within 1e-6 of
    /// normalized are rescaled once; anything further off is rejected.
    pub fn deterministic(
        init_dist: Vec<f64>,
        cost_table: Vec<Vec<usize>>,
        trans: Vec<Vec<Vec<f64>>>,
        horizon: usize,
        costs: &CostSet,
    ) -> Result<Self> {
        let n_states = init_dist.len();
        let n_actions = trans.first().map_or(0, |r| r.len());
        if trans.len() != n_states || cost_table.len() != n_states {
            return Err(Error::Model("trans and cost tables need one entry per state".into()));
        }
        let mut flat_trans = Vec::with_capacity(n_states * n_actions);
        let mut flat_cost = Vec::with_capacity(n_states * n_actions);
        for (s, (rows, cs)) in trans.into_iter().zip(cost_table).enumerate() {
            if rows.len() != n_actions || cs.len() != n_actions {
                return Err(Error::Model(format!("state {s} has a ragged action table")));
            }
            for (a, row) in rows.into_iter().enumerate() {
                flat_trans.push(normalized(&format!("trans[{s}][{a}]"), row)?);
            }
            flat_cost.extend(cs);
        }
        let mdp = Self {
            n_states,
            n_actions,
            n_costs: costs.len(),
            horizon,
            init_dist: normalized("init", init_dist)?,
            kernel: Kernel::Deterministic { cost_index: flat_cost, trans: flat_trans },
        };
        validate(&mdp, costs).map_err(|v| Error::Model(v.to_string()))?;
        Ok(mdp)
    }

    /// Joint-kernel MDP from `[s][a][c * n_states + s']` rows.
    pub fn joint(
        init_dist: Vec<f64>,
        rows: Vec<Vec<Vec<f64>>>,
        horizon: usize,
        costs: &CostSet,
    ) -> Result<Self> {
        let n_states = init_dist.len();
        let n_actions = rows.first().map_or(0, |r| r.len());
        if rows.len() != n_states {
            return Err(Error::Model("joint table needs one entry per state".into()));
        }
        let mut flat = Vec::with_capacity(n_states * n_actions);
        for (s, per_a) in rows.into_iter().enumerate() {
            if per_a.len() != n_actions {
                return Err(Error::Model(format!("state {s} has a ragged action table")));
            }
            for (a, row) in per_a.into_iter().enumerate() {
                flat.push(normalized(&format!("joint[{s}][{a}]"), row)?);
            }
        }
        let mdp = Self {
            n_states,
            n_actions,
            n_costs: costs.len(),
            horizon,
            init_dist: normalized("init", init_dist)?,
            kernel: Kernel::Joint { rows: flat },
        };
        validate(&mdp, costs).map_err(|v| Error::Model(v.to_string()))?;
        Ok(mdp)
    }

    /// Number of (cost index, next state) outcomes per step.
    pub fn n_outcomes(&self) -> usize {
        self.n_costs * self.n_states
    }

    /// P(c, s' | s, a), laid out `c * n_states + s'`.
    pub fn joint_row(&self, s: usize, a: usize) -> Vec<f64> {
        let i = s * self.n_actions + a;
        match &self.kernel {
            Kernel::Deterministic { cost_index, trans } => {
                let mut row = vec![0.0; self.n_outcomes()];
                let off = cost_index[i] * self.n_states;
                row[off..off + self.n_states].copy_from_slice(&trans[i]);
                row
            }
            Kernel::Joint { rows } => rows[i].clone(),
        }
    }

    /// P(c | s, a).
    pub fn cost_marginal(&self, s: usize, a: usize) -> Vec<f64> {
        let row = self.joint_row(s, a);
        row.chunks(self.n_states).map(|c| c.iter().sum()).collect()
    }

    /// Step row used at time `t`: the ordinary kernel, or after the last step
    /// of an episode the cost marginal times a fresh initial state.
    pub fn step_row(&self, s: usize, a: usize, reset: bool) -> Vec<f64> {
        if !reset {
            return self.joint_row(s, a);
        }
        let mut row = Vec::with_capacity(self.n_outcomes());
        for pc in self.cost_marginal(s, a) {
            row.extend(self.init_dist.iter().map(|p| pc * p));
        }
        row
    }

    /// Whether the transition out of time `t` restarts the episode.
    pub fn resets_after(&self, t: usize) -> bool {
        resets_after(self.horizon, t)
    }

    pub fn expected_cost(&self, s: usize, a: usize, costs: &CostSet) -> f64 {
        self.cost_marginal(s, a).iter().zip(costs.values()).map(|(p, c)| p * c).sum()
    }

    /// Copy of this MDP with every row lifted to joint form.
    pub fn to_joint(&self) -> Self {
        let rows = (0..self.n_states)
            .flat_map(|s| (0..self.n_actions).map(move |a| (s, a)))
            .map(|(s, a)| self.joint_row(s, a))
            .collect();
        Self { kernel: Kernel::Joint { rows }, ..self.clone() }
    }
}

/// Episodes last `horizon + 1` decision steps; the transition out of the last
/// one draws the next state from the initial distribution.
pub fn resets_after(horizon: usize, t: usize) -> bool {
    t % (horizon + 1) == horizon
}

/// Mixes the joint kernel with the uniform distribution over (s', c):
/// (1 - alpha) P(s', c | s, a) + alpha / (|S| |C|).
pub fn smooth(mdp: &TabularMdp, alpha: f64, costs: &CostSet) -> Result<TabularMdp> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return param(format!("smoothing alpha must lie in (0, 1), got {alpha}"));
    }
    let floor = alpha / mdp.n_outcomes() as f64;
    let mut out = mdp.to_joint();
    if let Kernel::Joint { rows } = &mut out.kernel {
        for row in rows.iter_mut() {
            row.iter_mut().for_each(|p| *p = (1.0 - alpha) * *p + floor);
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= sum);
        }
    }
    validate(&out, costs).map_err(|v| Error::Model(v.to_string()))?;
    Ok(out)
}

/// Weighted finite collection of MDPs sharing states, actions, costs, initial
/// distribution and horizon. Also used for empirical samples, where `ids`
/// records which source member each entry was drawn from.
#[derive(Debug, Clone)]
pub struct Prior {
    members: Vec<Arc<TabularMdp>>,
    weights: Vec<f64>,
    ids: Vec<usize>,
    costs: CostSet,
}

impl Prior {
    pub fn new(members: Vec<TabularMdp>, weights: Vec<f64>, costs: CostSet) -> Result<Self> {
        let ids = (0..members.len()).collect();
        Self::from_shared(members.into_iter().map(Arc::new).collect(), weights, ids, costs)
    }

    pub fn uniform(members: Vec<TabularMdp>, costs: CostSet) -> Result<Self> {
        let n = members.len().max(1);
        Self::new(members, vec![1.0 / n as f64; n], costs)
    }

    pub fn from_shared(
        members: Vec<Arc<TabularMdp>>,
        weights: Vec<f64>,
        ids: Vec<usize>,
        costs: CostSet,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Model("prior has no members".into()));
        }
        if weights.len() != members.len() || ids.len() != members.len() {
            return Err(Error::Model("prior needs one weight and one id per member".into()));
        }
        let weights = normalized("weights", weights)?;
        let first = &members[0];
        for (i, m) in members.iter().enumerate() {
            validate(m, &costs).map_err(|v| Error::Model(format!("member {i}: {v}")))?;
            let same = m.n_states == first.n_states
                && m.n_actions == first.n_actions
                && m.horizon == first.horizon
                && m.init_dist.iter().zip(&first.init_dist).all(|(x, y)| (x - y).abs() <= ROW_TOL);
            if !same {
                return Err(Error::Model(format!(
                    "member {i} disagrees with member 0 on states, actions, horizon or init"
                )));
            }
        }
        Ok(Self { members, weights, ids, costs })
    }

    pub fn members(&self) -> &[Arc<TabularMdp>] {
        &self.members
    }

    pub fn member(&self, i: usize) -> &TabularMdp {
        &self.members[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Source identifier of each member.
    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn costs(&self) -> &CostSet {
        &self.costs
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.members[0].n_states
    }

    pub fn n_actions(&self) -> usize {
        self.members[0].n_actions
    }

    pub fn horizon(&self) -> usize {
        self.members[0].horizon
    }

    pub fn init_dist(&self) -> &[f64] {
        &self.members[0].init_dist
    }

    pub fn p_min(&self) -> f64 {
        self.weights.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Indices of `n` i.i.d. draws by weight.
    pub fn sample_indices(&self, n: usize, seed: u64) -> Vec<usize> {
        let dist = WeightedIndex::new(&self.weights).expect("prior weights are a probability vector");
        let mut r = rng::stream(seed, rng::SAMPLING);
        (0..n).map(|_| dist.sample(&mut r)).collect()
    }

    /// Empirical prior of `n` draws with replacement, weight 1/n each.
    /// Members are shared with `self`, and ids carry over.
    pub fn sample_empirical(&self, n: usize, seed: u64) -> Result<Prior> {
        if n == 0 {
            return param("sample size must be at least 1");
        }
        Ok(self.subset(&self.sample_indices(n, seed)))
    }

    /// Uniformly weighted prior over the listed members (repeats allowed).
    pub fn subset(&self, idx: &[usize]) -> Prior {
        let w = 1.0 / idx.len() as f64;
        Prior {
            members: idx.iter().map(|&i| self.members[i].clone()).collect(),
            weights: vec![w; idx.len()],
            ids: idx.iter().map(|&i| self.ids[i]).collect(),
            costs: self.costs.clone(),
        }
    }

    /// Uniform prior over every member except `j`.
    pub fn without(&self, j: usize) -> Result<Prior> {
        if self.len() < 2 {
            return param("leaving one out needs at least two members");
        }
        if j >= self.len() {
            return param(format!("member index {j} out of range for {} members", self.len()));
        }
        let keep: Vec<usize> = (0..self.len()).filter(|&i| i != j).collect();
        Ok(self.subset(&keep))
    }

    /// One-member prior holding member `i`.
    pub fn single(&self, i: usize) -> Prior {
        Prior {
            members: vec![self.members[i].clone()],
            weights: vec![1.0],
            ids: vec![self.ids[i]],
            costs: self.costs.clone(),
        }
    }

    /// Uniform prior over the members of `self` followed by those of `other`.
    pub fn union(&self, other: &Prior) -> Result<Prior> {
        let members: Vec<_> = self.members.iter().chain(&other.members).cloned().collect();
        let ids = self.ids.iter().chain(&other.ids).cloned().collect();
        let n = members.len();
        Self::from_shared(members, vec![1.0 / n as f64; n], ids, self.costs.clone())
    }

    /// Total weight of entries sharing member `i`'s id.
    pub fn id_weight(&self, i: usize) -> f64 {
        let id = self.ids[i];
        self.ids.iter().zip(&self.weights).filter(|(x, _)| **x == id).map(|(_, w)| w).sum()
    }

    /// Index of the first entry of every distinct id, in order of appearance.
    pub fn distinct(&self) -> Vec<usize> {
        let mut seen = std::collections::BTreeSet::new();
        (0..self.len()).filter(|&i| seen.insert(self.ids[i])).collect()
    }

    /// Every member smoothed with the same `alpha`.
    pub fn smoothed(&self, alpha: f64) -> Result<Prior> {
        let members = self
            .members
            .iter()
            .map(|m| smooth(m, alpha, &self.costs).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        Self::from_shared(members, self.weights.clone(), self.ids.clone(), self.costs.clone())
    }

    /// sup over member pairs and (s, a, c, s') of P_M(s', c | s, a) / P_M'(s', c | s, a),
    /// with 0/0 = 1 and x/0 = infinity.
    pub fn q_ratio(&self) -> f64 {
        q_ratio(self)
    }
}

pub fn q_ratio(prior: &Prior) -> f64 {
    let (s_n, a_n) = (prior.n_states(), prior.n_actions());
    let rows: Vec<Vec<Vec<f64>>> = prior
        .members
        .iter()
        .map(|m| (0..s_n * a_n).map(|i| m.joint_row(i / a_n, i % a_n)).collect())
        .collect();
    let mut q: f64 = 1.0;
    for ra in &rows {
        for rb in &rows {
            for (xa, xb) in ra.iter().zip(rb) {
                for (&p, &p2) in xa.iter().zip(xb) {
                    let r = match (p > 0.0, p2 > 0.0) {
                        (false, _) => 1.0,
                        (true, false) => return f64::INFINITY,
                        (true, true) => p / p2,
                    };
                    q = q.max(r);
                }
            }
        }
    }
    q
}
