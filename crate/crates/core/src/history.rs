//! The space of reachable histories, posteriors over prior members, and the
//! Bayes-adaptive MDP living on that space.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{resets_after, Prior};

/// Default cap on the number of stored histories.
pub const DEFAULT_NODE_CAP: usize = 5_000_000;

/// One stored history. For roots `parent` is `None` and `action`/`cost` are 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Node {
    pub t: usize,
    pub parent: Option<usize>,
    pub action: usize,
    pub cost: usize,
    pub state: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub cost: usize,
    pub state: usize,
    pub child: usize,
}

/// Explicit history h_t = (s_0, a_0, c_0, s_1, ..., s_t).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct History {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub costs: Vec<usize>,
}

impl History {
    pub fn root(state: usize) -> Self {
        Self { states: vec![state], actions: vec![], costs: vec![] }
    }

    /// Number of (state, action, cost) steps.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn push(&mut self, action: usize, cost: usize, state: usize) {
        self.actions.push(action);
        self.costs.push(cost);
        self.states.push(state);
    }
}

/// DAG (a tree, in fact) of every history of length 0..=T with positive
/// probability under at least one prior member. Nodes are grouped by length
/// and, within a length, ordered by parent then (action, cost, state).
#[derive(Debug, Clone)]
pub struct HistorySpace {
    horizon: usize,
    mdp_horizon: usize,
    n_states: usize,
    n_actions: usize,
    n_costs: usize,
    nodes: Vec<Node>,
    depth_start: Vec<usize>,
    edge_start: Vec<usize>,
    edges: Vec<Edge>,
    root_weights: Vec<f64>,
}

/// Per-member step rows, flattened for cheap lookup.
struct StepRows {
    n_out: usize,
    n_sa: usize,
    data: Vec<f64>,
}

impl StepRows {
    fn new(prior: &Prior) -> Self {
        let (s_n, a_n) = (prior.n_states(), prior.n_actions());
        let n_out = prior.member(0).n_outcomes();
        let mut data = Vec::with_capacity(prior.len() * 2 * s_n * a_n * n_out);
        for m in prior.members() {
            for reset in [false, true] {
                for s in 0..s_n {
                    for a in 0..a_n {
                        data.extend(m.step_row(s, a, reset));
                    }
                }
            }
        }
        Self { n_out, n_sa: s_n * a_n, data }
    }

    fn row(&self, m: usize, reset: bool, sa: usize) -> &[f64] {
        let start = ((m * 2 + reset as usize) * self.n_sa + sa) * self.n_out;
        &self.data[start..start + self.n_out]
    }
}

impl HistorySpace {
    /// Enumerates reachable histories up to length `horizon` with the default cap.
    pub fn enumerate(prior: &Prior, horizon: usize) -> Result<Self> {
        Self::enumerate_capped(prior, horizon, DEFAULT_NODE_CAP)
    }

    pub fn enumerate_capped(prior: &Prior, horizon: usize, cap: usize) -> Result<Self> {
        let (s_n, a_n, k) = (prior.n_states(), prior.n_actions(), prior.len());
        let n_costs = prior.costs().len();
        let n_out = s_n * n_costs;
        let rows = StepRows::new(prior);
        let h = prior.horizon();

        let mut nodes = Vec::new();
        let mut root_weights = Vec::new();
        for (s, &p) in prior.init_dist().iter().enumerate() {
            if p > 0.0 {
                nodes.push(Node { t: 0, parent: None, action: 0, cost: 0, state: s });
                root_weights.push(p);
            }
        }
        let mut alive = vec![true; nodes.len() * k];
        let mut depth_start = vec![0, nodes.len()];
        let mut edge_start = Vec::new();
        let mut edges = Vec::new();

        for t in 0..horizon {
            let reset = resets_after(h, t);
            let (lo, hi) = (depth_start[t], depth_start[t + 1]);
            let mut next_alive = Vec::new();
            for i in lo..hi {
                let state = nodes[i].state;
                let live = &alive[(i - lo) * k..(i - lo + 1) * k];
                for a in 0..a_n {
                    edge_start.push(edges.len());
                    let sa = state * a_n + a;
                    for o in 0..n_out {
                        let mut any = false;
                        let mut child_alive = vec![false; k];
                        for m in 0..k {
                            if live[m] && rows.row(m, reset, sa)[o] > 0.0 {
                                child_alive[m] = true;
                                any = true;
                            }
                        }
                        if !any {
                            continue;
                        }
                        if nodes.len() >= cap {
                            return Err(Error::Capacity { what: "history nodes", count: nodes.len() + 1, cap });
                        }
                        let child = nodes.len();
                        let (cost, next) = (o / s_n, o % s_n);
                        nodes.push(Node { t: t + 1, parent: Some(i), action: a, cost, state: next });
                        edges.push(Edge { cost, state: next, child });
                        next_alive.extend(child_alive);
                    }
                }
            }
            alive = next_alive;
            depth_start.push(nodes.len());
        }
        for _ in depth_start[horizon]..nodes.len() {
            for _ in 0..a_n {
                edge_start.push(edges.len());
            }
        }
        edge_start.push(edges.len());

        Ok(Self {
            horizon,
            mdp_horizon: h,
            n_states: s_n,
            n_actions: a_n,
            n_costs,
            nodes,
            depth_start,
            edge_start,
            edges,
            root_weights,
        })
    }

    /// Evaluation horizon T; histories have lengths 0..=T.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Episode horizon H of the underlying MDPs.
    pub fn mdp_horizon(&self) -> usize {
        self.mdp_horizon
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_costs(&self) -> usize {
        self.n_costs
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    /// Index range of the histories of length `t`.
    pub fn depth(&self, t: usize) -> std::ops::Range<usize> {
        self.depth_start[t]..self.depth_start[t + 1]
    }

    pub fn roots(&self) -> std::ops::Range<usize> {
        self.depth(0)
    }

    /// Initial-state distribution restricted to its support, one entry per root.
    pub fn root_weights(&self) -> &[f64] {
        &self.root_weights
    }

    pub fn children(&self, node: usize, action: usize) -> &[Edge] {
        let i = node * self.n_actions + action;
        &self.edges[self.edge_start[i]..self.edge_start[i + 1]]
    }

    /// Position of the first edge of (node, action) in the flat edge list.
    pub fn edge_offset(&self, node: usize, action: usize) -> usize {
        self.edge_start[node * self.n_actions + action]
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn history(&self, mut i: usize) -> History {
        let mut steps = Vec::new();
        while let Some(p) = self.nodes[i].parent {
            let n = self.nodes[i];
            steps.push((n.action, n.cost, n.state));
            i = p;
        }
        let mut h = History::root(self.nodes[i].state);
        for (a, c, s) in steps.into_iter().rev() {
            h.push(a, c, s);
        }
        h
    }

    /// Canonical integer key (s_0, a_0, c_0, s_1, ...).
    pub fn key(&self, i: usize) -> Vec<u32> {
        let h = self.history(i);
        let mut key = vec![h.states[0] as u32];
        for t in 0..h.len() {
            key.extend([h.actions[t] as u32, h.costs[t] as u32, h.states[t + 1] as u32]);
        }
        key
    }

    /// Index of the stored node for `h`, if any.
    pub fn find(&self, h: &History) -> Option<usize> {
        let mut i = self.roots().find(|&r| self.nodes[r].state == h.states[0])?;
        for t in 0..h.len() {
            if h.actions[t] >= self.n_actions {
                return None;
            }
            let e = self
                .children(i, h.actions[t])
                .iter()
                .find(|e| e.cost == h.costs[t] && e.state == h.states[t + 1])?;
            i = e.child;
        }
        Some(i)
    }

    /// For every node of `self`, the node of `other` with the same history.
    pub fn map_onto(&self, other: &HistorySpace) -> Vec<Option<usize>> {
        let mut map = vec![None; self.len()];
        for r in self.roots() {
            map[r] = other.roots().find(|&o| other.nodes[o].state == self.nodes[r].state);
        }
        for i in self.depth_start[1]..self.len() {
            let n = self.nodes[i];
            let p = n.parent.expect("non-root node has a parent");
            if let Some(op) = map[p] {
                if n.t <= other.horizon && n.action < other.n_actions {
                    map[i] = other
                        .children(op, n.action)
                        .iter()
                        .find(|e| e.cost == n.cost && e.state == n.state)
                        .map(|e| e.child);
                }
            }
        }
        map
    }

    /// Line-oriented dump: index, t, parent, action, cost, state, mass.
    /// Root fields without meaning print as `-`.
    pub fn dump(&self, out: &mut impl Write, mass: Option<&[f64]>) -> std::io::Result<()> {
        writeln!(out, "index t parent action cost state mass")?;
        for (i, n) in self.nodes.iter().enumerate() {
            let m = mass.map_or("-".to_string(), |m| format!("{:.16e}", m[i]));
            match n.parent {
                None => writeln!(out, "{i} {} - - - {} {m}", n.t, n.state)?,
                Some(p) => writeln!(out, "{i} {} {p} {} {} {} {m}", n.t, n.action, n.cost, n.state)?,
            }
        }
        Ok(())
    }
}

/// Policy-free likelihood P_init(s_0) * prod_t P_M(s_{t+1}, c_t | s_t, a_t) of
/// `h` under `mdp`, with the reset rule applied at episode boundaries.
pub fn likelihood(h: &History, mdp: &crate::mdp::TabularMdp) -> f64 {
    let mut p = mdp.init_dist[h.states[0]];
    for t in 0..h.len() {
        let row = mdp.step_row(h.states[t], h.actions[t], mdp.resets_after(t));
        p *= row[h.costs[t] * mdp.n_states + h.states[t + 1]];
    }
    p
}

/// P(M | h) for every stored history.
#[derive(Debug, Clone)]
pub struct PosteriorTable {
    k: usize,
    probs: Vec<f64>,
    on_support: Vec<bool>,
}

impl PosteriorTable {
    pub fn n_members(&self) -> usize {
        self.k
    }

    pub fn of(&self, node: usize) -> &[f64] {
        &self.probs[node * self.k..(node + 1) * self.k]
    }

    /// Whether the history has positive probability under the prior. Always
    /// true for a table built on the prior's own space.
    pub fn on_support(&self, node: usize) -> bool {
        self.on_support[node]
    }
}

fn posterior_table(space: &HistorySpace, prior: &Prior, strict: bool) -> Result<PosteriorTable> {
    check_shape(space, prior)?;
    let k = prior.len();
    let a_n = space.n_actions;
    let rows = StepRows::new(prior);
    let mut probs = vec![0.0; space.len() * k];
    let mut on_support = vec![true; space.len()];
    for r in space.roots() {
        probs[r * k..(r + 1) * k].copy_from_slice(prior.weights());
    }
    for i in space.depth_start[1]..space.len() {
        let n = space.nodes[i];
        let p = n.parent.expect("non-root node has a parent");
        let reset = resets_after(space.mdp_horizon, n.t - 1);
        let sa = space.nodes[p].state * a_n + n.action;
        let o = n.cost * space.n_states + n.state;
        let mut z = 0.0;
        for m in 0..k {
            let w = if on_support[p] { probs[p * k + m] * rows.row(m, reset, sa)[o] } else { 0.0 };
            probs[i * k + m] = w;
            z += w;
        }
        if z > 0.0 {
            probs[i * k..(i + 1) * k].iter_mut().for_each(|w| *w /= z);
        } else if strict {
            return Err(Error::Numerical(format!("history {i} has zero posterior normalizer")));
        } else {
            on_support[i] = false;
            probs.copy_within(p * k..(p + 1) * k, i * k);
        }
    }
    Ok(PosteriorTable { k, probs, on_support })
}

fn check_shape(space: &HistorySpace, prior: &Prior) -> Result<()> {
    if prior.n_states() != space.n_states
        || prior.n_actions() != space.n_actions
        || prior.costs().len() != space.n_costs
        || prior.horizon() != space.mdp_horizon
    {
        return Err(Error::Model("prior and history space disagree on dimensions".into()));
    }
    Ok(())
}

/// Incremental posteriors on the prior's own space. A zero normalizer on a
/// stored history is an internal error.
pub fn posteriors(space: &HistorySpace, prior: &Prior) -> Result<PosteriorTable> {
    posterior_table(space, prior, true)
}

/// Posterior mixture of the members' step rows at `node` under `action`,
/// over outcomes `c * n_states + s'`.
pub fn step_kernel(
    space: &HistorySpace,
    post: &PosteriorTable,
    prior: &Prior,
    node: usize,
    action: usize,
) -> Vec<f64> {
    let n = space.nodes[node];
    let reset = resets_after(space.mdp_horizon, n.t);
    let mut out = vec![0.0; space.n_states * space.n_costs];
    for (w, m) in post.of(node).iter().zip(prior.members()) {
        if *w > 0.0 {
            for (o, p) in m.step_row(n.state, action, reset).into_iter().enumerate() {
                out[o] += w * p;
            }
        }
    }
    out
}

/// One probability vector over actions for every stored history.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn uniform(space: &HistorySpace) -> Self {
        let a = space.n_actions;
        Self { n_actions: a, probs: vec![1.0 / a as f64; a * space.len()] }
    }

    /// Policy from flat rows, each of which must lie in the simplex within 1e-10.
    pub fn from_rows(n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if n_actions == 0 || probs.len() % n_actions != 0 {
            return Err(Error::Parameter("policy rows do not match the action count".into()));
        }
        for (i, row) in probs.chunks(n_actions).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= -1e-10)) || (sum - 1.0).abs() > 1e-10 {
                return Err(Error::Parameter(format!("policy row {i} is not a distribution")));
            }
        }
        Ok(Self { n_actions, probs })
    }

    /// Deterministic policy choosing `actions[i]` at node i.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; n_actions * actions.len()];
        for (i, &a) in actions.iter().enumerate() {
            probs[i * n_actions + a] = 1.0;
        }
        Self { n_actions, probs }
    }

    /// Rows drawn uniformly from the simplex.
    pub fn random(space: &HistorySpace, rng: &mut impl Rng) -> Self {
        let a = space.n_actions;
        let mut probs = Vec::with_capacity(a * space.len());
        for _ in 0..space.len() {
            let e: Vec<f64> = (0..a).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let z: f64 = e.iter().sum();
            probs.extend(e.into_iter().map(|x| x / z));
        }
        Self { n_actions: a, probs }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_nodes(&self) -> usize {
        self.probs.len() / self.n_actions
    }

    pub fn row(&self, node: usize) -> &[f64] {
        &self.probs[node * self.n_actions..(node + 1) * self.n_actions]
    }

    pub fn row_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.probs[node * self.n_actions..(node + 1) * self.n_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Re-keys the policy from histories of `from` onto `to`. Histories of
    /// `to` that `from` does not contain act uniformly.
    pub fn transfer(&self, from: &HistorySpace, to: &HistorySpace) -> Policy {
        let mut out = Policy::uniform(to);
        for (i, m) in to.map_onto(from).into_iter().enumerate() {
            if let Some(j) = m {
                out.row_mut(i).copy_from_slice(self.row(j));
            }
        }
        out
    }
}

/// The Bayes-adaptive MDP on a history space: posterior-mixed step
/// probabilities on every edge and posterior-mean costs per (node, action).
#[derive(Debug, Clone)]
pub struct BeliefMdp {
    space: Arc<HistorySpace>,
    edge_prob: Vec<f64>,
    exp_cost: Vec<f64>,
    c_max: f64,
}

impl BeliefMdp {
    /// Enumerates the prior's space and builds the model on it.
    pub fn build(prior: &Prior, horizon: usize) -> Result<Self> {
        Self::build_capped(prior, horizon, DEFAULT_NODE_CAP)
    }

    pub fn build_capped(prior: &Prior, horizon: usize, cap: usize) -> Result<Self> {
        let space = Arc::new(HistorySpace::enumerate_capped(prior, horizon, cap)?);
        let post = posteriors(&space, prior)?;
        Self::assemble(space, prior, &post)
    }

    /// Model of `prior` on a space that may be larger than its own (for
    /// example a single sampled MDP on the whole sample's space). Histories
    /// the prior cannot produce get zero mass under every policy. Fails if the
    /// prior can produce a history the space does not contain.
    pub fn on_space(space: Arc<HistorySpace>, prior: &Prior) -> Result<Self> {
        let post = posterior_table(&space, prior, false)?;
        Self::assemble(space, prior, &post)
    }

    fn assemble(space: Arc<HistorySpace>, prior: &Prior, post: &PosteriorTable) -> Result<Self> {
        let a_n = space.n_actions;
        let costs = prior.costs();
        let rows = StepRows::new(prior);
        let mut kernel = vec![0.0; rows.n_out];
        let mut edge_prob = vec![0.0; space.n_edges()];
        let mut exp_cost = vec![0.0; space.len() * a_n];
        for i in 0..space.len() {
            let Node { t, state, .. } = space.nodes[i];
            let reset = resets_after(space.mdp_horizon, t);
            for a in 0..a_n {
                kernel.iter_mut().for_each(|x| *x = 0.0);
                for (m, &w) in post.of(i).iter().enumerate() {
                    if w > 0.0 {
                        for (x, p) in kernel.iter_mut().zip(rows.row(m, reset, state * a_n + a)) {
                            *x += w * p;
                        }
                    }
                }
                let c: f64 = kernel
                    .chunks(space.n_states)
                    .zip(costs.values())
                    .map(|(row, v)| row.iter().sum::<f64>() * v)
                    .sum();
                exp_cost[i * a_n + a] = c;
                if t == space.horizon {
                    continue;
                }
                let off = space.edge_offset(i, a);
                let mut covered = 0.0;
                for (j, e) in space.children(i, a).iter().enumerate() {
                    let p = kernel[e.cost * space.n_states + e.state];
                    edge_prob[off + j] = p;
                    covered += p;
                }
                if post.on_support(i) && covered < 1.0 - 1e-10 {
                    return Err(Error::Model(format!(
                        "prior reaches histories outside the space below node {i} (covered mass {covered})"
                    )));
                }
            }
        }
        Ok(Self { space, edge_prob, exp_cost, c_max: costs.c_max() })
    }

    pub fn space(&self) -> &HistorySpace {
        &self.space
    }

    pub fn shared_space(&self) -> Arc<HistorySpace> {
        self.space.clone()
    }

    pub fn horizon(&self) -> usize {
        self.space.horizon
    }

    pub fn n_actions(&self) -> usize {
        self.space.n_actions
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    /// Posterior-mean immediate cost of `action` at `node`.
    pub fn cost(&self, node: usize, action: usize) -> f64 {
        self.exp_cost[node * self.space.n_actions + action]
    }

    /// (probability, child) pairs of `action` at `node`.
    pub fn transitions(&self, node: usize, action: usize) -> impl Iterator<Item = (f64, usize)> + '_ {
        let off = self.space.edge_offset(node, action);
        self.space
            .children(node, action)
            .iter()
            .enumerate()
            .map(move |(j, e)| (self.edge_prob[off + j], e.child))
    }
}

/// Probability of visiting each history under `policy`, by a forward pass.
/// Masses of the histories of each length sum to one.
pub fn visitation(model: &BeliefMdp, policy: &Policy) -> Vec<f64> {
    let space = model.space();
    let mut mass = vec![0.0; space.len()];
    for (r, w) in space.roots().zip(space.root_weights()) {
        mass[r] = *w;
    }
    for i in 0..space.depth_start[space.horizon] {
        if mass[i] == 0.0 {
            continue;
        }
        for (a, pa) in policy.row(i).iter().enumerate() {
            let m = mass[i] * pa;
            if m == 0.0 {
                continue;
            }
            for (p, c) in model.transitions(i, a) {
                mass[c] += m * p;
            }
        }
    }
    mass
}
