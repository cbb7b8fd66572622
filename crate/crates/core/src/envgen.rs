//! Generators for structured and random MDP priors.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::bayes::{regret, solve_exact, RegConfig};
use crate::error::{param, Error, Result};
use crate::history::{BeliefMdp, History, HistorySpace, Policy};
use crate::mdp::{CostSet, Prior, TabularMdp};
use crate::rng::{self, StreamRng};

/// Default cap on the number of members a generator may produce.
pub const DEFAULT_MEMBER_CAP: usize = 1 << 16;

/// Parameters of the identifier-tracing family: one member per T-bit
/// identifier x, whose trajectory follows the bits of x with per-step
/// fidelity 1 - eps, eps = eps_prime / 2^T, and whose only cost is paid at
/// the last step: f(x) for action 0 and 1 - f(x) for action 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundParams {
    pub horizon: usize,
    pub eps_prime: f64,
    /// f, indexed by identifier.
    pub labels: Vec<bool>,
}

impl LowerBoundParams {
    pub fn new(horizon: usize, eps_prime: f64, labels: Vec<bool>) -> Result<Self> {
        if horizon == 0 {
            return param("identifier length must be at least 1");
        }
        if horizon >= usize::BITS as usize - 1 {
            return param("identifier length too large");
        }
        if !(eps_prime > 0.0 && eps_prime < 1.0) {
            return param(format!("eps_prime must lie in (0, 1), got {eps_prime}"));
        }
        if labels.len() != 1 << horizon {
            return param(format!("labels must cover all {} identifiers", 1usize << horizon));
        }
        Ok(Self { horizon, eps_prime, labels })
    }

    /// Labels drawn uniformly at random.
    pub fn random_labels(horizon: usize, eps_prime: f64, seed: u64) -> Result<Self> {
        if horizon >= usize::BITS as usize - 1 {
            return param("identifier length too large");
        }
        let mut r = rng::stream(seed, rng::ENVIRONMENT);
        let labels = (0..1usize << horizon).map(|_| r.random::<bool>()).collect();
        Self::new(horizon, eps_prime, labels)
    }

    pub fn eps(&self) -> f64 {
        self.eps_prime / (1u64 << self.horizon) as f64
    }

    pub fn n_members(&self) -> usize {
        1 << self.horizon
    }

    /// Bit t (1-based) of identifier x.
    pub fn digit(x: usize, t: usize) -> usize {
        (x >> (t - 1)) & 1
    }

    /// State s_t^b; s_0 is state 0.
    pub fn state(t: usize, b: usize) -> usize {
        if t == 0 {
            0
        } else {
            2 * t - 1 + b
        }
    }
}

/// The 2^T-member family with 2T + 1 states, two actions and costs {0, 1}.
pub fn lower_bound_family(params: &LowerBoundParams, member_cap: usize) -> Result<Prior> {
    let t_len = params.horizon;
    let n = params.n_members();
    if n > member_cap {
        return Err(Error::Capacity { what: "prior members", count: n, cap: member_cap });
    }
    let costs = CostSet::binary();
    let s_n = 2 * t_len + 1;
    let eps = params.eps();
    let mut init = vec![0.0; s_n];
    init[0] = 1.0;
    let mut members = Vec::with_capacity(n);
    for x in 0..n {
        let mut trans = vec![vec![vec![0.0; s_n]; 2]; s_n];
        let mut cost = vec![vec![0usize; 2]; s_n];
        for t in 0..=t_len {
            let layer: &[usize] = if t == 0 { &[0] } else { &[0, 1] };
            for &b in layer {
                let s = LowerBoundParams::state(t, b);
                for a in 0..2 {
                    let row = &mut trans[s][a];
                    if t < t_len {
                        let next = LowerBoundParams::digit(x, t + 1);
                        row[LowerBoundParams::state(t + 1, next)] = 1.0 - eps;
                        row[LowerBoundParams::state(t + 1, 1 - next)] = eps;
                    } else {
                        row[0] = 1.0;
                    }
                }
                if t == t_len {
                    let f = params.labels[x] as usize;
                    cost[s] = vec![f, 1 - f];
                }
            }
        }
        members.push(TabularMdp::deterministic(init.clone(), cost, trans, t_len, &costs)?);
    }
    Prior::uniform(members, costs)
}

/// The noiseless trace of identifier x with the given action at each step.
pub fn trace_history(x: usize, horizon: usize, actions: &[usize]) -> History {
    let mut h = History::root(0);
    for t in 1..=horizon {
        h.push(actions[t - 1], 0, LowerBoundParams::state(t, LowerBoundParams::digit(x, t)));
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundRun {
    pub seed: u64,
    pub n: usize,
    /// Regret of the unregularized ERM on the full family with adversarial labels.
    pub regret: f64,
    /// Fraction of identifiers absent from the sample (phi).
    pub unseen_fraction: f64,
    /// 0.5 phi - eps_prime (1 + 0.5 phi).
    pub expression: f64,
    pub holds: bool,
    pub labels: Vec<bool>,
    pub history_count: usize,
}

/// Samples N identifiers, solves the unregularized ERM, then relabels every
/// unseen identifier so that the action the ERM takes at the end of its trace
/// costs 1, and measures the exact regret on the relabelled family.
pub fn lower_bound_experiment(params: &LowerBoundParams, n: usize, seed: u64) -> Result<LowerBoundRun> {
    if n == 0 {
        return param("sample size must be at least 1");
    }
    let family = lower_bound_family(params, DEFAULT_MEMBER_CAP)?;
    let idx = family.sample_indices(n, seed);
    let sample = family.subset(&idx);
    let erm_model = BeliefMdp::build(&sample, params.horizon)?;
    let (erm, _) = solve_exact(&erm_model, RegConfig::none());

    let mut seen = vec![false; params.n_members()];
    idx.iter().for_each(|&i| seen[i] = true);
    let mut labels = params.labels.clone();
    let space = erm_model.space();
    for x in (0..params.n_members()).filter(|&x| !seen[x]) {
        let action = erm_action_on_trace(space, &erm, x, params.horizon)?;
        // action 0 costs f(x), action 1 costs 1 - f(x)
        labels[x] = action == 0;
    }

    let adversarial = LowerBoundParams { labels: labels.clone(), ..params.clone() };
    let truth = BeliefMdp::build(&lower_bound_family(&adversarial, DEFAULT_MEMBER_CAP)?, params.horizon)?;
    let regret = regret(&truth, &erm.transfer(space, truth.space()));
    let phi = seen.iter().filter(|s| !**s).count() as f64 / params.n_members() as f64;
    let expression = 0.5 * phi - params.eps_prime * (1.0 + 0.5 * phi);
    Ok(LowerBoundRun {
        seed,
        n,
        regret,
        unseen_fraction: phi,
        expression,
        holds: regret >= expression - 1e-9,
        labels,
        history_count: truth.len(),
    })
}

/// Follows the ERM's own (deterministic) actions along x's noiseless trace
/// and returns the action it takes at the final history.
fn erm_action_on_trace(space: &HistorySpace, erm: &Policy, x: usize, horizon: usize) -> Result<usize> {
    let choose = |node: usize| erm.row(node).iter().position(|&p| p == 1.0).unwrap_or(0);
    let mut actions = Vec::with_capacity(horizon);
    let mut node = space.roots().start;
    for t in 1..=horizon {
        let a = choose(node);
        actions.push(a);
        let target = trace_history(x, t, &actions);
        node = space
            .find(&target)
            .ok_or_else(|| Error::Numerical(format!("trace of identifier {x} missing from the sample space")))?;
    }
    Ok(choose(node))
}

/// Builds a prior whose members agree everywhere except on k gate states,
/// each of which can be entered at most once per episode.
///
/// The state space holds k + 1 copies of `base` and k gates. From any state
/// of copy l < k, every action leads to gate l + 1 with probability
/// `gate_prob` (cost drawn from the base cost marginal) and otherwise
/// follows `base` inside copy l. Gate i returns to copy i. Copy k has no
/// gate. Variants differ only in the gates' transition rows (symmetric
/// Dirichlet(1)) and cost indices (uniform).
pub fn restricted_difference_family(
    base: &TabularMdp,
    costs: &CostSet,
    k: usize,
    variants: usize,
    gate_prob: f64,
    seed: u64,
) -> Result<Prior> {
    if variants == 0 {
        return param("need at least one variant");
    }
    if !(0.0..1.0).contains(&gate_prob) {
        return param("gate probability must lie in [0, 1)");
    }
    let s_b = base.n_states;
    let a_n = base.n_actions;
    let c_n = costs.len();
    let s_n = (k + 1) * s_b + k;
    let gate = |i: usize| (k + 1) * s_b + i - 1;
    let mut shared = vec![vec![vec![0.0; s_n * c_n]; a_n]; s_n];
    for l in 0..=k {
        for s in 0..s_b {
            for a in 0..a_n {
                let row = base.joint_row(s, a);
                let out = &mut shared[l * s_b + s][a];
                let stay = if l < k { 1.0 - gate_prob } else { 1.0 };
                for c in 0..c_n {
                    let mut pc = 0.0;
                    for s2 in 0..s_b {
                        let p = row[c * s_b + s2];
                        out[c * s_n + l * s_b + s2] = stay * p;
                        pc += p;
                    }
                    if l < k {
                        out[c * s_n + gate(l + 1)] = gate_prob * pc;
                    }
                }
            }
        }
    }
    let mut init = vec![0.0; s_n];
    init[..s_b].copy_from_slice(&base.init_dist);

    let mut r = rng::stream(seed, rng::ENVIRONMENT);
    let mut members = Vec::with_capacity(variants);
    for _ in 0..variants {
        let mut rows = shared.clone();
        for i in 1..=k {
            for a in 0..a_n {
                let c = r.random_range(0..c_n);
                let dest = dirichlet(&mut r, s_b, 1.0);
                let out = &mut rows[gate(i)][a];
                for (s2, p) in dest.into_iter().enumerate() {
                    out[c * s_n + i * s_b + s2] = p;
                }
            }
        }
        members.push(TabularMdp::joint(init.clone(), rows, base.horizon, costs)?);
    }
    Prior::uniform(members, costs.clone())
}

/// Shape of a random prior.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomShape {
    pub n_states: usize,
    pub n_actions: usize,
    pub costs: CostSet,
    pub horizon: usize,
    pub members: usize,
}

fn dirichlet(r: &mut StreamRng, n: usize, concentration: f64) -> Vec<f64> {
    let g = Gamma::new(concentration, 1.0).expect("positive concentration");
    loop {
        let x: Vec<f64> = (0..n).map(|_| g.sample(r)).collect();
        let z: f64 = x.iter().sum();
        if z > 0.0 && z.is_finite() {
            return x.into_iter().map(|v| v / z).collect();
        }
    }
}

/// Members with symmetric-Dirichlet transition rows, uniform cost indices and
/// a deterministic start in state 0; uniform weights.
pub fn random_prior(shape: &RandomShape, concentration: f64, seed: u64) -> Result<Prior> {
    if shape.n_states == 0 || shape.n_actions == 0 || shape.members == 0 || shape.horizon == 0 {
        return param("random prior needs positive states, actions, members and horizon");
    }
    if shape.members > DEFAULT_MEMBER_CAP {
        return Err(Error::Capacity { what: "prior members", count: shape.members, cap: DEFAULT_MEMBER_CAP });
    }
    if !(concentration > 0.0 && concentration.is_finite()) {
        return param(format!("concentration must be positive, got {concentration}"));
    }
    let mut r = rng::stream(seed, rng::ENVIRONMENT);
    let mut init = vec![0.0; shape.n_states];
    init[0] = 1.0;
    let mut members = Vec::with_capacity(shape.members);
    for _ in 0..shape.members {
        let mut trans = Vec::with_capacity(shape.n_states);
        let mut cost = Vec::with_capacity(shape.n_states);
        for _ in 0..shape.n_states {
            trans.push((0..shape.n_actions).map(|_| dirichlet(&mut r, shape.n_states, concentration)).collect());
            cost.push((0..shape.n_actions).map(|_| r.random_range(0..shape.costs.len())).collect());
        }
        members.push(TabularMdp::deterministic(init.clone(), cost, trans, shape.horizon, &shape.costs)?);
    }
    Prior::uniform(members, shape.costs.clone())
}

/// Number of histories a prior would produce at horizon `t`, or `None` past `cap`.
pub fn history_count(prior: &Prior, horizon: usize, cap: usize) -> Option<usize> {
    HistorySpace::enumerate_capped(prior, horizon, cap).ok().map(|s| s.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{likelihood, posteriors};

    #[test]
    fn smallest_lower_bound_instance() {
        let params = LowerBoundParams::new(1, 0.5, vec![false, true]).unwrap();
        let p = lower_bound_family(&params, 16).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.n_states(), 3);
    }

    #[test]
    fn traced_likelihood() {
        let params = LowerBoundParams::random_labels(3, 0.5, 1).unwrap();
        let p = lower_bound_family(&params, 16).unwrap();
        assert_eq!(p.len(), 8);
        let eps: f64 = 0.5 / 8.0;
        for x in 0..8 {
            let h = trace_history(x, 3, &[0, 1, 0]);
            assert!((likelihood(&h, p.member(x)) - (1.0 - eps).powi(3)).abs() < 1e-15);
        }
    }

    #[test]
    fn member_cap_is_enforced() {
        let params = LowerBoundParams::random_labels(5, 0.1, 0).unwrap();
        assert!(matches!(lower_bound_family(&params, 16), Err(Error::Capacity { .. })));
    }

    #[test]
    fn concentrated_rows_are_near_uniform() {
        let shape = RandomShape { n_states: 3, n_actions: 2, costs: CostSet::binary(), horizon: 2, members: 2 };
        let p = random_prior(&shape, 1e6, 3).unwrap();
        for m in p.members() {
            for s in 0..3 {
                for a in 0..2 {
                    let row = m.joint_row(s, a);
                    let c = (0..2).find(|&c| row[c * 3..c * 3 + 3].iter().sum::<f64>() > 0.5).unwrap();
                    assert!(row[c * 3..c * 3 + 3].iter().all(|x| (x - 1.0 / 3.0).abs() < 0.01));
                }
            }
        }
        let again = random_prior(&shape, 1e6, 3).unwrap();
        assert_eq!(p.member(1), again.member(1));
    }

    #[test]
    fn ungated_variants_are_indistinguishable() {
        let shape = RandomShape { n_states: 2, n_actions: 2, costs: CostSet::binary(), horizon: 3, members: 1 };
        let base = random_prior(&shape, 1.0, 5).unwrap();
        let fam = restricted_difference_family(base.member(0), &CostSet::binary(), 0, 3, 0.3, 9).unwrap();
        let space = HistorySpace::enumerate(&fam, 3).unwrap();
        let post = posteriors(&space, &fam).unwrap();
        for i in 0..space.len() {
            assert!(post.of(i).iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-12));
        }
    }
}
