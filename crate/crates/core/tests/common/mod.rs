//! Instance generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use brl_core::bayes::{half_sq_norm, RegConfig};
use brl_core::mdp::{CostSet, Prior, TabularMdp};
use brl_core::{HistorySpace, Policy};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn simplex(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - r.random::<f64>()).ln()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Random deterministic-cost member; each (s, a) row is a point mass with
/// probability `p_det` and a dense random distribution otherwise.
pub fn random_member(r: &mut ChaCha8Rng, s_n: usize, a_n: usize, costs: &CostSet, horizon: usize, p_det: f64) -> TabularMdp {
    let mut init = vec![0.0; s_n];
    init[0] = 1.0;
    let mut trans = Vec::new();
    let mut cost = Vec::new();
    for _ in 0..s_n {
        let mut rows = Vec::new();
        let mut cs = Vec::new();
        for _ in 0..a_n {
            if r.random::<f64>() < p_det {
                let mut row = vec![0.0; s_n];
                row[r.random_range(0..s_n)] = 1.0;
                rows.push(row);
            } else {
                rows.push(simplex(r, s_n));
            }
            cs.push(r.random_range(0..costs.len()));
        }
        trans.push(rows);
        cost.push(cs);
    }
    TabularMdp::deterministic(init, cost, trans, horizon, costs).unwrap()
}

/// Random joint-kernel member with full-support rows.
pub fn random_joint_member(r: &mut ChaCha8Rng, s_n: usize, a_n: usize, costs: &CostSet, horizon: usize) -> TabularMdp {
    let mut init = vec![0.0; s_n];
    init[0] = 1.0;
    let rows = (0..s_n).map(|_| (0..a_n).map(|_| simplex(r, s_n * costs.len())).collect()).collect();
    TabularMdp::joint(init, rows, horizon, costs).unwrap()
}

pub fn random_prior(r: &mut ChaCha8Rng, s_n: usize, a_n: usize, members: usize, horizon: usize, p_det: f64) -> Prior {
    let costs = CostSet::binary();
    let ms = (0..members).map(|_| random_member(r, s_n, a_n, &costs, horizon, p_det)).collect();
    let w = simplex(r, members);
    Prior::new(ms, w, costs).unwrap()
}

/// Random prior over `members` MDPs whose history space at horizon `t` has
/// at most `max_nodes` histories (rejection sampling).
pub fn bounded_instance(r: &mut ChaCha8Rng, members: usize, t: usize, max_nodes: usize) -> Prior {
    loop {
        let p = random_prior(r, 2, 2, members, t.max(1), 0.8);
        if HistorySpace::enumerate_capped(&p, t, max_nodes).is_ok() {
            return p;
        }
    }
}

/// Histories enumerated directly from the members, with the joint weight
/// P(M) P(h | M) of every member at every history (policy factors excluded).
pub struct Enumerated {
    pub parent: Vec<Option<usize>>,
    pub action: Vec<usize>,
    pub state: Vec<usize>,
    pub joint: Vec<Vec<f64>>,
    pub t: Vec<usize>,
}

/// Requires T <= H so that no episode resets occur.
pub fn enumerate_directly(prior: &Prior, horizon: usize) -> Enumerated {
    assert!(horizon <= prior.horizon());
    let s_n = prior.n_states();
    let mut e = Enumerated { parent: vec![], action: vec![], state: vec![], joint: vec![], t: vec![] };
    for s in 0..s_n {
        let w: Vec<f64> = prior.weights().iter().map(|w| w * prior.init_dist()[s]).collect();
        if w.iter().any(|x| *x > 0.0) {
            e.parent.push(None);
            e.action.push(0);
            e.state.push(s);
            e.joint.push(w);
            e.t.push(0);
        }
    }
    let mut i = 0;
    while i < e.state.len() {
        if e.t[i] < horizon {
            for a in 0..prior.n_actions() {
                let rows: Vec<Vec<f64>> = prior.members().iter().map(|m| m.joint_row(e.state[i], a)).collect();
                for o in 0..rows[0].len() {
                    let w: Vec<f64> = (0..prior.len()).map(|m| e.joint[i][m] * rows[m][o]).collect();
                    if w.iter().any(|x| *x > 0.0) {
                        e.parent.push(Some(i));
                        e.action.push(a);
                        e.state.push(o % s_n);
                        e.joint.push(w);
                        e.t.push(e.t[i] + 1);
                    }
                }
            }
        }
        i += 1;
    }
    e
}

/// Minimum expected T-horizon cost over every deterministic history policy,
/// by enumerating all |A|^(#histories) assignments.
pub fn brute_force_min_loss(prior: &Prior, horizon: usize) -> (f64, usize) {
    let e = enumerate_directly(prior, horizon);
    let n = e.state.len();
    let a_n = prior.n_actions();
    let costs = prior.costs();
    // g[i][a] = sum_M P(M, h_i) E[c | M, s, a]
    let g: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..a_n)
                .map(|a| {
                    prior
                        .members()
                        .iter()
                        .enumerate()
                        .map(|(m, mdp)| e.joint[i][m] * mdp.expected_cost(e.state[i], a, costs))
                        .sum()
                })
                .collect()
        })
        .collect();
    let mut assign = vec![0usize; n];
    let mut best = f64::INFINITY;
    let mut live = vec![false; n];
    loop {
        let mut total = 0.0;
        for i in 0..n {
            live[i] = match e.parent[i] {
                None => true,
                Some(p) => live[p] && assign[p] == e.action[i],
            };
            if live[i] {
                total += g[i][assign[i]];
            }
        }
        best = best.min(total);
        let mut k = 0;
        while k < n {
            assign[k] += 1;
            if assign[k] < a_n {
                break;
            }
            assign[k] = 0;
            k += 1;
        }
        if k == n {
            return (best, n);
        }
    }
}

/// P(M | h) from the full likelihood of the history.
pub fn direct_posterior(prior: &Prior, space: &HistorySpace, node: usize) -> Vec<f64> {
    let h = space.history(node);
    let w: Vec<f64> = prior
        .members()
        .iter()
        .zip(prior.weights())
        .map(|(m, w)| w * brl_core::history::likelihood(&h, m))
        .collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

pub fn random_policy(space: &HistorySpace, seed: u64) -> Policy {
    Policy::random(space, &mut rng(seed))
}

/// Solves (I - P^pi) V = C^pi densely, with P^pi and C^pi assembled from
/// full-likelihood posteriors and the members' raw kernels.
pub fn dense_values(prior: &Prior, space: &HistorySpace, pi: &Policy, reg: RegConfig) -> Vec<f64> {
    let n = space.len();
    let s_n = prior.n_states();
    let costs = prior.costs();
    let mut p = DMatrix::<f64>::zeros(n, n);
    let mut c = DVector::<f64>::zeros(n);
    for i in 0..n {
        let post = direct_posterior(prior, space, i);
        let (s, t) = (space.node(i).state, space.node(i).t);
        for a in 0..space.n_actions() {
            let pa = pi.row(i)[a];
            let mut kernel = vec![0.0; s_n * costs.len()];
            for (m, w) in prior.members().iter().zip(&post) {
                for (o, x) in m.step_row(s, a, m.resets_after(t)).into_iter().enumerate() {
                    kernel[o] += w * x;
                }
            }
            let cost: f64 = kernel.iter().enumerate().map(|(o, x)| x * costs.value(o / s_n)).sum();
            c[i] += pa * cost;
            for e in space.children(i, a) {
                p[(i, e.child)] += pa * kernel[e.cost * s_n + e.state];
            }
        }
        c[i] += reg.lambda * half_sq_norm(pi.row(i));
    }
    let lhs = DMatrix::<f64>::identity(n, n) - p;
    lhs.lu().solve(&c).expect("I - P is unit upper triangular").iter().cloned().collect()
}
