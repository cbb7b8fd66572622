//! Episode simulation on the member MDPs, independent of the posterior
//! recursion: draw a member from the prior, then roll out the history policy
//! against that member's own kernel.

use crate::bayes::RegConfig;
use crate::error::{param, Result};
use crate::history::{HistorySpace, Policy};
use crate::mdp::Prior;
use crate::rng;
use rand::Rng;
use rayon::prelude::*;

/// Episodes per independently seeded chunk.
const CHUNK: usize = 1 << 14;

#[derive(Clone, Debug)]
pub struct SimStats {
    pub episodes: usize,
    /// Number of episodes that reached each history.
    pub visits: Vec<u64>,
    /// Mean and unbiased variance of the accumulated cost plus regularizer.
    pub mean_return: f64,
    pub var_return: f64,
}

impl SimStats {
    pub fn frequency(&self, node: usize) -> f64 {
        self.visits[node] as f64 / self.episodes as f64
    }

    /// Standard error of the mean return.
    pub fn return_se(&self) -> f64 {
        (self.var_return / self.episodes as f64).sqrt()
    }
}

fn draw(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

struct Partial {
    visits: Vec<u64>,
    sum: f64,
    sum_sq: f64,
}

/// Simulates `episodes` rollouts of length `space.horizon() + 1`. The result
/// is a pure function of the arguments, whatever the thread count.
pub fn simulate(
    prior: &Prior,
    space: &HistorySpace,
    policy: &Policy,
    reg: RegConfig,
    episodes: usize,
    seed: u64,
) -> Result<SimStats> {
    if episodes < 2 {
        return param("simulation needs at least two episodes");
    }
    if policy.n_nodes() != space.len() {
        return param("policy does not match the history space");
    }
    let n_chunks = episodes.div_ceil(CHUNK);
    let parts: Vec<Partial> = (0..n_chunks)
        .into_par_iter()
        .map(|c| -> Result<Partial> {
            let mut r = rng::stream(rng::derive_seed(seed, &format!("chunk={c}")), rng::SIMULATION);
            let count = CHUNK.min(episodes - c * CHUNK);
            let mut out = Partial { visits: vec![0; space.len()], sum: 0.0, sum_sq: 0.0 };
            for _ in 0..count {
                let ret = episode(prior, space, policy, reg, &mut r, &mut out.visits)?;
                out.sum += ret;
                out.sum_sq += ret * ret;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut visits = vec![0u64; space.len()];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for p in parts {
        for (v, x) in visits.iter_mut().zip(p.visits) {
            *v += x;
        }
        sum += p.sum;
        sum_sq += p.sum_sq;
    }
    let n = episodes as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(SimStats { episodes, visits, mean_return: mean, var_return: var })
}

fn episode(
    prior: &Prior,
    space: &HistorySpace,
    policy: &Policy,
    reg: RegConfig,
    r: &mut rng::StreamRng,
    visits: &mut [u64],
) -> Result<f64> {
    let m = prior.member(draw(prior.weights(), r.random()));
    let s0 = draw(prior.init_dist(), r.random());
    let mut node = space
        .roots()
        .find(|&i| space.node(i).state == s0)
        .ok_or_else(|| crate::Error::Model(format!("initial state {s0} has no history")))?;
    let mut ret = 0.0;
    for t in 0..=space.horizon() {
        visits[node] += 1;
        let a = draw(policy.row(node), r.random());
        ret += reg.penalty(policy.row(node));
        let row = m.step_row(space.node(node).state, a, m.resets_after(t));
        let o = draw(&row, r.random());
        let (c, s) = (o / space.n_states(), o % space.n_states());
        ret += prior.costs().value(c);
        if t == space.horizon() {
            break;
        }
        node = space
            .children(node, a)
            .iter()
            .find(|e| e.cost == c && e.state == s)
            .map(|e| e.child)
            .ok_or_else(|| crate::Error::Model(format!("outcome ({c}, {s}) missing below history {node}")))?;
    }
    Ok(ret)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draw_picks_by_cumulative_mass() {
        let row = [0.2, 0.0, 0.8];
        assert_eq!(draw(&row, 0.0), 0);
        assert_eq!(draw(&row, 0.19), 0);
        assert_eq!(draw(&row, 0.2), 2);
        assert_eq!(draw(&row, 1.0 - 1e-17), 2);
    }
}
