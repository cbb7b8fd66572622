//! ERM, leave-one-out solutions and stability measurements on empirical
//! priors, plus the generalization sweep.

use std::sync::Arc;

use rayon::prelude::*;

use crate::bayes::{loss, regret, root_loss, solve_exact, RegConfig};
use crate::bounds::{self, BoundInputs};
use crate::error::{param, Result};
use crate::history::{visitation, BeliefMdp, HistorySpace, Policy, DEFAULT_NODE_CAP};
use crate::mdp::Prior;
use crate::mirror::{weighted_distance, weighted_sq_distance};
use crate::rng;

/// ERM policy: the exact regularized optimum on the sample's own space.
pub fn erm_policy(sample: &Prior, reg: RegConfig, horizon: usize, cap: usize) -> Result<(BeliefMdp, Policy)> {
    let model = BeliefMdp::build_capped(sample, horizon, cap)?;
    let (pi, _) = solve_exact(&model, reg);
    Ok((model, pi))
}

/// Visitation ratio with 0/0 = 1 and x/0 = infinity.
fn ratio(a: f64, b: f64) -> f64 {
    match (a > 0.0, b > 0.0) {
        (false, _) => 1.0,
        (true, false) => f64::INFINITY,
        (true, true) => a / b,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DEstimate {
    /// Largest node-wise visitation ratio found; a lower estimate of D.
    pub d: f64,
    /// q^T.
    pub cap: f64,
}

/// Largest node-wise visitation ratio between any two members of `members`
/// under any policy of `policies`, all on `space`.
pub fn estimate_d(space: &Arc<HistorySpace>, members: &Prior, policies: &[Policy]) -> Result<DEstimate> {
    let models = member_models(space, members)?;
    let mut visits = Vec::new();
    for pi in policies {
        visits.push(models.iter().map(|m| visitation(m, pi)).collect::<Vec<_>>());
    }
    Ok(DEstimate { d: max_ratio(&visits), cap: members.q_ratio().powi(space.horizon() as i32) })
}

fn max_ratio(per_policy: &[Vec<Vec<f64>>]) -> f64 {
    let mut d: f64 = 1.0;
    for visits in per_policy {
        for a in visits {
            for b in visits {
                for (x, y) in a.iter().zip(b) {
                    d = d.max(ratio(*x, *y));
                }
            }
        }
    }
    d
}

fn member_models(space: &Arc<HistorySpace>, members: &Prior) -> Result<Vec<BeliefMdp>> {
    (0..members.len()).map(|i| BeliefMdp::on_space(space.clone(), &members.single(i))).collect()
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub j: usize,
    /// L^lambda_hat(pi^{\j}) - L^lambda_hat(pi*), 1/N-weighted empirical losses.
    pub delta: f64,
    /// lambda / 2 * sum_h v^{pi\j}(h) ||pi\j(h) - pi*(h)||^2 under the empirical prior.
    pub lower_qg: f64,
    /// (1/N) C_max T sqrt|A| * sum_h v_{M_j}^{pi\j}(h) ||pi\j(h) - pi*(h)||.
    pub upper_lip: f64,
    /// L^lambda_M(pi\j) - L^lambda_M(pi*) for each evaluation member M.
    pub per_mdp_gap: Vec<f64>,
    /// sum_h v^{pi\j}(h) ||pi\j(h) - pi*(h)|| under the empirical prior.
    pub policy_distance: f64,
    pub d_est: DEstimate,
    /// kappa / (lambda N) with kappa built from `d_est.d`.
    pub gap_bound: f64,
    /// 2 D C_max T sqrt|A| / (lambda N).
    pub distance_bound: f64,
    /// Gap of the left-out member itself.
    pub member_gap: f64,
    /// 4 C_max^2 T^2 |A| / (lambda N p_hat), p_hat the empirical weight of M_j.
    pub member_bound: f64,
}

impl StabilityReport {
    pub fn max_gap(&self) -> f64 {
        self.per_mdp_gap.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sandwich_holds(&self) -> bool {
        self.delta >= -1e-10 && self.lower_qg <= self.delta + 1e-9 && self.delta <= self.upper_lip + 1e-9
    }

    pub fn gap_bound_holds(&self) -> bool {
        self.max_gap() <= self.gap_bound + 1e-9
    }

    pub fn distance_bound_holds(&self) -> bool {
        self.policy_distance <= self.distance_bound + 1e-9
    }

    pub fn member_bound_holds(&self) -> bool {
        self.member_gap <= self.member_bound + 1e-9
    }
}

/// Members on which per-MDP gaps are measured, with a common history space.
struct EvalSet {
    members: Prior,
    space: Arc<HistorySpace>,
    models: Vec<BeliefMdp>,
    optimum: Policy,
    opt_losses: Vec<f64>,
    opt_visits: Vec<Vec<f64>>,
    uniform_visits: Vec<Vec<f64>>,
    q_cap: f64,
}

/// Solved empirical problem, reused across leave-one-out indices.
pub struct StabilityLab {
    sample: Prior,
    reg: RegConfig,
    horizon: usize,
    cap: usize,
    model: BeliefMdp,
    optimum: Policy,
    opt_loss: f64,
    eval: EvalSet,
}

impl StabilityLab {
    /// Gaps are measured on the sample's distinct members.
    pub fn new(sample: &Prior, reg: RegConfig, horizon: usize) -> Result<Self> {
        Self::with_eval(sample, reg, horizon, None, DEFAULT_NODE_CAP)
    }

    /// Gaps are measured on `eval` members (e.g. the whole population) when
    /// given, on a space holding both the sample's and their histories.
    pub fn with_eval(sample: &Prior, reg: RegConfig, horizon: usize, eval: Option<&Prior>, cap: usize) -> Result<Self> {
        if reg.lambda <= 0.0 {
            return param("stability checks need lambda > 0");
        }
        let model = BeliefMdp::build_capped(sample, horizon, cap)?;
        let (optimum, v) = solve_exact(&model, reg);
        let opt_loss = root_loss(&model, &v);
        let (members, space) = match eval {
            None => (sample.subset(&sample.distinct()), model.shared_space()),
            Some(e) => {
                let all = sample.union(e)?;
                (e.clone(), Arc::new(HistorySpace::enumerate_capped(&all, horizon, cap)?))
            }
        };
        let models = member_models(&space, &members)?;
        let eval_opt = optimum.transfer(model.space(), &space);
        let opt_losses = models.iter().map(|m| loss(m, &eval_opt, reg)).collect();
        let opt_visits = models.iter().map(|m| visitation(m, &eval_opt)).collect();
        let uni = Policy::uniform(&space);
        let uniform_visits = models.iter().map(|m| visitation(m, &uni)).collect();
        let q_cap = members.q_ratio().powi(horizon as i32);
        let eval = EvalSet { members, space, models, optimum: eval_opt, opt_losses, opt_visits, uniform_visits, q_cap };
        Ok(Self { sample: sample.clone(), reg, horizon, cap, model, optimum, opt_loss, eval })
    }

    pub fn model(&self) -> &BeliefMdp {
        &self.model
    }

    pub fn optimum(&self) -> &Policy {
        &self.optimum
    }

    pub fn sample(&self) -> &Prior {
        &self.sample
    }

    /// Optimum of the sample without member j, defined on the full sample's
    /// space (uniform where the reduced sample cannot reach). The reduced
    /// objective differs from the 1/N-weighted one by a positive factor,
    /// which leaves the minimizer unchanged.
    pub fn leave_one_out(&self, j: usize) -> Result<Policy> {
        let rest = self.sample.without(j)?;
        let (m, pi) = erm_policy(&rest, self.reg, self.horizon, self.cap)?;
        Ok(pi.transfer(m.space(), self.model.space()))
    }

    pub fn check(&self, j: usize) -> Result<StabilityReport> {
        let loo = self.leave_one_out(j)?;
        let n = self.sample.len() as f64;
        let space = self.model.space();
        let lambda = self.reg.lambda;
        let t = self.horizon as f64;
        let a = space.n_actions() as f64;
        let c = self.model.c_max();

        let delta = loss(&self.model, &loo, self.reg) - self.opt_loss;
        let v_mix = visitation(&self.model, &loo);
        let lower_qg = lambda / 2.0 * weighted_sq_distance(&v_mix, &loo, &self.optimum);
        let member_j = BeliefMdp::on_space(self.model.shared_space(), &self.sample.single(j))?;
        let v_j = visitation(&member_j, &loo);
        let upper_lip = c * t * a.sqrt() / n * weighted_distance(&v_j, &loo, &self.optimum);
        let policy_distance = weighted_distance(&v_mix, &loo, &self.optimum);

        let ev = &self.eval;
        let eval_loo = if Arc::ptr_eq(&ev.space, &self.model.shared_space()) {
            loo.clone()
        } else {
            loo.transfer(space, &ev.space)
        };
        let per_mdp_gap: Vec<f64> =
            ev.models.iter().zip(&ev.opt_losses).map(|(m, l)| loss(m, &eval_loo, self.reg) - l).collect();
        let loo_visits: Vec<Vec<f64>> = ev.models.iter().map(|m| visitation(m, &eval_loo)).collect();
        let d = max_ratio(&[ev.opt_visits.clone(), loo_visits, ev.uniform_visits.clone()]);
        debug_assert_eq!(ev.optimum.n_nodes(), ev.space.len());

        let inputs = BoundInputs {
            d_const: d,
            q_const: ev.q_cap,
            c_max: c,
            horizon: t,
            n_actions: a,
            lambda,
            n_samples: n,
            delta_conf: 0.1,
            p_min: 1.0,
            b_loss: c * t,
        };
        let id_weight = self.sample.id_weight(j);
        let member_gap = loss(&member_j, &loo, self.reg) - loss(&member_j, &self.optimum, self.reg);
        Ok(StabilityReport {
            j,
            delta,
            lower_qg,
            upper_lip,
            per_mdp_gap,
            policy_distance,
            d_est: DEstimate { d, cap: ev.q_cap },
            gap_bound: bounds::stability_constant(&inputs),
            distance_bound: bounds::distance_bound(&inputs),
            member_gap,
            member_bound: bounds::finite_member_bound(&inputs, id_weight),
        })
    }

    /// Reports for the first entry of every distinct member; entries sharing
    /// an id give identical reports.
    pub fn check_distinct(&self) -> Result<Vec<StabilityReport>> {
        self.sample.distinct().into_iter().map(|j| self.check(j)).collect()
    }

    /// Members the per-MDP gaps refer to.
    pub fn eval_members(&self) -> &Prior {
        &self.eval.members
    }
}

/// Leave-one-out optimum of `sample` on the sample's space.
pub fn leave_one_out(sample: &Prior, reg: RegConfig, horizon: usize, j: usize) -> Result<Policy> {
    if sample.len() < 2 {
        return param("leaving one out needs at least two members");
    }
    if j >= sample.len() {
        return param(format!("member index {j} out of range for {} members", sample.len()));
    }
    let rest = sample.without(j)?;
    let (m, pi) = erm_policy(&rest, reg, horizon, DEFAULT_NODE_CAP)?;
    let full = HistorySpace::enumerate(sample, horizon)?;
    Ok(pi.transfer(m.space(), &full))
}

/// Stability report for one left-out index, gaps measured on the sample's members.
pub fn stability_check(sample: &Prior, reg: RegConfig, horizon: usize, j: usize) -> Result<StabilityReport> {
    StabilityLab::new(sample, reg, horizon)?.check(j)
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub horizon: usize,
    pub n_list: Vec<usize>,
    pub lambda_list: Vec<f64>,
    pub seeds: Vec<u64>,
    pub delta_conf: f64,
    pub max_nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub lambda: f64,
    pub seed: u64,
    pub regret: f64,
    pub unseen_fraction: f64,
    pub history_count: usize,
    pub naive: f64,
    /// The remaining fields need lambda > 0 (and N >= 2 for the stability ones).
    pub visitation_bound: Option<f64>,
    pub finite_family_bound: Option<f64>,
    pub d_emp: Option<f64>,
    pub max_gap: Option<f64>,
    pub sandwich_pass: Option<bool>,
    pub gap_bound_pass: Option<bool>,
}

/// Seed for drawing the sample of one (seed, N) pair; shared across lambdas.
pub fn sample_seed(seed: u64, n: usize) -> u64 {
    rng::derive_seed(seed, &format!("sample/n={n}"))
}

/// Empirical regret of the regularized ERM against the population, with all
/// bound values, for every (N, lambda, seed). Cells run in parallel on the
/// current rayon pool; rows come back in (N, lambda, seed) order.
pub fn generalization_experiment(population: &Prior, cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if !(cfg.delta_conf > 0.0 && cfg.delta_conf < 1.0) {
        return param("delta_conf must lie in (0, 1)");
    }
    let truth = BeliefMdp::build_capped(population, cfg.horizon, cfg.max_nodes)?;
    let mut cells = Vec::new();
    for &n in &cfg.n_list {
        for &lambda in &cfg.lambda_list {
            for &seed in &cfg.seeds {
                cells.push((n, RegConfig::new(lambda)?, seed));
            }
        }
    }
    cells.par_iter().map(|&(n, reg, seed)| sweep_cell(population, &truth, cfg, n, reg, seed)).collect()
}

fn sweep_cell(population: &Prior, truth: &BeliefMdp, cfg: &SweepConfig, n: usize, reg: RegConfig, seed: u64) -> Result<SweepRow> {
    let sample = population.sample_empirical(n, sample_seed(seed, n))?;
    let (model, pi) = erm_policy(&sample, reg, cfg.horizon, cfg.max_nodes)?;
    let regret = regret(truth, &pi.transfer(model.space(), truth.space()));
    let seen: std::collections::BTreeSet<usize> = sample.ids().iter().cloned().collect();
    let distinct_pop: std::collections::BTreeSet<usize> = population.ids().iter().cloned().collect();
    let unseen_fraction = distinct_pop.iter().filter(|id| !seen.contains(id)).count() as f64 / distinct_pop.len() as f64;
    let c = population.costs().c_max();
    let t = cfg.horizon as f64;
    let mut inputs = BoundInputs {
        d_const: 1.0,
        q_const: population.q_ratio(),
        c_max: c,
        horizon: t,
        n_actions: population.n_actions() as f64,
        lambda: reg.lambda,
        n_samples: n as f64,
        delta_conf: cfg.delta_conf,
        p_min: population.p_min(),
        b_loss: c * t,
    };
    let naive = bounds::naive_bound(&inputs, truth.len() as f64);
    let mut row = SweepRow {
        n,
        lambda: reg.lambda,
        seed,
        regret,
        unseen_fraction,
        history_count: truth.len(),
        naive,
        visitation_bound: None,
        finite_family_bound: None,
        d_emp: None,
        max_gap: None,
        sandwich_pass: None,
        gap_bound_pass: None,
    };
    if reg.lambda <= 0.0 {
        return Ok(row);
    }
    row.finite_family_bound = Some(bounds::finite_family_bound(&inputs));
    if n < 2 {
        return Ok(row);
    }
    let lab = StabilityLab::with_eval(&sample, reg, cfg.horizon, Some(population), cfg.max_nodes)?;
    let reports = lab.check_distinct()?;
    let d = reports.iter().map(|r| r.d_est.d).fold(1.0, f64::max);
    inputs.d_const = d;
    row.d_emp = Some(d);
    row.max_gap = Some(reports.iter().map(|r| r.max_gap()).fold(f64::NEG_INFINITY, f64::max));
    row.visitation_bound = Some(bounds::visitation_bound(&inputs));
    row.sandwich_pass = Some(reports.iter().all(|r| r.sandwich_holds()));
    let kappa_bound = bounds::stability_constant(&inputs);
    row.gap_bound_pass = Some(row.max_gap.unwrap() <= kappa_bound + 1e-9);
    Ok(row)
}
