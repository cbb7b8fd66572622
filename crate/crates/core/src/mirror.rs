//! Uniform trust-region policy optimization: mirror descent at every history
//! with the squared Euclidean Bregman divergence, and runnable checks of its
//! descent, rate, fundamental-inequality and quadratic-growth properties.

use crate::bayes::{evaluate, half_sq_norm, loss, q_values, root_loss, solve_exact, RegConfig};
use crate::error::{param, Error, Result};
use crate::history::{visitation, BeliefMdp, Policy};

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).clamp(0.0, 1.0)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleKind {
    /// alpha_k = 1 / (lambda (k + 2)).
    Harmonic,
    Constant(f64),
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSchedule {
    pub kind: ScheduleKind,
    pub lambda: f64,
}

impl StepSchedule {
    pub fn harmonic(lambda: f64) -> Self {
        Self { kind: ScheduleKind::Harmonic, lambda }
    }

    pub fn alpha(&self, k: usize) -> Result<f64> {
        let a = match &self.kind {
            ScheduleKind::Harmonic => 1.0 / (self.lambda * (k + 2) as f64),
            ScheduleKind::Constant(a) => *a,
            ScheduleKind::Custom(list) => match list.get(k) {
                Some(a) => *a,
                None => return param(format!("custom schedule has no step {k}")),
            },
        };
        Ok(a)
    }

    pub fn is_harmonic(&self) -> bool {
        self.kind == ScheduleKind::Harmonic
    }
}

/// L = C_max T |A|.
pub fn lipschitz_const(model: &BeliefMdp) -> f64 {
    model.c_max() * model.horizon() as f64 * model.n_actions() as f64
}

fn step_from_values(model: &BeliefMdp, pi: &Policy, values: &[f64], reg: RegConfig, alpha: f64) -> Policy {
    let mut next = pi.clone();
    let shrink = 1.0 - alpha * reg.lambda;
    for i in 0..model.len() {
        let q = q_values(model, values, i);
        let v: Vec<f64> = pi.row(i).iter().zip(&q).map(|(p, q)| shrink * p - alpha * q).collect();
        next.row_mut(i).copy_from_slice(&project_simplex(&v));
    }
    next
}

/// pi_{k+1}(h) = argmin_p { alpha T^p V^{pi_k}(h) + (1 - alpha lambda) ||p - pi_k(h)||^2 / 2 }
/// at every history, computed as a simplex projection.
pub fn utrpo_step(model: &BeliefMdp, pi: &Policy, reg: RegConfig, alpha: f64) -> Result<Policy> {
    check_step(reg, alpha)?;
    let v = evaluate(model, pi, reg);
    Ok(step_from_values(model, pi, &v, reg, alpha))
}

fn check_step(reg: RegConfig, alpha: f64) -> Result<()> {
    let al = alpha * reg.lambda;
    if !(alpha > 0.0 && al > 0.0 && al < 1.0) {
        return param(format!("step needs 0 < alpha * lambda < 1, got alpha={alpha}, lambda={}", reg.lambda));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct IterateTrace {
    pub policies: Vec<Policy>,
    pub losses: Vec<f64>,
    /// alpha_k used to produce policies[k + 1].
    pub alphas: Vec<f64>,
    pub schedule: StepSchedule,
}

/// K steps of uniform trust-region policy optimization from `pi0`
/// (uniform if `None`).
pub fn utrpo_run(
    model: &BeliefMdp,
    reg: RegConfig,
    schedule: &StepSchedule,
    k_steps: usize,
    pi0: Option<Policy>,
) -> Result<IterateTrace> {
    let mut pi = pi0.unwrap_or_else(|| Policy::uniform(model.space()));
    let mut v = evaluate(model, &pi, reg);
    let mut trace = IterateTrace {
        policies: vec![pi.clone()],
        losses: vec![root_loss(model, &v)],
        alphas: Vec::with_capacity(k_steps),
        schedule: schedule.clone(),
    };
    for k in 0..k_steps {
        let alpha = schedule.alpha(k)?;
        check_step(reg, alpha)?;
        pi = step_from_values(model, &pi, &v, reg, alpha);
        v = evaluate(model, &pi, reg);
        trace.policies.push(pi.clone());
        trace.losses.push(root_loss(model, &v));
        trace.alphas.push(alpha);
    }
    Ok(trace)
}

/// Largest increase between consecutive losses (negative when strictly decreasing).
pub fn max_loss_increase(trace: &IterateTrace) -> f64 {
    trace.losses.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone)]
pub struct FundamentalReport {
    /// Minimum over histories of RHS - LHS with the step term alpha^2 L^2 / (2 (1 - alpha lambda)), per k.
    pub per_k: Vec<f64>,
    /// Same with the step term alpha^2 L^2 / 2.
    pub per_k_plain: Vec<f64>,
    pub min_residual: f64,
    pub min_residual_plain: f64,
    pub lipschitz: f64,
    pub pass: bool,
}

/// Residuals of the one-step inequality
/// alpha (V^{pi_k} - T^pi V^{pi_k}) <= (1 - alpha lambda)/2 ||pi - pi_k||^2 - 1/2 ||pi - pi_{k+1}||^2
///   + lambda alpha / 2 (||pi_k||^2 - ||pi_{k+1}||^2) + step term,
/// at every history, for one reference policy `pi`.
pub fn fundamental_residuals(
    model: &BeliefMdp,
    reg: RegConfig,
    alpha: f64,
    pi_k: &Policy,
    pi_next: &Policy,
    reference: &Policy,
) -> (Vec<f64>, Vec<f64>) {
    let l = lipschitz_const(model);
    let al = alpha * reg.lambda;
    let step_plain = alpha * alpha * l * l / 2.0;
    let step = step_plain / (1.0 - al);
    let v = evaluate(model, pi_k, reg);
    let mut res = Vec::with_capacity(model.len());
    let mut res_plain = Vec::with_capacity(model.len());
    for i in 0..model.len() {
        let q = q_values(model, &v, i);
        let (p, pk, pn) = (reference.row(i), pi_k.row(i), pi_next.row(i));
        let t_pi: f64 = p.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() + reg.penalty(p);
        let lhs = alpha * (v[i] - t_pi);
        let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let base = (1.0 - al) / 2.0 * d(p, pk) - 0.5 * d(p, pn)
            + al * (half_sq_norm(pk) - half_sq_norm(pn));
        res.push(base + step - lhs);
        res_plain.push(base + step_plain - lhs);
    }
    (res, res_plain)
}

/// Checks the inequality for every step of `trace` up to `k_max` (all steps
/// if `None`). PASS iff the minimum residual is at least -1e-8.
pub fn check_fundamental(
    trace: &IterateTrace,
    reference: &Policy,
    model: &BeliefMdp,
    reg: RegConfig,
    k_max: Option<usize>,
) -> FundamentalReport {
    let steps = trace.alphas.len().min(k_max.unwrap_or(usize::MAX));
    let mut per_k = Vec::with_capacity(steps);
    let mut per_k_plain = Vec::with_capacity(steps);
    for k in 0..steps {
        let (r, rp) = fundamental_residuals(
            model,
            reg,
            trace.alphas[k],
            &trace.policies[k],
            &trace.policies[k + 1],
            reference,
        );
        per_k.push(r.into_iter().fold(f64::INFINITY, f64::min));
        per_k_plain.push(rp.into_iter().fold(f64::INFINITY, f64::min));
    }
    let min_residual = per_k.iter().cloned().fold(f64::INFINITY, f64::min);
    let min_residual_plain = per_k_plain.iter().cloned().fold(f64::INFINITY, f64::min);
    FundamentalReport {
        per_k,
        per_k_plain,
        min_residual,
        min_residual_plain,
        lipschitz: lipschitz_const(model),
        pass: !(min_residual < -1e-8),
    }
}

#[derive(Debug, Clone)]
pub struct RateReport {
    /// (k, (loss_k - exact) lambda k / ln k) for k >= 2.
    pub ratios: Vec<(usize, f64)>,
    pub max_ratio: f64,
    /// lambda^2 B + C_max^2 T^3 with B = (T + 1) / 2.
    pub constant: f64,
    pub b_const: f64,
    pub pass: bool,
}

impl RateReport {
    /// The implied bound on loss_k - exact at step k.
    pub fn bound_at(&self, k: usize, lambda: f64) -> f64 {
        self.constant * (k as f64).ln() / (lambda * k as f64)
    }
}

/// Fits the trace against (lambda^2 B + C_max^2 T^3) ln k / (lambda k).
/// Only meaningful for the harmonic schedule; other schedules are refused.
pub fn check_rate(trace: &IterateTrace, exact_loss: f64, reg: RegConfig, model: &BeliefMdp) -> Result<RateReport> {
    if !trace.schedule.is_harmonic() {
        return Err(Error::Parameter("rate check requires the harmonic step schedule".into()));
    }
    if reg.lambda <= 0.0 {
        return param("rate check requires lambda > 0");
    }
    let t = model.horizon() as f64;
    let b_const = (t + 1.0) / 2.0;
    let constant = reg.lambda * reg.lambda * b_const + model.c_max().powi(2) * t.powi(3);
    let ratios: Vec<(usize, f64)> = (2..trace.losses.len())
        .map(|k| (k, (trace.losses[k] - exact_loss) * reg.lambda * k as f64 / (k as f64).ln()))
        .collect();
    let max_ratio = ratios.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(RateReport { ratios, max_ratio, constant, b_const, pass: !(max_ratio > constant) })
}

#[derive(Debug, Clone)]
pub struct GrowthReport {
    /// lambda / 2 * sum_h visit^{pi_0}(h) ||pi_0(h) - pi*(h)||^2.
    pub lhs: f64,
    /// L(pi_0) - L(pi*), both regularized.
    pub rhs: f64,
    pub pass: bool,
}

/// Quadratic growth of the regularized loss around its minimizer, with
/// pi* = solve_exact.
pub fn check_quadratic_growth(pi0: &Policy, model: &BeliefMdp, reg: RegConfig) -> Result<GrowthReport> {
    if reg.lambda <= 0.0 {
        return param("quadratic growth needs lambda > 0");
    }
    let (opt, v) = solve_exact(model, reg);
    Ok(growth_against(pi0, &opt, root_loss(model, &v), model, reg))
}

pub(crate) fn growth_against(pi0: &Policy, opt: &Policy, opt_loss: f64, model: &BeliefMdp, reg: RegConfig) -> GrowthReport {
    let visits = visitation(model, pi0);
    let lhs = reg.lambda / 2.0 * weighted_sq_distance(&visits, pi0, opt);
    let rhs = loss(model, pi0, reg) - opt_loss;
    GrowthReport { lhs, rhs, pass: lhs <= rhs + 1e-9 }
}

/// sum_h w(h) ||a(h) - b(h)||^2.
pub fn weighted_sq_distance(w: &[f64], a: &Policy, b: &Policy) -> f64 {
    w.iter()
        .enumerate()
        .map(|(i, wi)| wi * a.row(i).iter().zip(b.row(i)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
        .sum()
}

/// sum_h w(h) ||a(h) - b(h)||.
pub fn weighted_distance(w: &[f64], a: &Policy, b: &Policy) -> f64 {
    w.iter()
        .enumerate()
        .map(|(i, wi)| wi * a.row(i).iter().zip(b.row(i)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_examples() {
        assert_eq!(project_simplex(&[0.3, 0.7]), vec![0.3, 0.7]);
        assert_eq!(project_simplex(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = project_simplex(&[-0.25, 0.25]);
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
        assert_eq!(project_simplex(&[5.0, -1.0, 0.2]), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn schedule_values() {
        let s = StepSchedule::harmonic(2.0);
        assert_eq!(s.alpha(0).unwrap(), 0.25);
        assert_eq!(s.alpha(2).unwrap(), 0.125);
        let c = StepSchedule { kind: ScheduleKind::Custom(vec![0.1]), lambda: 1.0 };
        assert!(c.alpha(1).is_err());
    }
}
