//! Closed-form generalization and stability bounds.

use crate::error::{param, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// Visitation-ratio constant D.
    pub d_const: f64,
    /// Likelihood-ratio constant q.
    pub q_const: f64,
    pub c_max: f64,
    /// Horizon T as it enters the formulas.
    pub horizon: f64,
    pub n_actions: f64,
    pub lambda: f64,
    pub n_samples: f64,
    /// Confidence parameter delta in (0, 1).
    pub delta_conf: f64,
    pub p_min: f64,
    /// Loss bound B, normally C_max T.
    pub b_loss: f64,
}

impl BoundInputs {
    pub fn check(&self) -> Result<()> {
        let pos = [
            ("d_const", self.d_const),
            ("q_const", self.q_const),
            ("c_max", self.c_max),
            ("horizon", self.horizon),
            ("n_actions", self.n_actions),
            ("lambda", self.lambda),
            ("n_samples", self.n_samples),
            ("p_min", self.p_min),
            ("b_loss", self.b_loss),
        ];
        for (name, v) in pos {
            if !(v > 0.0) {
                return param(format!("bound input {name} must be positive, got {v}"));
            }
        }
        if !(self.delta_conf > 0.0 && self.delta_conf < 1.0) {
            return param(format!("delta_conf must lie in (0, 1), got {}", self.delta_conf));
        }
        Ok(())
    }

    /// kappa = 2 D^2 C_max^2 T^2 |A|.
    pub fn kappa(&self) -> f64 {
        2.0 * self.d_const.powi(2) * self.c_max.powi(2) * self.horizon.powi(2) * self.n_actions
    }

    fn hoeffding(&self) -> f64 {
        ((1.0 / self.delta_conf).ln() / (2.0 * self.n_samples)).sqrt()
    }
}

/// sqrt(2 ln(2 |H| / delta) C_max^2 T^2 / N) with ln |H| = history_count ln |A|.
pub fn naive_bound(inp: &BoundInputs, history_count: f64) -> f64 {
    let log_h = history_count * inp.n_actions.ln();
    let log_term = 2f64.ln() + log_h - inp.delta_conf.ln();
    (2.0 * log_term * inp.c_max.powi(2) * inp.horizon.powi(2) / inp.n_samples).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityKind {
    Pointwise,
    Uniform,
}

/// Generalization bound from hypothesis stability beta.
/// Pointwise: sqrt((B^2 + 12 B N beta) / (2 N delta)).
/// Uniform: 2 beta + (4 N beta + B) sqrt(ln(1/delta) / (2N)).
pub fn hypothesis_stability_bound(inp: &BoundInputs, beta: f64, kind: StabilityKind) -> f64 {
    let (b, n, d) = (inp.b_loss, inp.n_samples, inp.delta_conf);
    match kind {
        StabilityKind::Pointwise => ((b * b + 12.0 * b * n * beta) / (2.0 * n * d)).sqrt(),
        StabilityKind::Uniform => 2.0 * beta + (4.0 * n * beta + b) * inp.hoeffding(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityBounds {
    pub visitation_bound: f64,
    pub finite_family_bound: f64,
    /// finite_family_bound with lambda = N^(-1/3).
    pub finite_family_rate: f64,
}

/// 2 lambda T + 2 kappa / (lambda N) + (4 kappa / lambda + 3 C_max T) sqrt(ln(1/delta) / (2N)).
pub fn visitation_bound(inp: &BoundInputs) -> f64 {
    let k = inp.kappa();
    let (l, t, n) = (inp.lambda, inp.horizon, inp.n_samples);
    2.0 * l * t + 2.0 * k / (l * n) + (4.0 * k / l + 3.0 * inp.c_max * t) * inp.hoeffding()
}

/// 2 lambda T + sqrt(C_max^2 T^2 / (2 N delta) + 48 C_max^3 T^3 |A| / (2 delta lambda N P_min)).
pub fn finite_family_bound(inp: &BoundInputs) -> f64 {
    let (c, t, n, d, l) = (inp.c_max, inp.horizon, inp.n_samples, inp.delta_conf, inp.lambda);
    2.0 * l * t
        + (c * c * t * t / (2.0 * n * d) + 48.0 * c.powi(3) * t.powi(3) * inp.n_actions / (2.0 * d * l * n * inp.p_min))
            .sqrt()
}

pub fn stability_bounds(inp: &BoundInputs) -> StabilityBounds {
    let rate = BoundInputs { lambda: inp.n_samples.powf(-1.0 / 3.0), ..*inp };
    StabilityBounds { visitation_bound: visitation_bound(inp), finite_family_bound: finite_family_bound(inp), finite_family_rate: finite_family_bound(&rate) }
}

/// Uniform stability constant kappa / (lambda N).
pub fn stability_constant(inp: &BoundInputs) -> f64 {
    inp.kappa() / (inp.lambda * inp.n_samples)
}

/// Visitation-weighted policy distance bound 2 D C_max T sqrt|A| / (lambda N).
pub fn distance_bound(inp: &BoundInputs) -> f64 {
    2.0 * inp.d_const * inp.c_max * inp.horizon * inp.n_actions.sqrt() / (inp.lambda * inp.n_samples)
}

/// Per-member stability on a finite prior, 4 C_max^2 T^2 |A| / (lambda N p) with
/// `weight` the member's probability p.
pub fn finite_member_bound(inp: &BoundInputs, weight: f64) -> f64 {
    4.0 * inp.c_max.powi(2) * inp.horizon.powi(2) * inp.n_actions / (inp.lambda * inp.n_samples * weight)
}
