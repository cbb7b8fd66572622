use std::sync::Arc;

use brl_core::bayes::{bayes_optimal_loss, RegConfig};
use brl_core::bounds::{finite_family_bound, naive_bound, BoundInputs};
use brl_core::envgen::{
    lower_bound_experiment, lower_bound_family, random_prior, restricted_difference_family, trace_history,
    LowerBoundParams, RandomShape, DEFAULT_MEMBER_CAP,
};
use brl_core::history::posteriors;
use brl_core::mdp::{validate, CostSet};
use brl_core::stability::{estimate_d, StabilityLab};
use brl_core::{BeliefMdp, HistorySpace, Policy};

#[test]
fn lower_bound_members_are_valid() {
    for t in 1..=4 {
        let params = LowerBoundParams::random_labels(t, 0.1, t as u64).unwrap();
        let family = lower_bound_family(&params, DEFAULT_MEMBER_CAP).unwrap();
        assert_eq!(family.len(), 1 << t);
        assert_eq!(family.n_states(), 2 * t + 1);
        for m in family.members() {
            validate(m, family.costs()).unwrap();
        }
    }
}

#[test]
fn bayes_optimal_loss_is_at_most_eps_prime() {
    for t in 1..=4 {
        for seed in 0..3 {
            let params = LowerBoundParams::random_labels(t, 0.1, seed).unwrap();
            let model = BeliefMdp::build(&lower_bound_family(&params, DEFAULT_MEMBER_CAP).unwrap(), t).unwrap();
            let l = bayes_optimal_loss(&model);
            assert!(l <= 0.1 + 1e-12, "T={t} seed={seed}: {l}");
        }
    }
}

#[test]
fn noiseless_trace_points_at_its_identifier() {
    let t = 3;
    let params = LowerBoundParams::random_labels(t, 0.5, 2).unwrap();
    let family = lower_bound_family(&params, DEFAULT_MEMBER_CAP).unwrap();
    let space = HistorySpace::enumerate(&family, t).unwrap();
    let post = posteriors(&space, &family).unwrap();
    for x in 0..8 {
        let node = space.find(&trace_history(x, t, &[1, 0, 1])).unwrap();
        let w = post.of(node);
        let argmax = (0..w.len()).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
        assert_eq!(argmax, x);
    }
}

#[test]
fn regret_vanishes_once_every_identifier_is_seen() {
    for (t, n) in [(2, 100), (3, 200), (4, 400)] {
        for seed in 0..5 {
            let params = LowerBoundParams::random_labels(t, 0.1, seed).unwrap();
            let run = lower_bound_experiment(&params, n, seed).unwrap();
            assert_eq!(run.unseen_fraction, 0.0);
            assert!(run.regret <= 0.2, "T={t} seed={seed}: {}", run.regret);
        }
    }
}

#[test]
fn adversarial_labels_force_the_lower_bound() {
    let t = 4;
    let mut holds = 0;
    for seed in 0..100 {
        let params = LowerBoundParams::random_labels(t, 0.1, seed).unwrap();
        let run = lower_bound_experiment(&params, 16, seed).unwrap();
        assert!((run.expression - (0.5 * run.unseen_fraction - 0.1 * (1.0 + 0.5 * run.unseen_fraction))).abs() < 1e-15);
        holds += run.holds as usize;
    }
    assert!(holds >= 95, "{holds} of 100");
}

#[test]
fn naive_bound_is_vacuous_where_the_finite_bound_is_not() {
    let params = LowerBoundParams::random_labels(4, 0.1, 0).unwrap();
    let run = lower_bound_experiment(&params, 16, 0).unwrap();
    let inp = BoundInputs {
        d_const: 1.0,
        q_const: 1.0,
        c_max: 1.0,
        horizon: 4.0,
        n_actions: 2.0,
        lambda: 1.0,
        n_samples: 16.0,
        delta_conf: 0.1,
        p_min: 1.0 / 16.0,
        b_loss: 4.0,
    };
    assert!(naive_bound(&inp, run.history_count as f64) > 4.0);
    assert!(finite_family_bound(&inp).is_finite());
}

#[test]
fn lower_bound_experiment_is_deterministic() {
    let params = LowerBoundParams::random_labels(3, 0.2, 4).unwrap();
    assert_eq!(lower_bound_experiment(&params, 8, 11).unwrap(), lower_bound_experiment(&params, 8, 11).unwrap());
    assert!(lower_bound_experiment(&params, 0, 11).is_err());
}

fn base_member(seed: u64) -> brl_core::TabularMdp {
    let shape = RandomShape { n_states: 2, n_actions: 2, costs: CostSet::binary(), horizon: 3, members: 1 };
    random_prior(&shape, 1.0, seed).unwrap().member(0).clone()
}

#[test]
fn single_variant_family_has_unit_visitation_constant() {
    let fam = restricted_difference_family(&base_member(1), &CostSet::binary(), 1, 1, 0.3, 2).unwrap();
    assert_eq!(fam.len(), 1);
    let space = Arc::new(HistorySpace::enumerate(&fam, 3).unwrap());
    let d = estimate_d(&space, &fam, &[Policy::uniform(&space)]).unwrap();
    assert_eq!(d.d, 1.0);
}

#[test]
fn gated_variants_report_a_finite_visitation_constant() {
    let fam = restricted_difference_family(&base_member(3), &CostSet::binary(), 1, 2, 0.3, 4).unwrap();
    for m in fam.members() {
        validate(m, fam.costs()).unwrap();
    }
    let smoothed = fam.smoothed(0.2).unwrap();
    let lab = StabilityLab::new(&smoothed, RegConfig::new(1.0).unwrap(), 2).unwrap();
    let rep = lab.check(0).unwrap();
    assert!(rep.d_est.d >= 1.0 && rep.d_est.d.is_finite());
    assert!(rep.d_est.d <= rep.d_est.cap * (1.0 + 1e-12));
}

#[test]
fn random_priors_are_reproducible_and_valid() {
    let shape = RandomShape { n_states: 3, n_actions: 2, costs: CostSet::binary(), horizon: 2, members: 4 };
    let a = random_prior(&shape, 0.5, 77).unwrap();
    let b = random_prior(&shape, 0.5, 77).unwrap();
    let c = random_prior(&shape, 0.5, 78).unwrap();
    for i in 0..4 {
        assert_eq!(a.member(i), b.member(i));
        validate(a.member(i), a.costs()).unwrap();
    }
    assert!((0..4).any(|i| a.member(i) != c.member(i)));
    assert_eq!(a.weights(), &[0.25; 4]);
    let single = random_prior(&RandomShape { members: 1, ..shape }, 0.5, 1).unwrap();
    assert_eq!(single.len(), 1);
}
