mod common;

use brl_core::bayes::{evaluate, RegConfig};
use brl_core::history::{likelihood, posteriors, step_kernel, visitation};
use brl_core::{BeliefMdp, HistorySpace, Policy};
use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn incremental_posterior_matches_direct_bayes(seed in 0u64..10_000, members in 1usize..4, t in 1usize..4) {
        let prior = random_prior(&mut rng(seed), 2, 2, members, 3, 0.4);
        let space = HistorySpace::enumerate(&prior, t).unwrap();
        let post = posteriors(&space, &prior).unwrap();
        for i in 0..space.len() {
            let direct = direct_posterior(&prior, &space, i);
            for (a, b) in post.of(i).iter().zip(&direct) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            let sum: f64 = post.of(i).iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-10);
        }
        for (a, b) in post.of(0).iter().zip(prior.weights()) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn posterior_ignores_the_policy(seed in 0u64..10_000) {
        // Bayes rule with the policy factors included, for three random policies.
        let prior = random_prior(&mut rng(seed), 2, 2, 3, 3, 0.4);
        let space = HistorySpace::enumerate(&prior, 2).unwrap();
        let post = posteriors(&space, &prior).unwrap();
        for k in 0..3 {
            let pi = random_policy(&space, seed * 3 + k);
            for i in 0..space.len() {
                let h = space.history(i);
                let mut node = i;
                let mut factor = 1.0;
                while let Some(p) = space.node(node).parent {
                    factor *= pi.row(p)[space.node(node).action];
                    node = p;
                }
                let w: Vec<f64> = prior.members().iter().zip(prior.weights())
                    .map(|(m, w)| w * likelihood(&h, m) * factor).collect();
                let z: f64 = w.iter().sum();
                for (a, b) in post.of(i).iter().zip(&w) {
                    prop_assert!((a - b / z).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn step_kernels_and_visitation_are_normalized(seed in 0u64..10_000, t in 1usize..4) {
        let prior = random_prior(&mut rng(seed), 2, 2, 2, 3, 0.5);
        let model = BeliefMdp::build(&prior, t).unwrap();
        let space = model.space();
        let post = posteriors(space, &prior).unwrap();
        for i in 0..space.len() {
            if space.node(i).t < t {
                for a in 0..2 {
                    let k = step_kernel(space, &post, &prior, i, a);
                    prop_assert!((k.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
                    let on_edges: f64 = model.transitions(i, a).map(|(p, _)| p).sum();
                    prop_assert!((on_edges - 1.0).abs() <= 1e-10);
                }
            }
        }
        let v = visitation(&model, &random_policy(space, seed));
        for d in 0..=t {
            let mass: f64 = v[space.depth(d)].iter().sum();
            prop_assert!((mass - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn expected_future_visits_count_remaining_steps(seed in 0u64..10_000, t in 1usize..4) {
        // With every immediate cost set to one, V^pi(h_t) counts the
        // histories visited from h_t onward: T - t + 1.
        let prior = random_prior(&mut rng(seed), 2, 2, 2, 3, 0.5);
        let model = BeliefMdp::build(&prior, t).unwrap();
        let space = model.space();
        let pi = random_policy(space, seed + 1);
        let mut v = vec![0.0; space.len()];
        for i in (0..space.len()).rev() {
            let mut x = 1.0;
            for (a, pa) in pi.row(i).iter().enumerate() {
                x += pa * model.transitions(i, a).map(|(p, c)| p * v[c]).sum::<f64>();
            }
            v[i] = x;
        }
        for i in 0..space.len() {
            prop_assert!((v[i] - (t - space.node(i).t + 1) as f64).abs() <= 1e-9);
        }
    }

    #[test]
    fn children_are_one_step_deeper_and_ordered(seed in 0u64..10_000) {
        let prior = random_prior(&mut rng(seed), 3, 2, 2, 3, 0.5);
        let space = HistorySpace::enumerate(&prior, 3).unwrap();
        for i in 0..space.len() {
            let mut last = None;
            for a in 0..2 {
                for e in space.children(i, a) {
                    prop_assert_eq!(space.node(e.child).t, space.node(i).t + 1);
                    prop_assert!(e.child > i);
                    let key = (a, e.cost, e.state);
                    prop_assert!(last.map_or(true, |l| l < key));
                    last = Some(key);
                }
            }
        }
    }

    #[test]
    fn transferred_policy_evaluates_identically_on_shared_histories(seed in 0u64..10_000) {
        let prior = random_prior(&mut rng(seed), 2, 2, 3, 3, 0.6);
        let sample = prior.subset(&[0]);
        let small = BeliefMdp::build(&sample, 2).unwrap();
        let big_space = std::sync::Arc::new(HistorySpace::enumerate(&prior.union(&sample).unwrap(), 2).unwrap());
        let big = BeliefMdp::on_space(big_space.clone(), &sample).unwrap();
        let pi = random_policy(small.space(), seed);
        let moved = pi.transfer(small.space(), &big_space);
        let reg = RegConfig::new(0.4).unwrap();
        let (va, vb) = (evaluate(&small, &pi, reg), evaluate(&big, &moved, reg));
        for (i, m) in small.space().map_onto(&big_space).into_iter().enumerate() {
            let j = m.unwrap();
            prop_assert!((va[i] - vb[j]).abs() <= 1e-12);
        }
    }
}

#[test]
fn uniform_policy_rows_are_distributions() {
    let prior = random_prior(&mut rng(3), 2, 3, 2, 2, 0.5);
    let space = HistorySpace::enumerate(&prior, 2).unwrap();
    let pi = Policy::uniform(&space);
    assert!(Policy::from_rows(3, pi.as_slice().to_vec()).is_ok());
    assert!(Policy::from_rows(3, vec![0.5, 0.5, 0.5]).is_err());
}
