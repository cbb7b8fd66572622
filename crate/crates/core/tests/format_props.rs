mod common;

use brl_core::format::{prior_from_str, prior_to_string, read_prior, write_prior};
use brl_core::mdp::{CostSet, Prior};
use common::*;
use proptest::prelude::*;

fn assert_same(a: &Prior, b: &Prior) {
    assert_eq!(a.len(), b.len());
    assert_eq!(a.costs(), b.costs());
    for (x, y) in a.weights().iter().zip(b.weights()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    assert_eq!(a.ids(), b.ids());
    for i in 0..a.len() {
        assert_eq!(a.member(i), b.member(i));
        for s in 0..a.n_states() {
            for act in 0..a.n_actions() {
                let (ra, rb) = (a.member(i).joint_row(s, act), b.member(i).joint_row(s, act));
                assert!(ra.iter().zip(&rb).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn text_round_trip_is_bit_exact(seed in 0u64..100_000, members in 1usize..4, joint in any::<bool>()) {
        let mut r = rng(seed);
        let prior = if joint {
            let costs = CostSet::new(vec![0.0, 0.25, 1.0], 1.0).unwrap();
            let ms = (0..members).map(|_| random_joint_member(&mut r, 2, 2, &costs, 2)).collect();
            Prior::uniform(ms, costs).unwrap()
        } else {
            random_prior(&mut r, 3, 2, members, 2, 0.5)
        };
        let text = prior_to_string(&prior).unwrap();
        let back = prior_from_str(&text).unwrap();
        assert_same(&prior, &back);
        prop_assert_eq!(prior_to_string(&back).unwrap(), text);
    }

    #[test]
    fn sampling_is_a_function_of_the_seed(seed in any::<u64>(), n in 1usize..40) {
        let prior = random_prior(&mut rng(5), 2, 2, 4, 2, 0.5);
        let a = prior.sample_indices(n, seed);
        prop_assert_eq!(&a, &prior.sample_indices(n, seed));
        prop_assert!(a.iter().all(|&i| i < 4));
        let e = prior.sample_empirical(n, seed).unwrap();
        prop_assert_eq!(e.len(), n);
        let ids: Vec<usize> = a.iter().map(|&i| prior.ids()[i]).collect();
        prop_assert_eq!(e.ids(), &ids[..]);
    }

    #[test]
    fn likelihood_ratio_constant_is_symmetric_and_at_least_one(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let a = random_prior(&mut r, 2, 2, 1, 2, 0.0).smoothed(0.4).unwrap();
        let b = random_prior(&mut r, 2, 2, 1, 2, 0.0).smoothed(0.4).unwrap();
        let ab = a.union(&b).unwrap().q_ratio();
        let ba = b.union(&a).unwrap().q_ratio();
        prop_assert!(ab >= 1.0 && ab.is_finite());
        prop_assert_eq!(ab, ba);
    }
}

#[test]
fn file_round_trip() {
    let prior = random_prior(&mut rng(1), 2, 2, 3, 2, 0.5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("prior.toml");
    write_prior(&prior, &path).unwrap();
    assert_same(&prior, &read_prior(&path).unwrap());
}

#[test]
fn uniform_member_frequencies_follow_the_weights() {
    let prior = random_prior(&mut rng(2), 2, 2, 4, 2, 0.5);
    let uniform = prior.subset(&[0, 1, 2, 3]);
    let idx = uniform.sample_indices(10_000, 7);
    for m in 0..4 {
        let f = idx.iter().filter(|&&i| i == m).count() as f64 / 10_000.0;
        assert!((0.225..=0.275).contains(&f), "member {m}: {f}");
    }
}
