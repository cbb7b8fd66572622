mod common;

use brl_core::bayes::{evaluate, RegConfig};
use brl_core::BeliefMdp;
use common::*;

#[test]
fn backward_induction_matches_dense_solve() {
    let mut r = rng(21);
    // (states, actions, members, member horizon, evaluation horizon); the last
    // shape crosses an episode reset.
    let shapes = [(2, 2, 2, 3, 3), (2, 2, 3, 3, 3), (3, 2, 2, 3, 3), (2, 3, 2, 2, 2), (2, 2, 2, 1, 3)];
    for (k, &(s_n, a_n, members, h, t)) in shapes.iter().enumerate() {
        let prior = random_prior(&mut r, s_n, a_n, members, h, 0.3);
        let model = BeliefMdp::build(&prior, t).unwrap();
        assert!(model.len() <= 2000, "{} nodes", model.len());
        for j in 0..10 {
            let pi = random_policy(model.space(), (k * 10 + j) as u64);
            let reg = RegConfig::new([0.0, 0.5][j % 2]).unwrap();
            let v = evaluate(&model, &pi, reg);
            let d = dense_values(&prior, model.space(), &pi, reg);
            let err = v.iter().zip(&d).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-9, "shape {k} policy {j}: max deviation {err}");
        }
    }
}
