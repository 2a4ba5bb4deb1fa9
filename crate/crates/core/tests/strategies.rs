mod common;

use common::*;
use peerpred::mechanism::welfare_metrics;
use peerpred::signals::{permute_prior, random_snife_prior};
use peerpred::strategy::{
    aggregate_strategies, candidate_profiles, counterexample_profile, matrix_classify, permutation_profile,
    permute_profile, tau_close_level, truth_telling_profile,
};
use peerpred::{Agent, Matrix, PermutationMap, PredictionTable, Profile, Theta};
use proptest::prelude::*;

fn profile(m: usize, n: usize) -> impl Strategy<Value = Profile> {
    prop::collection::vec((strategy_matrix(m), prop::collection::vec(simplex(m), m * m)), n).prop_map(move |agents| {
        Profile::new(
            agents
                .into_iter()
                .map(|(theta, preds)| Agent::new(theta, PredictionTable::from_fn(m, |s, r| preds[s * m + r].clone()).unwrap()).unwrap())
                .collect(),
        )
        .unwrap()
    })
}

/// Column-stochastic matrices that are often exactly pure: each column is
/// either a point mass or a random distribution.
fn mixed_or_pure(m: usize) -> impl Strategy<Value = Theta> {
    prop::collection::vec(prop_oneof![(0..m).prop_map(move |k| { let mut v = vec![0.0; m]; v[k] = 1.0; v }), simplex(m)], m)
        .prop_map(move |cols| Theta::new(Matrix::from_fn(m, m, |r, s| cols[s][r])).unwrap())
}

fn is_permutation_matrix(t: &Matrix<f64>) -> bool {
    let m = t.rows();
    let unit_rows = (0..m).all(|r| t.row(r).iter().filter(|&&x| x == 1.0).count() == 1);
    let unit_cols = (0..m).all(|c| t.column(c).iter().filter(|&&x| x == 1.0).count() == 1);
    let binary = t.as_slice().iter().all(|&x| x == 0.0 || x == 1.0);
    unit_rows && unit_cols && binary
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn chosen_agent_report_distribution((p, omega) in (2usize..5, 2usize..6).prop_flat_map(|(m, n)| (profile(m, n), simplex(m)))) {
        let m = p.m();
        let mut enumerated = vec![0.0; m];
        for agent in p.agents() {
            for s in 0..m {
                for r in 0..m {
                    enumerated[r] += omega[s] * agent.theta.prob(r, s) / p.n() as f64;
                }
            }
        }
        let got = aggregate_strategies(&p).report_distribution(&omega);
        prop_assert!(max_abs(&got, &enumerated) <= 1e-12);
    }

    #[test]
    fn leave_one_out_identity(p in (2usize..5, 2usize..6).prop_flat_map(|(m, n)| profile(m, n))) {
        let agg = aggregate_strategies(&p);
        let n = p.n() as f64;
        for (i, loo) in agg.leave_one_out.iter().enumerate() {
            let rebuilt = loo.scale((n - 1.0) / n).add(&p.agent(i).theta.scale(1.0 / n));
            prop_assert!(rebuilt.max_abs_diff(&agg.mean) <= 1e-14);
        }
    }

    #[test]
    fn permutation_classification(theta in (2usize..5).prop_flat_map(mixed_or_pure)) {
        let class = matrix_classify(&theta, 0.5, 0.0);
        prop_assert_eq!(class.is_permutation, is_permutation_matrix(&theta));
        let level = tau_close_level(&theta);
        prop_assert!(matrix_classify(&theta, level, 0.0).is_tau_close);
    }

    #[test]
    fn relabeled_profile_plays_identically(seed in 0u64..100, (p, pi) in (2usize..5).prop_flat_map(|m| (profile(m, 4), permutation(m)))) {
        let prior = random_snife_prior::<f64>(p.m(), 2, seed).unwrap().to_pairwise().unwrap();
        let moved = permute_profile(&p, &pi).unwrap();
        let w = welfare_metrics(&prior, &p).unwrap();
        let w2 = welfare_metrics(&permute_prior(&prior, &pi.inverse()).unwrap(), &moved).unwrap();
        prop_assert!(w.max_abs_diff(&w2) <= 1e-12);
    }
}

#[test]
fn appendix_tau_level() {
    let t = Matrix::from_rows(vec![vec![0.3, 0.6, 0.0], vec![0.7, 0.4, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
    assert_eq!(tau_close_level(&t), 0.4);
    let s = Theta::new(t).unwrap();
    assert!(!matrix_classify(&s, 0.35, 0.0).is_tau_close);
    assert!(matrix_classify(&s, 0.4, 0.0).is_tau_close);
    assert!(matrix_classify(&s, 0.65, 0.0).is_tau_close);
    assert!(!matrix_classify(&s, 0.4, 0.0).is_permutation);
}

#[test]
fn order_two_relabeling_is_an_involution() {
    let prior = random_snife_prior::<f64>(3, 2, 9).unwrap().to_pairwise().unwrap();
    let p = truth_telling_profile(&prior, 3).unwrap();
    let swap = PermutationMap::new(vec![1, 0, 2]).unwrap();
    assert_eq!(permute_profile(&permute_profile(&p, &swap).unwrap(), &swap).unwrap(), p);
    assert_eq!(permute_profile(&p, &PermutationMap::identity(3)).unwrap(), p);
}

#[test]
fn truth_report_distribution_is_marginal() {
    let prior = random_snife_prior::<f64>(3, 2, 4).unwrap().to_pairwise().unwrap();
    let agg = aggregate_strategies(&truth_telling_profile(&prior, 5).unwrap());
    assert_eq!(agg.report_distribution(prior.marginal()), prior.marginal().to_vec());
}

#[test]
fn permutation_profile_predicts_relabeled_columns() {
    let prior = random_snife_prior::<f64>(3, 2, 2).unwrap().to_pairwise().unwrap();
    let pi = PermutationMap::cycle(3);
    let p = permutation_profile(&prior, 4, &pi).unwrap();
    for s in 0..3 {
        let want = pi.matrix::<f64>().mul_vec(&prior.column(s));
        assert_eq!(p.agent(2).prediction(s, pi.apply(s)), want.as_slice());
        assert_eq!(p.agent(2).theta.prob(pi.apply(s), s), 1.0);
    }
}

#[test]
fn candidate_set() {
    let prior = random_snife_prior::<f64>(3, 2, 1).unwrap().to_pairwise().unwrap();
    let names: Vec<String> = candidate_profiles(&prior, 3).unwrap().into_iter().map(|(k, _)| k).collect();
    assert_eq!(names.len(), 1 + 5 + 3 + 1 + 1);
    assert_eq!(names[0], "truth");
    assert!(names.contains(&"counterexample".to_string()));
    assert!(names.contains(&"perm:1-2-0".to_string()));
    assert!(!candidate_profiles(&prior, 4).unwrap().iter().any(|(k, _)| k == "counterexample"));
    assert!(counterexample_profile::<f64>(3, 4).is_err());
}

#[test]
fn profile_validation() {
    assert!(Profile::new(vec![]).is_err());
    assert!(Theta::new(Matrix::from_rows(vec![vec![0.5, 0.5], vec![0.6, 0.5]]).unwrap()).is_err());
    assert!(PredictionTable::from_fn(2, |_, _| vec![0.7, 0.7]).is_err());
}
