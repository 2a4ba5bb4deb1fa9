mod common;

use peerpred::mechanism::{solve_equilibrium_predictions, welfare_metrics};
use peerpred::signals::random_snife_prior;
use peerpred::strategy::{permutation_profile, truth_telling_profile, FixedProfile, TruthTelling};
use peerpred::suite::{one_deviant_list, random_profile, sample_signal_strategy};
use peerpred::theorems::{
    far_from_permutation_gap, impossibility_cycle, main_lemma_audit, n_epsilon_audit, n_epsilon_deviation,
    symmetric_fixed_points, welfare_comparison, DynamicsOutcome,
};
use peerpred::{Config, Error, Matrix, PermutationMap, Prior, ScoringRule, Theta};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn prior(seed: u64, m: usize) -> Prior {
    random_snife_prior::<f64>(m, 2, seed).unwrap().to_pairwise().unwrap()
}

#[test]
fn lemma_equality_cases() {
    let p = prior(3, 3);
    let cfg = Config::new(1.0, 1.0 / 24.0, ScoringRule::Log).unwrap();
    let truth = main_lemma_audit(&cfg, &p, &truth_telling_profile(&p, 5).unwrap()).unwrap();
    assert_eq!(truth.lhs, truth.rhs);
    for pi in PermutationMap::all(3) {
        let r = main_lemma_audit(&cfg, &p, &permutation_profile(&p, 5, &pi).unwrap()).unwrap();
        assert!(r.slack.abs() <= 1e-12);
        assert!((r.lhs - truth.lhs).abs() <= 1e-12);
        assert!(r.passed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn lemma_on_solved_profiles(seed in 0u64..10_000, m in 2usize..4, n in 4usize..7, symmetric in any::<bool>()) {
        let p = prior(seed, m);
        let cfg = Config::new(1.0, 1.0 / (8.0 * m as f64), ScoringRule::Log).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let thetas: Vec<Theta> = if symmetric {
            vec![sample_signal_strategy(&mut rng, m); n]
        } else {
            (0..n).map(|_| sample_signal_strategy(&mut rng, m)).collect()
        };
        let s = solve_equilibrium_predictions(&cfg, &p, &thetas).unwrap().profile;
        let r = main_lemma_audit(&cfg, &p, &s).unwrap();
        prop_assert!(r.slack >= -1e-10);
        prop_assert!(r.passed);
    }
}

#[test]
fn n_epsilon_cases() {
    let p = prior(1, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let same = vec![sample_signal_strategy(&mut rng, 2); 600];
    assert_eq!(n_epsilon_deviation(&p, &same).unwrap(), 0.0);
    let random: Vec<Theta> = (0..600).map(|_| sample_signal_strategy(&mut rng, 2)).collect();
    let r = n_epsilon_audit(&p, &random, 0.5).unwrap();
    assert!(r.passed && r.lhs < 0.5);
    match n_epsilon_audit(&p, &random[..500], 0.5) {
        Err(Error::Precondition(msg)) => assert!(msg.contains("512")),
        other => panic!("{other:?}"),
    }
    // Doubling n roughly halves the one-deviant deviation.
    let d1 = n_epsilon_deviation(&p, &one_deviant_list(2, 1000)).unwrap();
    let d2 = n_epsilon_deviation(&p, &one_deviant_list(2, 2000)).unwrap();
    assert!((d1 / d2 - 2.0).abs() < 0.2, "{}", d1 / d2);
}

#[test]
fn gap_lemma_sweep() {
    for seed in 0..10 {
        let m = 2;
        let p = prior(seed, m);
        let tau = 1.0 / (2.0 * m as f64);
        for delta in [0.2, 0.1, 0.01, 0.001] {
            let a = tau + delta;
            let theta = Theta::new(Matrix::from_rows(vec![vec![1.0 - a, a], vec![a, 1.0 - a]]).unwrap()).unwrap();
            let r = far_from_permutation_gap(&p, &theta, tau).unwrap();
            assert!(r.passed, "seed {seed} delta {delta}: {r:?}");
        }
        assert!(far_from_permutation_gap(&p, &Theta::identity(2), tau).is_err());
    }
}

#[test]
fn cycles() {
    let p = prior(4, 2);
    let swap = PermutationMap::new(vec![1, 0]).unwrap();
    let rows = impossibility_cycle(&p, &TruthTelling, 4, &swap).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.passed));
    // Truth's welfare on the relabeled prior equals the relabeled profile's.
    let truth = welfare_metrics(&p, &truth_telling_profile(&p, 4).unwrap()).unwrap().average_welfare;
    assert!((rows[0].lhs - truth).abs() <= 1e-12);

    let p3 = prior(5, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let fixed = FixedProfile(random_profile(&mut rng, 3, 4).unwrap());
    let rows = impossibility_cycle(&p3, &fixed, 4, &PermutationMap::cycle(3)).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.passed && r.slack.abs() <= 1e-12));
    assert!(matches!(impossibility_cycle(&p3, &fixed, 4, &PermutationMap::identity(3)), Err(Error::Precondition(_))));
}

#[test]
fn comparison_table() {
    let p = prior(7, 4);
    let cfg = Config::new(1.0, 1.0 / 32.0, ScoringRule::Log).unwrap();
    let rows = welfare_comparison(&cfg, &p, 4).unwrap();
    let truth = rows.iter().find(|r| r.name == "truth").unwrap();
    assert_eq!(truth.margin_to_truth, 0.0);
    assert!(truth.max_gap <= 1e-12);
    assert!(rows.windows(2).all(|w| w[0].classification >= w[1].classification));
    assert_eq!(rows[0].name, "counterexample");
    assert!(rows[0].margin_to_truth > 0.0);
    for r in rows.iter().filter(|r| r.name.starts_with("perm:")) {
        assert!(r.margin_to_truth.abs() <= 1e-12);
        assert_eq!(r.tau_close_level, 0.0);
    }
    for r in rows.iter().filter(|r| r.name.starts_with("constant:") || r.name == "uniform") {
        assert!(r.margin_to_truth < 0.0);
    }
    // Nothing except the counterexample beats truth by more than rounding.
    assert!(rows.iter().filter(|r| r.name != "counterexample").all(|r| r.margin_to_truth <= 1e-12));
}

#[test]
fn dynamics_from_truth_stay_put() {
    let p = prior(2, 3);
    let cfg = Config::new(1.0, 1.0 / 24.0, ScoringRule::Quadratic).unwrap();
    let fps = symmetric_fixed_points(&cfg, &p, 4).unwrap();
    assert_eq!(fps.len(), 27);
    let identity = fps.iter().find(|f| f.start == vec![0, 1, 2]).unwrap();
    assert_eq!(identity.outcome, DynamicsOutcome::Fixed);
    assert_eq!(identity.map, vec![0, 1, 2]);
    assert_eq!(identity.iterations, 1);
}
