mod common;

use common::*;
use num_rational::BigRational;
use peerpred::mechanism::{
    best_response, check_equilibrium, exact_zero_sum_total, expected_conditional_payoff, realized_payments,
    solve_equilibrium_predictions, solve_equilibrium_predictions_direct, welfare_metrics, zero_sum_scores,
    RoundMatching,
};
use peerpred::signals::{prior_constants, random_snife_prior};
use peerpred::strategy::{
    aggregate_strategies, permutation_profile, symmetrized_best_prediction, tau_close_level, truth_telling_profile,
};
use peerpred::theorems::{largest_divergence_loss, symmetric_fixed_points, DynamicsOutcome};
use peerpred::{Agent, Config, LatentPrior, PermutationMap, PredictionTable, Profile, Report, ScoringRule, Theta, Variant};
use proptest::prelude::*;

fn random_thetas(seed: u64, m: usize, n: usize) -> Vec<Theta> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| peerpred::suite::sample_signal_strategy(&mut rng, m)).collect()
}

/// Expected realized payment of agent `i` at private signal `si` when it
/// plays the pure report `own`, by enumerating other agents' signals and
/// reports and agent `i`'s own matching options.
fn enumerated_payment(
    cfg: &Config,
    latent: &LatentPrior,
    profile: &Profile,
    i: usize,
    si: usize,
    own: &Report<f64>,
) -> f64 {
    let n = profile.n();
    let m = latent.m();
    let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let peer_options: Vec<usize> = cfg.peer_set(n, i).unwrap();
    let base_matching = default_matching(cfg, n);
    let pair_options: Vec<(usize, usize)> = match cfg.variant {
        Variant::Truthful => vec![(usize::MAX, usize::MAX)],
        Variant::Disagreement => others
            .iter()
            .flat_map(|&j| others.iter().filter(move |&&k| k != j).map(move |&k| (j, k)))
            .collect(),
    };
    let q_i: f64 = latent.marginal()[si];
    let mut total = 0.0;
    let mut sig = vec![0usize; n - 1];
    loop {
        let mut signals = vec![si; n];
        for (k, &j) in others.iter().enumerate() {
            signals[j] = sig[k];
        }
        let w_sig = latent.joint_probability(&signals) / q_i;
        let mut rep = vec![0usize; n - 1];
        loop {
            let mut w = w_sig;
            for (k, &j) in others.iter().enumerate() {
                w *= profile.agent(j).theta.prob(rep[k], signals[j]);
            }
            if w > 0.0 {
                let mut reports: Vec<Report<f64>> = Vec::with_capacity(n);
                for j in 0..n {
                    if j == i {
                        reports.push(own.clone());
                    } else {
                        let r = rep[others.iter().position(|&x| x == j).unwrap()];
                        reports.push(Report { signal: r, prediction: profile.agent(j).prediction(signals[j], r).to_vec() });
                    }
                }
                let mut acc = 0.0;
                for &peer in &peer_options {
                    for &pair in &pair_options {
                        let mut mt = base_matching.clone();
                        mt.peers[i] = peer;
                        if cfg.variant == Variant::Disagreement {
                            mt.pairs[i] = pair;
                        }
                        acc += realized_payments(cfg, &reports, &mt).unwrap().total[i];
                    }
                }
                total += w * acc / (peer_options.len() * pair_options.len()) as f64;
            }
            if !next(&mut rep, m) {
                break;
            }
        }
        if !next(&mut sig, m) {
            break;
        }
    }
    total
}

fn default_matching(cfg: &Config, n: usize) -> RoundMatching {
    let peers = (0..n).map(|i| cfg.peer_set(n, i).unwrap()[0]).collect();
    let pairs = (0..n)
        .map(|i| {
            let o: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            (o[0], o[1])
        })
        .collect();
    RoundMatching { peers, pairs }
}

#[test]
fn expected_payoff_matches_enumerated_payments() {
    for (seed, m, n, rule) in [(1u64, 2, 3, ScoringRule::Log), (2, 3, 3, ScoringRule::Quadratic), (3, 2, 4, ScoringRule::Log)] {
        let latent = random_snife_prior::<f64>(m, 2, seed).unwrap();
        let prior = latent.to_pairwise().unwrap();
        let cfg = Config::new(1.0, 0.3, rule).unwrap();
        let profile = solve_equilibrium_predictions(&cfg, &prior, &random_thetas(seed, m, n)).unwrap().profile;
        for si in 0..m {
            for r in 0..m {
                let own = Report { signal: r, prediction: peerpred::suite::sample_simplex(&mut rand::SeedableRng::seed_from_u64(seed + r as u64), m) };
                let lib = expected_conditional_payoff(&cfg, &prior, &profile, 0, si, Some(&[(1.0, own.clone())])).unwrap();
                let brute = enumerated_payment(&cfg, &latent, &profile, 0, si, &own);
                assert!((lib - brute).abs() < 1e-12, "seed {seed} si {si} r {r}: {lib} vs {brute}");
            }
        }
    }
}

#[test]
fn disagreement_payoff_differences_match_enumeration() {
    let latent = random_snife_prior::<f64>(2, 2, 5).unwrap();
    let prior = latent.to_pairwise().unwrap();
    let cfg = Config::disagreement(1.0, 0.1, ScoringRule::Log).unwrap();
    let profile = solve_equilibrium_predictions(&cfg, &prior, &random_thetas(5, 2, 4)).unwrap().profile;
    for i in [0, 3] {
        for si in 0..2 {
            let a = Report { signal: 0, prediction: vec![0.3, 0.7] };
            let b = Report { signal: 1, prediction: vec![0.6, 0.4] };
            let lib = |r: &Report<f64>| expected_conditional_payoff(&cfg, &prior, &profile, i, si, Some(&[(1.0, r.clone())])).unwrap();
            let brute_diff = enumerated_payment(&cfg, &latent, &profile, i, si, &a) - enumerated_payment(&cfg, &latent, &profile, i, si, &b);
            assert!((lib(&a) - lib(&b) - brute_diff).abs() < 1e-12);
        }
    }
}

#[test]
fn disagreement_welfare_is_classification_score() {
    let cases: [(u64, usize, bool); 2] = [(11, 2, false), (12, 3, true)];
    for (seed, m, pure) in cases {
        let latent = random_snife_prior::<f64>(m, 2, seed).unwrap();
        let prior = latent.to_pairwise().unwrap();
        let cfg = Config::disagreement(1.0, 0.05, ScoringRule::Log).unwrap();
        let thetas = if pure {
            vec![Theta::pure(&[0, 0, 2]), Theta::identity(3), Theta::pure(&[1, 2, 0]), Theta::pure(&[2, 2, 1])]
        } else {
            random_thetas(seed, m, 4)
        };
        let profile = solve_equilibrium_predictions(&cfg, &prior, &thetas).unwrap().profile;
        let brute = full_product_welfare(&cfg, &latent, &profile);
        let w = welfare_metrics(&prior, &profile).unwrap();
        assert!((brute - w.average_welfare).abs() <= 1e-10, "{brute} vs {}", w.average_welfare);
        let lockstep = peerpred::suite::enumerated_disagreement_welfare(&cfg, &latent, &profile).unwrap();
        assert!((brute - lockstep).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn zero_sum_is_exact(pays in prop::collection::vec(-10.0f64..10.0, 4..10), split in 2usize..8) {
        let n = pays.len();
        let split = split.min(n - 2);
        let a: Vec<usize> = (0..split).collect();
        let b: Vec<usize> = (split..n).collect();
        prop_assert_eq!(exact_zero_sum_total(&pays, &a, &b), BigRational::from_integer(0.into()));
        let float_total: f64 = zero_sum_scores(&pays, &a, &b).iter().sum();
        prop_assert!(float_total.abs() <= 1e-12);
    }

    #[test]
    fn best_response_dominates_random_deviations(seed in 0u64..50, m in 2usize..4, dev in simplex(3), r in 0usize..3) {
        let prior = random_snife_prior::<f64>(m, 2, seed).unwrap().to_pairwise().unwrap();
        let cfg = Config::new(1.0, 0.2, ScoringRule::Log).unwrap();
        let profile = Profile::with_best_predictions(&prior, random_thetas(seed, m, 4)).unwrap();
        let p: Vec<f64> = { let s: f64 = dev[..m].iter().sum(); dev[..m].iter().map(|x| x / s).collect() };
        let r = r % m;
        for s in 0..m {
            let br = best_response(&cfg, &prior, &profile, 1, s).unwrap();
            let v = expected_conditional_payoff(&cfg, &prior, &profile, 1, s, Some(&[(1.0, Report { signal: r, prediction: p.clone() })])).unwrap();
            prop_assert!(br.values[r] >= v - 1e-12);
            prop_assert!(br.value >= br.values[r]);
        }
    }

    #[test]
    fn solvers_agree(seed in 0u64..1000, m in 2usize..5, n in 2usize..7, beta in 0.0f64..0.6) {
        let prior = random_snife_prior::<f64>(m, 2, seed).unwrap().to_pairwise().unwrap();
        let cfg = Config::new(1.0, beta, ScoringRule::Quadratic).unwrap();
        let thetas = random_thetas(seed, m, n);
        let a = solve_equilibrium_predictions(&cfg, &prior, &thetas).unwrap();
        let b = solve_equilibrium_predictions_direct(&cfg, &prior, &thetas).unwrap();
        prop_assert!(a.profile.max_abs_diff(&b.profile) <= 1e-10);
        // Solved predictions are exactly the best responses' predictions.
        for i in 0..n {
            for s in 0..m {
                let br = best_response(&cfg, &prior, &a.profile, i, s).unwrap();
                for r in 0..m {
                    prop_assert!(max_abs(&br.predictions[r], a.profile.agent(i).prediction(s, r)) <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn same_equilibria_for_symmetric_profiles(seed in 0u64..500, m in 2usize..4, n in 4usize..8, log in any::<bool>()) {
        let prior = random_snife_prior::<f64>(m, 2, seed).unwrap().to_pairwise().unwrap();
        let rule = if log { ScoringRule::Log } else { ScoringRule::Quadratic };
        let truthful = Config::new(1.0, 0.04, rule).unwrap();
        let plus = truthful.clone().with_variant(Variant::Disagreement);
        let theta = random_thetas(seed, m, 1).pop().unwrap();
        let profile = Profile::with_best_predictions(&prior, vec![theta; n]).unwrap();
        let a = check_equilibrium(&truthful, &prior, &profile, 0.0).unwrap();
        let b = check_equilibrium(&plus, &prior, &profile, 0.0).unwrap();
        for (x, y) in a.entries.iter().zip(&b.entries) {
            prop_assert!((x.gap - y.gap).abs() <= 1e-12);
        }
    }
}

#[test]
fn asymmetric_profiles_can_split_the_variants() {
    let prior = random_snife_prior::<f64>(2, 2, 3).unwrap().to_pairwise().unwrap();
    let cfg = Config::new(1.0, 0.05, ScoringRule::Log).unwrap();
    let plus = cfg.clone().with_variant(Variant::Disagreement);
    // Group A tells the truth, group B always reports the first signal.
    let thetas = vec![Theta::identity(2), Theta::identity(2), Theta::constant(2, 0), Theta::constant(2, 0)];
    let profile = Profile::with_best_predictions(&prior, thetas).unwrap();
    let a = check_equilibrium(&cfg, &prior, &profile, 0.0).unwrap();
    let b = check_equilibrium(&plus, &prior, &profile, 0.0).unwrap();
    let split = a.entries.iter().zip(&b.entries).map(|(x, y)| (x.gap - y.gap).abs()).fold(0.0, f64::max);
    assert!(split > 1e-6, "{split}");
}

#[test]
fn truth_is_strict_in_regime() {
    for seed in 0..10 {
        for m in 2..=4 {
            let prior = random_snife_prior::<f64>(m, 2, seed).unwrap().to_pairwise().unwrap();
            let cfg = Config::new(1.0, 1.0 / (8.0 * m as f64), ScoringRule::Log).unwrap();
            assert!(cfg.regime_warning(m).is_none());
            let r = check_equilibrium(&cfg, &prior, &truth_telling_profile(&prior, 5).unwrap(), 1e-12).unwrap();
            assert!(r.is_eps_equilibrium);
            assert!(r.entries.iter().all(|e| e.margin_against(e.signal) > 0.0 && e.best_signal == e.signal));
        }
    }
    assert!(Config::new(1.0, 0.2, ScoringRule::Log).unwrap().regime_warning(2).is_some());
}

#[test]
fn beta_zero_best_prediction() {
    let prior = random_snife_prior::<f64>(3, 2, 8).unwrap().to_pairwise().unwrap();
    let cfg = Config::new(2.0, 0.0, ScoringRule::Log).unwrap();
    let profile = Profile::with_best_predictions(&prior, random_thetas(8, 3, 4)).unwrap();
    let agg = aggregate_strategies(&profile);
    for s in 0..3 {
        let br = best_response(&cfg, &prior, &profile, 2, s).unwrap();
        let want = agg.leave_one_out[2].mul_vec(&prior.column(s));
        assert!(br.predictions.iter().all(|p| p == &want));
    }
}

#[test]
fn invalid_configs() {
    assert!(Config::new(0.0, 0.1, ScoringRule::Log).is_err());
    assert!(Config::new(1.0, -0.1, ScoringRule::Log).is_err());
    let plus = Config::disagreement(1.0, 0.1, ScoringRule::Log).unwrap();
    assert!(plus.groups(3).is_err());
    assert!(plus.clone().with_group_a(vec![0]).groups(5).is_err());
    let prior = random_snife_prior::<f64>(2, 2, 1).unwrap().to_pairwise().unwrap();
    assert!(check_equilibrium(&plus, &prior, &truth_telling_profile(&prior, 3).unwrap(), 0.0).is_err());
    let reports = vec![Report { signal: 0, prediction: vec![0.5, 0.5] }; 4];
    let bad = RoundMatching { peers: vec![2, 0, 3, 2], pairs: vec![(1, 2), (0, 2), (0, 1), (0, 1)] };
    assert!(realized_payments(&plus, &reports, &bad).is_err());
}

#[test]
fn non_permutations_lose_divergence() {
    for seed in 0..30 {
        let m = 2 + (seed % 3) as usize;
        let prior = random_snife_prior::<f64>(m, 2, seed).unwrap().to_pairwise().unwrap();
        let theta = random_thetas(seed, m, 1).pop().unwrap();
        let (_, _, loss) = largest_divergence_loss(&prior, &theta);
        assert!(loss > 0.0);
        let (_, _, none) = largest_divergence_loss(&prior, &Theta::permutation(&PermutationMap::cycle(m)));
        assert!(none.abs() <= 1e-14);
    }
}

#[test]
fn near_truth_symmetric_points_are_near_permutations() {
    for seed in 0..5 {
        let m = 2 + (seed % 2) as usize;
        let prior = random_snife_prior::<f64>(m, 2, seed).unwrap().to_pairwise().unwrap();
        let cfg = Config::new(1.0, 1.0 / (8.0 * m as f64), ScoringRule::Log).unwrap();
        let consts = prior_constants(&prior).unwrap();
        let truth = welfare_metrics(&prior, &truth_telling_profile(&prior, 4).unwrap()).unwrap().classification_score;
        for fp in symmetric_fixed_points(&cfg, &prior, 4).unwrap() {
            if fp.outcome != DynamicsOutcome::Fixed {
                continue;
            }
            let score = welfare_metrics(&prior, &fp.profile).unwrap().classification_score;
            let gamma1 = (truth - score).max(0.0);
            let level = tau_close_level(fp.profile.agent(0).theta.matrix());
            assert!(level <= consts.tau1(gamma1) + 1e-12, "level {level} gamma {gamma1}");
        }
    }
}

#[test]
fn large_population_chain() {
    // m = 2, ε = 0.5 needs n > 128·4/0.25 = 2048.
    let (m, n, eps) = (2, 2049, 0.5);
    let prior = random_snife_prior::<f64>(m, 2, 21).unwrap().to_pairwise().unwrap();
    let cfg = Config::new(1.0, 1.0 / 16.0, ScoringRule::Log).unwrap();
    let truth = welfare_metrics(&prior, &truth_telling_profile(&prior, n).unwrap()).unwrap().classification_score;
    let candidates = vec![
        permutation_profile(&prior, n, &PermutationMap::cycle(2)).unwrap(),
        solve_equilibrium_predictions(&cfg, &prior, &vec![Theta::uniform(2); n]).unwrap().profile,
        solve_equilibrium_predictions(&cfg, &prior, &vec![Theta::pure(&[0, 0]); n]).unwrap().profile,
    ];
    for s in candidates {
        let score = welfare_metrics(&prior, &s).unwrap().classification_score;
        if score >= truth - eps / 2.0 {
            let sym = symmetrized_best_prediction(&s, &prior).unwrap();
            let td = welfare_metrics(&prior, &sym).unwrap().total_divergence;
            assert!((td - truth).abs() <= eps);
        }
    }
}

#[test]
fn agents_can_be_built_by_hand() {
    let table = PredictionTable::from_fn(2, |s, _| if s == 0 { vec![0.7, 0.3] } else { vec![0.4, 0.6] }).unwrap();
    let a = Agent::new(Theta::identity(2), table).unwrap();
    assert_eq!(a.prediction(1, 0), &[0.4, 0.6]);
}
