//! The acceptance battery: one function per criterion, each self-contained
//! and deterministic in its seed.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::divergence::{hellinger, monotonicity_strict_predicate};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::mechanism::{
    check_equilibrium, exact_zero_sum_total, monte_carlo_payments, realized_payments, sample_matching,
    solve_equilibrium_predictions, solve_equilibrium_predictions_direct, welfare_metrics, MechanismConfig, Report,
    RoundMatching, Variant,
};
use crate::scoring::ScoringRule;
use crate::signals::{random_snife_prior, validate_snife, Assumption, LatentStatePrior, PairwisePrior, PermutationMap, SignalSpace};
use crate::strategy::{
    aggregate_strategies, constant_report_profile, counterexample_profile, permutation_profile,
    truth_telling_profile, uniform_report_profile, AgentStrategy, FixedProfile, PredictionTable, SignalStrategy,
    StrategyProfile, TruthTelling,
};
use crate::theorems::{
    far_from_permutation_gap, impossibility_cycle, main_lemma_audit, n_epsilon_audit, n_epsilon_deviation,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionOutcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed_secs: f64,
}

pub const CRITERIA: [(usize, &str); 12] = [
    (1, "truthful strictness"),
    (2, "pooling counterexample"),
    (3, "non-fine-grained example"),
    (4, "information monotonicity"),
    (5, "zero-sum and welfare identities"),
    (6, "permutation parity"),
    (7, "main lemma"),
    (8, "n-epsilon concentration"),
    (9, "far-from-permutation gap"),
    (10, "solver cross-check"),
    (11, "monte carlo consistency"),
    (12, "quasi-focal ordering"),
];

/// Runs criterion `id` with base seed `seed`.
pub fn run_criterion(id: usize, seed: u64) -> Option<CriterionOutcome> {
    let (_, name) = *CRITERIA.iter().find(|(k, _)| *k == id)?;
    let start = Instant::now();
    let result = match id {
        1 => truthful_strictness(seed),
        2 => pooling_counterexample(),
        3 => non_fine_grained_example(),
        4 => information_monotonicity(seed),
        5 => zero_sum_and_welfare(seed),
        6 => permutation_parity(seed),
        7 => main_lemma(seed),
        8 => n_epsilon(seed),
        9 => far_from_permutation(seed),
        10 => solver_cross_check(seed),
        11 => monte_carlo_consistency(seed),
        _ => quasi_focal_ordering(seed),
    };
    let (passed, detail) = match result {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    Some(CriterionOutcome {
        id,
        name,
        passed,
        detail,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

pub fn run_all(seed: u64) -> Vec<CriterionOutcome> {
    CRITERIA.iter().filter_map(|&(id, _)| run_criterion(id, seed)).collect()
}

type Check = Result<(bool, String)>;

pub fn sample_simplex(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..m).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / total).collect()
}

/// Column-stochastic matrix with flat-Dirichlet columns.
pub fn sample_signal_strategy(rng: &mut ChaCha8Rng, m: usize) -> SignalStrategy<f64> {
    let cols: Vec<Vec<f64>> = (0..m).map(|_| sample_simplex(rng, m)).collect();
    SignalStrategy::new(Matrix::from_fn(m, m, |r, s| cols[s][r])).expect("columns are distributions")
}

fn sample_permutation(rng: &mut ChaCha8Rng, m: usize) -> PermutationMap {
    let mut v: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        v.swap(i, rng.random_range(0..=i));
    }
    PermutationMap::new(v).expect("shuffle is a permutation")
}

fn pairwise(seed: u64, m: usize) -> Result<PairwisePrior<f64>> {
    random_snife_prior::<f64>(m, 2, seed)?.to_pairwise()
}

fn regime_config(m: usize, rule: ScoringRule) -> Result<MechanismConfig<f64>> {
    MechanismConfig::new(1.0, 1.0 / (8.0 * m as f64), rule)
}

fn truthful_strictness(seed: u64) -> Check {
    let mut worst_gap = 0.0f64;
    let mut min_margin = f64::INFINITY;
    for k in 0..50u64 {
        let m = 2 + (k % 3) as usize;
        let n = 4 + (k % 5) as usize;
        let rule = if k % 2 == 0 { ScoringRule::Log } else { ScoringRule::Quadratic };
        let prior = pairwise(seed + k, m)?;
        let cfg = regime_config(m, rule)?;
        let report = check_equilibrium(&cfg, &prior, &truth_telling_profile(&prior, n)?, 0.0)?;
        worst_gap = worst_gap.max(report.max_gap);
        for e in &report.entries {
            min_margin = min_margin.min(e.margin_against(e.signal));
        }
    }
    Ok((
        worst_gap <= 1e-12 && min_margin > 0.0,
        format!("max_gap={worst_gap:.3e} min_margin={min_margin:.3e}"),
    ))
}

fn pooling_counterexample() -> Check {
    let p = [0.1, 0.2, 0.7];
    let q = [0.2, 0.4, 0.4];
    let theta = Matrix::from_rows(vec![vec![0.3, 0.6, 0.0], vec![0.7, 0.4, 0.0], vec![0.0, 0.0, 1.0]])?;
    let strict = monotonicity_strict_predicate(&theta, &p, &q)?;
    let before = hellinger(&p, &q);
    let after = hellinger(&theta.mul_vec(&p), &theta.mul_vec(&q));
    let direct: f64 = p.iter().zip(&q).map(|(a, b): (&f64, &f64)| (a.sqrt() - b.sqrt()).powi(2)).sum();
    let passed = !strict && (before - after).abs() <= 1e-12 && (before - direct).abs() <= 1e-12;
    Ok((passed, format!("strict={strict} D*={before:.6} after={after:.6}")))
}

/// The textbook conditional matrix with proportional first two columns,
/// paired with a uniform marginal.
pub fn non_fine_grained_prior() -> Result<PairwisePrior<f64>> {
    PairwisePrior::without_symmetry_check(
        SignalSpace::indexed(3)?,
        vec![1.0 / 3.0; 3],
        Matrix::from_rows(vec![vec![0.1, 0.2, 0.3], vec![0.2, 0.4, 0.6], vec![0.7, 0.4, 0.1]])?,
        1e-12,
    )
}

fn non_fine_grained_example() -> Check {
    let report = validate_snife(&non_fine_grained_prior()?, 1e-12);
    let witness = report.witness(Assumption::Finegrained).map(|w| w.signals.clone());
    let passed = !report.finegrained_ok && witness == Some(vec![0, 1]);
    Ok((passed, format!("finegrained_ok={} witness={witness:?}", report.finegrained_ok)))
}

fn information_monotonicity(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut violations, mut perm_misses, mut disagreements) = (0, 0, 0);
    let mut worst_excess = f64::NEG_INFINITY;
    for k in 0..10_000 {
        let m = rng.random_range(2..=5);
        let p = sample_simplex(&mut rng, m);
        let q = sample_simplex(&mut rng, m);
        let theta = if k % 10 == 0 {
            SignalStrategy::permutation(&sample_permutation(&mut rng, m))
        } else {
            sample_signal_strategy(&mut rng, m)
        };
        let before = hellinger(&p, &q);
        let after = hellinger(&theta.mul_vec(&p), &theta.mul_vec(&q));
        worst_excess = worst_excess.max(after - before);
        if after > before + 1e-12 {
            violations += 1;
        }
        if k % 10 == 0 && (after - before).abs() > 1e-14 {
            perm_misses += 1;
        }
        let strict = monotonicity_strict_predicate(&theta, &p, &q)?;
        if strict != (before - after > 1e-12) {
            disagreements += 1;
        }
    }
    Ok((
        violations == 0 && perm_misses == 0 && disagreements == 0,
        format!(
            "violations={violations} permutation_misses={perm_misses} predicate_disagreements={disagreements} worst_excess={worst_excess:.3e}"
        ),
    ))
}

fn odometer(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

/// Exact expected M+ welfare by enumerating every signal profile, every
/// report profile and every agent's peer and pair options. Every agent
/// cycles through all of its options in lockstep; each agent's payment
/// depends on its own options only through additive terms, so the lockstep
/// average equals the full product average.
pub fn enumerated_disagreement_welfare(
    config: &MechanismConfig<f64>,
    latent: &LatentStatePrior<f64>,
    profile: &StrategyProfile<f64>,
) -> Result<f64> {
    let n = profile.n();
    let m = latent.m();
    let (a, b) = config.groups(n)?;
    let peer_options: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let g = if a.contains(&i) { &a } else { &b };
            g.iter().copied().filter(|&j| j != i).collect()
        })
        .collect();
    let pair_options: Vec<Vec<(usize, usize)>> = (0..n)
        .map(|i| {
            let mut v = Vec::new();
            for j in (0..n).filter(|&j| j != i) {
                for k in (0..n).filter(|&k| k != i && k != j) {
                    v.push((j, k));
                }
            }
            v
        })
        .collect();
    let cycle = peer_options
        .iter()
        .map(Vec::len)
        .chain(pair_options.iter().map(Vec::len))
        .fold(1usize, num_lcm);
    let matchings: Vec<RoundMatching> = (0..cycle)
        .map(|t| RoundMatching {
            peers: (0..n).map(|i| peer_options[i][t % peer_options[i].len()]).collect(),
            pairs: (0..n).map(|i| pair_options[i][t % pair_options[i].len()]).collect(),
        })
        .collect();
    let mut total = 0.0;
    let mut signals = vec![0usize; n];
    loop {
        let w_sig = latent.joint_probability(&signals);
        if w_sig > 0.0 {
            let mut reports = vec![0usize; n];
            loop {
                let w = w_sig
                    * (0..n)
                        .map(|i| profile.agent(i).theta.prob(reports[i], signals[i]))
                        .product::<f64>();
                if w > 0.0 {
                    let rs: Vec<Report<f64>> = (0..n)
                        .map(|i| Report {
                            signal: reports[i],
                            prediction: profile.agent(i).prediction(signals[i], reports[i]).to_vec(),
                        })
                        .collect();
                    let mut round = 0.0;
                    for mt in &matchings {
                        round += realized_payments(config, &rs, mt)?.total.iter().sum::<f64>();
                    }
                    total += w * round / (cycle * n) as f64;
                }
                if !odometer(&mut reports, m) {
                    break;
                }
            }
        }
        if !odometer(&mut signals, m) {
            break;
        }
    }
    Ok(total)
}

fn num_lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    a / gcd(a, b) * b
}

/// Profile with random signal strategies and random report-dependent
/// predictions.
pub fn random_profile(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Result<StrategyProfile<f64>> {
    let agents = (0..n)
        .map(|_| {
            let theta = sample_signal_strategy(rng, m);
            let table = PredictionTable::from_fn(m, |_, _| sample_simplex(rng, m))?;
            AgentStrategy::new(theta, table)
        })
        .collect::<Result<Vec<_>>>()?;
    StrategyProfile::new(agents)
}

fn zero_sum_and_welfare(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nonzero_rounds = 0;
    for _ in 0..2000 {
        let n = rng.random_range(4..=8);
        let m = rng.random_range(2..=4);
        let cfg = MechanismConfig::disagreement(1.0, rng.random_range(0.0..0.5), ScoringRule::Quadratic)?;
        let reports: Vec<Report<f64>> = (0..n)
            .map(|_| Report {
                signal: rng.random_range(0..m),
                prediction: sample_simplex(&mut rng, m),
            })
            .collect();
        let groups = cfg.groups(n)?;
        let matching = sample_matching(&mut rng, n, Variant::Disagreement, Some(&groups));
        let pays = realized_payments(&cfg.with_variant(Variant::Truthful), &reports, &matching)?;
        if exact_zero_sum_total(&pays.base, &groups.0, &groups.1) != num_rational::BigRational::from_integer(0.into()) {
            nonzero_rounds += 1;
        }
    }

    let mut worst_enum = 0.0f64;
    let cases: [(usize, usize, bool); 4] = [(4, 2, false), (5, 2, false), (4, 3, false), (5, 3, true)];
    for (k, &(n, m, pure)) in cases.iter().enumerate() {
        let latent = random_snife_prior::<f64>(m, 2, seed + k as u64)?;
        let prior = latent.to_pairwise()?;
        let cfg = MechanismConfig::disagreement(1.0, 1.0 / (8.0 * m as f64), ScoringRule::Log)?;
        let thetas: Vec<SignalStrategy<f64>> = (0..n)
            .map(|_| {
                if pure {
                    SignalStrategy::pure(&(0..m).map(|_| rng.random_range(0..m)).collect::<Vec<_>>())
                } else {
                    sample_signal_strategy(&mut rng, m)
                }
            })
            .collect();
        let profile = solve_equilibrium_predictions(&cfg, &prior, &thetas)?.profile;
        let enumerated = enumerated_disagreement_welfare(&cfg, &latent, &profile)?;
        let exact = welfare_metrics(&prior, &profile)?;
        worst_enum = worst_enum.max((enumerated - exact.average_welfare).abs());
        worst_enum = worst_enum.max((exact.average_welfare - exact.classification_score).abs());
    }

    let mut identity_failures = 0;
    let mut iff_failures = 0;
    for k in 0..1000u64 {
        let m = 2 + (k % 3) as usize;
        let n = 2 + (k % 5) as usize;
        let prior = pairwise(seed + k, m)?;
        let profile = match k % 5 {
            0 => truth_telling_profile(&prior, n)?,
            1 => permutation_profile(&prior, n, &sample_permutation(&mut rng, m))?,
            2 => StrategyProfile::with_best_predictions(
                &prior,
                (0..n).map(|_| sample_signal_strategy(&mut rng, m)).collect(),
            )?,
            3 => {
                let shared = PredictionTable::from_fn(m, |_, _| sample_simplex(&mut rng, m))?;
                let agents = (0..n)
                    .map(|_| AgentStrategy::new(sample_signal_strategy(&mut rng, m), shared.clone()))
                    .collect::<Result<Vec<_>>>()?;
                StrategyProfile::new(agents)?
            }
            _ => random_profile(&mut rng, m, n)?,
        };
        let w = welfare_metrics(&prior, &profile)?;
        if w.classification_score != w.diversity - w.inconsistency {
            identity_failures += 1;
        }
        if (w.total_divergence == w.diversity) != (w.inconsistency == 0.0) {
            iff_failures += 1;
        }
    }
    Ok((
        nonzero_rounds == 0 && worst_enum <= 1e-10 && identity_failures == 0 && iff_failures == 0,
        format!(
            "nonzero_rounds={nonzero_rounds} enumeration_error={worst_enum:.3e} identity_failures={identity_failures} iff_failures={iff_failures}"
        ),
    ))
}

fn permutation_parity(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_parity = 0.0f64;
    let mut worst_cycle = 0.0f64;
    let mut cycle_failures = 0;
    for m in 2..=4 {
        let prior = pairwise(seed + m as u64, m)?;
        let n = 4;
        let truth = welfare_metrics(&prior, &truth_telling_profile(&prior, n)?)?;
        let fixed = FixedProfile(random_profile(&mut rng, m, n)?);
        for pi in PermutationMap::all(m).into_iter().filter(|p| !p.is_identity()) {
            let w = welfare_metrics(&prior, &permutation_profile(&prior, n, &pi)?)?;
            worst_parity = worst_parity.max(w.max_abs_diff(&truth));
            for rows in [
                impossibility_cycle(&prior, &TruthTelling, n, &pi)?,
                impossibility_cycle(&prior, &fixed, n, &pi)?,
            ] {
                for r in rows {
                    worst_cycle = worst_cycle.max(r.slack.abs());
                    if !r.passed {
                        cycle_failures += 1;
                    }
                }
            }
        }
    }
    Ok((
        worst_parity <= 1e-12 && cycle_failures == 0,
        format!("parity_error={worst_parity:.3e} cycle_error={worst_cycle:.3e} cycle_failures={cycle_failures}"),
    ))
}

fn main_lemma(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut min_slack = f64::INFINITY;
    let mut equalities = 0;
    for k in 0..20u64 {
        let m = 2 + (k % 2) as usize;
        let n = 4 + (k % 3) as usize;
        let prior = pairwise(seed + k, m)?;
        let rule = if k % 4 < 2 { ScoringRule::Log } else { ScoringRule::Quadratic };
        let cfg = regime_config(m, rule)?;
        let thetas: Vec<SignalStrategy<f64>> = if k % 4 == 3 {
            vec![SignalStrategy::permutation(&sample_permutation(&mut rng, m)); n]
        } else if k % 2 == 0 {
            vec![sample_signal_strategy(&mut rng, m); n]
        } else {
            (0..n).map(|_| sample_signal_strategy(&mut rng, m)).collect()
        };
        let profile = solve_equilibrium_predictions(&cfg, &prior, &thetas)?.profile;
        let audit = main_lemma_audit(&cfg, &prior, &profile)?;
        min_slack = min_slack.min(audit.slack);
        if audit.context["equality"] == serde_json::Value::Bool(true) {
            equalities += 1;
        }
        if !audit.passed {
            failures += 1;
        }
    }
    Ok((failures == 0, format!("failures={failures} min_slack={min_slack:.3e} equalities={equalities}")))
}

fn random_theta_list(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Vec<SignalStrategy<f64>> {
    (0..n).map(|_| sample_signal_strategy(rng, m)).collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

pub const SWEEP_SIZES: [usize; 6] = [64, 128, 256, 512, 1024, 2048];

/// Binary prior with two well-separated states.
pub fn informative_binary_prior() -> Result<PairwisePrior<f64>> {
    LatentStatePrior::new(
        SignalSpace::indexed(2)?,
        vec![0.5, 0.5],
        Matrix::from_rows(vec![vec![0.8, 0.2], vec![0.3, 0.7]])?,
        1e-12,
    )?
    .to_pairwise()
}

fn n_epsilon(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prior = informative_binary_prior()?;
    let mut failures = 0;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let audit = n_epsilon_audit(&prior, &random_theta_list(&mut rng, 2, 600), 0.5)?;
        worst = worst.max(audit.lhs);
        if !audit.passed {
            failures += 1;
        }
    }
    let reps = 5;
    let mut random_devs = Vec::new();
    let mut deviant_devs = Vec::new();
    for &n in &SWEEP_SIZES {
        let mut acc = 0.0;
        for _ in 0..reps {
            acc += n_epsilon_deviation(&prior, &random_theta_list(&mut rng, 2, n))?;
        }
        random_devs.push(acc / reps as f64);
        deviant_devs.push(n_epsilon_deviation(&prior, &one_deviant_list(2, n))?);
    }
    let xs: Vec<f64> = SWEEP_SIZES.iter().map(|&n| n as f64).collect();
    let slope = log_log_slope(&xs, &deviant_devs);
    let random_slope = log_log_slope(&xs, &random_devs);
    Ok((
        failures == 0 && (-1.2..=-0.8).contains(&slope) && random_slope <= -0.8,
        format!(
            "failures={failures} worst_deviation_at_600={worst:.3e} one_deviant_slope={slope:.3} random_slope={random_slope:.3}"
        ),
    ))
}

/// Truth-tellers plus one agent who always reports the first signal.
pub fn one_deviant_list(m: usize, n: usize) -> Vec<SignalStrategy<f64>> {
    let mut v = vec![SignalStrategy::identity(m); n];
    v[0] = SignalStrategy::constant(m, 0);
    v
}

fn far_from_permutation(seed: u64) -> Check {
    let mut failures = 0;
    let mut min_slack = f64::INFINITY;
    for k in 0..20u64 {
        let m = 2 + (k % 3) as usize;
        let prior = pairwise(seed + k, m)?;
        let audit = far_from_permutation_gap(&prior, &SignalStrategy::uniform(m), 1.0 / (2.0 * m as f64))?;
        min_slack = min_slack.min(audit.slack);
        if !audit.passed {
            failures += 1;
        }
    }
    Ok((failures == 0, format!("failures={failures} min_slack={min_slack:.3e}")))
}

/// Best value over interior points of the simplex grid with step `1/steps`,
/// with its maximizer.
pub fn simplex_grid_argmax(m: usize, steps: usize, mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<(Vec<f64>, f64)> {
    let mut best = (vec![], f64::NEG_INFINITY);
    let mut counts = vec![1usize; m];
    fn rec(
        counts: &mut Vec<usize>,
        pos: usize,
        left: usize,
        steps: usize,
        f: &mut dyn FnMut(&[f64]) -> Result<f64>,
        best: &mut (Vec<f64>, f64),
    ) -> Result<()> {
        let m = counts.len();
        if pos == m - 1 {
            if left == 0 {
                return Ok(());
            }
            counts[pos] = left;
            let p: Vec<f64> = counts.iter().map(|&c| c as f64 / steps as f64).collect();
            let v = f(&p)?;
            if v > best.1 {
                *best = (p, v);
            }
            return Ok(());
        }
        for c in 1..left {
            counts[pos] = c;
            rec(counts, pos + 1, left - c, steps, f, best)?;
        }
        Ok(())
    }
    rec(&mut counts, 0, steps, steps, &mut f, &mut best)?;
    Ok(best)
}

fn solver_cross_check(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_solver = 0.0f64;
    let mut beta_zero_misses = 0;
    for k in 0..20u64 {
        let m = 2 + (k % 3) as usize;
        let n = 2 + (k % 5) as usize;
        let prior = pairwise(seed + k, m)?;
        let rule = if k % 2 == 0 { ScoringRule::Log } else { ScoringRule::Quadratic };
        let cfg = MechanismConfig::new(1.0, rng.random_range(0.0..0.5), rule)?;
        let thetas = random_theta_list(&mut rng, m, n);
        let a = solve_equilibrium_predictions(&cfg, &prior, &thetas)?;
        let b = solve_equilibrium_predictions_direct(&cfg, &prior, &thetas)?;
        worst_solver = worst_solver.max(a.profile.max_abs_diff(&b.profile));

        let zero = solve_equilibrium_predictions(&MechanismConfig::new(1.0, 0.0, rule)?, &prior, &thetas)?.profile;
        let agg = aggregate_strategies(&zero);
        for i in 0..n {
            for s in 0..m {
                let want = agg.leave_one_out[i].mul_vec(&prior.column(s));
                for r in 0..m {
                    if zero.agent(i).prediction(s, r) != want.as_slice() {
                        beta_zero_misses += 1;
                    }
                }
            }
        }
    }

    let mut worst_grid_dist = 0.0f64;
    let mut grid_beats = 0;
    let steps = 200;
    for k in 0..6u64 {
        let m = 2 + (k % 2) as usize;
        let n = 4;
        let prior = pairwise(seed + 100 + k, m)?;
        let rule = if k % 3 == 0 { ScoringRule::Quadratic } else { ScoringRule::Log };
        let cfg = MechanismConfig::new(1.0, rng.random_range(0.05..0.5), rule)?;
        let profile = StrategyProfile::with_best_predictions(&prior, random_theta_list(&mut rng, m, n))?;
        for s in 0..m {
            let br = crate::mechanism::best_response(&cfg, &prior, &profile, 0, s)?;
            for r in 0..m {
                let (arg, val) = simplex_grid_argmax(m, steps, |p| {
                    crate::mechanism::expected_conditional_payoff(
                        &cfg,
                        &prior,
                        &profile,
                        0,
                        s,
                        Some(&[(1.0, Report { signal: r, prediction: p.to_vec() })]),
                    )
                })?;
                if val > br.values[r] + 1e-12 {
                    grid_beats += 1;
                }
                let d = arg
                    .iter()
                    .zip(&br.predictions[r])
                    .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
                worst_grid_dist = worst_grid_dist.max(d);
            }
        }
    }
    let resolution = 1.0 / steps as f64;
    Ok((
        worst_solver <= 1e-10 && beta_zero_misses == 0 && grid_beats == 0 && worst_grid_dist <= resolution,
        format!(
            "solver_diff={worst_solver:.3e} beta_zero_misses={beta_zero_misses} grid_beats={grid_beats} grid_distance={worst_grid_dist:.3e} resolution={resolution:.3e}"
        ),
    ))
}

pub const MONTE_CARLO_TRIALS: usize = 1_000_000;

fn monte_carlo_consistency(seed: u64) -> Check {
    let latent = random_snife_prior::<f64>(3, 3, seed)?;
    let prior = latent.to_pairwise()?;
    let cfg = MechanismConfig::disagreement(1.0, 1.0 / 24.0, ScoringRule::Log)?;
    let profile = truth_telling_profile(&prior, 6)?;
    let exact = welfare_metrics(&prior, &profile)?.classification_score;
    let mc = monte_carlo_payments(&cfg, &latent, &profile, MONTE_CARLO_TRIALS, seed)?;
    let z = (mc.mean_welfare - exact) / mc.stderr_welfare;
    Ok((
        z.abs() <= 4.0,
        format!(
            "exact={exact:.6} sampled={:.6} stderr={:.3e} z={z:.2}",
            mc.mean_welfare, mc.stderr_welfare
        ),
    ))
}

fn quasi_focal_ordering(seed: u64) -> Check {
    let mut failures = 0;
    let mut lines = Vec::new();
    let m = 3;
    for k in 0..10u64 {
        let prior = pairwise(seed + k, m)?;
        let cfg = regime_config(m, ScoringRule::Log)?;
        let n = m;
        let truth = truth_telling_profile(&prior, n)?;
        let solved_uniform = solve_equilibrium_predictions(&cfg, &prior, &uniform_report_profile(&prior, n)?.thetas())?.profile;
        let score = |p: &StrategyProfile<f64>| -> Result<(f64, f64)> {
            Ok((
                welfare_metrics(&prior, p)?.classification_score,
                check_equilibrium(&cfg, &prior, p, 0.0)?.max_gap,
            ))
        };
        let (t, tg) = score(&truth)?;
        let (c, cg) = score(&constant_report_profile(m, n, 0)?)?;
        let (u, ug) = score(&solved_uniform)?;
        let (x, xg) = score(&counterexample_profile(m, n)?)?;
        if !(c < t && u < t && x > t) {
            failures += 1;
        }
        lines.push(format!(
            "[truth {t:.4} gap {tg:.1e}; constant {c:.4} gap {cg:.1e}; uniform {u:.4} gap {ug:.1e}; counterexample {x:.4} gap {xg:.1e}]"
        ));
    }
    Ok((failures == 0, format!("failures={failures} {}", lines.join(" "))))
}
