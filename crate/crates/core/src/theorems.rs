//! Numeric audits of the welfare and equilibrium results.

use std::collections::{BTreeMap, HashSet};

use serde::Serialize;
use serde_json::{json, Value};

use crate::divergence::hellinger;
use crate::error::{Error, Result};
use crate::mechanism::{best_response, check_equilibrium, solve_equilibrium_predictions, welfare_metrics, MechanismConfig};
use crate::scalar::Real;
use crate::signals::{permute_prior, prior_constants, PairwisePrior, PermutationMap};
use crate::strategy::{
    aggregate_strategies, best_prediction_profile, candidate_profiles, matrix_classify, permute_profile,
    tau_close_level, AgentStrategy, PredictionTable, SignalStrategy, StrategyProfile, StrategyRule,
};

/// Slack tolerance for inequality audits.
pub const AUDIT_TOL: f64 = 1e-10;
/// Tolerance for exact identities between two computed welfare values.
pub const IDENTITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditResult {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub passed: bool,
    pub context: BTreeMap<String, Value>,
}

impl AuditResult {
    fn inequality(name: &str, lhs: f64, rhs: f64, tol: f64) -> Self {
        let slack = rhs - lhs;
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            slack,
            passed: slack >= -tol,
            context: BTreeMap::new(),
        }
    }

    fn equality(name: &str, lhs: f64, rhs: f64, tol: f64) -> Self {
        let slack = rhs - lhs;
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            slack,
            passed: slack.abs() <= tol,
            context: BTreeMap::new(),
        }
    }

    fn with(mut self, key: &str, value: Value) -> Self {
        self.context.insert(key.to_string(), value);
        self
    }
}

/// Largest difference between two profiles' predictions over cells that are
/// reached with positive probability under both.
pub fn on_path_prediction_diff<T: Real>(a: &StrategyProfile<T>, b: &StrategyProfile<T>) -> T {
    let m = a.m();
    let mut worst = T::zero();
    for (x, y) in a.agents().iter().zip(b.agents()) {
        for s in 0..m {
            for r in 0..m {
                if x.theta.prob(r, s) > T::zero() && y.theta.prob(r, s) > T::zero() {
                    for (&p, &q) in x.prediction(s, r).iter().zip(y.prediction(s, r)) {
                        worst = worst.max((p - q).abs());
                    }
                }
            }
        }
    }
    worst
}

/// Classification score of `profile` against the total divergence of its
/// best-prediction version. Equality should only occur when the profile has
/// no inconsistency and already plays best predictions.
pub fn main_lemma_audit<T: Real>(
    config: &MechanismConfig<T>,
    prior: &PairwisePrior<T>,
    profile: &StrategyProfile<T>,
) -> Result<AuditResult> {
    let w = welfare_metrics(prior, profile)?;
    let bp = best_prediction_profile(profile, prior)?;
    let w_bp = welfare_metrics(prior, &bp)?;
    let gap = check_equilibrium(config, prior, profile, T::zero())?.max_gap;
    let lhs = w.classification_score.as_f64();
    let rhs = w_bp.total_divergence.as_f64();
    let equal = (rhs - lhs).abs() <= AUDIT_TOL;
    let no_inconsistency = w.inconsistency.as_f64() <= AUDIT_TOL;
    let is_bp = on_path_prediction_diff(profile, &bp).as_f64() <= AUDIT_TOL;
    let equality_condition_ok = !equal || (no_inconsistency && is_bp);
    let mut r = AuditResult::inequality("main_lemma", lhs, rhs, AUDIT_TOL)
        .with("equality", json!(equal))
        .with("inconsistency", json!(w.inconsistency.as_f64()))
        .with("is_best_prediction", json!(is_bp))
        .with("equality_condition_ok", json!(equality_condition_ok))
        .with("equilibrium_gap", json!(gap.as_f64()));
    r.passed &= equality_condition_ok;
    Ok(r)
}

/// Population size above which the leave-one-out predictions' divergences
/// are within `eps` of the symmetrized ones.
pub fn n_epsilon<T: Real>(m: usize, eps: T) -> T {
    T::lit(32.0) * T::from_usize_exact(m * m) / (eps * eps)
}

/// Largest `|D*(θ_{−j}q_s, θ_{−k}q_t) − D*(θ̄ q_s, θ̄ q_t)|` over agent pairs
/// `j ≠ k` and signal pairs.
pub fn n_epsilon_deviation<T: Real>(prior: &PairwisePrior<T>, thetas: &[SignalStrategy<T>]) -> Result<T> {
    let m = prior.m();
    let n = thetas.len();
    if n < 2 {
        return Err(Error::Precondition("need at least 2 agents".into()));
    }
    let placeholder = StrategyProfile::new(
        thetas
            .iter()
            .map(|t| {
                AgentStrategy::new(
                    t.clone(),
                    PredictionTable::report_independent(&(0..m).map(|s| prior.column(s)).collect::<Vec<_>>())?,
                )
            })
            .collect::<Result<Vec<_>>>()?,
    )?;
    let agg = aggregate_strategies(&placeholder);
    let columns: Vec<Vec<T>> = (0..m).map(|s| prior.column(s)).collect();
    let mean_pred: Vec<Vec<T>> = columns.iter().map(|q| agg.mean.mul_vec(q)).collect();
    let loo_pred: Vec<Vec<Vec<T>>> = agg
        .leave_one_out
        .iter()
        .map(|t| columns.iter().map(|q| t.mul_vec(q)).collect())
        .collect();
    let mut reference = vec![T::zero(); m * m];
    for s in 0..m {
        for t in 0..m {
            reference[s * m + t] = hellinger(&mean_pred[s], &mean_pred[t]);
        }
    }
    let mut worst = T::zero();
    for j in 0..n {
        for k in 0..n {
            if j == k {
                continue;
            }
            for s in 0..m {
                for t in 0..m {
                    let d = hellinger(&loo_pred[j][s], &loo_pred[k][t]);
                    worst = worst.max((d - reference[s * m + t]).abs());
                }
            }
        }
    }
    Ok(worst)
}

pub fn n_epsilon_audit<T: Real>(prior: &PairwisePrior<T>, thetas: &[SignalStrategy<T>], eps: T) -> Result<AuditResult> {
    let threshold = n_epsilon(prior.m(), eps);
    let n = thetas.len();
    if !(T::from_usize_exact(n) > threshold) {
        return Err(Error::Precondition(format!(
            "n = {n} does not exceed N_eps = {}",
            threshold.as_f64()
        )));
    }
    let lhs = n_epsilon_deviation(prior, thetas)?.as_f64();
    let eps = eps.as_f64();
    let mut r = AuditResult::inequality("n_epsilon", lhs, eps, 0.0)
        .with("n", json!(n))
        .with("n_eps", json!(threshold.as_f64()));
    r.passed = lhs < eps;
    Ok(r)
}

/// Symmetric profile playing `theta` with the matching best predictions.
pub fn symmetric_best_prediction_profile<T: Real>(
    prior: &PairwisePrior<T>,
    theta: &SignalStrategy<T>,
    n: usize,
) -> Result<StrategyProfile<T>> {
    StrategyProfile::with_best_predictions(prior, vec![theta.clone(); n])
}

/// Truth-telling's total divergence exceeds that of any symmetric signal
/// strategy that is not τ-close to a permutation by `c2 (τ c1)³ c4 c3`.
pub fn far_from_permutation_gap<T: Real>(
    prior: &PairwisePrior<T>,
    theta: &SignalStrategy<T>,
    tau: T,
) -> Result<AuditResult> {
    if matrix_classify(theta, tau, T::zero()).is_tau_close {
        return Err(Error::Precondition(format!("strategy is {}-close to a permutation", tau.as_f64())));
    }
    let k = prior_constants(prior)?;
    let lhs = k.c2 * (tau * k.c1).powi(3) * k.c4 * k.c3;
    let truth = welfare_metrics(prior, &crate::strategy::truth_telling_profile(prior, 2)?)?.total_divergence;
    let other = welfare_metrics(prior, &symmetric_best_prediction_profile(prior, theta, 2)?)?.total_divergence;
    Ok(
        AuditResult::inequality("far_from_permutation", lhs.as_f64(), (truth - other).as_f64(), 1e-12)
            .with("tau", json!(tau.as_f64()))
            .with("truth_total_divergence", json!(truth.as_f64())),
    )
}

/// Relabeling cycle behind the impossibility result. With `A_k = (π^k Q,
/// s(π^k Q))` and `B_k = (π^k Q, π(s(π^{k+1} Q)))`, the scenarios `A_{k+1}`
/// and `B_k` are indistinguishable, so their welfare must coincide; going
/// around the cycle returns to `A_0`.
pub fn impossibility_cycle<T: Real>(
    prior: &PairwisePrior<T>,
    rule: &dyn StrategyRule<T>,
    n: usize,
    pi: &PermutationMap,
) -> Result<Vec<AuditResult>> {
    if pi.is_identity() {
        return Err(Error::Precondition("the cycle needs a non-identity permutation".into()));
    }
    let order = pi.order();
    let mut priors = vec![prior.clone()];
    for k in 0..order {
        priors.push(permute_prior(&priors[k], pi)?);
    }
    let aw_a = priors
        .iter()
        .map(|q| Ok(welfare_metrics(q, &rule.realize(q, n)?)?.average_welfare.as_f64()))
        .collect::<Result<Vec<f64>>>()?;
    let mut out = Vec::with_capacity(order + 1);
    for k in 0..order {
        let b = permute_profile(&rule.realize(&priors[k + 1], n)?, pi)?;
        let aw_b = welfare_metrics(&priors[k], &b)?.average_welfare.as_f64();
        out.push(
            AuditResult::equality(&format!("cycle_step_{k}"), aw_a[k + 1], aw_b, IDENTITY_TOL)
                .with("k", json!(k))
                .with("order", json!(order)),
        );
    }
    out.push(
        AuditResult::equality("cycle_closure", aw_a[order], aw_a[0], IDENTITY_TOL)
            .with("order", json!(order))
            .with("prior_restored", json!(priors[order] == priors[0])),
    );
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DynamicsOutcome {
    Fixed,
    Cycle,
    Capped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricFixedPoint<T> {
    pub start: Vec<usize>,
    pub map: Vec<usize>,
    pub outcome: DynamicsOutcome,
    pub iterations: usize,
    pub profile: StrategyProfile<T>,
}

pub const DYNAMICS_CAP: usize = 200;
/// Largest number of starting maps enumerated exhaustively.
pub const MAX_STARTS: usize = 256;

fn pure_maps(m: usize) -> Vec<Vec<usize>> {
    let total = m.checked_pow(m as u32).unwrap_or(usize::MAX);
    let stride = if total <= MAX_STARTS { 1 } else { total.div_ceil(MAX_STARTS) };
    (0..total)
        .step_by(stride)
        .map(|mut code| {
            (0..m)
                .map(|_| {
                    let d = code % m;
                    code /= m;
                    d
                })
                .collect()
        })
        .collect()
}

/// Best-response dynamics over symmetric pure signal maps with solved
/// predictions, from each start.
pub fn symmetric_fixed_points<T: Real>(
    config: &MechanismConfig<T>,
    prior: &PairwisePrior<T>,
    n: usize,
) -> Result<Vec<SymmetricFixedPoint<T>>> {
    let m = prior.m();
    let mut out = Vec::new();
    for start in pure_maps(m) {
        let mut map = start.clone();
        let mut seen = HashSet::new();
        let mut outcome = DynamicsOutcome::Capped;
        let mut iterations = 0;
        let mut profile;
        loop {
            let theta = SignalStrategy::pure(&map);
            profile = solve_equilibrium_predictions(config, prior, &vec![theta; n])?.profile;
            if iterations >= DYNAMICS_CAP {
                break;
            }
            seen.insert(map.clone());
            let next = (0..m)
                .map(|s| Ok(best_response(config, prior, &profile, 0, s)?.signal))
                .collect::<Result<Vec<usize>>>()?;
            iterations += 1;
            if next == map {
                outcome = DynamicsOutcome::Fixed;
                break;
            }
            if seen.contains(&next) {
                outcome = DynamicsOutcome::Cycle;
                map = next;
                let theta = SignalStrategy::pure(&map);
                profile = solve_equilibrium_predictions(config, prior, &vec![theta; n])?.profile;
                break;
            }
            map = next;
        }
        out.push(SymmetricFixedPoint {
            start,
            map,
            outcome,
            iterations,
            profile,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub name: String,
    pub classification: f64,
    pub max_gap: f64,
    /// Smallest τ for which the average signal strategy is τ-close.
    pub tau_close_level: f64,
    pub margin_to_truth: f64,
}

/// Classification score, equilibrium gap and closeness to a permutation for
/// every reference profile and every distinct symmetric fixed point, sorted
/// by classification score (highest first).
pub fn welfare_comparison<T: Real>(
    config: &MechanismConfig<T>,
    prior: &PairwisePrior<T>,
    n: usize,
) -> Result<Vec<ComparisonRow>> {
    let mut profiles = candidate_profiles(prior, n)?;
    if let Some(entry) = profiles.iter_mut().find(|(k, _)| k == "uniform") {
        entry.1 = solve_equilibrium_predictions(config, prior, &entry.1.thetas())?.profile;
    }
    let mut seen_maps = HashSet::new();
    for fp in symmetric_fixed_points(config, prior, n)? {
        if fp.outcome == DynamicsOutcome::Fixed && seen_maps.insert(fp.map.clone()) {
            let name = format!(
                "fixed:{}",
                fp.map.iter().map(ToString::to_string).collect::<Vec<_>>().join("-")
            );
            profiles.push((name, fp.profile));
        }
    }
    let mut rows = Vec::with_capacity(profiles.len());
    let mut truth_score = None;
    for (name, p) in &profiles {
        let score = welfare_metrics(prior, p)?.classification_score.as_f64();
        if name == "truth" {
            truth_score = Some(score);
        }
        let gap = check_equilibrium(config, prior, p, T::zero())?.max_gap.as_f64();
        rows.push(ComparisonRow {
            name: name.clone(),
            classification: score,
            max_gap: gap,
            tau_close_level: tau_close_level(&aggregate_strategies(p).mean).as_f64(),
            margin_to_truth: 0.0,
        });
    }
    let truth = truth_score.expect("candidate set always contains truth");
    for r in &mut rows {
        r.margin_to_truth = r.classification - truth;
    }
    rows.sort_by(|a, b| {
        b.classification
            .partial_cmp(&a.classification)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.name.cmp(&b.name))
    });
    Ok(rows)
}

/// The signal pair whose conditional columns lose the most Hellinger
/// divergence under `theta`, with the loss. A non-permutation strategy on a
/// fine-grained prior always loses some.
pub fn largest_divergence_loss<T: Real>(prior: &PairwisePrior<T>, theta: &SignalStrategy<T>) -> (usize, usize, T) {
    let m = prior.m();
    let cols: Vec<Vec<T>> = (0..m).map(|s| prior.column(s)).collect();
    let mut best = (0, 0, T::neg_infinity());
    for s in 0..m {
        for t in s + 1..m {
            let loss = hellinger(&cols[s], &cols[t]) - hellinger(&theta.mul_vec(&cols[s]), &theta.mul_vec(&cols[t]));
            if loss > best.2 {
                best = (s, t, loss);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::ScoringRule;
    use crate::signals::random_snife_prior;
    use crate::strategy::{truth_telling_profile, TruthTelling};

    fn prior(seed: u64, m: usize) -> PairwisePrior<f64> {
        random_snife_prior(m, 2, seed).unwrap().to_pairwise().unwrap()
    }

    #[test]
    fn truth_meets_lemma_with_equality() {
        let p = prior(1, 3);
        let cfg = MechanismConfig::new(1.0, 0.05, ScoringRule::Log).unwrap();
        let r = main_lemma_audit(&cfg, &p, &truth_telling_profile(&p, 4).unwrap()).unwrap();
        assert!(r.passed);
        assert_eq!(r.lhs, r.rhs);
        assert_eq!(r.context["equality"], json!(true));
    }

    #[test]
    fn n_epsilon_precondition() {
        let p = prior(2, 2);
        let thetas = vec![SignalStrategy::identity(2); 10];
        assert!(matches!(n_epsilon_audit(&p, &thetas, 0.5), Err(Error::Precondition(_))));
        assert_eq!(n_epsilon::<f64>(2, 0.5), 512.0);
        assert_eq!(n_epsilon_deviation(&p, &thetas).unwrap(), 0.0);
    }

    #[test]
    fn permutation_rejected_by_gap_audit() {
        let p = prior(3, 3);
        let t = SignalStrategy::permutation(&PermutationMap::cycle(3));
        assert!(far_from_permutation_gap(&p, &t, 1.0 / 6.0).is_err());
        let u = SignalStrategy::uniform(3);
        assert!(far_from_permutation_gap(&p, &u, 1.0 / 6.0).unwrap().passed);
    }

    #[test]
    fn binary_swap_cycle() {
        let p = prior(4, 2);
        let swap = PermutationMap::new(vec![1, 0]).unwrap();
        let rows = impossibility_cycle(&p, &TruthTelling, 4, &swap).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.passed));
        assert!(impossibility_cycle(&p, &TruthTelling, 4, &PermutationMap::identity(2)).is_err());
    }

    #[test]
    fn pure_map_enumeration() {
        assert_eq!(pure_maps(2).len(), 4);
        assert_eq!(pure_maps(4).len(), 256);
        assert!(pure_maps(5).len() <= MAX_STARTS + 1);
    }
}
