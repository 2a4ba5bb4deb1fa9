//! Signal spaces, common priors, the assumption predicates, signal
//! relabelings, and the prior-dependent constants.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::divergence::hellinger_second_derivative;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Default tolerance for the strict-inequality assumption predicates.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Tolerance the random prior sampler validates at.
pub const SAMPLER_TOL: f64 = 1e-6;
/// Draws the random prior sampler attempts before giving up.
pub const DEFAULT_REJECTION_BUDGET: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalSpace {
    labels: Vec<String>,
}

impl SignalSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::InvalidSignalSpace(format!(
                "need at least 2 signals, got {}",
                labels.len()
            )));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidSignalSpace(format!("duplicate label {l:?}")));
            }
        }
        Ok(Self { labels })
    }

    /// Signals labelled `s1..sm`.
    pub fn indexed(m: usize) -> Result<Self> {
        Self::new((1..=m).map(|i| format!("s{i}")).collect())
    }

    pub fn m(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, signal: usize) -> &str {
        &self.labels[signal]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

pub(crate) fn check_distribution<T: Real>(what: &str, v: &[T], tol: T) -> Result<()> {
    let mut deviation = (v.iter().copied().sum::<T>() - T::one()).abs();
    for &x in v {
        if !x.is_finite() {
            deviation = T::infinity();
        } else if x < T::zero() {
            deviation = deviation.max(-x);
        }
    }
    if deviation > tol {
        return Err(Error::NotStochastic {
            what: what.to_string(),
            deviation: deviation.as_f64(),
        });
    }
    Ok(())
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// First two moments of the common prior: marginal `q(σ)` and the
/// conditional matrix `C[a][b] = q(σ_a | σ_b)` (column `b` is `q_b`).
#[derive(Debug, Clone, PartialEq)]
pub struct PairwisePrior<T> {
    space: SignalSpace,
    marginal: Vec<T>,
    conditional: Matrix<T>,
}

impl<T: Real> PairwisePrior<T> {
    pub fn new(space: SignalSpace, marginal: Vec<T>, conditional: Matrix<T>, tol: T) -> Result<Self> {
        let prior = Self::without_symmetry_check(space, marginal, conditional, tol)?;
        let (a, b, residual) = prior.worst_symmetry_violation();
        if residual > tol {
            return Err(Error::AsymmetricPrior {
                a,
                b,
                residual: residual.as_f64(),
            });
        }
        Ok(prior)
    }

    /// Validates dimensions and stochasticity only. Needed for conditional
    /// matrices (such as non-fine-grained textbook examples) that admit no
    /// symmetric marginal but whose other predicates are still of interest.
    pub fn without_symmetry_check(
        space: SignalSpace,
        marginal: Vec<T>,
        conditional: Matrix<T>,
        tol: T,
    ) -> Result<Self> {
        let m = space.m();
        check_len("marginal", m, marginal.len())?;
        check_len("conditional rows", m, conditional.rows())?;
        check_len("conditional columns", m, conditional.cols())?;
        check_distribution("marginal", &marginal, tol)?;
        for b in 0..m {
            check_distribution(&format!("conditional column {b}"), &conditional.column(b), tol)?;
        }
        Ok(Self {
            space,
            marginal,
            conditional,
        })
    }

    pub fn space(&self) -> &SignalSpace {
        &self.space
    }

    pub fn m(&self) -> usize {
        self.space.m()
    }

    pub fn marginal(&self) -> &[T] {
        &self.marginal
    }

    pub fn conditional(&self) -> &Matrix<T> {
        &self.conditional
    }

    /// `q(a | b)`.
    pub fn cond(&self, a: usize, b: usize) -> T {
        self.conditional[(a, b)]
    }

    /// `q_b`, the distribution of a peer's signal given own signal `b`.
    pub fn column(&self, b: usize) -> Vec<T> {
        self.conditional.column(b)
    }

    /// `Pr(σ_j = s, σ_k = t) = q(s) q(t | s)`.
    pub fn joint(&self, s: usize, t: usize) -> T {
        self.marginal[s] * self.conditional[(t, s)]
    }

    pub fn symmetry_residual(&self) -> T {
        self.worst_symmetry_violation().2
    }

    fn worst_symmetry_violation(&self) -> (usize, usize, T) {
        let m = self.m();
        let mut worst = (0, 0, T::zero());
        for a in 0..m {
            for b in a + 1..m {
                let r = (self.joint(b, a) - self.joint(a, b)).abs();
                if r > worst.2 {
                    worst = (a, b, r);
                }
            }
        }
        worst
    }
}

/// Conditionally i.i.d. generator: a latent state is drawn from
/// `state_probs`, then every agent's signal is drawn from `emissions[state]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentStatePrior<T> {
    space: SignalSpace,
    state_probs: Vec<T>,
    emissions: Matrix<T>,
}

impl<T: Real> LatentStatePrior<T> {
    pub fn new(space: SignalSpace, state_probs: Vec<T>, emissions: Matrix<T>, tol: T) -> Result<Self> {
        check_len("emission rows", state_probs.len(), emissions.rows())?;
        check_len("emission columns", space.m(), emissions.cols())?;
        if state_probs.is_empty() {
            return Err(Error::InvalidConfig("latent prior needs at least one state".into()));
        }
        check_distribution("state_probs", &state_probs, tol)?;
        for t in 0..emissions.rows() {
            check_distribution(&format!("emission row {t}"), emissions.row(t), tol)?;
        }
        Ok(Self {
            space,
            state_probs,
            emissions,
        })
    }

    pub fn space(&self) -> &SignalSpace {
        &self.space
    }

    pub fn m(&self) -> usize {
        self.space.m()
    }

    pub fn states(&self) -> usize {
        self.state_probs.len()
    }

    pub fn state_probs(&self) -> &[T] {
        &self.state_probs
    }

    pub fn emissions(&self) -> &Matrix<T> {
        &self.emissions
    }

    pub fn marginal(&self) -> Vec<T> {
        (0..self.m())
            .map(|s| {
                (0..self.states())
                    .map(|t| self.state_probs[t] * self.emissions[(t, s)])
                    .sum()
            })
            .collect()
    }

    /// `Pr(state | σ)`; `None` when `σ` has zero marginal.
    pub fn posterior(&self, signal: usize) -> Option<Vec<T>> {
        let w: Vec<T> = (0..self.states())
            .map(|t| self.state_probs[t] * self.emissions[(t, signal)])
            .collect();
        let z: T = w.iter().copied().sum();
        (z > T::zero()).then(|| w.into_iter().map(|x| x / z).collect())
    }

    /// Probability that agents observe exactly `signals` (any number of agents).
    pub fn joint_probability(&self, signals: &[usize]) -> T {
        (0..self.states())
            .map(|t| {
                signals
                    .iter()
                    .fold(self.state_probs[t], |acc, &s| acc * self.emissions[(t, s)])
            })
            .sum()
    }

    /// `M[a][b] = Pr(σ_j = a, σ_k = b | σ_i = signal)` for three distinct agents.
    pub fn triple_conditional(&self, signal: usize) -> Result<Matrix<T>> {
        let post = self
            .posterior(signal)
            .ok_or(Error::ZeroMarginal { signal })?;
        let m = self.m();
        Ok(Matrix::from_fn(m, m, |a, b| {
            (0..self.states())
                .map(|t| post[t] * self.emissions[(t, a)] * self.emissions[(t, b)])
                .sum()
        }))
    }

    /// Marginal and conditional of two distinct agents. The two-agent joint is
    /// assembled once and mirrored, so pairwise symmetry holds by construction.
    pub fn to_pairwise(&self) -> Result<PairwisePrior<T>> {
        let m = self.m();
        let q = self.marginal();
        if let Some(signal) = q.iter().position(|&x| x <= T::zero()) {
            return Err(Error::ZeroMarginal { signal });
        }
        let mut joint = Matrix::zeros(m, m);
        for a in 0..m {
            for b in a..m {
                let v: T = (0..self.states())
                    .map(|t| self.state_probs[t] * self.emissions[(t, a)] * self.emissions[(t, b)])
                    .sum();
                joint[(a, b)] = v;
                joint[(b, a)] = v;
            }
        }
        let conditional = Matrix::from_fn(m, m, |a, b| joint[(a, b)] / q[b]);
        Ok(PairwisePrior {
            space: self.space.clone(),
            marginal: q,
            conditional,
        })
    }
}

pub fn from_latent<T: Real>(latent: &LatentStatePrior<T>) -> Result<PairwisePrior<T>> {
    latent.to_pairwise()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Assumption {
    Symmetric,
    Nonzero,
    Informative,
    Finegrained,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub assumption: Assumption,
    pub signals: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub symmetric_ok: bool,
    pub nonzero_ok: bool,
    pub informative_ok: bool,
    pub finegrained_ok: bool,
    pub witnesses: Vec<Witness>,
}

impl AssumptionReport {
    pub fn all_ok(&self) -> bool {
        self.symmetric_ok && self.nonzero_ok && self.informative_ok && self.finegrained_ok
    }

    pub fn witness(&self, assumption: Assumption) -> Option<&Witness> {
        self.witnesses.iter().find(|w| w.assumption == assumption)
    }
}

pub fn validate_snife<T: Real>(prior: &PairwisePrior<T>, tol: T) -> AssumptionReport {
    let m = prior.m();
    let c = prior.conditional();
    let q = prior.marginal();
    let mut witnesses = Vec::new();

    let (a, b, residual) = prior.worst_symmetry_violation();
    let symmetric_ok = residual <= tol;
    if !symmetric_ok {
        witnesses.push(Witness {
            assumption: Assumption::Symmetric,
            signals: vec![a, b],
        });
    }

    let zero_marginal = (0..m).find(|&s| q[s] <= tol).map(|s| vec![s]);
    let zero_cond = || {
        (0..m)
            .flat_map(|a| (0..m).map(move |b| (a, b)))
            .find(|&(a, b)| c[(a, b)] <= tol)
            .map(|(a, b)| vec![a, b])
    };
    let nonzero_bad = zero_marginal.or_else(zero_cond);
    if let Some(signals) = &nonzero_bad {
        witnesses.push(Witness {
            assumption: Assumption::Nonzero,
            signals: signals.clone(),
        });
    }

    let mut informative_bad = None;
    'outer: for s in 0..m {
        for t in s + 1..m {
            if (0..m).all(|a| (c[(a, s)] - c[(a, t)]).abs() <= tol) {
                informative_bad = Some(vec![s, t]);
                break 'outer;
            }
        }
    }
    if let Some(signals) = &informative_bad {
        witnesses.push(Witness {
            assumption: Assumption::Informative,
            signals: signals.clone(),
        });
    }

    let mut finegrained_bad = None;
    'rows: for u in 0..m {
        for v in u + 1..m {
            if ratio_spread(c, u, v) <= tol {
                finegrained_bad = Some(vec![u, v]);
                break 'rows;
            }
        }
    }
    if let Some(signals) = &finegrained_bad {
        witnesses.push(Witness {
            assumption: Assumption::Finegrained,
            signals: signals.clone(),
        });
    }

    AssumptionReport {
        symmetric_ok,
        nonzero_ok: nonzero_bad.is_none(),
        informative_ok: informative_bad.is_none(),
        finegrained_ok: finegrained_bad.is_none(),
        witnesses,
    }
}

/// Largest difference of the row ratio `C[u][·]/C[v][·]` between two columns.
/// Columns with a zero denominator fall back to the cross product.
fn ratio_spread<T: Real>(c: &Matrix<T>, u: usize, v: usize) -> T {
    let m = c.cols();
    let mut spread = T::zero();
    for s in 0..m {
        for t in s + 1..m {
            let cross = c[(u, s)] * c[(v, t)] - c[(u, t)] * c[(v, s)];
            let denom = c[(v, s)] * c[(v, t)];
            let d = if denom > T::zero() {
                (cross / denom).abs()
            } else {
                cross.abs()
            };
            spread = spread.max(d);
        }
    }
    spread
}

/// A bijection on signal indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct PermutationMap {
    mapping: Vec<usize>,
}

impl PermutationMap {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let m = mapping.len();
        let mut seen = vec![false; m];
        for &x in &mapping {
            if x >= m || seen[x] {
                return Err(Error::InvalidPermutation(format!("{mapping:?} is not a bijection")));
            }
            seen[x] = true;
        }
        Ok(Self { mapping })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            mapping: (0..m).collect(),
        }
    }

    /// The cyclic shift `σ ↦ σ + 1 mod m`.
    pub fn cycle(m: usize) -> Self {
        Self {
            mapping: (0..m).map(|s| (s + 1) % m).collect(),
        }
    }

    /// All `m!` permutations in lexicographic order, identity first.
    pub fn all(m: usize) -> Vec<Self> {
        let mut out = Vec::new();
        let mut cur: Vec<usize> = (0..m).collect();
        loop {
            out.push(Self {
                mapping: cur.clone(),
            });
            let Some(i) = (1..m).rev().find(|&i| cur[i - 1] < cur[i]) else {
                break;
            };
            let j = (i..m).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
            cur.swap(i - 1, j);
            cur[i..].reverse();
        }
        out
    }

    pub fn m(&self) -> usize {
        self.mapping.len()
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn apply(&self, signal: usize) -> usize {
        self.mapping[signal]
    }

    pub fn is_identity(&self) -> bool {
        self.mapping.iter().enumerate().all(|(i, &x)| i == x)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.m()];
        for (i, &x) in self.mapping.iter().enumerate() {
            inv[x] = i;
        }
        Self { mapping: inv }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.m(), other.m(), "composing permutations of different size");
        Self {
            mapping: other.mapping.iter().map(|&x| self.mapping[x]).collect(),
        }
    }

    pub fn power(&self, k: usize) -> Self {
        (0..k).fold(Self::identity(self.m()), |acc, _| self.compose(&acc))
    }

    /// Smallest positive `d` with `π^d = id`.
    pub fn order(&self) -> usize {
        let mut p = self.clone();
        let mut d = 1;
        while !p.is_identity() {
            p = self.compose(&p);
            d += 1;
        }
        d
    }

    /// The 0/1 signal strategy reporting `π(σ)` on private signal `σ`.
    pub fn matrix<T: Real>(&self) -> Matrix<T> {
        let m = self.m();
        Matrix::from_fn(m, m, |r, c| if self.mapping[c] == r { T::one() } else { T::zero() })
    }
}

impl TryFrom<Vec<usize>> for PermutationMap {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PermutationMap> for Vec<usize> {
    fn from(p: PermutationMap) -> Self {
        p.mapping
    }
}

/// Relabels signals: `q'(π σ) = q(σ)` and `q'(π a | π b) = q(a | b)`.
pub fn permute_prior<T: Real>(prior: &PairwisePrior<T>, pi: &PermutationMap) -> Result<PairwisePrior<T>> {
    let m = prior.m();
    check_len("permutation size", m, pi.m())?;
    let inv = pi.inverse();
    let marginal = (0..m).map(|s| prior.marginal[inv.apply(s)]).collect();
    let conditional = Matrix::from_fn(m, m, |a, b| prior.conditional[(inv.apply(a), inv.apply(b))]);
    Ok(PairwisePrior {
        space: prior.space.clone(),
        marginal,
        conditional,
    })
}

pub fn random_snife_prior<T: Real>(m: usize, states: usize, seed: u64) -> Result<LatentStatePrior<T>> {
    random_snife_prior_with_budget(m, states, seed, DEFAULT_REJECTION_BUDGET)
}

/// Rejection-samples flat-Dirichlet state weights and emission rows until
/// every assumption predicate passes at [`SAMPLER_TOL`].
pub fn random_snife_prior_with_budget<T: Real>(
    m: usize,
    states: usize,
    seed: u64,
    budget: usize,
) -> Result<LatentStatePrior<T>> {
    if m < 2 || states < 2 {
        return Err(Error::InvalidConfig(format!(
            "random prior needs m >= 2 and at least 2 states, got m={m}, states={states}"
        )));
    }
    let space = SignalSpace::indexed(m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = T::lit(SAMPLER_TOL);
    for _ in 0..budget {
        let state_probs = flat_dirichlet::<T>(&mut rng, states);
        let rows: Vec<Vec<T>> = (0..states).map(|_| flat_dirichlet(&mut rng, m)).collect();
        let emissions = Matrix::from_rows(rows)?;
        let latent = LatentStatePrior {
            space: space.clone(),
            state_probs,
            emissions,
        };
        let Ok(pairwise) = latent.to_pairwise() else {
            continue;
        };
        if validate_snife(&pairwise, tol).all_ok() {
            return Ok(latent);
        }
    }
    Err(Error::RejectionBudget { budget })
}

fn flat_dirichlet<T: Real>(rng: &mut ChaCha8Rng, k: usize) -> Vec<T> {
    let draws: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| T::lit(x / total)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConstants<T> {
    pub c1: T,
    pub c2: T,
    pub c3: T,
    pub c4: T,
}

pub fn prior_constants<T: Real>(prior: &PairwisePrior<T>) -> Result<PriorConstants<T>> {
    let m = prior.m();
    let c = prior.conditional();
    if let Some(k) = c.as_slice().iter().position(|&x| x <= T::zero()) {
        return Err(Error::Precondition(format!(
            "conditional entry ({}, {}) is zero; c4 is undefined",
            k / m,
            k % m
        )));
    }
    let c1 = c.as_slice().iter().copied().fold(T::infinity(), T::min);
    let mut c2 = T::infinity();
    let mut max_ratio = T::zero();
    for s in 0..m {
        for t in 0..m {
            c2 = c2.min(prior.joint(s, t));
            for u in 0..m {
                max_ratio = max_ratio.max(c[(u, s)] / c[(u, t)]);
            }
        }
    }
    let mut c3 = T::infinity();
    for u in 0..m {
        for v in 0..m {
            if u == v {
                continue;
            }
            let mut best = T::zero();
            for s in 0..m {
                for t in 0..m {
                    let d = c[(u, s)] / c[(u, t)] - c[(v, s)] / c[(v, t)];
                    best = best.max(d * d);
                }
            }
            c3 = c3.min(best);
        }
    }
    Ok(PriorConstants {
        c1,
        c2,
        c3,
        c4: hellinger_second_derivative(max_ratio),
    })
}

impl<T: Real> PriorConstants<T> {
    fn product(&self) -> T {
        self.c2 * self.c3 * self.c4
    }

    pub fn tau1(&self, gamma1: T) -> T {
        (gamma1 / self.product()).cbrt() / self.c1
    }

    pub fn tau2(&self, m: usize, n: usize) -> T {
        let m = T::from_usize_exact(m);
        let n = T::from_usize_exact(n);
        let p = self.product();
        let sixth = T::lit(128.0) * m * m / (n * self.c1.powi(6) * p * p);
        sixth.powf(T::one() / T::lit(6.0))
    }
}

pub fn gamma2<T: Real>(m: usize, n: usize) -> T {
    T::lit(4.0) * T::SQRT_2() * T::from_usize_exact(m) / T::from_usize_exact(n).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremBounds<T> {
    pub tau1: T,
    pub gamma2: T,
    pub tau2: T,
}

pub fn theorem_bounds<T: Real>(consts: &PriorConstants<T>, m: usize, n: usize, gamma1: T) -> Result<TheoremBounds<T>> {
    let PriorConstants { c1, c2, c3, c4 } = *consts;
    if [c1, c2, c3, c4].iter().any(|&c| !(c > T::zero())) {
        return Err(Error::Precondition("prior constants must be strictly positive".into()));
    }
    if n == 0 {
        return Err(Error::Precondition("n must be positive".into()));
    }
    Ok(TheoremBounds {
        tau1: consts.tau1(gamma1),
        gamma2: gamma2(m, n),
        tau2: consts.tau2(m, n),
    })
}
