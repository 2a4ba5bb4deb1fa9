//! Strategy profiles in the finite representation: a column-stochastic signal
//! strategy per agent plus a prediction for every (private, reported) pair.

use std::ops::Deref;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;
use crate::signals::{check_distribution, PairwisePrior, PermutationMap};

/// Column tolerance for signal strategies.
pub const STRATEGY_TOL: f64 = 1e-12;
/// Tolerance for prediction vectors, which usually come out of a solver.
pub const PREDICTION_TOL: f64 = 1e-9;

/// `θ[σ̂][σ] = Pr(report σ̂ | private σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalStrategy<T>(Matrix<T>);

impl<T: Real> SignalStrategy<T> {
    pub fn new(theta: Matrix<T>) -> Result<Self> {
        if !theta.is_square() {
            return Err(Error::DimensionMismatch {
                what: "signal strategy columns",
                expected: theta.rows(),
                found: theta.cols(),
            });
        }
        let tol = T::lit(STRATEGY_TOL);
        for c in 0..theta.cols() {
            check_distribution(&format!("signal strategy column {c}"), &theta.column(c), tol)?;
        }
        Ok(Self(theta))
    }

    pub fn identity(m: usize) -> Self {
        Self(Matrix::identity(m))
    }

    pub fn uniform(m: usize) -> Self {
        let u = T::one() / T::from_usize_exact(m);
        Self(Matrix::from_fn(m, m, |_, _| u))
    }

    pub fn constant(m: usize, report: usize) -> Self {
        Self(Matrix::from_fn(m, m, |r, _| if r == report { T::one() } else { T::zero() }))
    }

    pub fn permutation(pi: &PermutationMap) -> Self {
        Self(pi.matrix())
    }

    /// Deterministic signal map: private `σ` is reported as `map[σ]`.
    pub fn pure(map: &[usize]) -> Self {
        let m = map.len();
        Self(Matrix::from_fn(m, m, |r, c| if map[c] == r { T::one() } else { T::zero() }))
    }

    pub fn m(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.0
    }

    pub fn prob(&self, report: usize, private: usize) -> T {
        self.0[(report, private)]
    }
}

impl<T> Deref for SignalStrategy<T> {
    type Target = Matrix<T>;

    fn deref(&self) -> &Matrix<T> {
        &self.0
    }
}

/// `P[σ][σ̂]`, stored flat in `[σ][σ̂][coordinate]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable<T> {
    m: usize,
    data: Vec<T>,
}

impl<T: Real> PredictionTable<T> {
    pub fn from_fn(m: usize, mut f: impl FnMut(usize, usize) -> Vec<T>) -> Result<Self> {
        let mut data = Vec::with_capacity(m * m * m);
        let tol = T::lit(PREDICTION_TOL);
        for s in 0..m {
            for r in 0..m {
                let p = f(s, r);
                if p.len() != m {
                    return Err(Error::DimensionMismatch {
                        what: "prediction length",
                        expected: m,
                        found: p.len(),
                    });
                }
                check_distribution(&format!("prediction [{s}][{r}]"), &p, tol)?;
                data.extend(p);
            }
        }
        Ok(Self { m, data })
    }

    /// The same prediction for every reported signal.
    pub fn report_independent(columns: &[Vec<T>]) -> Result<Self> {
        Self::from_fn(columns.len(), |s, _| columns[s].clone())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, private: usize, report: usize) -> &[T] {
        let start = (private * self.m + report) * self.m;
        &self.data[start..start + self.m]
    }

    /// Nested `[σ][σ̂][coordinate]` copy.
    pub fn to_nested(&self) -> Vec<Vec<Vec<T>>> {
        (0..self.m)
            .map(|s| (0..self.m).map(|r| self.get(s, r).to_vec()).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentStrategy<T> {
    pub theta: SignalStrategy<T>,
    pub predictions: PredictionTable<T>,
}

impl<T: Real> AgentStrategy<T> {
    pub fn new(theta: SignalStrategy<T>, predictions: PredictionTable<T>) -> Result<Self> {
        if theta.m() != predictions.m() {
            return Err(Error::DimensionMismatch {
                what: "prediction table signals",
                expected: theta.m(),
                found: predictions.m(),
            });
        }
        Ok(Self { theta, predictions })
    }

    /// `P[σ][σ̂]`.
    pub fn prediction(&self, private: usize, report: usize) -> &[T] {
        self.predictions.get(private, report)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyProfile<T> {
    agents: Vec<AgentStrategy<T>>,
}

impl<T: Real> StrategyProfile<T> {
    pub fn new(agents: Vec<AgentStrategy<T>>) -> Result<Self> {
        if agents.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "a profile needs at least 2 agents, got {}",
                agents.len()
            )));
        }
        let m = agents[0].theta.m();
        for a in &agents {
            if a.theta.m() != m {
                return Err(Error::DimensionMismatch {
                    what: "agent signal count",
                    expected: m,
                    found: a.theta.m(),
                });
            }
        }
        Ok(Self { agents })
    }

    pub fn symmetric(agent: AgentStrategy<T>, n: usize) -> Result<Self> {
        Self::new(vec![agent; n])
    }

    /// Signal strategies with best predictions attached.
    pub fn with_best_predictions(prior: &PairwisePrior<T>, thetas: Vec<SignalStrategy<T>>) -> Result<Self> {
        let m = prior.m();
        let placeholder = PredictionTable::report_independent(&(0..m).map(|s| prior.column(s)).collect::<Vec<_>>())?;
        let agents = thetas
            .into_iter()
            .map(|theta| AgentStrategy::new(theta, placeholder.clone()))
            .collect::<Result<Vec<_>>>()?;
        best_prediction_profile(&Self::new(agents)?, prior)
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn m(&self) -> usize {
        self.agents[0].theta.m()
    }

    pub fn agents(&self) -> &[AgentStrategy<T>] {
        &self.agents
    }

    pub fn agent(&self, i: usize) -> &AgentStrategy<T> {
        &self.agents[i]
    }

    pub fn thetas(&self) -> Vec<SignalStrategy<T>> {
        self.agents.iter().map(|a| a.theta.clone()).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        self.agents.iter().all(|a| a == &self.agents[0])
    }

    /// Replace one agent's strategy.
    pub fn with_agent(&self, i: usize, agent: AgentStrategy<T>) -> Result<Self> {
        let mut agents = self.agents.clone();
        agents[i] = agent;
        Self::new(agents)
    }

    /// Largest entrywise difference in signal strategies and predictions.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.n(), self.m()), (other.n(), other.m()));
        self.agents
            .iter()
            .zip(&other.agents)
            .map(|(a, b)| {
                let p = a
                    .predictions
                    .data
                    .iter()
                    .zip(&b.predictions.data)
                    .fold(T::zero(), |acc, (&x, &y)| acc.max((x - y).abs()));
                p.max(a.theta.max_abs_diff(&b.theta))
            })
            .fold(T::zero(), T::max)
    }
}

pub fn truth_telling_profile<T: Real>(prior: &PairwisePrior<T>, n: usize) -> Result<StrategyProfile<T>> {
    permutation_profile(prior, n, &PermutationMap::identity(prior.m()))
}

/// Everyone reports `π(σ)` and predicts `θ_π q_σ` whatever they report.
pub fn permutation_profile<T: Real>(
    prior: &PairwisePrior<T>,
    n: usize,
    pi: &PermutationMap,
) -> Result<StrategyProfile<T>> {
    let theta = SignalStrategy::permutation(pi);
    let columns: Vec<Vec<T>> = (0..prior.m()).map(|s| theta.mul_vec(&prior.column(s))).collect();
    let agent = AgentStrategy::new(theta, PredictionTable::report_independent(&columns)?)?;
    StrategyProfile::symmetric(agent, n)
}

/// Everyone reports `report` and predicts a point mass on it.
pub fn constant_report_profile<T: Real>(m: usize, n: usize, report: usize) -> Result<StrategyProfile<T>> {
    let point: Vec<T> = (0..m).map(|s| if s == report { T::one() } else { T::zero() }).collect();
    let agent = AgentStrategy::new(
        SignalStrategy::constant(m, report),
        PredictionTable::from_fn(m, |_, _| point.clone())?,
    )?;
    StrategyProfile::symmetric(agent, n)
}

/// Everyone reports uniformly at random, with best predictions.
pub fn uniform_report_profile<T: Real>(prior: &PairwisePrior<T>, n: usize) -> Result<StrategyProfile<T>> {
    StrategyProfile::with_best_predictions(prior, vec![SignalStrategy::uniform(prior.m()); n])
}

/// `m` agents; agent `i` always reports signal `i` and predicts `1/(m−1)` on
/// every other signal.
pub fn counterexample_profile<T: Real>(m: usize, n: usize) -> Result<StrategyProfile<T>> {
    if n != m {
        return Err(Error::Precondition(format!(
            "counterexample profile needs n = m, got n={n}, m={m}"
        )));
    }
    let w = T::one() / T::from_usize_exact(m - 1);
    let agents = (0..m)
        .map(|i| {
            let p: Vec<T> = (0..m).map(|s| if s == i { T::zero() } else { w }).collect();
            AgentStrategy::new(SignalStrategy::constant(m, i), PredictionTable::from_fn(m, |_, _| p.clone())?)
        })
        .collect::<Result<Vec<_>>>()?;
    StrategyProfile::new(agents)
}

/// Largest `m` for which all permutation profiles are enumerated.
pub const MAX_PERMUTATION_M: usize = 4;

/// Named reference profiles: truth, non-identity permutations (small `m`),
/// constant reports, uniform reports, and the counterexample when `n = m`.
pub fn candidate_profiles<T: Real>(prior: &PairwisePrior<T>, n: usize) -> Result<Vec<(String, StrategyProfile<T>)>> {
    let m = prior.m();
    let mut out = vec![("truth".to_string(), truth_telling_profile(prior, n)?)];
    if m <= MAX_PERMUTATION_M {
        for pi in PermutationMap::all(m).into_iter().filter(|p| !p.is_identity()) {
            out.push((permutation_name(&pi), permutation_profile(prior, n, &pi)?));
        }
    }
    for s in 0..m {
        out.push((format!("constant:{s}"), constant_report_profile(m, n, s)?));
    }
    out.push(("uniform".to_string(), uniform_report_profile(prior, n)?));
    if n == m {
        out.push(("counterexample".to_string(), counterexample_profile(m, n)?));
    }
    Ok(out)
}

pub fn permutation_name(pi: &PermutationMap) -> String {
    let parts: Vec<String> = pi.mapping().iter().map(ToString::to_string).collect();
    format!("perm:{}", parts.join("-"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateStrategies<T> {
    /// `θ̄_n`.
    pub mean: Matrix<T>,
    /// `θ_{−i}` for each agent.
    pub leave_one_out: Vec<Matrix<T>>,
}

impl<T: Real> AggregateStrategies<T> {
    /// Distribution of a uniformly chosen agent's report when private signals
    /// are distributed as `omega`.
    pub fn report_distribution(&self, omega: &[T]) -> Vec<T> {
        self.mean.mul_vec(omega)
    }
}

fn average<'a, T: Real>(m: usize, items: impl Iterator<Item = &'a Matrix<T>>) -> Matrix<T> {
    let mut acc = Matrix::zeros(m, m);
    let mut k = 0usize;
    for x in items {
        acc = acc.add(x);
        k += 1;
    }
    acc.scale(T::one() / T::from_usize_exact(k))
}

pub fn aggregate_strategies<T: Real>(profile: &StrategyProfile<T>) -> AggregateStrategies<T> {
    let m = profile.m();
    let mean = average(m, profile.agents.iter().map(|a| a.theta.matrix()));
    let leave_one_out = (0..profile.n())
        .map(|i| {
            average(
                m,
                profile
                    .agents
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, a)| a.theta.matrix()),
            )
        })
        .collect();
    AggregateStrategies { mean, leave_one_out }
}

/// `s_BP`: predictions replaced by `θ_{−i} q_σ`.
pub fn best_prediction_profile<T: Real>(profile: &StrategyProfile<T>, prior: &PairwisePrior<T>) -> Result<StrategyProfile<T>> {
    let agg = aggregate_strategies(profile);
    replace_predictions(profile, prior, |i| &agg.leave_one_out[i])
}

/// Predictions replaced by `θ̄_n q_σ` for every agent.
pub fn symmetrized_best_prediction<T: Real>(
    profile: &StrategyProfile<T>,
    prior: &PairwisePrior<T>,
) -> Result<StrategyProfile<T>> {
    let agg = aggregate_strategies(profile);
    replace_predictions(profile, prior, |_| &agg.mean)
}

fn replace_predictions<'a, T: Real>(
    profile: &StrategyProfile<T>,
    prior: &PairwisePrior<T>,
    matrix_for: impl Fn(usize) -> &'a Matrix<T>,
) -> Result<StrategyProfile<T>> {
    let m = profile.m();
    let agents = profile
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mix = matrix_for(i);
            let columns: Vec<Vec<T>> = (0..m).map(|s| mix.mul_vec(&prior.column(s))).collect();
            AgentStrategy::new(a.theta.clone(), PredictionTable::report_independent(&columns)?)
        })
        .collect::<Result<Vec<_>>>()?;
    StrategyProfile::new(agents)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixClass {
    pub is_permutation: bool,
    pub is_tau_close: bool,
}

/// A column-stochastic matrix is a permutation iff each row has at most one
/// non-zero entry; it is τ-close iff each row has at most one entry above τ.
pub fn matrix_classify<T: Real>(theta: &SignalStrategy<T>, tau: T, tol: T) -> MatrixClass {
    let rows_ok = |bound: T| (0..theta.rows()).all(|r| theta.row(r).iter().filter(|&&x| x > bound).count() <= 1);
    MatrixClass {
        is_permutation: rows_ok(tol),
        is_tau_close: rows_ok(tau),
    }
}

/// Second-largest entry of each row, maximized over rows: the smallest τ for
/// which the matrix is τ-close.
pub fn tau_close_level<T: Real>(theta: &Matrix<T>) -> T {
    (0..theta.rows())
        .map(|r| {
            let mut row = theta.row(r).to_vec();
            row.sort_by(|a, b| b.partial_cmp(a).unwrap());
            row.get(1).copied().unwrap_or_else(T::zero)
        })
        .fold(T::zero(), T::max)
}

/// Relabels a profile. The result, used with prior `π^{-1}(Q)`, plays exactly
/// like the input does under `Q`.
pub fn permute_profile<T: Real>(profile: &StrategyProfile<T>, pi: &PermutationMap) -> Result<StrategyProfile<T>> {
    let m = profile.m();
    if pi.m() != m {
        return Err(Error::DimensionMismatch {
            what: "permutation size",
            expected: m,
            found: pi.m(),
        });
    }
    let agents = profile
        .agents
        .iter()
        .map(|a| {
            let theta = Matrix::from_fn(m, m, |r, s| a.theta.prob(r, pi.apply(s)));
            let predictions = PredictionTable::from_fn(m, |s, r| a.prediction(pi.apply(s), r).to_vec())?;
            AgentStrategy::new(SignalStrategy::new(theta)?, predictions)
        })
        .collect::<Result<Vec<_>>>()?;
    StrategyProfile::new(agents)
}

/// A strategy viewed as a function of the prior, as needed when comparing
/// play across relabeled priors.
pub trait StrategyRule<T: Real> {
    fn realize(&self, prior: &PairwisePrior<T>, n: usize) -> Result<StrategyProfile<T>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TruthTelling;

impl<T: Real> StrategyRule<T> for TruthTelling {
    fn realize(&self, prior: &PairwisePrior<T>, n: usize) -> Result<StrategyProfile<T>> {
        truth_telling_profile(prior, n)
    }
}

/// A prior-independent profile.
#[derive(Debug, Clone)]
pub struct FixedProfile<T>(pub StrategyProfile<T>);

impl<T: Real> StrategyRule<T> for FixedProfile<T> {
    fn realize(&self, prior: &PairwisePrior<T>, n: usize) -> Result<StrategyProfile<T>> {
        if self.0.n() != n || self.0.m() != prior.m() {
            return Err(Error::DimensionMismatch {
                what: "fixed profile agents",
                expected: n,
                found: self.0.n(),
            });
        }
        Ok(self.0.clone())
    }
}
