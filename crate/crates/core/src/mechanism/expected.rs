//! Exact conditional expectations of the action-dependent payment terms.
//!
//! Agent `i` with private signal `σ_i` who reports `(σ̂, p̂)` expects
//!
//! ```text
//! α·PS(θ_peers q_{σ_i}, p̂) + β·Σ_j (1/|peers|) Σ_{σ_j} q(σ_j|σ_i) θ_j[σ̂][σ_j]
//!                                 · (PS(P_j[σ_j][σ̂], p̂) − PS(P_j[σ_j][σ̂], P_j[σ_j][σ̂]))
//! ```
//!
//! The classification reward and the other group's zero-sum share do not
//! depend on `i`'s report and are left out.

use serde::Serialize;

use super::config::{MechanismConfig, Report};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;
use crate::signals::PairwisePrior;
use crate::strategy::StrategyProfile;

/// Values closer than this count as tied in best-response reporting.
pub const TIE_TOL: f64 = 1e-12;

/// Everything agent `i`'s payoff needs from the rest of the profile.
pub(crate) struct AgentView<'a, T> {
    pub config: &'a MechanismConfig<T>,
    pub prior: &'a PairwisePrior<T>,
    pub profile: &'a StrategyProfile<T>,
    pub peers: Vec<usize>,
    pub theta_peers: Matrix<T>,
}

/// One neighbor term: weight and the neighbor's prediction.
pub(crate) struct Term<'a, T> {
    pub weight: T,
    pub prediction: &'a [T],
}

pub(crate) fn average_theta<T: Real>(profile: &StrategyProfile<T>, peers: &[usize]) -> Matrix<T> {
    let m = profile.m();
    let mut acc = Matrix::zeros(m, m);
    for &j in peers {
        acc = acc.add(profile.agent(j).theta.matrix());
    }
    acc.scale(T::one() / T::from_usize_exact(peers.len()))
}

impl<'a, T: Real> AgentView<'a, T> {
    pub fn new(
        config: &'a MechanismConfig<T>,
        prior: &'a PairwisePrior<T>,
        profile: &'a StrategyProfile<T>,
        i: usize,
    ) -> Result<Self> {
        if profile.m() != prior.m() {
            return Err(Error::DimensionMismatch {
                what: "profile signals",
                expected: prior.m(),
                found: profile.m(),
            });
        }
        let peers = config.peer_set(profile.n(), i)?;
        let theta_peers = average_theta(profile, &peers);
        Ok(Self {
            config,
            prior,
            profile,
            peers,
            theta_peers,
        })
    }

    pub fn anchor(&self, signal: usize) -> Vec<T> {
        self.theta_peers.mul_vec(&self.prior.column(signal))
    }

    pub fn terms(&self, signal: usize, report: usize) -> Vec<Term<'a, T>> {
        let share = T::one() / T::from_usize_exact(self.peers.len());
        let profile = self.profile;
        let mut out = Vec::new();
        for &j in &self.peers {
            let a = profile.agent(j);
            for s in 0..self.prior.m() {
                let weight = share * self.prior.cond(s, signal) * a.theta.prob(report, s);
                if weight > T::zero() {
                    out.push(Term {
                        weight,
                        prediction: a.prediction(s, report),
                    });
                }
            }
        }
        out
    }

    /// Payoff of the pure report `(report, prediction)`.
    pub fn value(&self, signal: usize, report: usize, prediction: &[T]) -> Result<T> {
        let rule = self.config.rule;
        let mut v = self.config.alpha * rule.expected_score(&self.anchor(signal), prediction)?;
        if self.config.beta > T::zero() {
            let mut acc = T::zero();
            for t in self.terms(signal, report) {
                let cross = rule.expected_score(t.prediction, prediction)?;
                let own = rule.expected_score(t.prediction, t.prediction)?;
                acc += t.weight * (cross - own);
            }
            v += self.config.beta * acc;
        }
        Ok(v)
    }

    /// Payoff-maximizing prediction for a given reported signal: the
    /// α/β-weighted mixture of the anchor and the neighbors' predictions.
    pub fn optimal_prediction(&self, signal: usize, report: usize) -> Vec<T> {
        let anchor = self.anchor(signal);
        if self.config.beta == T::zero() {
            return anchor;
        }
        let terms = self.terms(signal, report);
        let w: T = terms.iter().map(|t| t.weight).sum();
        if w == T::zero() {
            return anchor;
        }
        let (alpha, beta) = (self.config.alpha, self.config.beta);
        let denom = alpha + beta * w;
        (0..anchor.len())
            .map(|c| {
                let mix: T = terms.iter().map(|t| t.weight * t.prediction[c]).sum();
                (alpha * anchor[c] + beta * mix) / denom
            })
            .collect()
    }
}

/// Expected action-dependent payment of agent `i` at private signal `signal`.
/// `deviation` is a distribution over pure reports replacing the profile's
/// prescribed play; without it the prescribed mixed report is evaluated.
pub fn expected_conditional_payoff<T: Real>(
    config: &MechanismConfig<T>,
    prior: &PairwisePrior<T>,
    profile: &StrategyProfile<T>,
    i: usize,
    signal: usize,
    deviation: Option<&[(T, Report<T>)]>,
) -> Result<T> {
    let view = AgentView::new(config, prior, profile, i)?;
    match deviation {
        Some(mix) => {
            let mut v = T::zero();
            for (w, r) in mix {
                if *w > T::zero() {
                    v += *w * view.value(signal, r.signal, &r.prediction)?;
                }
            }
            Ok(v)
        }
        None => prescribed_value(&view, i, signal),
    }
}

fn prescribed_value<T: Real>(view: &AgentView<'_, T>, i: usize, signal: usize) -> Result<T> {
    let own = view.profile.agent(i);
    let mut v = T::zero();
    for r in 0..view.prior.m() {
        let w = own.theta.prob(r, signal);
        if w > T::zero() {
            v += w * view.value(signal, r, own.prediction(signal, r))?;
        }
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestResponse<T> {
    pub signal: usize,
    pub prediction: Vec<T>,
    pub value: T,
    /// Best value for each reported signal, with its optimal prediction.
    pub values: Vec<T>,
    pub predictions: Vec<Vec<T>>,
    /// Another reported signal comes within [`TIE_TOL`] of the best.
    pub tie: bool,
}

fn best_response_view<T: Real>(view: &AgentView<'_, T>, signal: usize) -> Result<BestResponse<T>> {
    let m = view.prior.m();
    let mut values = Vec::with_capacity(m);
    let mut predictions = Vec::with_capacity(m);
    for r in 0..m {
        let p = view.optimal_prediction(signal, r);
        values.push(view.value(signal, r, &p)?);
        predictions.push(p);
    }
    let mut best = 0;
    for r in 1..m {
        if values[r] > values[best] {
            best = r;
        }
    }
    let tol = T::lit(TIE_TOL);
    let tie = (0..m).any(|r| r != best && values[best] - values[r] <= tol);
    Ok(BestResponse {
        signal: best,
        prediction: predictions[best].clone(),
        value: values[best],
        values,
        predictions,
        tie,
    })
}

pub fn best_response<T: Real>(
    config: &MechanismConfig<T>,
    prior: &PairwisePrior<T>,
    profile: &StrategyProfile<T>,
    i: usize,
    signal: usize,
) -> Result<BestResponse<T>> {
    best_response_view(&AgentView::new(config, prior, profile, i)?, signal)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapEntry<T> {
    pub agent: usize,
    pub signal: usize,
    pub prescribed_value: T,
    pub best_value: T,
    pub best_signal: usize,
    pub gap: T,
    /// Best achievable value for each pure reported signal.
    pub pure_values: Vec<T>,
    pub tie: bool,
}

impl<T: Real> GapEntry<T> {
    /// How much worse the best report of any signal other than `prescribed`
    /// is than the prescribed value. Positive means strictly worse.
    pub fn margin_against(&self, prescribed: usize) -> T {
        let runner_up = self
            .pure_values
            .iter()
            .enumerate()
            .filter(|&(r, _)| r != prescribed)
            .map(|(_, &v)| v)
            .fold(T::neg_infinity(), T::max);
        self.prescribed_value - runner_up
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport<T> {
    pub entries: Vec<GapEntry<T>>,
    pub max_gap: T,
    pub is_eps_equilibrium: bool,
}

/// Gap between the best response and the prescribed play for every agent
/// and private signal. The payoff is linear in the report distribution, so
/// pure reports with their optimal predictions cover all deviations.
pub fn check_equilibrium<T: Real>(
    config: &MechanismConfig<T>,
    prior: &PairwisePrior<T>,
    profile: &StrategyProfile<T>,
    eps: T,
) -> Result<EquilibriumReport<T>> {
    let mut entries = Vec::with_capacity(profile.n() * prior.m());
    for i in 0..profile.n() {
        let view = AgentView::new(config, prior, profile, i)?;
        for signal in 0..prior.m() {
            let br = best_response_view(&view, signal)?;
            let prescribed_value = prescribed_value(&view, i, signal)?;
            entries.push(GapEntry {
                agent: i,
                signal,
                prescribed_value,
                best_value: br.value,
                best_signal: br.signal,
                gap: br.value - prescribed_value,
                pure_values: br.values,
                tie: br.tie,
            });
        }
    }
    let max_gap = entries.iter().map(|e| e.gap).fold(T::neg_infinity(), T::max);
    Ok(EquilibriumReport {
        entries,
        max_gap,
        is_eps_equilibrium: max_gap <= eps,
    })
}
