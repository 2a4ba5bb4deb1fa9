use serde::Serialize;

use crate::divergence::hellinger;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::signals::PairwisePrior;
use crate::strategy::{AgentStrategy, StrategyProfile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelfareBreakdown<T> {
    /// Expected `D*` between two random agents' predictions when their
    /// reported signals differ.
    pub diversity: T,
    /// Expected `√D*` between two random agents' predictions when their
    /// reported signals agree.
    pub inconsistency: T,
    /// Expected `D*` between two random agents' predictions.
    pub total_divergence: T,
    pub classification_score: T,
    /// Average payment under the disagreement mechanism.
    pub average_welfare: T,
}

impl<T: Real> WelfareBreakdown<T> {
    pub fn max_abs_diff(&self, other: &Self) -> T {
        [
            (self.diversity, other.diversity),
            (self.inconsistency, other.inconsistency),
            (self.total_divergence, other.total_divergence),
            (self.classification_score, other.classification_score),
            (self.average_welfare, other.average_welfare),
        ]
        .iter()
        .fold(T::zero(), |acc, &(a, b)| acc.max((a - b).abs()))
    }
}

/// Identical agents collapsed into classes with multiplicities.
fn classes<T: Real>(profile: &StrategyProfile<T>) -> Vec<(&AgentStrategy<T>, usize)> {
    let mut out: Vec<(&AgentStrategy<T>, usize)> = Vec::new();
    for a in profile.agents() {
        match out.iter_mut().find(|(b, _)| *b == a) {
            Some((_, k)) => *k += 1,
            None => out.push((a, 1)),
        }
    }
    out
}

/// Exact sums over ordered pairs of distinct agents (each with weight
/// `1/(n(n−1))`), private signal pairs, and reported signal pairs.
pub fn welfare_metrics<T: Real>(prior: &PairwisePrior<T>, profile: &StrategyProfile<T>) -> Result<WelfareBreakdown<T>> {
    let m = prior.m();
    if profile.m() != m {
        return Err(Error::DimensionMismatch {
            what: "profile signals",
            expected: m,
            found: profile.m(),
        });
    }
    let n = profile.n();
    let pair_weight = T::one() / T::from_usize_exact(n * (n - 1));
    let cls = classes(profile);
    let mut diversity = T::zero();
    let mut inconsistency = T::zero();
    let mut same_divergence = T::zero();
    for (a, ka) in &cls {
        for (b, kb) in &cls {
            let pairs = if std::ptr::eq(*a, *b) { ka * (ka - 1) } else { ka * kb };
            if pairs == 0 {
                continue;
            }
            let w_pairs = pair_weight * T::from_usize_exact(pairs);
            for s in 0..m {
                for t in 0..m {
                    let w_sig = w_pairs * prior.joint(s, t);
                    if w_sig == T::zero() {
                        continue;
                    }
                    for r in 0..m {
                        let wr = a.theta.prob(r, s);
                        if wr == T::zero() {
                            continue;
                        }
                        for u in 0..m {
                            let wu = b.theta.prob(u, t);
                            if wu == T::zero() {
                                continue;
                            }
                            let w = w_sig * wr * wu;
                            let d = hellinger(a.prediction(s, r), b.prediction(t, u));
                            if r != u {
                                diversity += w * d;
                            } else {
                                inconsistency += w * d.sqrt();
                                same_divergence += w * d;
                            }
                        }
                    }
                }
            }
        }
    }
    let classification_score = diversity - inconsistency;
    Ok(WelfareBreakdown {
        diversity,
        inconsistency,
        total_divergence: diversity + same_divergence,
        classification_score,
        average_welfare: classification_score,
    })
}
