use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::scoring::ScoringRule;
use crate::signals::check_distribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Prediction score plus the agreement-gated information score.
    #[default]
    Truthful,
    /// Zero-sum group game plus the classification reward.
    Disagreement,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Truthful => "truthful",
            Self::Disagreement => "disagreement",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "truthful" => Ok(Self::Truthful),
            "disagreement" => Ok(Self::Disagreement),
            other => Err(Error::InvalidConfig(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechanismConfig<T> {
    pub alpha: T,
    pub beta: T,
    pub rule: ScoringRule,
    pub variant: Variant,
    /// Members of group A for the disagreement variant; the rest form group B.
    /// `None` splits agents into first half and second half by index.
    pub group_a: Option<Vec<usize>>,
}

impl<T: Real> MechanismConfig<T> {
    pub fn new(alpha: T, beta: T, rule: ScoringRule) -> Result<Self> {
        let c = Self {
            alpha,
            beta,
            rule,
            variant: Variant::Truthful,
            group_a: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn truthful(alpha: T, beta: T, rule: ScoringRule) -> Result<Self> {
        Self::new(alpha, beta, rule)
    }

    pub fn disagreement(alpha: T, beta: T, rule: ScoringRule) -> Result<Self> {
        Ok(Self::new(alpha, beta, rule)?.with_variant(Variant::Disagreement))
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_group_a(mut self, group_a: Vec<usize>) -> Self {
        self.group_a = Some(group_a);
        self
    }

    /// `α > 0` and `β ≥ 0`. `β = 0` reduces to a pure prediction market and
    /// is kept for limiting-case checks.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > T::zero()) || !self.alpha.is_finite() {
            return Err(Error::InvalidConfig(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.beta >= T::zero()) || !self.beta.is_finite() {
            return Err(Error::InvalidConfig(format!("beta must be non-negative, got {}", self.beta)));
        }
        Ok(())
    }

    /// Warns when `β/α ≥ 1/(4m)`, outside the regime where predictions stay
    /// anchored to the proper-scoring target.
    pub fn regime_warning(&self, m: usize) -> Option<String> {
        let bound = T::one() / T::from_usize_exact(4 * m);
        let ratio = self.beta / self.alpha;
        (ratio >= bound).then(|| format!("beta/alpha = {ratio} is not below 1/(4m) = {bound}"))
    }

    /// Groups A and B for `n` agents. Each needs at least two members so
    /// that everyone has an in-group peer.
    pub fn groups(&self, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        let a: Vec<usize> = match &self.group_a {
            Some(a) => {
                let mut a = a.clone();
                a.sort_unstable();
                a.dedup();
                if a.iter().any(|&i| i >= n) {
                    return Err(Error::InvalidConfig(format!("group A {a:?} has indices outside 0..{n}")));
                }
                a
            }
            None => (0..n / 2).collect(),
        };
        let b: Vec<usize> = (0..n).filter(|i| a.binary_search(i).is_err()).collect();
        if a.len() < 2 || b.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "both groups need at least 2 agents, got |A|={}, |B|={}",
                a.len(),
                b.len()
            )));
        }
        Ok((a, b))
    }

    /// Agents whose reports enter agent `i`'s action-dependent payment.
    pub fn peer_set(&self, n: usize, i: usize) -> Result<Vec<usize>> {
        if i >= n || n < 2 {
            return Err(Error::InvalidConfig(format!("agent {i} out of range for n={n}")));
        }
        match self.variant {
            Variant::Truthful => Ok((0..n).filter(|&j| j != i).collect()),
            Variant::Disagreement => {
                if n < 4 {
                    return Err(Error::InvalidConfig(format!("disagreement variant needs n >= 4, got {n}")));
                }
                let (a, b) = self.groups(n)?;
                let own = if a.contains(&i) { a } else { b };
                Ok(own.into_iter().filter(|&j| j != i).collect())
            }
        }
    }
}

/// `(σ̂, p̂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub signal: usize,
    pub prediction: Vec<T>,
}

impl<T: Real> Report<T> {
    pub fn new(signal: usize, prediction: Vec<T>) -> Result<Self> {
        if signal >= prediction.len() {
            return Err(Error::InvalidConfig(format!(
                "reported signal {signal} outside 0..{}",
                prediction.len()
            )));
        }
        check_distribution("report prediction", &prediction, T::lit(1e-9))?;
        Ok(Self { signal, prediction })
    }

    /// The log rule needs a strictly positive prediction to be scorable
    /// against every possible outcome.
    pub fn check_rule(&self, rule: ScoringRule) -> Result<()> {
        if rule == ScoringRule::Log {
            if let Some(signal) = self.prediction.iter().position(|&x| x <= T::zero()) {
                return Err(Error::LogDomain { signal });
            }
        }
        Ok(())
    }
}
