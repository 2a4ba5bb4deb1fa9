use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Strictly proper scoring rules. Scores are raw, without affine normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoringRule {
    #[default]
    Log,
    Quadratic,
}

impl ScoringRule {
    pub fn name(self) -> &'static str {
        match self {
            Self::Log => "log",
            Self::Quadratic => "quadratic",
        }
    }

    /// `PS(σ, p̂)`.
    pub fn point_score<T: Real>(self, signal: usize, prediction: &[T]) -> Result<T> {
        match self {
            Self::Log => {
                let p = prediction[signal];
                if p <= T::zero() {
                    return Err(Error::LogDomain { signal });
                }
                Ok(p.ln())
            }
            Self::Quadratic => {
                let norm: T = prediction.iter().map(|&x| x * x).sum();
                Ok(T::lit(2.0) * prediction[signal] - norm)
            }
        }
    }

    /// `PS(δ, p̂) = Σ_σ δ(σ) PS(σ, p̂)`. Zero-weight outcomes are skipped, so a
    /// log prediction may vanish wherever `δ` does.
    pub fn expected_score<T: Real>(self, delta: &[T], prediction: &[T]) -> Result<T> {
        if delta.len() != prediction.len() {
            return Err(Error::DimensionMismatch {
                what: "prediction length",
                expected: delta.len(),
                found: prediction.len(),
            });
        }
        let mut total = T::zero();
        for (s, &d) in delta.iter().enumerate() {
            if d != T::zero() {
                total += d * self.point_score(s, prediction)?;
            }
        }
        Ok(total)
    }
}

pub fn point_score<T: Real>(rule: ScoringRule, signal: usize, prediction: &[T]) -> Result<T> {
    rule.point_score(signal, prediction)
}

pub fn expected_score<T: Real>(rule: ScoringRule, delta: &[T], prediction: &[T]) -> Result<T> {
    rule.expected_score(delta, prediction)
}

impl fmt::Display for ScoringRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoringRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "log" | "logarithmic" => Ok(Self::Log),
            "quadratic" | "brier" => Ok(Self::Quadratic),
            other => Err(Error::InvalidConfig(format!("unknown scoring rule {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_uniform_binary() {
        let v = ScoringRule::Log.point_score(1, &[0.5, 0.5]).unwrap();
        assert!((v - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn quadratic_point_mass_is_one() {
        assert_eq!(ScoringRule::Quadratic.point_score(0, &[1.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn log_zero_names_signal() {
        assert_eq!(
            ScoringRule::Log.point_score(0, &[0.0, 1.0]),
            Err(Error::LogDomain { signal: 0 })
        );
    }

    #[test]
    fn expected_log_is_negative_entropy() {
        let d = [0.2, 0.3, 0.5];
        let h: f64 = d.iter().map(|&x: &f64| x * x.ln()).sum();
        assert!((ScoringRule::Log.expected_score(&d, &d).unwrap() - h).abs() < 1e-15);
    }

    #[test]
    fn parses_ids() {
        assert_eq!("log".parse::<ScoringRule>().unwrap(), ScoringRule::Log);
        assert_eq!("Quadratic".parse::<ScoringRule>().unwrap(), ScoringRule::Quadratic);
        assert!("spherical".parse::<ScoringRule>().is_err());
    }
}
