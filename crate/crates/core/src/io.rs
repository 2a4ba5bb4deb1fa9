//! JSON file formats for priors, profiles and mechanism configurations.
//!
//! Reals are IEEE doubles written with shortest round-trip formatting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mechanism::{MechanismConfig, Variant};
use crate::scoring::ScoringRule;
use crate::signals::{LatentStatePrior, PairwisePrior, SignalSpace, DEFAULT_TOL};
use crate::strategy::{AgentStrategy, PredictionTable, SignalStrategy, StrategyProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    Latent,
    Pairwise,
}

/// On-disk prior. Latent files carry `state_probs` and `emissions`
/// (`emissions[state][signal]`); pairwise files carry `marginal` and
/// `conditional` (`conditional[a][b] = q(a | b)`). Without `kind` the
/// present fields decide.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signals: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<PriorKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emissions: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginal: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditional: Option<Vec<Vec<f64>>>,
}

/// A parsed prior. Pairwise files are accepted without the symmetry check so
/// that validation can report on them.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedPrior {
    pub pairwise: PairwisePrior<f64>,
    pub latent: Option<LatentStatePrior<f64>>,
}

fn space(labels: Option<Vec<String>>, m: usize) -> Result<SignalSpace> {
    match labels {
        Some(l) => {
            if l.len() != m {
                return Err(Error::DimensionMismatch {
                    what: "signal labels",
                    expected: m,
                    found: l.len(),
                });
            }
            SignalSpace::new(l)
        }
        None => SignalSpace::indexed(m),
    }
}

impl PriorFile {
    pub fn from_latent(latent: &LatentStatePrior<f64>) -> Self {
        Self {
            signals: Some(latent.space().labels().to_vec()),
            kind: Some(PriorKind::Latent),
            state_probs: Some(latent.state_probs().to_vec()),
            emissions: Some(latent.emissions().to_rows()),
            ..Self::default()
        }
    }

    pub fn from_pairwise(prior: &PairwisePrior<f64>) -> Self {
        Self {
            signals: Some(prior.space().labels().to_vec()),
            kind: Some(PriorKind::Pairwise),
            marginal: Some(prior.marginal().to_vec()),
            conditional: Some(prior.conditional().to_rows()),
            ..Self::default()
        }
    }

    pub fn load(self) -> Result<LoadedPrior> {
        let kind = match self.kind {
            Some(k) => k,
            None if self.emissions.is_some() => PriorKind::Latent,
            None => PriorKind::Pairwise,
        };
        match kind {
            PriorKind::Latent => {
                let (Some(w), Some(e)) = (self.state_probs, self.emissions) else {
                    return Err(Error::InvalidConfig("latent prior needs state_probs and emissions".into()));
                };
                let e = Matrix::from_rows(e)?;
                let latent = LatentStatePrior::new(space(self.signals, e.cols())?, w, e, DEFAULT_TOL)?;
                Ok(LoadedPrior {
                    pairwise: latent.to_pairwise()?,
                    latent: Some(latent),
                })
            }
            PriorKind::Pairwise => {
                let (Some(q), Some(c)) = (self.marginal, self.conditional) else {
                    return Err(Error::InvalidConfig("pairwise prior needs marginal and conditional".into()));
                };
                let c = Matrix::from_rows(c)?;
                let pairwise =
                    PairwisePrior::without_symmetry_check(space(self.signals, c.rows())?, q, c, DEFAULT_TOL)?;
                Ok(LoadedPrior { pairwise, latent: None })
            }
        }
    }
}

pub fn parse_prior(text: &str) -> Result<LoadedPrior> {
    let file: PriorFile = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("prior JSON: {e}")))?;
    file.load()
}

pub fn latent_prior_json(latent: &LatentStatePrior<f64>) -> String {
    serde_json::to_string_pretty(&PriorFile::from_latent(latent)).expect("prior serializes")
}

pub fn pairwise_prior_json(prior: &PairwisePrior<f64>) -> String {
    serde_json::to_string_pretty(&PriorFile::from_pairwise(prior)).expect("prior serializes")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentFile {
    /// `theta[reported][private]`.
    pub theta: Vec<Vec<f64>>,
    /// `predictions[private][reported][coordinate]`.
    pub predictions: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileFile {
    pub n: usize,
    pub agents: Vec<AgentFile>,
}

impl ProfileFile {
    pub fn from_profile(profile: &StrategyProfile<f64>) -> Self {
        Self {
            n: profile.n(),
            agents: profile
                .agents()
                .iter()
                .map(|a| AgentFile {
                    theta: a.theta.to_rows(),
                    predictions: a.predictions.to_nested(),
                })
                .collect(),
        }
    }

    pub fn load(self) -> Result<StrategyProfile<f64>> {
        if self.n != self.agents.len() {
            return Err(Error::DimensionMismatch {
                what: "profile agents",
                expected: self.n,
                found: self.agents.len(),
            });
        }
        let agents = self
            .agents
            .into_iter()
            .map(|a| {
                let theta = SignalStrategy::new(Matrix::from_rows(a.theta)?)?;
                let m = theta.m();
                if a.predictions.len() != m || a.predictions.iter().any(|row| row.len() != m) {
                    return Err(Error::DimensionMismatch {
                        what: "prediction table",
                        expected: m,
                        found: a.predictions.len(),
                    });
                }
                let table = PredictionTable::from_fn(m, |s, r| a.predictions[s][r].clone())?;
                AgentStrategy::new(theta, table)
            })
            .collect::<Result<Vec<_>>>()?;
        StrategyProfile::new(agents)
    }
}

pub fn parse_profile(text: &str) -> Result<StrategyProfile<f64>> {
    let file: ProfileFile =
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("profile JSON: {e}")))?;
    file.load()
}

pub fn profile_json(profile: &StrategyProfile<f64>) -> String {
    serde_json::to_string_pretty(&ProfileFile::from_profile(profile)).expect("profile serializes")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismFile {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub rule: ScoringRule,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default, rename = "groupA", skip_serializing_if = "Option::is_none")]
    pub group_a: Option<Vec<usize>>,
}

impl MechanismFile {
    pub fn from_config(config: &MechanismConfig<f64>) -> Self {
        Self {
            alpha: config.alpha,
            beta: config.beta,
            rule: config.rule,
            variant: config.variant,
            group_a: config.group_a.clone(),
        }
    }

    pub fn load(self) -> Result<MechanismConfig<f64>> {
        let mut c = MechanismConfig::new(self.alpha, self.beta, self.rule)?.with_variant(self.variant);
        if let Some(g) = self.group_a {
            c = c.with_group_a(g);
        }
        Ok(c)
    }
}

pub fn parse_mechanism(text: &str) -> Result<MechanismConfig<f64>> {
    let file: MechanismFile =
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("mechanism JSON: {e}")))?;
    file.load()
}

pub fn mechanism_json(config: &MechanismConfig<f64>) -> String {
    serde_json::to_string_pretty(&MechanismFile::from_config(config)).expect("config serializes")
}
