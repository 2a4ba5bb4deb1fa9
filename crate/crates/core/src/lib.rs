//! Peer-prediction mechanisms over explicit common priors.

pub mod divergence;
pub mod error;
pub mod io;
pub mod linalg;
pub mod mechanism;
pub mod scalar;
pub mod scoring;
pub mod signals;
pub mod strategy;
pub mod suite;
pub mod theorems;

pub use error::{Error, Result};
pub use scalar::Real;

pub use linalg::Matrix;
pub use mechanism::{MechanismConfig, Report, Variant, WelfareBreakdown};
pub use scoring::ScoringRule;
pub use signals::{LatentStatePrior, PairwisePrior, PermutationMap, SignalSpace};
pub use strategy::{AgentStrategy, PredictionTable, SignalStrategy, StrategyProfile};

pub type Prior = PairwisePrior<f64>;
pub type LatentPrior = LatentStatePrior<f64>;
pub type Theta = SignalStrategy<f64>;
pub type Agent = AgentStrategy<f64>;
pub type Profile = StrategyProfile<f64>;
pub type Config = MechanismConfig<f64>;
pub type Welfare = WelfareBreakdown<f64>;
