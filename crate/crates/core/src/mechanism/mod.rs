//! The truthful mechanism, the disagreement mechanism built on top of it,
//! and exact expectations under a common prior.

mod config;
mod expected;
mod montecarlo;
mod payments;
mod solver;
mod welfare;

pub use config::{MechanismConfig, Report, Variant};
pub use expected::{
    best_response, check_equilibrium, expected_conditional_payoff, BestResponse, EquilibriumReport, GapEntry,
    TIE_TOL,
};
pub use montecarlo::{monte_carlo_payments, sample_matching, MonteCarloSummary, BATCH};
pub use payments::{
    classification_pair_score, exact_zero_sum_total, pair_scores, realized_payments, realized_payments_with,
    zero_sum_scores, PeerPaymentScheme, RoundMatching, RoundPayments, TruthfulScheme,
};
pub use solver::{
    solve_equilibrium_predictions, solve_equilibrium_predictions_direct, SolvedPredictions, ITERATION_CAP,
    SOLVER_TOL,
};
pub use welfare::{welfare_metrics, WelfareBreakdown};
