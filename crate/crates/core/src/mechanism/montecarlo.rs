//! Sampled payments, used as an independent check on the exact expectations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{MechanismConfig, Report, Variant};
use super::payments::{realized_payments, RoundMatching};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::signals::LatentStatePrior;
use crate::strategy::StrategyProfile;

/// Trials per random stream. Each batch draws from its own ChaCha stream, so
/// results do not depend on how batches are scheduled.
pub const BATCH: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary<T> {
    pub trials: usize,
    pub mean_payments: Vec<T>,
    pub stderr_payments: Vec<T>,
    /// Average payment per agent per round.
    pub mean_welfare: T,
    pub stderr_welfare: T,
    /// Largest `|Σ_i score_M|` over sampled rounds (zero for the truthful variant).
    pub max_zero_sum_residual: T,
}

#[derive(Clone)]
struct Accumulator<T> {
    count: usize,
    pay: Vec<T>,
    pay_sq: Vec<T>,
    welfare: T,
    welfare_sq: T,
    max_residual: T,
}

impl<T: Real> Accumulator<T> {
    fn new(n: usize) -> Self {
        Self {
            count: 0,
            pay: vec![T::zero(); n],
            pay_sq: vec![T::zero(); n],
            welfare: T::zero(),
            welfare_sq: T::zero(),
            max_residual: T::zero(),
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.count += other.count;
        for i in 0..self.pay.len() {
            self.pay[i] += other.pay[i];
            self.pay_sq[i] += other.pay_sq[i];
        }
        self.welfare += other.welfare;
        self.welfare_sq += other.welfare_sq;
        self.max_residual = self.max_residual.max(other.max_residual);
        self
    }
}

fn categorical<T: Real>(rng: &mut ChaCha8Rng, probs: impl Iterator<Item = T>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, p) in probs.enumerate() {
        let p = p.as_f64();
        if p > 0.0 {
            last = k;
        }
        acc += p;
        if u < acc {
            return k;
        }
    }
    last
}

fn pick_other(rng: &mut ChaCha8Rng, pool: &[usize], exclude: &[usize]) -> usize {
    loop {
        let j = pool[rng.random_range(0..pool.len())];
        if !exclude.contains(&j) {
            return j;
        }
    }
}

pub fn sample_matching(
    rng: &mut ChaCha8Rng,
    n: usize,
    variant: Variant,
    groups: Option<&(Vec<usize>, Vec<usize>)>,
) -> RoundMatching {
    let everyone: Vec<usize> = (0..n).collect();
    let peers = (0..n)
        .map(|i| match groups {
            Some((a, b)) => pick_other(rng, if a.contains(&i) { a } else { b }, &[i]),
            None => pick_other(rng, &everyone, &[i]),
        })
        .collect();
    let pairs = match variant {
        Variant::Truthful => Vec::new(),
        Variant::Disagreement => (0..n)
            .map(|i| {
                let j = pick_other(rng, &everyone, &[i]);
                let k = pick_other(rng, &everyone, &[i, j]);
                (j, k)
            })
            .collect(),
    };
    RoundMatching { peers, pairs }
}

pub fn monte_carlo_payments<T: Real>(
    config: &MechanismConfig<T>,
    latent: &LatentStatePrior<T>,
    profile: &StrategyProfile<T>,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloSummary<T>> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    let n = profile.n();
    let m = latent.m();
    if profile.m() != m {
        return Err(Error::DimensionMismatch {
            what: "profile signals",
            expected: m,
            found: profile.m(),
        });
    }
    let groups = match config.variant {
        Variant::Truthful => None,
        Variant::Disagreement => {
            if n < 4 {
                return Err(Error::InvalidConfig(format!("disagreement variant needs n >= 4, got {n}")));
            }
            Some(config.groups(n)?)
        }
    };
    let batches = trials.div_ceil(BATCH);
    let inv_n = T::one() / T::from_usize_exact(n);

    let run_batch = |b: usize| -> Result<Accumulator<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        let count = BATCH.min(trials - b * BATCH);
        let mut acc = Accumulator::<T>::new(n);
        acc.count = count;
        for _ in 0..count {
            let state = categorical(&mut rng, latent.state_probs().iter().copied());
            let reports = (0..n)
                .map(|i| {
                    let s = categorical(&mut rng, latent.emissions().row(state).iter().copied());
                    let a = profile.agent(i);
                    let r = categorical(&mut rng, (0..m).map(|r| a.theta.prob(r, s)));
                    Report {
                        signal: r,
                        prediction: a.prediction(s, r).to_vec(),
                    }
                })
                .collect::<Vec<_>>();
            let matching = sample_matching(&mut rng, n, config.variant, groups.as_ref());
            let pays = realized_payments(config, &reports, &matching)?;
            let mut welfare = T::zero();
            for (i, &p) in pays.total.iter().enumerate() {
                acc.pay[i] += p;
                acc.pay_sq[i] += p * p;
                welfare += p;
            }
            welfare *= inv_n;
            acc.welfare += welfare;
            acc.welfare_sq += welfare * welfare;
            if groups.is_some() {
                let residual: T = pays.base.iter().copied().sum();
                acc.max_residual = acc.max_residual.max(residual.abs());
            }
        }
        Ok(acc)
    };

    let parts: Vec<Accumulator<T>> = (0..batches).into_par_iter().map(run_batch).collect::<Result<_>>()?;
    let acc = parts.into_iter().fold(Accumulator::new(n), Accumulator::merge);

    let count = T::from_usize_exact(acc.count);
    let stderr = |sum: T, sum_sq: T| {
        if acc.count < 2 {
            return T::zero();
        }
        let mean = sum / count;
        let var = ((sum_sq - count * mean * mean) / (count - T::one())).max(T::zero());
        (var / count).sqrt()
    };
    Ok(MonteCarloSummary {
        trials: acc.count,
        mean_payments: acc.pay.iter().map(|&s| s / count).collect(),
        stderr_payments: acc.pay.iter().zip(&acc.pay_sq).map(|(&s, &q)| stderr(s, q)).collect(),
        mean_welfare: acc.welfare / count,
        stderr_welfare: stderr(acc.welfare, acc.welfare_sq),
        max_zero_sum_residual: acc.max_residual,
    })
}
