//! Realized payments for one round of reports.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Zero};

use super::config::{MechanismConfig, Report, Variant};
use crate::divergence::hellinger;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::scoring::ScoringRule;

/// `(score_P, score_I)` of agent `i` against peer `j`.
pub fn pair_scores<T: Real>(rule: ScoringRule, r_i: &Report<T>, r_j: &Report<T>) -> Result<(T, T)> {
    let score_p = rule.point_score(r_j.signal, &r_i.prediction)?;
    let score_i = if r_i.signal != r_j.signal {
        T::zero()
    } else {
        let own = rule.expected_score(&r_j.prediction, &r_j.prediction)?;
        let cross = rule.expected_score(&r_j.prediction, &r_i.prediction)?;
        -(own - cross)
    };
    Ok((score_p, score_i))
}

/// Classification reward paid to a third agent for the pair `(j, k)`.
pub fn classification_pair_score<T: Real>(r_j: &Report<T>, r_k: &Report<T>) -> T {
    let d = hellinger(&r_j.prediction, &r_k.prediction);
    if r_j.signal != r_k.signal {
        d
    } else {
        -d.sqrt()
    }
}

/// A payment rule that pays an agent from its own report and one peer's.
pub trait PeerPaymentScheme<T: Real> {
    fn pair_payment(&self, own: &Report<T>, peer: &Report<T>) -> Result<T>;
}

/// The truthful mechanism as a two-report payment: `α·score_P + β·score_I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthfulScheme<T> {
    pub alpha: T,
    pub beta: T,
    pub rule: ScoringRule,
}

impl<T: Real> PeerPaymentScheme<T> for TruthfulScheme<T> {
    fn pair_payment(&self, own: &Report<T>, peer: &Report<T>) -> Result<T> {
        let (p, i) = pair_scores(self.rule, own, peer)?;
        Ok(if self.beta == T::zero() {
            self.alpha * p
        } else {
            self.alpha * p + self.beta * i
        })
    }
}

impl<T: Real> MechanismConfig<T> {
    pub fn scheme(&self) -> TruthfulScheme<T> {
        TruthfulScheme {
            alpha: self.alpha,
            beta: self.beta,
            rule: self.rule,
        }
    }
}

/// Who is matched with whom in one round: `peers[i]` is agent `i`'s
/// base-game peer and `pairs[i]` the pair whose classification reward `i`
/// receives (ignored by the truthful variant).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundMatching {
    pub peers: Vec<usize>,
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundPayments<T> {
    pub total: Vec<T>,
    /// Base-game payment (truthful) or zero-sum adjusted score (disagreement).
    pub base: Vec<T>,
    pub classification: Vec<T>,
}

/// Zero-sum adjustment: own payment minus the other group's total scaled by
/// the size of one's own group. Sums to zero exactly in exact arithmetic.
pub fn zero_sum_scores<N>(payments: &[N], group_a: &[usize], group_b: &[usize]) -> Vec<N>
where
    N: Num + Clone + FromPrimitive,
{
    let total = |g: &[usize]| g.iter().fold(N::zero(), |acc, &k| acc + payments[k].clone());
    let sum_a = total(group_a);
    let sum_b = total(group_b);
    let size_a = N::from_usize(group_a.len()).expect("group size representable");
    let size_b = N::from_usize(group_b.len()).expect("group size representable");
    let mut out = vec![N::zero(); payments.len()];
    for &i in group_a {
        out[i] = payments[i].clone() - sum_b.clone() / size_a.clone();
    }
    for &i in group_b {
        out[i] = payments[i].clone() - sum_a.clone() / size_b.clone();
    }
    out
}

/// Sum of zero-sum scores computed in exact rational arithmetic from the
/// floating-point base payments. Zero whenever the groups partition the agents.
pub fn exact_zero_sum_total<T: Real>(payments: &[T], group_a: &[usize], group_b: &[usize]) -> BigRational {
    let exact: Vec<BigRational> = payments
        .iter()
        .map(|p| BigRational::from_float(p.as_f64()).unwrap_or_else(|| BigRational::from_integer(BigInt::zero())))
        .collect();
    zero_sum_scores(&exact, group_a, group_b)
        .into_iter()
        .fold(BigRational::zero(), |acc, x| acc + x)
}

fn validate_matching(n: usize, matching: &RoundMatching, variant: Variant, groups: Option<&(Vec<usize>, Vec<usize>)>) -> Result<()> {
    if matching.peers.len() != n {
        return Err(Error::InvalidMatching(format!("{} peers for {n} agents", matching.peers.len())));
    }
    for (i, &j) in matching.peers.iter().enumerate() {
        if j >= n || j == i {
            return Err(Error::InvalidMatching(format!("agent {i} matched with {j}")));
        }
        if let Some((a, _)) = groups {
            if a.contains(&i) != a.contains(&j) {
                return Err(Error::InvalidMatching(format!("agent {i} matched across groups with {j}")));
            }
        }
    }
    if variant == Variant::Disagreement {
        if matching.pairs.len() != n {
            return Err(Error::InvalidMatching(format!("{} pairs for {n} agents", matching.pairs.len())));
        }
        for (i, &(j, k)) in matching.pairs.iter().enumerate() {
            if j >= n || k >= n || j == k || j == i || k == i {
                return Err(Error::InvalidMatching(format!("agent {i} given pair ({j}, {k})")));
            }
        }
    }
    Ok(())
}

pub fn realized_payments<T: Real>(
    config: &MechanismConfig<T>,
    reports: &[Report<T>],
    matching: &RoundMatching,
) -> Result<RoundPayments<T>> {
    let groups = match config.variant {
        Variant::Truthful => None,
        Variant::Disagreement => Some(config.groups(reports.len())?),
    };
    realized_payments_with(&config.scheme(), groups.as_ref(), reports, matching)
}

/// Pays a round under any peer payment scheme. With `groups` the scheme is
/// wrapped in the zero-sum trick and the classification reward is added.
pub fn realized_payments_with<T: Real, S: PeerPaymentScheme<T>>(
    scheme: &S,
    groups: Option<&(Vec<usize>, Vec<usize>)>,
    reports: &[Report<T>],
    matching: &RoundMatching,
) -> Result<RoundPayments<T>> {
    let n = reports.len();
    let variant = if groups.is_some() {
        Variant::Disagreement
    } else {
        Variant::Truthful
    };
    validate_matching(n, matching, variant, groups)?;
    let raw = (0..n)
        .map(|i| scheme.pair_payment(&reports[i], &reports[matching.peers[i]]))
        .collect::<Result<Vec<T>>>()?;
    match groups {
        None => Ok(RoundPayments {
            total: raw.clone(),
            base: raw,
            classification: vec![T::zero(); n],
        }),
        Some((a, b)) => {
            let base = zero_sum_scores(&raw, a, b);
            let classification: Vec<T> = matching
                .pairs
                .iter()
                .map(|&(j, k)| classification_pair_score(&reports[j], &reports[k]))
                .collect();
            let total = base.iter().zip(&classification).map(|(&x, &y)| x + y).collect();
            Ok(RoundPayments {
                total,
                base,
                classification,
            })
        }
    }
}
