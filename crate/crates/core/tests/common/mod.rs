#![allow(dead_code)]

use peerpred::mechanism::{realized_payments, RoundMatching};
use peerpred::{Config, LatentPrior, Matrix, PermutationMap, Profile, Report, SignalStrategy};
use proptest::prelude::*;

/// Probability vector of length `m` with entries bounded away from zero.
pub fn simplex(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.02f64..1.0, m).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

/// Probability vector that may contain exact zeros.
pub fn sparse_simplex(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.02f64..1.0], m).prop_filter_map("all zero", |v| {
        let s: f64 = v.iter().sum();
        (s > 0.0).then(|| v.into_iter().map(|x| x / s).collect())
    })
}

pub fn strategy_matrix(m: usize) -> impl Strategy<Value = SignalStrategy<f64>> {
    prop::collection::vec(simplex(m), m).prop_map(move |cols| {
        SignalStrategy::new(Matrix::from_fn(m, m, |r, s| cols[s][r])).unwrap()
    })
}

pub fn permutation(m: usize) -> impl Strategy<Value = PermutationMap> {
    Just((0..m).collect::<Vec<usize>>())
        .prop_shuffle()
        .prop_map(|v| PermutationMap::new(v).unwrap())
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

/// `Σ (√p − √q)²` written out independently of the library.
pub fn hellinger_oracle(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..p.len() {
        let d = p[i].sqrt() - q[i].sqrt();
        total += d * d;
    }
    total
}

/// Odometer step over digits in base `base`; false after wrapping.
pub fn next(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

/// Average M+ welfare over every signal profile, report profile and
/// matching in the full product space.
pub fn full_product_welfare(cfg: &Config, latent: &LatentPrior, profile: &Profile) -> f64 {
    let n = profile.n();
    let m = latent.m();
    let peer_opts: Vec<Vec<usize>> = (0..n).map(|i| cfg.peer_set(n, i).unwrap()).collect();
    let pair_opts: Vec<Vec<(usize, usize)>> = (0..n)
        .map(|i| {
            let o: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            o.iter().flat_map(|&j| o.iter().filter(move |&&k| k != j).map(move |&k| (j, k))).collect()
        })
        .collect();
    let mut total = 0.0;
    let mut signals = vec![0usize; n];
    loop {
        let ws = latent.joint_probability(&signals);
        let mut reports = vec![0usize; n];
        loop {
            let w = ws * (0..n).map(|i| profile.agent(i).theta.prob(reports[i], signals[i])).product::<f64>();
            if w > 0.0 {
                let rs: Vec<Report<f64>> = (0..n)
                    .map(|i| Report { signal: reports[i], prediction: profile.agent(i).prediction(signals[i], reports[i]).to_vec() })
                    .collect();
                let mut peer_idx = vec![0usize; n];
                let mut sum = 0.0;
                let mut count = 0usize;
                loop {
                    let mut pair_idx = vec![0usize; n];
                    loop {
                        let mt = RoundMatching {
                            peers: (0..n).map(|i| peer_opts[i][peer_idx[i]]).collect(),
                            pairs: (0..n).map(|i| pair_opts[i][pair_idx[i]]).collect(),
                        };
                        sum += realized_payments(cfg, &rs, &mt).unwrap().total.iter().sum::<f64>() / n as f64;
                        count += 1;
                        if !next_mixed(&mut pair_idx, &pair_opts.iter().map(Vec::len).collect::<Vec<_>>()) {
                            break;
                        }
                    }
                    if !next_mixed(&mut peer_idx, &peer_opts.iter().map(Vec::len).collect::<Vec<_>>()) {
                        break;
                    }
                }
                total += w * sum / count as f64;
            }
            if !next(&mut reports, m) {
                break;
            }
        }
        if !next(&mut signals, m) {
            break;
        }
    }
    total
}

pub fn next_mixed(digits: &mut [usize], bases: &[usize]) -> bool {
    for (d, &b) in digits.iter_mut().zip(bases) {
        *d += 1;
        if *d < b {
            return true;
        }
        *d = 0;
    }
    false
}

