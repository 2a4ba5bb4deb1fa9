//! Equilibrium predictions for fixed signal strategies.
//!
//! For every agent `i`, private `σ` and report `σ̂` the equilibrium prediction
//! satisfies
//!
//! ```text
//! p̂(i,σ,σ̂) = [α·θ_peers q_σ + β·Σ_{j,σ'} w(i,σ;j,σ') p̂(j,σ',σ̂)] / [α + β·Σ w]
//! w(i,σ;j,σ') = q(σ'|σ) θ_j[σ̂][σ'] / |peers(i)|
//! ```
//!
//! The system decouples across `σ̂` and across coordinates. The neighbor
//! weight fraction `βW/(α+βW)` is below one, so plain iteration contracts.

use super::config::MechanismConfig;
use super::expected::average_theta;
use crate::error::{Error, Result};
use crate::linalg::{solve_dense, Matrix};
use crate::scalar::Real;
use crate::signals::PairwisePrior;
use crate::strategy::{AgentStrategy, PredictionTable, SignalStrategy, StrategyProfile};

pub const SOLVER_TOL: f64 = 1e-12;
pub const ITERATION_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SolvedPredictions<T> {
    pub profile: StrategyProfile<T>,
    /// Sup-norm of `F(x) − x` at the returned point.
    pub residual: T,
    pub iterations: usize,
}

struct System<T> {
    n: usize,
    m: usize,
    alpha: T,
    beta: T,
    /// `[i][σ][c]`.
    anchors: Vec<T>,
    /// Per agent: peers and their signal strategies.
    peers: Vec<Vec<usize>>,
    thetas: Vec<SignalStrategy<T>>,
    conditional: Matrix<T>,
}

impl<T: Real> System<T> {
    fn new(config: &MechanismConfig<T>, prior: &PairwisePrior<T>, thetas: &[SignalStrategy<T>]) -> Result<Self> {
        config.validate()?;
        let n = thetas.len();
        let m = prior.m();
        if let Some(t) = thetas.iter().find(|t| t.m() != m) {
            return Err(Error::DimensionMismatch {
                what: "signal strategy size",
                expected: m,
                found: t.m(),
            });
        }
        // A placeholder profile gives access to the peer averaging helper.
        let placeholder = StrategyProfile::with_best_predictions(prior, thetas.to_vec())?;
        let mut peers = Vec::with_capacity(n);
        let mut anchors = Vec::with_capacity(n * m * m);
        for i in 0..n {
            let p = config.peer_set(n, i)?;
            let mix = average_theta(&placeholder, &p);
            for s in 0..m {
                anchors.extend(mix.mul_vec(&prior.column(s)));
            }
            peers.push(p);
        }
        Ok(Self {
            n,
            m,
            alpha: config.alpha,
            beta: config.beta,
            anchors,
            peers,
            thetas: thetas.to_vec(),
            conditional: prior.conditional().clone(),
        })
    }

    fn anchor(&self, i: usize, s: usize) -> &[T] {
        let start = (i * self.m + s) * self.m;
        &self.anchors[start..start + self.m]
    }

    /// Neighbor weights `(j, σ', w)` for row `(i, σ, σ̂)`.
    fn weights(&self, i: usize, s: usize, r: usize) -> Vec<(usize, usize, T)> {
        let share = T::one() / T::from_usize_exact(self.peers[i].len());
        let mut out = Vec::new();
        for &j in &self.peers[i] {
            for s2 in 0..self.m {
                let w = share * self.conditional[(s2, s)] * self.thetas[j].prob(r, s2);
                if w > T::zero() {
                    out.push((j, s2, w));
                }
            }
        }
        out
    }

    fn idx(&self, i: usize, s: usize, r: usize) -> usize {
        ((i * self.m + s) * self.m + r) * self.m
    }

    /// One application of the fixed-point map.
    fn apply(&self, x: &[T], out: &mut [T]) {
        let m = self.m;
        for i in 0..self.n {
            for s in 0..m {
                let anchor = self.anchor(i, s);
                for r in 0..m {
                    let k = self.idx(i, s, r);
                    let ws = self.weights(i, s, r);
                    let wsum: T = ws.iter().map(|w| w.2).sum();
                    if self.beta == T::zero() || wsum == T::zero() {
                        out[k..k + m].copy_from_slice(anchor);
                        continue;
                    }
                    let denom = self.alpha + self.beta * wsum;
                    for c in 0..m {
                        let mix: T = ws.iter().map(|&(j, s2, w)| w * x[self.idx(j, s2, r) + c]).sum();
                        out[k + c] = (self.alpha * anchor[c] + self.beta * mix) / denom;
                    }
                }
            }
        }
    }

    fn residual(&self, x: &[T]) -> T {
        let mut fx = vec![T::zero(); x.len()];
        self.apply(x, &mut fx);
        sup_diff(x, &fx)
    }

    fn into_profile(self, x: &[T]) -> Result<StrategyProfile<T>> {
        let m = self.m;
        let agents = (0..self.n)
            .map(|i| {
                let table = PredictionTable::from_fn(m, |s, r| {
                    let k = self.idx(i, s, r);
                    x[k..k + m].to_vec()
                })?;
                AgentStrategy::new(self.thetas[i].clone(), table)
            })
            .collect::<Result<Vec<_>>>()?;
        StrategyProfile::new(agents)
    }
}

fn sup_diff<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc.max((x - y).abs()))
}

/// Plain fixed-point iteration from the anchors to sup-norm change below
/// [`SOLVER_TOL`].
pub fn solve_equilibrium_predictions<T: Real>(
    config: &MechanismConfig<T>,
    prior: &PairwisePrior<T>,
    thetas: &[SignalStrategy<T>],
) -> Result<SolvedPredictions<T>> {
    let sys = System::new(config, prior, thetas)?;
    let (n, m) = (sys.n, sys.m);
    let mut x = vec![T::zero(); n * m * m * m];
    for i in 0..n {
        for s in 0..m {
            for r in 0..m {
                let k = sys.idx(i, s, r);
                x[k..k + m].copy_from_slice(sys.anchor(i, s));
            }
        }
    }
    let tol = T::lit(SOLVER_TOL);
    let mut next = x.clone();
    let mut change = T::infinity();
    for it in 1..=ITERATION_CAP {
        sys.apply(&x, &mut next);
        change = sup_diff(&x, &next);
        std::mem::swap(&mut x, &mut next);
        if change < tol {
            let residual = sys.residual(&x);
            return Ok(SolvedPredictions {
                profile: sys.into_profile(&x)?,
                residual,
                iterations: it,
            });
        }
    }
    Err(Error::IterationCap {
        cap: ITERATION_CAP,
        residual: change.as_f64(),
    })
}

/// The same system solved directly: one dense `nm × nm` system per reported
/// signal, with the `m` coordinates as right-hand sides.
pub fn solve_equilibrium_predictions_direct<T: Real>(
    config: &MechanismConfig<T>,
    prior: &PairwisePrior<T>,
    thetas: &[SignalStrategy<T>],
) -> Result<SolvedPredictions<T>> {
    let sys = System::new(config, prior, thetas)?;
    let (n, m) = (sys.n, sys.m);
    let size = n * m;
    let mut x = vec![T::zero(); n * m * m * m];
    for r in 0..m {
        let mut a = Matrix::zeros(size, size);
        let mut b = Matrix::zeros(size, m);
        for i in 0..n {
            for s in 0..m {
                let row = i * m + s;
                let ws = sys.weights(i, s, r);
                let wsum: T = ws.iter().map(|w| w.2).sum();
                a[(row, row)] = sys.alpha + sys.beta * wsum;
                for &(j, s2, w) in &ws {
                    a[(row, j * m + s2)] -= sys.beta * w;
                }
                for (c, &v) in sys.anchor(i, s).iter().enumerate() {
                    b[(row, c)] = sys.alpha * v;
                }
            }
        }
        let sol = solve_dense(&a, &b)?;
        for i in 0..n {
            for s in 0..m {
                let k = sys.idx(i, s, r);
                for c in 0..m {
                    x[k + c] = sol[(i * m + s, c)];
                }
            }
        }
    }
    let residual = sys.residual(&x);
    Ok(SolvedPredictions {
        profile: sys.into_profile(&x)?,
        residual,
        iterations: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::ScoringRule;
    use crate::signals::{random_snife_prior, PermutationMap};
    use crate::strategy::aggregate_strategies;

    #[test]
    fn zero_beta_is_leave_one_out_prediction() {
        let prior = random_snife_prior::<f64>(3, 2, 3).unwrap().to_pairwise().unwrap();
        let cfg = MechanismConfig::new(1.0, 0.0, ScoringRule::Log).unwrap();
        let thetas = vec![
            SignalStrategy::identity(3),
            SignalStrategy::uniform(3),
            SignalStrategy::permutation(&PermutationMap::cycle(3)),
        ];
        let sol = solve_equilibrium_predictions(&cfg, &prior, &thetas).unwrap();
        let agg = aggregate_strategies(&sol.profile);
        for i in 0..3 {
            for s in 0..3 {
                let want = agg.leave_one_out[i].mul_vec(&prior.column(s));
                for r in 0..3 {
                    assert_eq!(sol.profile.agent(i).prediction(s, r), want.as_slice());
                }
            }
        }
    }

    #[test]
    fn permutation_fixed_point() {
        let prior = random_snife_prior::<f64>(3, 3, 11).unwrap().to_pairwise().unwrap();
        let cfg = MechanismConfig::new(1.0, 0.05, ScoringRule::Log).unwrap();
        let pi = PermutationMap::cycle(3);
        let theta = SignalStrategy::permutation(&pi);
        let sol = solve_equilibrium_predictions(&cfg, &prior, &vec![theta.clone(); 4]).unwrap();
        for s in 0..3 {
            let want = theta.mul_vec(&prior.column(s));
            let got = sol.profile.agent(1).prediction(s, pi.apply(s));
            assert!(got.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-13));
        }
    }

    #[test]
    fn direct_and_iterative_agree() {
        let prior = random_snife_prior::<f64>(3, 2, 5).unwrap().to_pairwise().unwrap();
        let cfg = MechanismConfig::new(1.0, 0.3, ScoringRule::Quadratic).unwrap();
        let thetas = vec![
            SignalStrategy::identity(3),
            SignalStrategy::uniform(3),
            SignalStrategy::constant(3, 1),
            SignalStrategy::pure(&[0, 0, 2]),
        ];
        let a = solve_equilibrium_predictions(&cfg, &prior, &thetas).unwrap();
        let b = solve_equilibrium_predictions_direct(&cfg, &prior, &thetas).unwrap();
        assert!(a.profile.max_abs_diff(&b.profile) < 1e-10);
        assert!(a.residual < 1e-12);
        assert!(b.residual < 1e-12);
    }
}
