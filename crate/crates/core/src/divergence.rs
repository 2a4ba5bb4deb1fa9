//! f-divergences in the convention `D_f(p, q) = Σ p(σ) f(q(σ)/p(σ))`.
//!
//! With `f(x) = (√x − 1)²` this is the Hellinger divergence `Σ (√p − √q)²`,
//! and with `f(x) = −ln x` it is `KL(p ‖ q)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Tolerance used when comparing likelihood ratios by cross-multiplication.
pub const RATIO_TOL: f64 = 1e-12;

type ScalarFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

#[derive(Clone)]
pub enum ConvexGenerator<T> {
    Hellinger,
    KullbackLeibler,
    Custom {
        name: String,
        f: ScalarFn<T>,
        second_derivative: ScalarFn<T>,
        /// `lim_{x→∞} f(x)/x`, the value of `0 · f(q/0)` per unit of `q`.
        recession_slope: T,
    },
}

impl<T: Real> fmt::Debug for ConvexGenerator<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl<T: Real> ConvexGenerator<T> {
    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(T) -> T + Send + Sync + 'static,
        second_derivative: impl Fn(T) -> T + Send + Sync + 'static,
        recession_slope: T,
    ) -> Self {
        Self::Custom {
            name: name.into(),
            f: Arc::new(f),
            second_derivative: Arc::new(second_derivative),
            recession_slope,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Self::Hellinger => "hellinger",
            Self::KullbackLeibler => "kl",
            Self::Custom { name, .. } => name,
        }
    }

    pub fn eval(&self, x: T) -> T {
        match self {
            Self::Hellinger => {
                let r = x.sqrt() - T::one();
                r * r
            }
            Self::KullbackLeibler => -x.ln(),
            Self::Custom { f, .. } => f(x),
        }
    }

    pub fn second_derivative(&self, x: T) -> T {
        match self {
            Self::Hellinger => hellinger_second_derivative(x),
            Self::KullbackLeibler => (x * x).recip(),
            Self::Custom {
                second_derivative, ..
            } => second_derivative(x),
        }
    }

    pub fn recession_slope(&self) -> T {
        match self {
            Self::Hellinger => T::one(),
            Self::KullbackLeibler => T::zero(),
            Self::Custom { recession_slope, .. } => *recession_slope,
        }
    }
}

/// `f''(x) = ½ x^{-3/2}` for `f(x) = (√x − 1)²`. Decreasing, so on `[a, b]`
/// its minimum is the value at `b`.
pub fn hellinger_second_derivative<T: Real>(x: T) -> T {
    T::lit(0.5) * x.powf(T::lit(-1.5))
}

fn same_len<T>(p: &[T], q: &[T]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            what: "distribution length",
            expected: p.len(),
            found: q.len(),
        });
    }
    Ok(())
}

pub fn f_divergence<T: Real>(generator: &ConvexGenerator<T>, p: &[T], q: &[T]) -> Result<T> {
    same_len(p, q)?;
    if let ConvexGenerator::Hellinger = generator {
        return Ok(hellinger(p, q));
    }
    let mut total = T::zero();
    for (index, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        let term = if pi == T::zero() {
            if qi == T::zero() {
                T::zero()
            } else {
                qi * generator.recession_slope()
            }
        } else {
            pi * generator.eval(qi / pi)
        };
        if !term.is_finite() {
            return Err(Error::UnboundedDivergence { index });
        }
        total += term;
    }
    Ok(total)
}

/// `D*(p, q) = Σ (√p − √q)²`, in `[0, 2]`.
pub fn hellinger<T: Real>(p: &[T], q: &[T]) -> T {
    assert_eq!(p.len(), q.len(), "hellinger: length mismatch");
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum()
}

/// `KL(p ‖ q)`; errors where `q(σ) = 0 < p(σ)`.
pub fn kl<T: Real>(p: &[T], q: &[T]) -> Result<T> {
    f_divergence(&ConvexGenerator::KullbackLeibler, p, q)
}

/// True iff some reported signal pools two private signals, each charged by
/// `p` or `q`, whose likelihood ratios under `p` and `q` differ. Exactly then
/// the information-monotonicity inequality is strict.
pub fn monotonicity_strict_predicate<T: Real>(theta: &Matrix<T>, p: &[T], q: &[T]) -> Result<bool> {
    same_len(p, q)?;
    if theta.cols() != p.len() {
        return Err(Error::DimensionMismatch {
            what: "strategy columns",
            expected: p.len(),
            found: theta.cols(),
        });
    }
    let tol = T::lit(RATIO_TOL);
    for r in 0..theta.rows() {
        let support: Vec<usize> = (0..p.len())
            .filter(|&s| theta[(r, s)] > T::zero() && (p[s] > T::zero() || q[s] > T::zero()))
            .collect();
        for (k, &s1) in support.iter().enumerate() {
            for &s2 in &support[k + 1..] {
                if (p[s2] * q[s1] - q[s2] * p[s1]).abs() > tol {
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}

/// Strong-convexity lower bound on the Jensen gap contributed by two of the
/// mixture points: `(d2/2) · λ1λ2/(λ1+λ2) · (x1 − x2)²`.
pub fn convex_gap_lower_bound<T: Real>(lambda: &[T], x: &[T], i1: usize, i2: usize, d2: T) -> Result<T> {
    same_len(lambda, x)?;
    let (l1, l2) = (lambda[i1], lambda[i2]);
    let s = l1 + l2;
    if s <= T::zero() {
        return Err(Error::Precondition("λ1 + λ2 must be positive".into()));
    }
    let d = x[i1] - x[i2];
    Ok(d2 / T::lit(2.0) * (l1 * l2 / s) * d * d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_support_is_two() {
        assert_eq!(hellinger(&[1.0, 0.0], &[0.0, 1.0]), 2.0);
    }

    #[test]
    fn kl_unbounded_on_zero_q() {
        assert_eq!(kl(&[0.5, 0.5], &[1.0, 0.0]), Err(Error::UnboundedDivergence { index: 1 }));
        assert_eq!(kl(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), 2f64.ln());
    }

    #[test]
    fn generic_path_matches_hellinger() {
        let g = ConvexGenerator::custom(
            "hellinger-generic",
            |x: f64| (x.sqrt() - 1.0).powi(2),
            hellinger_second_derivative,
            1.0,
        );
        let p = [0.0, 0.3, 0.7];
        let q = [0.2, 0.0, 0.8];
        let a = f_divergence(&g, &p, &q).unwrap();
        assert!((a - hellinger(&p, &q)).abs() < 1e-15);
    }

    #[test]
    fn quadratic_gap_is_tight() {
        let b: f64 = convex_gap_lower_bound(&[0.5, 0.5], &[0.0, 1.0], 0, 1, 2.0).unwrap();
        let jensen: f64 = 0.5 * 0.0 + 0.5 * 1.0 - 0.25;
        assert!((b - 0.25).abs() < 1e-15);
        assert!((b - jensen).abs() < 1e-15);
        assert!(convex_gap_lower_bound(&[0.0, 0.0], &[0.0, 1.0], 0, 1, 2.0).is_err());
    }

    #[test]
    fn identity_never_strict() {
        let id = Matrix::<f64>::identity(3);
        assert!(!monotonicity_strict_predicate(&id, &[0.2, 0.3, 0.5], &[0.6, 0.2, 0.2]).unwrap());
    }
}
