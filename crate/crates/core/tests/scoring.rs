mod common;

use common::*;
use peerpred::scoring::{expected_score, point_score, ScoringRule};
use proptest::prelude::*;

const RULES: [ScoringRule; 2] = [ScoringRule::Log, ScoringRule::Quadratic];

/// All points of the simplex grid with step `1/steps`, optionally interior only.
fn grid(m: usize, steps: usize, interior: bool) -> Vec<Vec<f64>> {
    let lo = usize::from(interior);
    let mut out = Vec::new();
    let mut stack = vec![(Vec::new(), steps)];
    while let Some((prefix, left)) = stack.pop() {
        if prefix.len() == m - 1 {
            if left >= lo {
                let mut p: Vec<f64> = prefix.iter().map(|&c: &usize| c as f64 / steps as f64).collect();
                p.push(left as f64 / steps as f64);
                out.push(p);
            }
            continue;
        }
        for c in lo..=left {
            let mut next = prefix.clone();
            next.push(c);
            stack.push((next, left - c));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn strictly_proper((delta, p) in (2usize..6).prop_flat_map(|m| (simplex(m), simplex(m)))) {
        for rule in RULES {
            let truthful = expected_score(rule, &delta, &delta).unwrap();
            let other = expected_score(rule, &delta, &p).unwrap();
            if max_abs(&delta, &p) > 1e-6 {
                prop_assert!(truthful > other);
            } else {
                prop_assert!(truthful >= other - 1e-12);
            }
        }
    }

    #[test]
    fn linear_in_first_argument((a, b, p, w) in (2usize..6).prop_flat_map(|m| (simplex(m), simplex(m), simplex(m), 0.0f64..1.0))) {
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| w * x + (1.0 - w) * y).collect();
        for rule in RULES {
            let lhs = expected_score(rule, &mix, &p).unwrap();
            let rhs = w * expected_score(rule, &a, &p).unwrap() + (1.0 - w) * expected_score(rule, &b, &p).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-14);
        }
    }

    #[test]
    fn expectation_of_point_scores((delta, p) in (2usize..6).prop_flat_map(|m| (simplex(m), simplex(m)))) {
        for rule in RULES {
            let direct: f64 = (0..delta.len()).map(|s| delta[s] * point_score(rule, s, &p).unwrap()).sum();
            prop_assert!((direct - expected_score(rule, &delta, &p).unwrap()).abs() <= 1e-14);
        }
    }
}

#[test]
fn log_examples() {
    let e = expected_score(ScoringRule::Log, &[0.5, 0.5], &[0.25, 0.75]).unwrap();
    assert!((e - (0.5 * 0.25f64.ln() + 0.5 * 0.75f64.ln())).abs() < 1e-15);
    assert!((e + 0.836988).abs() < 1e-6);
    let d = [0.2, 0.3, 0.5];
    let entropy: f64 = d.iter().map(|x: &f64| -x * x.ln()).sum();
    assert!((expected_score(ScoringRule::Log, &d, &d).unwrap() + entropy).abs() < 1e-15);
    assert!(point_score(ScoringRule::Log, 1, &[1.0, 0.0]).is_err());
    assert_eq!(expected_score(ScoringRule::Log, &[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
}

#[test]
fn quadratic_grid_argmax() {
    let delta = [0.3, 0.7];
    let best = grid(2, 200, false)
        .into_iter()
        .map(|p| (expected_score(ScoringRule::Quadratic, &delta, &p).unwrap(), p))
        .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .unwrap();
    assert!(max_abs(&best.1, &delta) < 1e-12);
}

#[test]
fn mixture_maximizer() {
    // Weighted sum of scores against point masses is maximized at the
    // normalized weight vector.
    let weights = [(0.5, 0usize), (0.2, 1), (0.1, 2), (0.4, 0)];
    let total: f64 = weights.iter().map(|w| w.0).sum();
    let mut want = [0.0; 3];
    for &(w, s) in &weights {
        want[s] += w / total;
    }
    for rule in RULES {
        let objective = |p: &[f64]| -> f64 { weights.iter().map(|&(w, s)| w * point_score(rule, s, p).unwrap()).sum() };
        let best = grid(3, 100, true)
            .into_iter()
            .max_by(|a, b| objective(a).partial_cmp(&objective(b)).unwrap())
            .unwrap();
        assert!(max_abs(&best, &want) <= 0.01, "{rule}: {best:?} vs {want:?}");
        assert!(objective(&want) >= objective(&best));
    }
}

#[test]
fn rule_names_parse() {
    for (s, r) in [("log", ScoringRule::Log), ("Quadratic", ScoringRule::Quadratic), ("brier", ScoringRule::Quadratic)] {
        assert_eq!(s.parse::<ScoringRule>().unwrap(), r);
    }
    assert!("spherical".parse::<ScoringRule>().is_err());
    assert_eq!(ScoringRule::default(), ScoringRule::Log);
}
