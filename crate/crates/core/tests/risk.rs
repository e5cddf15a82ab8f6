mod common;

use common::rng;
use proptest::prelude::*;
use rand::Rng;
use stochconf::conformal::ScoreSet;
use stochconf::risk::{
    check_nonconformance_risk, cvar_bounds, cvar_widths, dkw_width, empirical_cvar, empirical_var, var_bounds,
    RiskMeasure, RiskSpec,
};

fn set(v: Vec<f64>) -> ScoreSet {
    ScoreSet::new(v).unwrap()
}

/// Smallest sample value whose empirical CDF reaches `beta`, by linear scan.
fn var_scan(v: &[f64], beta: f64) -> f64 {
    let k = v.len() as f64;
    let mut best = f64::INFINITY;
    for &a in v {
        let below = v.iter().filter(|&&z| z <= a).count() as f64;
        if below / k >= beta - 1e-12 && a < best {
            best = a;
        }
    }
    best
}

/// Rockafellar-Uryasev objective minimized over the sample points.
fn cvar_scan(v: &[f64], beta: f64) -> f64 {
    let k = v.len() as f64;
    v.iter()
        .map(|&a| a + v.iter().map(|&z| (z - a).max(0.0)).sum::<f64>() / (k * (1.0 - beta)))
        .fold(f64::INFINITY, f64::min)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn one_to_ten() {
    let v: Vec<f64> = (1..=10).map(f64::from).collect();
    assert_eq!(empirical_cvar(&set(v.clone()), 0.9).unwrap(), 10.0);
    let small = empirical_cvar(&set(v.clone()), 0.01).unwrap();
    assert!(close(small, cvar_scan(&v, 0.01)), "{small}");
    assert!((small - 5.55).abs() < 0.01);
}

#[test]
fn width_constants() {
    assert!((dkw_width(2000, 0.05) - (40f64.ln() / 4000.0).sqrt()).abs() < 1e-15);
    assert!((dkw_width(2000, 0.05) - 0.03037).abs() < 1e-5);
    let (up, _) = cvar_widths(3000, 0.95, 0.05);
    assert!((up - 0.3694).abs() < 1e-4, "{up}");

    let mut r = rng(4);
    let s = set((0..2000).map(|_| r.random::<f64>()).collect());
    let e = var_bounds(&s, 0.9, 0.05).unwrap();
    assert!(e.lower <= e.point && e.point <= e.upper);
}

#[test]
fn degenerate_sets() {
    let s = set(vec![0.3; 200]);
    let e = var_bounds(&s, 0.5, 0.1).unwrap();
    assert_eq!((e.lower, e.point, e.upper), (0.3, 0.3, 0.3));
    assert_eq!(empirical_cvar(&s, 0.9).unwrap(), 0.3);
    let c = cvar_bounds(&s, 0.9, 0.1, 0.0, 1.0).unwrap();
    let (wu, wl) = cvar_widths(200, 0.9, 0.1);
    assert_eq!((c.point, c.lower, c.upper), (0.3, 0.3 - wl, 0.3 + wu));
    assert!(cvar_bounds(&s, 0.9, 0.1, 0.5, 1.0).is_err());
}

#[test]
fn at_risk_decisions() {
    let var = RiskSpec::new(RiskMeasure::Var, 0.9, 0.05, None).unwrap();
    let below = set((0..5000).map(|i| 0.9 * i as f64 / 5000.0).collect());
    assert!(!check_nonconformance_risk(&below, &var, 1.0).unwrap().at_risk);
    let above = set(vec![3.0; 5000]);
    assert!(check_nonconformance_risk(&above, &var, 2.0).unwrap().at_risk);
    let cvar = RiskSpec::new(RiskMeasure::Cvar, 0.9, 0.05, Some((0.0, 4.0))).unwrap();
    let rep = check_nonconformance_risk(&above, &cvar, 2.0).unwrap();
    assert_eq!(rep.at_risk, rep.lower >= 2.0);
    assert!(RiskSpec::new(RiskMeasure::Cvar, 0.9, 0.05, None).is_err());
    assert!(RiskSpec::new(RiskMeasure::Var, 1.0, 0.05, None).is_err());
}

#[test]
fn var_bound_coverage_small() {
    let mut r = rng(17);
    let rounds = 300;
    let hits = (0..rounds)
        .filter(|_| {
            let s = set((0..400).map(|_| r.random::<f64>()).collect());
            let e = var_bounds(&s, 0.8, 0.1).unwrap();
            e.lower <= 0.8 && 0.8 <= e.upper
        })
        .count();
    assert!(hits as f64 / rounds as f64 >= 0.88);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn var_and_cvar_oracles(v in prop::collection::vec(-10.0f64..10.0, 1..60), beta in 0.01f64..0.99) {
        let s = set(v.clone());
        prop_assert_eq!(empirical_var(&s, beta).unwrap(), var_scan(&v, beta));
        let cv = empirical_cvar(&s, beta).unwrap();
        prop_assert!(close(cv, cvar_scan(&v, beta)), "{} vs {}", cv, cvar_scan(&v, beta));
        prop_assert!(empirical_var(&s, beta).unwrap() <= cv + 1e-12);
    }

    #[test]
    fn tail_average_identity(v in prop::collection::hash_set(-1000i32..1000, 2..60), m in 1usize..60) {
        let v: Vec<f64> = v.into_iter().map(|x| x as f64 / 7.0).collect();
        let k = v.len();
        let m = 1 + m % k;
        let beta = 1.0 - m as f64 / k as f64;
        prop_assume!(beta > 0.0);
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        let tail: f64 = sorted[k - m..].iter().sum::<f64>() / m as f64;
        prop_assert!(close(empirical_cvar(&set(v), beta).unwrap(), tail));
    }

    #[test]
    fn coherence_properties(pairs in prop::collection::vec((0.0f64..5.0, 0.0f64..5.0), 1..50), beta in 0.05f64..0.95, lam in 0.1f64..10.0) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let cx = empirical_cvar(&set(x.clone()), beta).unwrap();
        let cy = empirical_cvar(&set(y.clone()), beta).unwrap();
        let sum: Vec<f64> = pairs.iter().map(|p| p.0 + p.1).collect();
        let mx: Vec<f64> = pairs.iter().map(|p| p.0.max(p.1)).collect();
        let scaled: Vec<f64> = x.iter().map(|z| lam * z).collect();
        let tol = 1e-9 * (cx + cy + 1.0);
        prop_assert!(empirical_cvar(&set(sum), beta).unwrap() <= cx + cy + tol);
        prop_assert!(empirical_cvar(&set(mx), beta).unwrap() + tol >= cx.max(cy));
        prop_assert!(close(empirical_cvar(&set(scaled.clone()), beta).unwrap(), lam * cx));
        prop_assert!(close(empirical_var(&set(scaled), beta).unwrap(), lam * empirical_var(&set(x), beta).unwrap()));
    }

    #[test]
    fn estimates_are_ordered(v in prop::collection::vec(0.0f64..1.0, 1..200), beta in 0.05f64..0.95, gamma in 0.01f64..0.5) {
        let s = set(v);
        let e = var_bounds(&s, beta, gamma).unwrap();
        prop_assert!(e.lower <= e.point && e.point <= e.upper);
        let c = cvar_bounds(&s, beta, gamma, 0.0, 1.0).unwrap();
        prop_assert!(c.lower <= c.point && c.point <= c.upper);
    }
}
