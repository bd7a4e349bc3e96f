use anchorcrc::simulation::{generate_replication, preset, presets};
use anchorcrc::*;

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

#[test]
fn cell_expectations_match_design() {
    let s = SimScenario::new(20, 10, 10);
    let reps = 10_000;
    let mut cells: Vec<Vec<f64>> = (0..5).map(|_| Vec::with_capacity(reps)).collect();
    for i in 0..reps {
        let c = generate_replication(&s, &mut RngStream::new(11, i as u64)).unwrap();
        for (k, n) in c.cells().iter().enumerate() {
            cells[k].push(*n as f64);
        }
    }
    // each case is recorded independently of the anchor draw
    let q = 0.6 * 0.5 + 0.4 * 0.2;
    let f = 10.0 / 20.0;
    let expected = [10.0 * f, 10.0 * f * q, 10.0 * (1.0 - f) * q, 10.0 * f * (1.0 - q), 0.0];
    for k in 0..4 {
        let (m, sd) = mean_sd(&cells[k]);
        let se = sd / (reps as f64).sqrt();
        assert!(
            (m - expected[k]).abs() < 3.0 * se,
            "cell {k}: {m} vs {} (se {se})",
            expected[k]
        );
    }
}

#[test]
fn unbiased_on_larger_presets() {
    let mut checked = 0;
    for (name, s) in presets() {
        if !name.starts_with('b') || s.n_true < 100 {
            continue;
        }
        let n_true = s.n_true as f64;
        let sum = run_scenario(&s.replications(2000).draws(20).seed(1)).unwrap();
        let rel = (sum.n5.mean - n_true).abs() / n_true;
        assert!(rel < 0.02, "{name}: mean {} vs {n_true}", sum.n5.mean);
        checked += 1;
    }
    assert_eq!(checked, 21);
}

#[test]
fn fallback_incidence() {
    for (name, s) in presets() {
        if !name.starts_with("t5") {
            continue;
        }
        let sum = run_scenario(&s.replications(200).draws(20).seed(1)).unwrap();
        assert!(sum.fallbacks.is_empty(), "{name}: {:?}", sum.fallbacks);
    }
    let sparse = preset("b1/N13/psi0.1").unwrap();
    let sum = run_scenario(&sparse.replications(500).draws(20).seed(1)).unwrap();
    assert!(sum.fallbacks.values().any(|&n| n > 0), "{:?}", sum.fallbacks);
}

#[test]
fn t6_preset_credible_coverage_and_se() {
    let s = preset("t6/N250/psi0.25")
        .unwrap()
        .replications(2000)
        .draws(2000)
        .seed(1);
    let sum = run_scenario(&s).unwrap();
    let cov = &sum.n5.coverage;
    assert!((0.93..=0.965).contains(&cov["credible/fpc1"]), "{cov:?}");
    assert!(cov["credible/unadjusted"] >= 0.97, "{cov:?}");
    let sd = sum.n5.sd.unwrap();
    assert!((sum.n5.avg_se["fpc1"] - sd).abs() / sd < 0.10);
    assert!(sum.n5.avg_se["unadjusted"] > 1.10 * sd, "{:?} vs {sd}", sum.n5.avg_se);
    for (k, c) in cov.iter().chain(&sum.rs.coverage).chain(&sum.chapman.coverage) {
        assert!((0.0..=1.0).contains(c), "{k}");
    }
    assert!(sum.n5.avg_width.values().all(|&w| w >= 0.0));
}
