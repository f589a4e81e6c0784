mod common;

use approx::assert_abs_diff_eq;
use common::{random_theta, rng};
use mvn_ngboost::distributions::{fit_theta_from_moments, sample, ThetaVector};
use mvn_ngboost::metrics::{
    chi2_cdf, chi2_quantile, evaluate, mean_and_stderr, mean_nll, pr_area, pr_covered, rmse, DEFAULT_ALPHA,
};
use ndarray::{array, Array2};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use rand::Rng;
use std::f64::consts::PI;

fn repeat_rows(t: &ThetaVector, n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, t.values().len()), |(_, k)| t.values()[k])
}

#[test]
fn chi2_quantile_reference_values() {
    assert_abs_diff_eq!(chi2_quantile(2, 0.9).unwrap(), 4.605170185988091, epsilon = 1e-12);
    assert_abs_diff_eq!(chi2_quantile(1, 0.95).unwrap(), 3.841458820694124, epsilon = 1e-10);
    assert_abs_diff_eq!(chi2_quantile(3, 0.5).unwrap(), 2.365973884375338, epsilon = 1e-10);
    assert!(chi2_quantile(0, 0.9).is_err());
    assert!(chi2_quantile(2, 1.0).is_err());
    assert!(chi2_quantile(2, 0.0).is_err());
}

#[test]
fn chi2_quantile_inverts_cdf() {
    for dof in 1..=8 {
        for alpha in [0.01, 0.1, 0.5, 0.68, 0.9, 0.95, 0.999] {
            let q = chi2_quantile(dof, alpha).unwrap();
            assert_abs_diff_eq!(chi2_cdf(dof, q), alpha, epsilon = 1e-12);
            let other = ChiSquared::new(dof as f64).unwrap().inverse_cdf(alpha);
            assert!((q - other).abs() < 1e-6 * q.max(1.0), "dof {dof}, alpha {alpha}: {q} vs {other}");
        }
    }
}

#[test]
fn bivariate_area_reference_value() {
    let id = fit_theta_from_moments(&[0.0, 0.0], Array2::eye(2).view()).unwrap();
    let area = pr_area(&id, 0.9).unwrap();
    assert!((area - PI * 4.605170).abs() < 1e-5);
    assert_abs_diff_eq!(area, PI * chi2_quantile(2, 0.9).unwrap(), epsilon = 1e-9);
}

#[test]
fn bivariate_area_matches_monte_carlo_ellipse_area() {
    let cov = array![[1.5, 0.6], [0.6, 0.8]];
    let t = fit_theta_from_moments(&[0.4, -0.2], cov.view()).unwrap();
    let q = chi2_quantile(2, 0.9).unwrap();
    let half = [(q * 1.5f64).sqrt(), (q * 0.8f64).sqrt()];
    let mut r = rng(63);
    let n = 400_000;
    let inside = (0..n)
        .filter(|_| {
            let y = [0.4 + half[0] * r.random_range(-1.0..1.0), -0.2 + half[1] * r.random_range(-1.0..1.0)];
            pr_covered(&t, &y, 0.9).unwrap()
        })
        .count();
    let mc = 4.0 * half[0] * half[1] * inside as f64 / n as f64;
    let area = pr_area(&t, 0.9).unwrap();
    assert!((mc - area).abs() < 0.01 * area, "{mc} vs {area}");
}

#[test]
fn area_formula_for_other_dimensions() {
    let factor = |p: usize| {
        let h = p as f64 / 2.0;
        (2.0 * PI).powf(h) / (p as f64 * statrs::function::gamma::gamma(h)) * chi2_quantile(p, 0.9).unwrap().powf(h)
    };
    let t1 = fit_theta_from_moments(&[3.0], array![[4.0]].view()).unwrap();
    assert_abs_diff_eq!(pr_area(&t1, 0.9).unwrap(), factor(1) * 2.0, epsilon = 1e-9);
    let cov = array![[2.0, 0.3, 0.0], [0.3, 1.0, 0.2], [0.0, 0.2, 0.5]];
    let det: f64 = 2.0 * (1.0 * 0.5 - 0.04) - 0.3 * (0.3 * 0.5);
    let t3 = fit_theta_from_moments(&[0.0; 3], cov.view()).unwrap();
    assert_abs_diff_eq!(pr_area(&t3, 0.9).unwrap(), factor(3) * det.sqrt(), epsilon = 1e-9);
}

#[test]
fn area_scales_with_covariance_and_alpha() {
    let base = array![[1.0, 0.3], [0.3, 2.0]];
    let t = fit_theta_from_moments(&[0.0, 0.0], base.view()).unwrap();
    let t4 = fit_theta_from_moments(&[0.0, 0.0], (base.clone() * 4.0).view()).unwrap();
    let ratio = pr_area(&t4, 0.9).unwrap() / pr_area(&t, 0.9).unwrap();
    assert!((ratio - 4.0).abs() < 1e-5);
    let indep = fit_theta_from_moments(&[0.0, 0.0], array![[1.0, 0.0], [0.0, 2.0]].view()).unwrap();
    assert!(pr_area(&t, 0.9).unwrap() < pr_area(&indep, 0.9).unwrap());
    let mut last = 0.0;
    for alpha in [0.5, 0.8, 0.9, 0.95, 0.99] {
        let a = pr_area(&t, alpha).unwrap();
        assert!(a > last);
        last = a;
    }
}

#[test]
fn coverage_reference_points() {
    let id = ThetaVector::new(2, vec![0.0; 5]).unwrap();
    assert!(pr_covered(&id, &[0.0, 0.0], 0.01).unwrap());
    assert!(!pr_covered(&id, &[2.2, 0.0], 0.9).unwrap());
    assert!(pr_covered(&id, &[2.1, 0.0], 0.9).unwrap());
}

#[test]
fn region_coverage_is_calibrated() {
    let mut r = rng(60);
    for p in 1..=3 {
        let t = random_theta(&mut r, p);
        let draws = sample(&t, 100_000, 61 + p as u64);
        let covered = draws.outer_iter().filter(|y| pr_covered(&t, &y.to_vec(), 0.9).unwrap()).count();
        let frac = covered as f64 / draws.nrows() as f64;
        assert!((frac - 0.9).abs() < 0.005, "p={p}: {frac}");
    }
}

#[test]
fn nll_and_rmse_hand_values() {
    let t = repeat_rows(&ThetaVector::new(2, vec![0.0; 5]).unwrap(), 2);
    let y = array![[0.0, 0.0], [1.0, 0.0]];
    assert_abs_diff_eq!(mean_nll(t.view(), y.view()).unwrap(), 1.8378770664093453 + 0.25, epsilon = 1e-4);
    assert_abs_diff_eq!(rmse(t.view(), y.view()).unwrap(), 0.5, epsilon = 1e-12);
}

#[test]
fn evaluate_reports_kl_only_with_truth() {
    let t = ThetaVector::new(2, vec![0.2, -0.1, 0.1, 0.3, -0.2]).unwrap();
    let pred = repeat_rows(&t, 200);
    let ys = sample(&t, 200, 62);
    let report = evaluate(pred.view(), ys.view(), None, DEFAULT_ALPHA).unwrap();
    assert!(report.kl_mean.is_none());
    assert!(!report.csv_header().contains(&"kl".to_string()));
    assert_eq!(report.pr_label(), "90% PR");
    assert_eq!(report.n_points, 200);

    let report = evaluate(pred.view(), ys.view(), Some(pred.view()), DEFAULT_ALPHA).unwrap();
    assert!(report.kl_mean.unwrap() <= 1e-12);
    assert!(report.csv_header().contains(&"kl".to_string()));
    assert!(report.to_text().contains("90% PR cov"));
    assert_eq!(report.csv_header().len(), report.csv_values().len());
}

#[test]
fn evaluate_rejects_bad_shapes() {
    let empty_t = Array2::<f64>::zeros((0, 5));
    let empty_y = Array2::<f64>::zeros((0, 2));
    assert!(evaluate(empty_t.view(), empty_y.view(), None, 0.9).is_err());
    let t = Array2::<f64>::zeros((3, 5));
    assert!(evaluate(t.view(), Array2::<f64>::zeros((2, 2)).view(), None, 0.9).is_err());
    assert!(evaluate(t.view(), Array2::<f64>::zeros((3, 3)).view(), None, 0.9).is_err());
    assert!(evaluate(t.view(), Array2::<f64>::zeros((3, 2)).view(), None, 1.5).is_err());
}

#[test]
fn mean_and_stderr_uses_sample_deviation() {
    let (m, se) = mean_and_stderr(&[1.0, 2.0, 3.0, 4.0]);
    assert_abs_diff_eq!(m, 2.5, epsilon = 1e-15);
    assert_abs_diff_eq!(se, (5.0f64 / 3.0).sqrt() / 2.0, epsilon = 1e-15);
    let (m, se) = mean_and_stderr(&[7.0]);
    assert_eq!(m, 7.0);
    assert!(se.is_nan());
}
