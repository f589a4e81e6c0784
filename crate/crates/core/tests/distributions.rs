mod common;

use approx::assert_abs_diff_eq;
use common::*;
use mvn_ngboost::distributions::{
    self, fisher_information, fit_theta_from_moments, kl_divergence, marginal_mle, natural_gradient,
    nll, sample, score, to_moment_form, uv_fisher, uv_natural_gradient, uv_nll, uv_score, Family,
    ThetaVector,
};
use nalgebra::DMatrix;
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::Rng;

const LN_2PI: f64 = 1.8378770664093453;

fn theta(p: usize, v: &[f64]) -> ThetaVector {
    ThetaVector::new(p, v.to_vec()).unwrap()
}

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn random_spd<R: Rng>(rng: &mut R, p: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(p, p) * 0.1
}

#[test]
fn theta_vector_validates_length_and_finiteness() {
    assert!(ThetaVector::new(2, vec![0.0; 4]).is_err());
    assert!(ThetaVector::new(2, vec![0.0, 0.0, f64::NAN, 0.0, 0.0]).is_err());
    assert!(ThetaVector::new(0, vec![]).is_err());
    let t = theta(3, &[1.0, 2.0, 3.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
    assert_eq!(t.mean(), &[1.0, 2.0, 3.0]);
    assert_eq!(t.nu_at(0, 0), 0.1);
    assert_eq!(t.nu_at(0, 2), 0.3);
    assert_eq!(t.nu_at(1, 1), 0.4);
    assert_eq!(t.nu_at(1, 2), 0.5);
    assert_eq!(t.nu_at(2, 2), 0.6);
}

#[test]
fn nll_standard_bivariate_examples() {
    let t = theta(2, &[0.0; 5]);
    assert_abs_diff_eq!(nll(&t, &[0.0, 0.0]).unwrap(), LN_2PI, epsilon = 1e-4);
    assert_abs_diff_eq!(nll(&t, &[1.0, 0.0]).unwrap(), LN_2PI + 0.5, epsilon = 1e-4);
    assert!(nll(&t, &[1.0]).is_err());
}

#[test]
fn nll_matches_generic_density() {
    let mut r = rng(11);
    for p in 1..=5 {
        for _ in 0..40 {
            let t = random_theta(&mut r, p);
            let y = random_y(&mut r, &t);
            let got = nll(&t, &y).unwrap();
            let want = oracle_nll(&t, &y);
            assert!(rel_err(got, want) < 1e-10, "p={p}: {got} vs {want}");
        }
    }
}

#[test]
fn moment_form_matches_oracle() {
    let mut r = rng(12);
    for p in 1..=4 {
        let t = random_theta(&mut r, p);
        let mf = to_moment_form(&t);
        let cov = oracle_covariance(&t);
        for i in 0..p {
            assert_eq!(mf.mean[i], t.mean()[i]);
            for j in 0..p {
                assert!(rel_err(mf.covariance[[i, j]], cov[(i, j)]) < 1e-10);
            }
        }
    }
}

#[test]
fn score_at_mean_is_minus_one_on_diagonal_slots() {
    let mut r = rng(13);
    for p in 1..=4 {
        let t = random_theta(&mut r, p);
        let g = score(&t, t.mean()).unwrap();
        for i in 0..p {
            assert_eq!(g[i], 0.0);
        }
        for i in 0..p {
            for j in i..p {
                let v = g[distributions::mvn::nu_index(p, i, j)];
                if i == j {
                    assert_abs_diff_eq!(v, -1.0, epsilon = 1e-5);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }
}

#[test]
fn score_hand_example() {
    let t = theta(2, &[0.0; 5]);
    let g = score(&t, &[1.0, 0.0]).unwrap();
    let want = [-1.0, 0.0, 0.0, 0.0, -1.0];
    for (a, b) in g.iter().zip(want) {
        assert_abs_diff_eq!(*a, b, epsilon = 1e-5);
    }
    let fd = fd_gradient(&t, &[1.0, 0.0]);
    for (a, b) in g.iter().zip(&fd) {
        assert!(rel_err(*a, *b) < 1e-6);
    }
}

#[test]
fn score_matches_finite_differences() {
    let mut r = rng(14);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let p = 1 + case % 4;
        let t = random_theta(&mut r, p);
        let y = random_y(&mut r, &t);
        let g = score(&t, &y).unwrap();
        for (a, b) in g.iter().zip(fd_gradient(&t, &y)) {
            worst = worst.max(rel_err(*a, b));
        }
    }
    assert!(worst < 1e-6, "max relative error {worst}");
}

#[test]
fn fisher_reference_values() {
    let f = fisher_information(&theta(2, &[0.3, -0.7, 0.0, 0.0, 0.0]));
    let want = [1.0, 1.0, 2.0, 1.0, 2.0];
    for i in 0..5 {
        for j in 0..5 {
            let w = if i == j { want[i] } else { 0.0 };
            assert_abs_diff_eq!(f[[i, j]], w, epsilon = 1e-4);
        }
    }
    let f = fisher_information(&theta(1, &[0.0, 0.0]));
    assert_abs_diff_eq!(f[[0, 0]], 1.0, epsilon = 1e-4);
    assert_abs_diff_eq!(f[[1, 1]], 2.0, epsilon = 1e-4);
    assert_eq!(f[[0, 1]], 0.0);
}

#[test]
fn fisher_symmetric_psd_with_zero_cross_block() {
    let mut r = rng(15);
    for p in 1..=4 {
        for _ in 0..10 {
            let t = random_theta(&mut r, p);
            let f = fisher_information(&t);
            let m = f.nrows();
            for i in 0..m {
                for j in 0..m {
                    assert_eq!(f[[i, j]], f[[j, i]]);
                    if (i < p) != (j < p) {
                        assert_eq!(f[[i, j]], 0.0);
                    }
                }
            }
            let eig = to_dmatrix(&f).symmetric_eigen();
            let scale = eig.eigenvalues.amax();
            assert!(eig.eigenvalues.min() >= -1e-10 * scale);
            let prec = oracle_precision(&t);
            for i in 0..p {
                for j in 0..p {
                    assert!(rel_err(f[[i, j]], prec[(i, j)]) < 1e-10);
                }
            }
        }
    }
}

#[test]
fn fisher_matches_score_covariance() {
    let mut r = rng(16);
    let n = 40_000;
    for p in 1..=3 {
        let t = random_theta(&mut r, p);
        let f = fisher_information(&t);
        let m = f.nrows();
        let draws = oracle_draws(&t, n, 100 + p as u64);
        let scores: Vec<Vec<f64>> = draws.iter().map(|y| score(&t, y).unwrap()).collect();
        for a in 0..m {
            for b in a..m {
                let prod: Vec<f64> = scores.iter().map(|s| s[a] * s[b]).collect();
                let mean = prod.iter().sum::<f64>() / n as f64;
                let var = prod.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                let se = (var / n as f64).sqrt();
                assert!(
                    (mean - f[[a, b]]).abs() <= 5.0 * se + 1e-9,
                    "p={p} ({a},{b}): mc {mean} ± {se}, analytic {}",
                    f[[a, b]]
                );
            }
        }
    }
}

#[test]
fn natural_gradient_examples() {
    let g = natural_gradient(&theta(2, &[0.0; 5]), &[0.0, 0.0]).unwrap();
    for (a, b) in g.iter().zip([0.0, 0.0, -0.5, 0.0, -0.5]) {
        assert_abs_diff_eq!(*a, b, epsilon = 1e-5);
    }
    let g = natural_gradient(&theta(1, &[0.0, 0.0]), &[1.0]).unwrap();
    assert_abs_diff_eq!(g[0], -1.0, epsilon = 1e-5);
    assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-5);
}

#[test]
fn natural_gradient_solves_fisher_system() {
    let mut r = rng(17);
    for p in 1..=4 {
        let t = random_theta(&mut r, p);
        let y = random_y(&mut r, &t);
        let g = natural_gradient(&t, &y).unwrap();
        let f = to_dmatrix(&fisher_information(&t));
        let s = score(&t, &y).unwrap();
        let back = f * nalgebra::DVector::from_vec(g);
        for k in 0..s.len() {
            assert!(rel_err(back[k], s[k]) < 1e-8);
        }
    }
}

#[test]
fn natural_gradient_is_descent_direction() {
    let mut r = rng(18);
    for case in 0..200 {
        let p = 1 + case % 4;
        let t = random_theta(&mut r, p);
        let y = random_y(&mut r, &t);
        let s = score(&t, &y).unwrap();
        let g = natural_gradient(&t, &y).unwrap();
        let directional: f64 = s.iter().zip(&g).map(|(a, b)| a * b).sum();
        assert!(directional > 0.0);
        let step: Vec<f64> = t.values().iter().zip(&g).map(|(a, b)| a - 1e-4 * b).collect();
        assert!(nll(&theta(p, &step), &y).unwrap() < nll(&t, &y).unwrap());
    }
}

fn sample_moments_of(a: &Array2<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (n, p) = a.dim();
    let mean: Vec<f64> = (0..p).map(|j| a.column(j).sum() / n as f64).collect();
    let cov = DMatrix::from_fn(p, p, |i, j| {
        a.outer_iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1) as f64
    });
    (mean, cov)
}

#[test]
fn sample_standard_moments() {
    let t = theta(2, &[0.5, -1.0, 0.0, 0.0, 0.0]);
    let s = sample(&t, 100_000, 3);
    let (mean, cov) = sample_moments_of(&s);
    assert_abs_diff_eq!(mean[0], 0.5, epsilon = 0.02);
    assert_abs_diff_eq!(mean[1], -1.0, epsilon = 0.02);
    for i in 0..2 {
        for j in 0..2 {
            assert_abs_diff_eq!(cov[(i, j)], if i == j { 1.0 } else { 0.0 }, epsilon = 0.02);
        }
    }
    assert_eq!(s, sample(&t, 100_000, 3));
    assert_ne!(s, sample(&t, 100_000, 4));
}

#[test]
fn sample_reproduces_strong_correlation() {
    let t = fit_theta_from_moments(&[0.0, 0.0], array![[1.0, 0.9], [0.9, 1.0]].view()).unwrap();
    let s = sample(&t, 1_000_000, 5);
    let (_, cov) = sample_moments_of(&s);
    let corr = cov[(0, 1)] / (cov[(0, 0)] * cov[(1, 1)]).sqrt();
    assert_abs_diff_eq!(corr, 0.9, epsilon = 0.01);
}

#[test]
fn sample_covariance_matches_oracle_for_random_theta() {
    let mut r = rng(19);
    for p in 2..=4 {
        let t = random_theta(&mut r, p);
        let s = sample(&t, 200_000, 7);
        let (_, cov) = sample_moments_of(&s);
        let want = oracle_covariance(&t);
        for i in 0..p {
            for j in 0..p {
                let tol = 0.03 * (want[(i, i)] * want[(j, j)]).sqrt();
                assert_abs_diff_eq!(cov[(i, j)], want[(i, j)], epsilon = tol);
            }
        }
    }
}

#[test]
fn fit_theta_from_moments_examples() {
    let t = fit_theta_from_moments(&[0.0, 0.0], Array2::eye(2).view()).unwrap();
    for v in t.values() {
        assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-5);
    }
    let t = fit_theta_from_moments(&[0.0, 0.0], (Array2::eye(2) * 0.25).view()).unwrap();
    assert_abs_diff_eq!(t.nu_at(0, 0), 2f64.ln(), epsilon = 1e-5);
    assert_abs_diff_eq!(t.nu_at(1, 1), 2f64.ln(), epsilon = 1e-5);
    assert_eq!(t.nu_at(0, 1), 0.0);
    assert!(fit_theta_from_moments(&[0.0, 0.0], array![[1.0, 2.0], [2.0, 1.0]].view()).is_err());
    assert!(fit_theta_from_moments(&[0.0], Array2::eye(2).view()).is_err());
}

#[test]
fn moments_round_trip_random_spd() {
    let mut r = rng(20);
    for p in 1..=5 {
        for _ in 0..20 {
            let cov = random_spd(&mut r, p);
            let mean: Vec<f64> = (0..p).map(|_| r.random_range(-3.0..3.0)).collect();
            let arr = Array2::from_shape_fn((p, p), |(i, j)| cov[(i, j)]);
            let mf = to_moment_form(&fit_theta_from_moments(&mean, arr.view()).unwrap());
            for i in 0..p {
                assert_eq!(mf.mean[i], mean[i]);
                for j in 0..p {
                    let scale = (cov[(i, i)] * cov[(j, j)]).sqrt();
                    assert!((mf.covariance[[i, j]] - cov[(i, j)]).abs() < 1e-8 * scale);
                }
            }
        }
    }
}

#[test]
fn marginal_mle_examples() {
    let y = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
    let t = marginal_mle(y.view()).unwrap();
    assert_abs_diff_eq!(t.mean()[0], 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(t.mean()[1], 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(t.nu_at(0, 0), 2f64.ln(), epsilon = 1e-5);
    assert_abs_diff_eq!(t.nu_at(0, 1), 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(t.nu_at(1, 1), 2f64.ln(), epsilon = 1e-5);

    let collinear = array![[0.0, 0.0], [1.0, 2.0], [2.0, 4.0], [0.0, 0.0], [1.0, 2.0], [2.0, 4.0]];
    assert!(marginal_mle(collinear.view()).is_err());
    assert!(marginal_mle(array![[1.0, 2.0], [3.0, 1.0]].view()).is_err());
}

#[test]
fn marginal_mle_beats_random_perturbations() {
    let mut r = rng(21);
    let truth = random_theta(&mut r, 3);
    let y = sample(&truth, 500, 9);
    let t0 = marginal_mle(y.view()).unwrap();
    let total = |t: &ThetaVector| -> f64 { y.outer_iter().map(|row| nll(t, &row.to_vec()).unwrap()).sum() };
    let best = total(&t0);
    for _ in 0..1000 {
        let scale = r.random_range(1e-4..0.3);
        let v: Vec<f64> = t0.values().iter().map(|v| v + scale * r.random_range(-1.0..1.0)).collect();
        assert!(best <= total(&theta(3, &v)) + 1e-9);
    }
}

#[test]
fn kl_examples() {
    let t = theta(2, &[0.3, 0.1, 0.2, -0.4, 0.5]);
    assert!(kl_divergence(&t, &t).unwrap() <= 1e-12);
    let a = theta(2, &[0.0; 5]);
    let b = theta(2, &[1.0, 0.0, 0.0, 0.0, 0.0]);
    assert_abs_diff_eq!(kl_divergence(&a, &b).unwrap(), 0.5, epsilon = 1e-5);
    assert!(kl_divergence(&a, &theta(1, &[0.0, 0.0])).is_err());
}

#[test]
fn kl_matches_monte_carlo_in_both_directions() {
    let mut r = rng(22);
    for p in 1..=3 {
        let a = random_theta(&mut r, p);
        let b = random_theta(&mut r, p);
        for (from, to) in [(&a, &b), (&b, &a)] {
            let draws = oracle_draws(from, 200_000, 31);
            let mc = draws.iter().map(|y| oracle_nll(to, y) - oracle_nll(from, y)).sum::<f64>() / draws.len() as f64;
            let kl = kl_divergence(from, to).unwrap();
            assert!((kl - mc).abs() < 0.03 * kl.max(0.1), "p={p}: {kl} vs {mc}");
        }
    }
}

#[test]
fn univariate_reference_values() {
    assert_abs_diff_eq!(uv_nll([0.0, 0.0], 0.0), 0.5 * LN_2PI, epsilon = 1e-12);
    let s = uv_score([0.0, 0.0], 0.0);
    assert_abs_diff_eq!(s[0], 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(s[1], 1.0, epsilon = 1e-12);
    assert_eq!(uv_fisher([0.0, 0.0]), [[1.0, 0.0], [0.0, 2.0]]);
    let g = uv_natural_gradient([0.0, 0.0], 1.0);
    assert_abs_diff_eq!(g[0], -1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-12);
}

#[test]
fn univariate_score_matches_finite_differences() {
    let mut r = rng(23);
    for _ in 0..100 {
        let t = [r.random_range(-2.0..2.0), r.random_range(-1.0..1.0)];
        let y = r.random_range(-3.0..3.0);
        let s = uv_score(t, y);
        for k in 0..2 {
            let mut up = t;
            let mut dn = t;
            up[k] += 1e-6;
            dn[k] -= 1e-6;
            let fd = (uv_nll(up, y) - uv_nll(dn, y)) / 2e-6;
            assert!(rel_err(s[k], fd) < 1e-6);
        }
    }
}

#[test]
fn univariate_matches_one_dimensional_mvn() {
    let mut r = rng(24);
    let fam = Family::mvn(1).unwrap();
    for _ in 0..100 {
        let (mu, log_sigma) = (r.random_range(-2.0..2.0), r.random_range(-1.0..1.0));
        let y = r.random_range(-3.0..3.0);
        let a = uv_nll([mu, log_sigma], y);
        let exact = fam.nll(&[mu, ((-log_sigma).exp() - distributions::DIAG_EPS).ln()], &[y]);
        assert!(rel_err(a, exact) < 1e-12);
        let shifted = fam.nll(&[mu, -log_sigma], &[y]);
        assert!(rel_err(a, shifted) < 1e-5);
    }
}

fn extreme_theta(p: usize) -> impl Strategy<Value = ThetaVector> {
    let m = p * (p + 3) / 2;
    prop::collection::vec(prop_oneof![Just(-40.0), Just(40.0), -40.0..40.0f64], m)
        .prop_map(move |v| ThetaVector::new(p, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn covariance_stays_symmetric_positive(t in (1usize..=4).prop_flat_map(extreme_theta)) {
        let p = t.dim();
        let cov = to_moment_form(&t).covariance;
        for i in 0..p {
            prop_assert!(cov[[i, i]].is_finite() && cov[[i, i]] > 0.0);
            for j in 0..p {
                prop_assert_eq!(cov[[i, j]], cov[[j, i]]);
                prop_assert!(cov[[i, j]].abs() <= (cov[[i, i]] * cov[[j, j]]).sqrt() * (1.0 + 1e-9));
            }
        }
        let ld = distributions::build_scale_matrix(&t).log_det_covariance();
        prop_assert!(ld.is_finite());
    }

    #[test]
    fn kl_is_non_negative(
        (a, b) in (1usize..=4).prop_flat_map(|p| {
            let m = p * (p + 3) / 2;
            (prop::collection::vec(-3.0..3.0f64, m), prop::collection::vec(-3.0..3.0f64, m))
                .prop_map(move |(u, v)| (ThetaVector::new(p, u).unwrap(), ThetaVector::new(p, v).unwrap()))
        })
    ) {
        prop_assert!(kl_divergence(&a, &b).unwrap() >= 0.0);
        prop_assert!(kl_divergence(&a, &a).unwrap() <= 1e-12);
    }

    #[test]
    fn theta_round_trips_through_moments(
        t in (1usize..=4).prop_flat_map(|p| {
            let m = p * (p + 3) / 2;
            prop::collection::vec(-2.0..2.0f64, m).prop_map(move |v| ThetaVector::new(p, v).unwrap())
        })
    ) {
        let mf = to_moment_form(&t);
        let back = fit_theta_from_moments(mf.mean.as_slice().unwrap(), mf.covariance.view()).unwrap();
        for (a, b) in t.values().iter().zip(back.values()) {
            prop_assert!((a - b).abs() < 1e-5, "{} vs {}", a, b);
        }
    }
}
