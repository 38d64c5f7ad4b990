use approx::assert_abs_diff_eq;
use granger_lasso::estimators::{
    adaptive_lasso_fit, bic_path, compute_adaptive_weights, factor_fit, lambda_grid, minnesota_fit,
    minnesota_prior_variances, ols_fit, ridge_fit, shrinkage_posterior_mean, LassoSolver, MinnesotaPrior,
    SolverSettings,
};
use granger_lasso::{build_design, seed, ArxDesign, BlockStructure, TimeSeriesPanel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn normal_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seed::rng(seed);
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

/// ARX(1) design on random panels: `t - 1` rows, `1 + k` columns.
fn random_design(t: usize, k: usize, seed: u64) -> ArxDesign {
    let m = normal_matrix(t, k + 1, seed);
    let y = TimeSeriesPanel::from_series("y", m.column(0).as_slice()).unwrap();
    let x = TimeSeriesPanel::from_columns(&(1..=k).map(|j| m.column(j).as_slice().to_vec()).collect::<Vec<_>>())
        .unwrap();
    let blocks = BlockStructure::contiguous(&[k]).unwrap();
    build_design(&y, &x, 1, &blocks).unwrap()
}

/// Gauss-Seidel on `(X'X/n + l I) b = X'y/n`.
fn ridge_iterative(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let n = x.nrows() as f64;
    let a = x.tr_mul(x) / n + DMatrix::identity(x.ncols(), x.ncols()) * lambda;
    let b = x.tr_mul(y) / n;
    let mut beta: DVector<f64> = DVector::zeros(x.ncols());
    for _ in 0..100_000 {
        let mut change = 0.0f64;
        for i in 0..beta.len() {
            let s: f64 = (0..beta.len()).filter(|&j| j != i).map(|j| a[(i, j)] * beta[j]).sum();
            let new = (b[i] - s) / a[(i, i)];
            change = change.max((new - beta[i]).abs());
            beta[i] = new;
        }
        if change < 1e-15 {
            break;
        }
    }
    beta
}

fn kkt_violation(x: &DMatrix<f64>, y: &DVector<f64>, beta: &[f64], lambda: f64, w: &[f64]) -> f64 {
    let b = DVector::from_column_slice(beta);
    let g = x.tr_mul(&(y - x * b)) * (2.0 / x.nrows() as f64);
    (0..beta.len())
        .map(|i| {
            if beta[i] != 0.0 {
                (g[i] - lambda * w[i] * beta[i].signum()).abs()
            } else {
                (g[i].abs() - lambda * w[i]).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn solved(x: &DMatrix<f64>, y: &DVector<f64>, w: &[f64], lambda: f64) -> LassoSolver {
    let mut s = LassoSolver::new(x, y, w).unwrap();
    s.set_lambda(lambda);
    s.solve(&SolverSettings::default());
    s
}

#[test]
fn ridge_small_design_matches_iterative_solver() {
    let d = random_design(6, 2, 7);
    assert_eq!(d.x().shape(), (5, 3));
    for lambda in [1e-3, 0.1, 2.0] {
        let beta = ridge_fit(&d, lambda).unwrap();
        let oracle = ridge_iterative(d.x(), d.y(), lambda);
        for (a, b) in beta.iter().zip(oracle.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
    }
}

#[test]
fn ridge_wide_design_matches_iterative_solver() {
    let d = random_design(12, 20, 8);
    let beta = ridge_fit(&d, 0.5).unwrap();
    let oracle = ridge_iterative(d.x(), d.y(), 0.5);
    for (a, b) in beta.iter().zip(oracle.iter()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-8);
    }
}

#[test]
fn ridge_rejects_nonpositive_penalty() {
    let d = random_design(10, 2, 1);
    assert!(ridge_fit(&d, 0.0).is_err());
    assert!(ridge_fit(&d, f64::NAN).is_err());
}

#[test]
fn lasso_at_zero_penalty_is_ols() {
    for s in 0..20 {
        let d = random_design(40, 5, 100 + s);
        let w = vec![1.0; d.ncols()];
        let fit = adaptive_lasso_fit(&d, 0.0, &w).unwrap();
        let ols = ols_fit(&d).unwrap();
        for (a, b) in fit.beta.iter().zip(&ols.beta) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }
}

#[test]
fn lambda_max_gives_exact_zeros() {
    let x = normal_matrix(30, 8, 3);
    let y = normal_matrix(30, 1, 4).column(0).into_owned();
    let w: Vec<f64> = (0..8).map(|i| 0.5 + i as f64).collect();
    let lmax = (0..8)
        .map(|i| (x.column(i).dot(&y) * 2.0 / 30.0).abs() / w[i])
        .fold(0.0, f64::max);
    let s = solved(&x, &y, &w, lmax);
    assert_abs_diff_eq!(s.lambda_max(), lmax, epsilon = 1e-12 * lmax);
    assert!(s.coefficients().iter().all(|&b| b == 0.0));
    let s = solved(&x, &y, &w, 3.0 * lmax);
    assert!(s.coefficients().iter().all(|&b| b == 0.0));
    let s = solved(&x, &y, &w, 0.9 * lmax);
    assert!(s.coefficients().iter().any(|&b| b != 0.0));
}

#[test]
fn orthogonal_design_is_soft_thresholding() {
    // columns with X'X = (n / 2) I
    let n = 32;
    let q = normal_matrix(n, 5, 9).qr().q();
    let x = q * (n as f64 / 2.0).sqrt();
    let y = normal_matrix(n, 1, 10).column(0).into_owned();
    let w = [1.0, 0.5, 2.0, 1.5, 0.1];
    let lambda = 0.3;
    let s = solved(&x, &y, &w, lambda);
    for (i, b) in s.coefficients().iter().enumerate() {
        let z = x.column(i).dot(&y) * 2.0 / n as f64;
        let t = lambda * w[i];
        let expected = z.signum() * (z.abs() - t).max(0.0);
        assert_abs_diff_eq!(*b, expected, epsilon = 1e-9);
    }
}

#[test]
fn adaptive_weights_are_finite_and_positive() {
    let w = compute_adaptive_weights(&[0.5, -2.0, 0.0, 1e-12]);
    assert_eq!(w, vec![2.0, 0.5, 1e6, 1e6]);
}

#[test]
fn minnesota_matches_weighted_ridge_closed_form() {
    let d = random_design(7, 3, 21);
    assert_eq!(d.x().shape(), (6, 4));
    let v = [0.3, 0.05, 0.2, 1.5];
    let sigma2 = 0.7;
    let beta = shrinkage_posterior_mean(&d, &v, sigma2).unwrap();
    let n = d.nrows() as f64;
    let dmat = DMatrix::from_diagonal(&DVector::from_iterator(4, v.iter().map(|vi| sigma2 / vi / n)));
    let a = d.x().tr_mul(d.x()) / n + dmat;
    let oracle = a.lu().solve(&(d.x().tr_mul(d.y()) / n)).unwrap();
    for (a, b) in beta.iter().zip(oracle.iter()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-8);
    }
}

#[test]
fn equal_prior_variances_reduce_to_ridge() {
    let d = random_design(30, 4, 22);
    let (v, sigma2) = (0.25, 0.4);
    let beta = shrinkage_posterior_mean(&d, &[v; 5], sigma2).unwrap();
    let ridge = ridge_fit(&d, sigma2 / v / d.nrows() as f64).unwrap();
    for (a, b) in beta.iter().zip(&ridge) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-8);
    }
}

#[test]
fn minnesota_prior_shrinks_distant_lags_harder() {
    let m = normal_matrix(60, 3, 23);
    let y = TimeSeriesPanel::from_series("y", m.column(0).as_slice()).unwrap();
    let x = TimeSeriesPanel::from_columns(&[m.column(1).as_slice().to_vec(), m.column(2).as_slice().to_vec()])
        .unwrap();
    let d = build_design(&y, &x, 2, &BlockStructure::contiguous(&[2]).unwrap()).unwrap();
    let v = minnesota_prior_variances(&d, MinnesotaPrior::default()).unwrap();
    assert_eq!(v.len(), 6);
    // own lag 1 has variance tightness^2, own lag 2 a quarter of that
    assert_abs_diff_eq!(v[0], 0.04, epsilon = 1e-12);
    assert_abs_diff_eq!(v[1], 0.01, epsilon = 1e-12);
    assert!(v[2] > v[4] && v[3] > v[5]);
    assert!(minnesota_fit(&d, MinnesotaPrior::default()).is_ok());
}

#[test]
fn factors_are_orthogonal() {
    let f = normal_matrix(80, 2, 30);
    let load = normal_matrix(2, 12, 31);
    let noise = normal_matrix(80, 12, 32) * 0.3;
    let xm = &f * &load + noise;
    let x = TimeSeriesPanel::from_columns(&(0..12).map(|j| xm.column(j).as_slice().to_vec()).collect::<Vec<_>>())
        .unwrap();
    let y: Vec<f64> = normal_matrix(80, 1, 33).column(0).iter().copied().collect();
    let fit = factor_fit(&x, &y, 1).unwrap();
    assert!(fit.r >= 1 && fit.r <= 11);
    assert!(fit.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    let fac = &fit.factors;
    for a in 0..fit.r {
        for b in 0..fit.r {
            let (ca, cb) = (fac.column(a), fac.column(b));
            let ma = ca.mean();
            let mb = cb.mean();
            let cov = ca.iter().zip(cb.iter()).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>();
            let va = ca.iter().map(|u| (u - ma).powi(2)).sum::<f64>();
            let vb = cb.iter().map(|v| (v - mb).powi(2)).sum::<f64>();
            let corr = cov / (va * vb).sqrt();
            assert_abs_diff_eq!(corr, if a == b { 1.0 } else { 0.0 }, epsilon = 1e-8);
        }
    }
    assert!(fit.forecast_next(&y).is_finite());
}

#[test]
fn factor_model_needs_two_predictors() {
    let x = TimeSeriesPanel::from_columns(&[vec![1.0, 2.0, 0.5, 1.5, 3.0]]).unwrap();
    assert!(factor_fit(&x, &[0.0, 1.0, 0.0, 1.0, 0.0], 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kkt_holds_at_solution(seed in any::<u64>(), n in 10usize..60, m in 1usize..25, frac in 0.01f64..1.0) {
        let x = normal_matrix(n, m, seed);
        let y = normal_matrix(n, 1, seed ^ 1).column(0).into_owned();
        let w: Vec<f64> = normal_matrix(m, 1, seed ^ 2).iter().map(|v| 0.2 + v.abs()).collect();
        let s = LassoSolver::new(&x, &y, &w).unwrap();
        let lambda = frac * s.lambda_max();
        let s = solved(&x, &y, &w, lambda);
        prop_assert!(kkt_violation(&x, &y, &s.coefficients(), lambda, &w) <= 1e-6);
    }

    #[test]
    fn objective_never_increases_over_sweeps(seed in any::<u64>(), n in 10usize..50, m in 1usize..20, frac in 0.01f64..1.0) {
        let x = normal_matrix(n, m, seed);
        let y = normal_matrix(n, 1, seed ^ 3).column(0).into_owned();
        let w = vec![1.0; m];
        let mut s = LassoSolver::new(&x, &y, &w).unwrap();
        s.set_lambda(frac * s.lambda_max());
        let mut prev = s.objective();
        for _ in 0..50 {
            s.sweep(false);
            let obj = s.objective();
            prop_assert!(obj <= prev + 1e-12 * prev.abs().max(1.0));
            prev = obj;
        }
    }

    // well-conditioned designs: near-square ones can exhaust the sweep cap at
    // tiny penalties before the objective settles to 1e-8
    #[test]
    fn warm_and_cold_starts_agree(seed in any::<u64>(), m in 1usize..20, extra in 0.5f64..2.0) {
        let n = m + (extra * m as f64).ceil() as usize + 2;
        let x = normal_matrix(n, m, seed);
        let y = normal_matrix(n, 1, seed ^ 4).column(0).into_owned();
        let w: Vec<f64> = (0..m).map(|i| 1.0 + 0.1 * i as f64).collect();
        let mut warm = LassoSolver::new(&x, &y, &w).unwrap();
        let grid = lambda_grid(warm.lambda_max(), 20, 1e-3);
        for &l in &grid {
            warm.set_lambda(l);
            warm.solve(&SolverSettings::default());
            let cold = solved(&x, &y, &w, l);
            prop_assert!((warm.objective() - cold.objective()).abs() <= 1e-8);
        }
    }

    // the active set of a general lasso path can shrink as the penalty falls;
    // with orthogonal columns it cannot
    #[test]
    fn df_is_monotone_along_an_orthogonal_path(seed in any::<u64>(), n in 20usize..60, m in 1usize..15) {
        let x = normal_matrix(n, m.min(n - 1), seed).qr().q();
        let y = normal_matrix(n, 1, seed ^ 5).column(0).into_owned();
        let w: Vec<f64> = normal_matrix(x.ncols(), 1, seed ^ 6).iter().map(|v| 0.2 + v.abs()).collect();
        let mut s = LassoSolver::new(&x, &y, &w).unwrap();
        let mut prev = 0;
        for &l in &lambda_grid(s.lambda_max(), 30, 1e-3) {
            s.set_lambda(l);
            s.solve(&SolverSettings::default());
            prop_assert!(s.df() >= prev);
            prev = s.df();
        }
    }

    #[test]
    fn bic_path_fits_match_single_penalty_fits(seed in any::<u64>(), t in 30usize..60, k in 1usize..8) {
        let d = random_design(t, k, seed);
        let w = vec![1.0; d.ncols()];
        let lmax = LassoSolver::new(d.x(), d.y(), &w).unwrap().lambda_max();
        let grid = lambda_grid(lmax, 15, 1e-3);
        let (best, all) = bic_path(&d, &grid, &w).unwrap();
        prop_assert_eq!(all.len(), grid.len());
        prop_assert!(all.iter().all(|f| f.bic >= best.bic));
        for f in &all {
            let single = adaptive_lasso_fit(&d, f.lambda, &w).unwrap();
            for (a, b) in f.beta.iter().zip(&single.beta) {
                prop_assert!((a - b).abs() <= 1e-5);
            }
        }
    }

    #[test]
    fn residuals_recompute(seed in any::<u64>(), t in 10usize..40, k in 1usize..10, frac in 0.0f64..1.0) {
        let d = random_design(t, k, seed);
        let w = vec![1.0; d.ncols()];
        let lmax = LassoSolver::new(d.x(), d.y(), &w).unwrap().lambda_max();
        let fit = adaptive_lasso_fit(&d, frac * lmax, &w).unwrap();
        let r = d.y() - d.x() * DVector::from_column_slice(&fit.beta);
        let scale = d.y().norm().max(1.0);
        for (a, b) in r.iter().zip(&fit.residuals) {
            prop_assert!((a - b).abs() <= 1e-8 * scale);
        }
    }
}
