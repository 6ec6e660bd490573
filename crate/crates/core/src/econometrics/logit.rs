//! Maximum-likelihood logistic regression via Newton steps (iteratively
//! reweighted least squares), with observed-information or sandwich
//! standard errors and a finite-difference validation of the score.

use nalgebra::{Cholesky, DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{DesignMatrix, EconError, RegressionResult};

pub const DEFAULT_LOGIT_MAX_ITER: usize = 100;
pub const DEFAULT_LOGIT_TOL: f64 = 1e-8;

/// Scale-adjusted coefficient magnitude (|b_j| * sd(x_j)) past which, with
/// a non-vanishing score, the fit is declared separated. Measuring on the
/// standardized scale keeps tiny-unit regressors (whose coefficients are
/// legitimately large) from tripping the detector.
const SEPARATION_COEF_BOUND: f64 = 30.0;

fn sigmoid(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

fn log_likelihood(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    let mut ll = 0.0;
    for i in 0..y.len() {
        // log sigma(eta) = -ln(1+e^-eta); log(1-sigma) = -ln(1+e^eta)
        let e = eta[i];
        ll += if y[i] > 0.5 {
            -((-e).exp()).ln_1p()
        } else {
            -(e.exp()).ln_1p()
        };
    }
    ll
}

/// Fit a logit by Newton/IRLS. Converges when the maximum absolute score
/// drops below `tol` or the relative log-likelihood change falls below
/// 1e-10; diverging coefficients with a non-vanishing score raise the
/// separation error.
pub fn logit_fit(
    design: &DesignMatrix,
    robust_se: bool,
    max_iter: usize,
    tol: f64,
) -> Result<RegressionResult, EconError> {
    let x = &design.x;
    let y = &design.y;
    let (n, k) = (x.nrows(), x.ncols());
    if n <= k {
        return Err(EconError::InsufficientData {
            required: k + 1,
            actual: n,
        });
    }
    let mut ones = 0usize;
    for i in 0..n {
        let v = y[i];
        if v != 0.0 && v != 1.0 {
            return Err(EconError::NotBinary(v));
        }
        ones += usize::from(v == 1.0);
    }
    if ones == 0 || ones == n {
        return Err(EconError::OneClass);
    }

    // Per-column spread for the scale-free divergence check.
    let col_scale: Vec<f64> = (0..k)
        .map(|j| {
            let col = x.column(j);
            let mean = col.sum() / n as f64;
            (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt()
        })
        .collect();
    let scaled_magnitude = |beta: &DVector<f64>| {
        beta.iter()
            .zip(&col_scale)
            .fold(0.0f64, |acc, (b, s)| acc.max(b.abs() * s))
    };

    let mut beta = DVector::zeros(k);
    let mut ll = log_likelihood(x, y, &beta);
    let mut converged = false;
    let mut iterations = 0;
    let mut hessian = DMatrix::zeros(k, k);

    for iter in 1..=max_iter {
        iterations = iter;
        let eta = x * &beta;
        let p = eta.map(sigmoid);
        let score = x.transpose() * (y - &p);
        let max_score = score.iter().fold(0.0f64, |acc, s| acc.max(s.abs()));

        let max_coef = scaled_magnitude(&beta);
        if max_coef > SEPARATION_COEF_BOUND && max_score > tol {
            return Err(EconError::Separation { max_coef });
        }
        if max_score < tol {
            converged = true;
            break;
        }

        // Observed information X' W X with W = p(1-p), floored for stability.
        hessian.fill(0.0);
        for i in 0..n {
            let w = (p[i] * (1.0 - p[i])).max(1e-10);
            for a in 0..k {
                let xa = x[(i, a)] * w;
                for b in a..k {
                    hessian[(a, b)] += xa * x[(i, b)];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                hessian[(a, b)] = hessian[(b, a)];
            }
        }

        let chol = Cholesky::new(hessian.clone()).ok_or_else(|| EconError::RankDeficient {
            columns: design.column_names.clone(),
        })?;
        let delta = chol.solve(&score);

        // Step-halving keeps the likelihood non-decreasing.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let candidate = &beta + &delta * step;
            let ll_new = log_likelihood(x, y, &candidate);
            if ll_new.is_finite() && ll_new >= ll - 1e-12 {
                let rel_change = (ll_new - ll).abs() / (1.0 + ll.abs());
                beta = candidate;
                ll = ll_new;
                accepted = true;
                if rel_change < 1e-10 {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            converged = true; // no uphill step exists at f64 resolution
        }
        if converged {
            // One more separation check at the accepted point.
            let eta = x * &beta;
            let p = eta.map(sigmoid);
            let score = x.transpose() * (y - &p);
            let max_score = score.iter().fold(0.0f64, |acc, s| acc.max(s.abs()));
            let max_coef = scaled_magnitude(&beta);
            if max_coef > SEPARATION_COEF_BOUND && max_score > tol {
                return Err(EconError::Separation { max_coef });
            }
            break;
        }
    }

    // Final information matrix and probabilities at the optimum.
    let eta = x * &beta;
    let p = eta.map(sigmoid);
    hessian.fill(0.0);
    for i in 0..n {
        let w = (p[i] * (1.0 - p[i])).max(1e-10);
        for a in 0..k {
            let xa = x[(i, a)] * w;
            for b in a..k {
                hessian[(a, b)] += xa * x[(i, b)];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            hessian[(a, b)] = hessian[(b, a)];
        }
    }
    let info_inv = Cholesky::new(hessian)
        .ok_or_else(|| EconError::Numeric("information matrix not positive definite".into()))?
        .inverse();

    let cov = if robust_se {
        // Sandwich: bread = observed information, meat = score outer products.
        let mut meat = DMatrix::zeros(k, k);
        for i in 0..n {
            let u = y[i] - p[i];
            let u2 = u * u;
            for a in 0..k {
                let xa = x[(i, a)] * u2;
                for b in 0..k {
                    meat[(a, b)] += xa * x[(i, b)];
                }
            }
        }
        &info_inv * meat * &info_inv
    } else {
        info_inv
    };

    let p_bar = ones as f64 / n as f64;
    let ll_null = n as f64 * (p_bar * p_bar.ln() + (1.0 - p_bar) * (1.0 - p_bar).ln());
    let pseudo_r2 = 1.0 - ll / ll_null;

    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut standard_errors = Vec::with_capacity(k);
    let mut statistics = Vec::with_capacity(k);
    let mut p_values = Vec::with_capacity(k);
    for j in 0..k {
        let se = cov[(j, j)].max(0.0).sqrt();
        let z = beta[j] / se;
        standard_errors.push(se);
        statistics.push(z);
        p_values.push(2.0 * (1.0 - normal.cdf(z.abs())));
    }

    Ok(RegressionResult {
        terms: design.column_names.clone(),
        coefficients: beta.iter().copied().collect(),
        standard_errors,
        statistics,
        p_values,
        n_obs: n,
        fit_stat: pseudo_r2,
        fit_stat_name: "pseudo_r_squared",
        converged,
        iterations,
    })
}

/// Maximum relative deviation between the analytic score X'(y - p) and a
/// central finite difference of the log-likelihood at `beta`.
pub fn gradient_check(design: &DesignMatrix, beta: &[f64], step: f64) -> f64 {
    let x = &design.x;
    let y = &design.y;
    let k = x.ncols();
    let beta = DVector::from_row_slice(beta);

    let eta = x * &beta;
    let p = eta.map(sigmoid);
    let analytic = x.transpose() * (y - &p);

    let mut worst: f64 = 0.0;
    for j in 0..k {
        let mut up = beta.clone();
        up[j] += step;
        let mut down = beta.clone();
        down[j] -= step;
        let fd = (log_likelihood(x, y, &up) - log_likelihood(x, y, &down)) / (2.0 * step);
        let denom = analytic[j].abs().max(1.0);
        worst = worst.max((analytic[j] - fd).abs() / denom);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::super::{build_design, DesignInput};
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn design_from(y: &[f64], cols: Vec<(&str, Vec<f64>)>) -> DesignMatrix {
        build_design(&DesignInput {
            dependent: y.iter().map(|&v| Some(v)).collect(),
            regressors: cols
                .into_iter()
                .map(|(n, v)| (n.to_string(), v.into_iter().map(Some).collect()))
                .collect(),
            industry: None,
            year: None,
        })
        .unwrap()
    }

    #[test]
    fn intercept_only_half_ones_gives_zero() {
        let y: Vec<f64> = (0..40).map(|i| f64::from(i % 2 == 0)).collect();
        let design = design_from(&y, vec![]);
        let fit = logit_fit(&design, false, DEFAULT_LOGIT_MAX_ITER, DEFAULT_LOGIT_TOL).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 0.0, epsilon = 1e-8);
        assert!(fit.converged);
    }

    #[test]
    fn recovers_simulated_coefficients_within_three_ses() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 50_000;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| f64::from(rng.gen::<f64>() < sigmoid(-1.0 + 2.0 * v)))
            .collect();
        let design = design_from(&y, vec![("x", x)]);
        let fit = logit_fit(&design, true, DEFAULT_LOGIT_MAX_ITER, DEFAULT_LOGIT_TOL).unwrap();
        assert!(fit.converged);
        let truth = [-1.0, 2.0];
        for j in 0..2 {
            let dev = (fit.coefficients[j] - truth[j]).abs();
            assert!(
                dev < 3.0 * fit.standard_errors[j],
                "coef {j}: {} vs {} (se {})",
                fit.coefficients[j],
                truth[j],
                fit.standard_errors[j]
            );
        }
    }

    #[test]
    fn perfectly_separated_data_raises_separation_error() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| f64::from(v > 0.95)).collect();
        let design = design_from(&y, vec![("x", x)]);
        let err = logit_fit(&design, false, 200, DEFAULT_LOGIT_TOL).unwrap_err();
        assert!(matches!(err, EconError::Separation { .. }), "got {err:?}");
    }

    #[test]
    fn one_class_input_is_rejected() {
        let y = vec![1.0; 12];
        let x: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let design = design_from(&y, vec![("x", x)]);
        assert!(matches!(
            logit_fit(&design, false, 50, DEFAULT_LOGIT_TOL),
            Err(EconError::OneClass)
        ));
    }

    #[test]
    fn score_vanishes_at_reported_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 600;
        let x1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| f64::from(rng.gen::<f64>() < sigmoid(0.4 - x1[i] + 0.8 * x2[i])))
            .collect();
        let design = design_from(&y, vec![("x1", x1), ("x2", x2)]);
        let fit = logit_fit(&design, true, DEFAULT_LOGIT_MAX_ITER, DEFAULT_LOGIT_TOL).unwrap();

        let beta = DVector::from_vec(fit.coefficients.clone());
        let p = (&design.x * beta).map(sigmoid);
        let score = design.x.transpose() * (&design.y - p);
        for j in 0..design.x.ncols() {
            assert!(score[j].abs() < 1e-6 * n as f64);
        }
    }

    #[test]
    fn gradient_check_small_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let n = 150;
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| f64::from(rng.gen::<bool>())).collect();
            let design = design_from(&y, vec![("x", x)]);
            let beta: Vec<f64> = (0..2).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let dev = gradient_check(&design, &beta, 1e-6);
            assert!(dev < 1e-6, "gradient deviation {dev}");
        }
    }

    #[test]
    fn score_at_origin_is_xt_times_y_minus_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 80;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.gen::<bool>())).collect();
        let design = design_from(&y, vec![("x", x)]);

        let beta = DVector::zeros(2);
        let p = (&design.x * &beta).map(sigmoid);
        let score = design.x.transpose() * (&design.y - p);
        let expected = design.x.transpose() * design.y.map(|v| v - 0.5);
        for j in 0..2 {
            assert_abs_diff_eq!(score[j], expected[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_check_invariant_to_row_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.gen::<bool>())).collect();
        let beta = [0.3, -0.2];

        let d1 = design_from(&y, vec![("x", x.clone())]);
        let mut order: Vec<usize> = (0..n).collect();
        order.reverse();
        let xp: Vec<f64> = order.iter().map(|&i| x[i]).collect();
        let yp: Vec<f64> = order.iter().map(|&i| y[i]).collect();
        let d2 = design_from(&yp, vec![("x", xp)]);

        let g1 = gradient_check(&d1, &beta, 1e-6);
        let g2 = gradient_check(&d2, &beta, 1e-6);
        // Both deviations sit at accumulation-noise level well inside the
        // 1e-6 accuracy bound; permutation only reshuffles that noise.
        assert!(g1 < 1e-6 && g2 < 1e-6);
        assert_abs_diff_eq!(g1, g2, epsilon = 1e-7);
    }

    #[test]
    fn logit_coefficient_scale_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 500;
        let x1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| f64::from(rng.gen::<f64>() < sigmoid(0.2 + x1[i] - 0.5 * x2[i])))
            .collect();

        let c = 2.5;
        let base = logit_fit(
            &design_from(&y, vec![("x1", x1.clone()), ("x2", x2.clone())]),
            true,
            DEFAULT_LOGIT_MAX_ITER,
            DEFAULT_LOGIT_TOL,
        )
        .unwrap();
        let scaled = logit_fit(
            &design_from(
                &y,
                vec![("x1", x1.iter().map(|v| c * v).collect()), ("x2", x2)],
            ),
            true,
            DEFAULT_LOGIT_MAX_ITER,
            DEFAULT_LOGIT_TOL,
        )
        .unwrap();

        assert_abs_diff_eq!(scaled.coefficients[1], base.coefficients[1] / c, epsilon = 1e-8);
        assert_abs_diff_eq!(
            scaled.standard_errors[1],
            base.standard_errors[1] / c,
            epsilon = 1e-8
        );
        assert_abs_diff_eq!(scaled.coefficients[2], base.coefficients[2], epsilon = 1e-8);
        assert_abs_diff_eq!(scaled.p_values[1], base.p_values[1], epsilon = 1e-8);
    }
}
