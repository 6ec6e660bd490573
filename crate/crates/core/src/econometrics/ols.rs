//! Pooled OLS with classical or heteroskedasticity-consistent (sandwich)
//! standard errors.

use nalgebra::{Cholesky, DMatrix};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{DesignMatrix, EconError, RegressionResult};

/// Covariance estimator for the coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeType {
    Classical,
    /// White sandwich, no small-sample scaling.
    Hc0,
    /// Sandwich scaled by N / (N - K).
    Hc1,
}

/// Fit y = X b by least squares.
pub fn ols_fit(design: &DesignMatrix, se: SeType) -> Result<RegressionResult, EconError> {
    let x = &design.x;
    let y = &design.y;
    let (n, k) = (x.nrows(), x.ncols());
    if n <= k {
        return Err(EconError::InsufficientData {
            required: k + 1,
            actual: n,
        });
    }

    let xtx = x.transpose() * x;
    let chol = Cholesky::new(xtx).ok_or_else(|| EconError::RankDeficient {
        columns: design.column_names.clone(),
    })?;
    let xtx_inv = chol.inverse();
    let beta = &xtx_inv * (x.transpose() * y);

    let fitted = x * &beta;
    let resid = y - &fitted;
    let ssr: f64 = resid.iter().map(|e| e * e).sum();
    let y_mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let r_squared = if sst > 0.0 { 1.0 - ssr / sst } else { 0.0 };

    let cov = match se {
        SeType::Classical => {
            let sigma2 = ssr / (n - k) as f64;
            &xtx_inv * sigma2
        }
        SeType::Hc0 | SeType::Hc1 => {
            let mut meat = DMatrix::zeros(k, k);
            for i in 0..n {
                let e2 = resid[i] * resid[i];
                for a in 0..k {
                    let xa = x[(i, a)] * e2;
                    for b in 0..k {
                        meat[(a, b)] += xa * x[(i, b)];
                    }
                }
            }
            let mut cov = &xtx_inv * meat * &xtx_inv;
            if se == SeType::Hc1 {
                cov *= n as f64 / (n - k) as f64;
            }
            cov
        }
    };

    let dof = (n - k) as f64;
    let t_dist = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| EconError::Numeric(format!("t distribution: {e}")))?;

    let mut standard_errors = Vec::with_capacity(k);
    let mut statistics = Vec::with_capacity(k);
    let mut p_values = Vec::with_capacity(k);
    for j in 0..k {
        let se_j = cov[(j, j)].max(0.0).sqrt();
        let t = beta[j] / se_j;
        standard_errors.push(se_j);
        statistics.push(t);
        p_values.push(2.0 * (1.0 - t_dist.cdf(t.abs())));
    }

    Ok(RegressionResult {
        terms: design.column_names.clone(),
        coefficients: beta.iter().copied().collect(),
        standard_errors,
        statistics,
        p_values,
        n_obs: n,
        fit_stat: r_squared,
        fit_stat_name: "r_squared",
        converged: true,
        iterations: 1,
    })
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
    fn exact_line_is_recovered() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let design = design_from(&y, vec![("x", x)]);
        let fit = ols_fit(&design, SeType::Classical).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.coefficients[1], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.fit_stat, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn five_point_fit_matches_normal_equations_by_hand() {
        // Solve the 2x2 normal equations directly for y = a + b x.
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [2.1, 3.9, 6.2, 7.8, 10.1];
        let n = 5.0;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let a = (sy - b * sx) / n;

        let design = design_from(&y, vec![("x", x.to_vec())]);
        let fit = ols_fit(&design, SeType::Classical).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], a, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.coefficients[1], b, epsilon = 1e-10);
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 400;
        let x1: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 0.5 + 1.5 * x1[i] - 0.7 * x2[i] + rng.gen_range(-0.5..0.5))
            .collect();
        let design = design_from(&y, vec![("x1", x1), ("x2", x2)]);
        let fit = ols_fit(&design, SeType::Hc1).unwrap();

        let beta = nalgebra::DVector::from_vec(fit.coefficients.clone());
        let resid = &design.y - &design.x * beta;
        let xte = design.x.transpose() * resid;
        for j in 0..design.x.ncols() {
            assert!(xte[j].abs() < 1e-8 * n as f64);
        }
    }

    #[test]
    fn robust_and_classical_agree_under_homoskedasticity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 + 2.0 * v + rng.gen_range(-0.6..0.6)).collect();
        let design = design_from(&y, vec![("x", x)]);
        let classical = ols_fit(&design, SeType::Classical).unwrap();
        let robust = ols_fit(&design, SeType::Hc1).unwrap();
        for j in 0..2 {
            let ratio = robust.standard_errors[j] / classical.standard_errors[j];
            assert!(
                (ratio - 1.0).abs() < 0.1,
                "robust/classical SE ratio {ratio} for term {j}"
            );
        }
    }

    #[test]
    fn coefficient_scale_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200;
        let x1: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 0.3 - 0.9 * x1[i] + 0.4 * x2[i] + rng.gen_range(-0.3..0.3))
            .collect();

        let c = -4.0;
        let base = ols_fit(
            &design_from(&y, vec![("x1", x1.clone()), ("x2", x2.clone())]),
            SeType::Hc1,
        )
        .unwrap();
        let scaled = ols_fit(
            &design_from(
                &y,
                vec![("x1", x1.iter().map(|v| c * v).collect()), ("x2", x2)],
            ),
            SeType::Hc1,
        )
        .unwrap();

        assert_abs_diff_eq!(scaled.coefficients[1], base.coefficients[1] / c, epsilon = 1e-8);
        assert_abs_diff_eq!(
            scaled.standard_errors[1],
            base.standard_errors[1] / c.abs(),
            epsilon = 1e-8
        );
        assert_abs_diff_eq!(scaled.coefficients[2], base.coefficients[2], epsilon = 1e-8);
        assert_abs_diff_eq!(scaled.p_values[1], base.p_values[1], epsilon = 1e-8);
    }
}
