//! Arellano-Bond one-step difference GMM for dynamic panels.
//!
//! The estimating equation is first-differenced to remove firm effects;
//! the differenced lagged dependent variables are instrumented with their
//! own levels dated t-2 and earlier (period-specific columns, optionally
//! capped), while differenced exogenous regressors instrument themselves.
//! The one-step weighting matrix uses the tridiagonal first-difference
//! covariance; standard errors are clustered by firm.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Cholesky, DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{EconError, RegressionResult};

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AbGmmSpec {
    /// Lags of the dependent variable entering the equation.
    pub dep_lags: usize,
    /// Cap on lag-level instruments per period (most recent kept).
    pub max_instruments_per_period: usize,
    /// One-step GMM with robust standard errors. Two-step estimation is
    /// not implemented.
    pub one_step: bool,
}

impl Default for AbGmmSpec {
    fn default() -> Self {
        AbGmmSpec {
            dep_lags: 2,
            max_instruments_per_period: 8,
            one_step: true,
        }
    }
}

/// One firm's consecutive time series of the dependent variable and the
/// exogenous regressors. `start_period` places the series on the panel's
/// common time axis so period-specific instruments line up across firms.
#[derive(Debug, Clone)]
pub struct AbFirmSeries {
    pub firm_id: String,
    pub start_period: i32,
    pub y: Vec<f64>,
    /// One row per period, each with the same number of regressors.
    pub x: Vec<Vec<f64>>,
}

pub fn arellano_bond(
    panel: &[AbFirmSeries],
    dep_name: &str,
    regressor_names: &[String],
    spec: &AbGmmSpec,
) -> Result<RegressionResult, EconError> {
    if spec.dep_lags < 1 {
        return Err(EconError::InvalidSpec("dep_lags must be >= 1".into()));
    }
    if !spec.one_step {
        return Err(EconError::InvalidSpec(
            "two-step GMM is not implemented; set one_step".into(),
        ));
    }
    let lags = spec.dep_lags;
    let cap = spec.max_instruments_per_period.max(1);
    let n_exog = regressor_names.len();
    for firm in panel {
        if firm.x.len() != firm.y.len() {
            return Err(EconError::InvalidSpec(format!(
                "firm {}: {} regressor rows for {} periods",
                firm.firm_id,
                firm.x.len(),
                firm.y.len()
            )));
        }
        if firm.x.iter().any(|row| row.len() != n_exog) {
            return Err(EconError::InvalidSpec(format!(
                "firm {}: regressor row width mismatch",
                firm.firm_id
            )));
        }
    }

    // Equations exist at local t = lags+1 .. T-1; instrument columns are
    // keyed by (global period, lag distance d >= 2).
    let usable: Vec<&AbFirmSeries> = panel.iter().filter(|f| f.y.len() >= lags + 2).collect();
    let mut lag_columns: BTreeSet<(i32, usize)> = BTreeSet::new();
    let mut n_eq_total = 0usize;
    for firm in &usable {
        for t in (lags + 1)..firm.y.len() {
            let tau = firm.start_period + t as i32;
            for d in 2..=t.min(cap + 1) {
                lag_columns.insert((tau, d));
            }
            n_eq_total += 1;
        }
    }
    if n_eq_total == 0 {
        return Err(EconError::InsufficientPeriods { required: lags + 2 });
    }

    let lag_index: BTreeMap<(i32, usize), usize> = lag_columns
        .iter()
        .enumerate()
        .map(|(i, &key)| (key, i))
        .collect();
    let q = lag_index.len() + n_exog;
    let k = lags + n_exog;

    // Accumulate S = sum_i Z_i' H Z_i, M = Z'W, v = Z'dy, keeping the
    // per-firm blocks for the clustered covariance afterwards.
    let mut s_mat = DMatrix::<f64>::zeros(q, q);
    let mut m_mat = DMatrix::<f64>::zeros(q, k);
    let mut v_vec = DVector::<f64>::zeros(q);
    let mut blocks: Vec<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> = Vec::new();

    for firm in &usable {
        let t_len = firm.y.len();
        let m_i = t_len - lags - 1;
        let mut z_i = DMatrix::<f64>::zeros(m_i, q);
        let mut w_i = DMatrix::<f64>::zeros(m_i, k);
        let mut dy_i = DVector::<f64>::zeros(m_i);

        for (row, t) in ((lags + 1)..t_len).enumerate() {
            dy_i[row] = firm.y[t] - firm.y[t - 1];
            for l in 1..=lags {
                w_i[(row, l - 1)] = firm.y[t - l] - firm.y[t - l - 1];
            }
            for j in 0..n_exog {
                let dx = firm.x[t][j] - firm.x[t - 1][j];
                w_i[(row, lags + j)] = dx;
                z_i[(row, lag_index.len() + j)] = dx;
            }
            let tau = firm.start_period + t as i32;
            for d in 2..=t.min(cap + 1) {
                let col = lag_index[&(tau, d)];
                z_i[(row, col)] = firm.y[t - d];
            }
        }

        // Z' H Z with H tridiagonal (2 on the diagonal, -1 adjacent).
        let zt = z_i.transpose();
        let mut hz = DMatrix::<f64>::zeros(m_i, q);
        for r in 0..m_i {
            for c in 0..q {
                let mut v = 2.0 * z_i[(r, c)];
                if r > 0 {
                    v -= z_i[(r - 1, c)];
                }
                if r + 1 < m_i {
                    v -= z_i[(r + 1, c)];
                }
                hz[(r, c)] = v;
            }
        }
        s_mat += &zt * hz;
        m_mat += &zt * &w_i;
        v_vec += &zt * &dy_i;
        blocks.push((z_i, w_i, dy_i));
    }

    let per_period_counts = || -> Vec<(i32, usize)> {
        let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
        for &(tau, _) in lag_index.keys() {
            *counts.entry(tau).or_default() += 1;
        }
        counts.into_iter().collect()
    };

    let a_mat = match Cholesky::new(s_mat) {
        Some(chol) => chol.inverse(),
        None => {
            return Err(EconError::InstrumentRank {
                counts: per_period_counts(),
            })
        }
    };

    let am = &a_mat * &m_mat; // q x k
    let g = m_mat.transpose() * &am; // k x k
    let g_inv = Cholesky::new(g)
        .ok_or_else(|| EconError::RankDeficient {
            columns: term_names(dep_name, regressor_names, lags),
        })?
        .inverse();
    let theta = &g_inv * (am.transpose() * &v_vec);

    // Clustered covariance: G^-1 M'A B A M G^-1 with B = sum Z_i'u_i u_i'Z_i.
    let mut b_mat = DMatrix::<f64>::zeros(q, q);
    for (z_i, w_i, dy_i) in &blocks {
        let u = dy_i - w_i * &theta;
        let zu = z_i.transpose() * u; // q
        b_mat += &zu * zu.transpose();
    }
    let cov = &g_inv * am.transpose() * b_mat * &am * &g_inv;

    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let terms = term_names(dep_name, regressor_names, lags);
    let mut standard_errors = Vec::with_capacity(k);
    let mut statistics = Vec::with_capacity(k);
    let mut p_values = Vec::with_capacity(k);
    for j in 0..k {
        let se = cov[(j, j)].max(0.0).sqrt();
        let z = theta[j] / se;
        standard_errors.push(se);
        statistics.push(z);
        p_values.push(2.0 * (1.0 - normal.cdf(z.abs())));
    }

    Ok(RegressionResult {
        terms,
        coefficients: theta.iter().copied().collect(),
        standard_errors,
        statistics,
        p_values,
        n_obs: n_eq_total,
        fit_stat: f64::NAN,
        fit_stat_name: "none",
        converged: true,
        iterations: 1,
    })
}

fn term_names(dep_name: &str, regressor_names: &[String], lags: usize) -> Vec<String> {
    (1..=lags)
        .map(|l| format!("{dep_name}_lag{l}"))
        .chain(regressor_names.iter().cloned())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::{build_design, ols_fit, DesignInput, SeType};
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn gaussian(rng: &mut impl Rng) -> f64 {
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// y_{it} = rho y_{i,t-1} + beta x_{it} + eta_i + eps, burned in.
    fn simulate_panel(
        n_firms: usize,
        t_len: usize,
        rho: f64,
        beta: f64,
        eta_sd: f64,
        seed: u64,
    ) -> Vec<AbFirmSeries> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_firms)
            .map(|i| {
                let eta = eta_sd * gaussian(&mut rng);
                let mut y_prev = 0.0;
                for _ in 0..30 {
                    let x = gaussian(&mut rng);
                    y_prev = rho * y_prev + beta * x + eta + gaussian(&mut rng);
                }
                let mut y = Vec::with_capacity(t_len);
                let mut x_rows = Vec::with_capacity(t_len);
                for _ in 0..t_len {
                    let x = gaussian(&mut rng);
                    let y_t = rho * y_prev + beta * x + eta + gaussian(&mut rng);
                    y.push(y_t);
                    x_rows.push(vec![x]);
                    y_prev = y_t;
                }
                AbFirmSeries {
                    firm_id: format!("F{i:04}"),
                    start_period: 0,
                    y,
                    x: x_rows,
                }
            })
            .collect()
    }

    #[test]
    fn recovers_autoregressive_coefficient() {
        let panel = simulate_panel(500, 8, 0.5, 0.0, 1.0, 1);
        let fit = arellano_bond(
            &panel,
            "y",
            &[String::from("x")],
            &AbGmmSpec {
                dep_lags: 1,
                ..AbGmmSpec::default()
            },
        )
        .unwrap();
        let rho_hat = fit.coefficients[0];
        let se = fit.standard_errors[0];
        assert!(
            (rho_hat - 0.5).abs() < 3.0 * se,
            "rho_hat {rho_hat} se {se}"
        );

        // Pooled levels OLS of y_t on y_{t-1} is pulled upward by the firm
        // effect.
        let mut dep = Vec::new();
        let mut lag = Vec::new();
        for firm in &panel {
            for t in 1..firm.y.len() {
                dep.push(Some(firm.y[t]));
                lag.push(Some(firm.y[t - 1]));
            }
        }
        let design = build_design(&DesignInput {
            dependent: dep,
            regressors: vec![("y_lag1".into(), lag)],
            industry: None,
            year: None,
        })
        .unwrap();
        let ols = ols_fit(&design, SeType::Hc1).unwrap();
        assert!(
            ols.coefficients[1] > 0.5 + 0.05,
            "levels OLS {} not biased upward",
            ols.coefficients[1]
        );
    }

    #[test]
    fn zero_dynamics_estimated_near_zero() {
        let panel = simulate_panel(500, 8, 0.0, 0.0, 1.0, 2);
        let fit = arellano_bond(
            &panel,
            "y",
            &[String::from("x")],
            &AbGmmSpec {
                dep_lags: 1,
                ..AbGmmSpec::default()
            },
        )
        .unwrap();
        assert!(fit.coefficients[0].abs() < 3.0 * fit.standard_errors[0]);
    }

    #[test]
    fn two_period_panel_is_insufficient() {
        let panel = simulate_panel(50, 2, 0.5, 0.0, 1.0, 3);
        let err = arellano_bond(&panel, "y", &[String::from("x")], &AbGmmSpec::default())
            .unwrap_err();
        assert!(matches!(err, EconError::InsufficientPeriods { required: 4 }));
    }

    #[test]
    fn agrees_with_differenced_ols_absent_effects_and_dynamics() {
        // No firm effects, no dynamics: both the GMM fit and a plain OLS
        // on differences (no lagged dependent, which would be endogenous
        // in differences) estimate the exogenous slope consistently.
        let panel = simulate_panel(800, 8, 0.0, 0.7, 0.0, 4);
        let gmm = arellano_bond(
            &panel,
            "y",
            &[String::from("x")],
            &AbGmmSpec {
                dep_lags: 1,
                ..AbGmmSpec::default()
            },
        )
        .unwrap();
        let beta_gmm = gmm.coefficients[1];
        assert!(gmm.coefficients[0].abs() < 3.0 * gmm.standard_errors[0]);

        let mut dep = Vec::new();
        let mut dx = Vec::new();
        for firm in &panel {
            for t in 1..firm.y.len() {
                dep.push(Some(firm.y[t] - firm.y[t - 1]));
                dx.push(Some(firm.x[t][0] - firm.x[t - 1][0]));
            }
        }
        let design = build_design(&DesignInput {
            dependent: dep,
            regressors: vec![("dx".into(), dx)],
            industry: None,
            year: None,
        })
        .unwrap();
        let dols = ols_fit(&design, SeType::Hc1).unwrap();
        let beta_ols = dols.coefficients[1];
        let se = gmm.standard_errors[1].hypot(dols.standard_errors[1]);
        assert!(
            (beta_gmm - beta_ols).abs() < 3.0 * se,
            "gmm {beta_gmm} vs dols {beta_ols} (se {se})"
        );
    }

    #[test]
    fn instrument_cap_reduces_to_recent_lags_and_still_estimates() {
        let panel = simulate_panel(500, 8, 0.5, 0.0, 1.0, 5);
        let fit = arellano_bond(
            &panel,
            "y",
            &[String::from("x")],
            &AbGmmSpec {
                dep_lags: 1,
                max_instruments_per_period: 1,
                one_step: true,
            },
        )
        .unwrap();
        assert!((fit.coefficients[0] - 0.5).abs() < 3.0 * fit.standard_errors[0]);
    }

    #[test]
    fn two_lag_specification_names_terms() {
        let panel = simulate_panel(300, 8, 0.4, 0.0, 1.0, 6);
        let fit = arellano_bond(&panel, "negoutlier", &[String::from("x")], &AbGmmSpec::default())
            .unwrap();
        assert_eq!(
            fit.terms,
            vec!["negoutlier_lag1", "negoutlier_lag2", "x"]
        );
    }
}
