//! Expanded market model: per-firm OLS of weekly returns on the market
//! return at leads and lags (t-2 .. t+2), residual extraction, and the
//! log transform into firm-specific weekly returns W.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::data_panel::FirmWeekRecord;
use crate::week::WeekId;

/// Number of market-return regressors (t-2, t-1, t, t+1, t+2).
pub const N_MARKET_LAGS: usize = 5;
/// Model parameters: intercept plus the five market terms.
pub const N_PARAMS: usize = N_MARKET_LAGS + 1;
/// Minimum usable weeks after lead/lag alignment.
pub const MIN_USABLE_WEEKS: usize = N_PARAMS + 2;

#[derive(Debug, Error)]
pub enum MarketModelError {
    #[error("insufficient data for {firm_id}: need at least {required} usable weeks, got {actual}")]
    InsufficientData {
        firm_id: String,
        required: usize,
        actual: usize,
    },

    #[error("singular design for {firm_id}: market lead/lag columns are collinear")]
    SingularDesign { firm_id: String },

    #[error("residual {residual} implies 1 + residual <= 0; outside the log-return domain")]
    LogDomain { residual: f64 },
}

/// Per-firm OLS fit of the expanded market model.
#[derive(Debug, Clone)]
pub struct MarketModelFit {
    pub firm_id: String,
    /// Intercept.
    pub alpha: f64,
    /// Coefficients on the market return at t-2, t-1, t, t+1, t+2.
    pub betas: [f64; N_MARKET_LAGS],
    /// Residual per used week, in week order.
    pub residuals: Vec<(WeekId, f64)>,
    pub r_squared: f64,
    pub n_obs: usize,
    /// Weeks excluded because the t-2..t+2 market window was incomplete.
    pub n_dropped_window: usize,
}

/// Firm-specific weekly returns of one (firm, year), with the per-year
/// mean (RET) and sample standard deviation (SIGMA, divisor n-1).
#[derive(Debug, Clone)]
pub struct FirmYearSlice {
    pub firm_id: String,
    pub year: i32,
    pub weeks: Vec<WeekId>,
    pub w: Vec<f64>,
    pub ret_mean: f64,
    pub sigma: f64,
}

/// Exclusions recorded while building firm-year slices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SliceDiagnostics {
    /// Weeks dropped because 1 + residual <= 0.
    pub weeks_dropped_log_domain: usize,
    /// Slices dropped for having fewer weeks than the panel minimum.
    pub slices_dropped_min_weeks: usize,
}

/// Fit the expanded market model for one firm by OLS.
///
/// `firm_weeks` must be one firm's records; `market` maps week -> market
/// return and must cover t-2..t+2 for a week to be used. Weeks lacking a
/// complete window are excluded and counted, never zero-padded.
pub fn fit_expanded_market_model(
    firm_weeks: &[FirmWeekRecord],
    market: &BTreeMap<WeekId, f64>,
) -> Result<MarketModelFit, MarketModelError> {
    let firm_id = firm_weeks
        .first()
        .map(|r| r.firm_id.clone())
        .unwrap_or_default();

    let mut rows: Vec<[f64; N_PARAMS]> = Vec::new();
    let mut y = Vec::new();
    let mut used_weeks = Vec::new();
    let mut n_dropped_window = 0usize;

    let mut ordered: Vec<&FirmWeekRecord> = firm_weeks.iter().collect();
    ordered.sort_by_key(|r| r.week);

    for rec in ordered {
        let mut row = [1.0f64; N_PARAMS];
        let mut complete = true;
        for (k, offset) in (-2i64..=2).enumerate() {
            let Some(wk) = rec.week.offset(offset) else {
                complete = false;
                break;
            };
            match market.get(&wk) {
                Some(&m) => row[k + 1] = m,
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if !complete {
            n_dropped_window += 1;
            continue;
        }
        rows.push(row);
        y.push(rec.ret);
        used_weeks.push(rec.week);
    }

    let n = rows.len();
    if n < MIN_USABLE_WEEKS {
        return Err(MarketModelError::InsufficientData {
            firm_id,
            required: MIN_USABLE_WEEKS,
            actual: n,
        });
    }

    let x = DMatrix::from_fn(n, N_PARAMS, |i, j| rows[i][j]);
    let yv = DVector::from_vec(y);

    let coef = solve_least_squares(&x, &yv)
        .ok_or_else(|| MarketModelError::SingularDesign { firm_id: firm_id.clone() })?;

    let fitted = &x * &coef;
    let resid = &yv - &fitted;

    let y_mean = yv.mean();
    let sst: f64 = yv.iter().map(|v| (v - y_mean).powi(2)).sum();
    let ssr: f64 = resid.iter().map(|e| e * e).sum();
    let r_squared = if sst > f64::EPSILON {
        (1.0 - ssr / sst).clamp(0.0, 1.0)
    } else if ssr <= f64::EPSILON {
        1.0
    } else {
        0.0
    };

    let mut betas = [0.0; N_MARKET_LAGS];
    betas.copy_from_slice(&coef.as_slice()[1..]);

    Ok(MarketModelFit {
        firm_id,
        alpha: coef[0],
        betas,
        residuals: used_weeks
            .into_iter()
            .zip(resid.iter().copied())
            .collect(),
        r_squared,
        n_obs: n,
        n_dropped_window,
    })
}

/// Solve min ||X b - y|| via the spectral decomposition of X'X, returning
/// None when the design is rank deficient.
fn solve_least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    let eig = xtx.symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let tol = max_eig * 1e-12;
    if eig.eigenvalues.iter().any(|&l| l <= tol) {
        return None;
    }
    // b = V diag(1/lambda) V' (X'y)
    let vt_b = eig.eigenvectors.transpose() * xty;
    let scaled = DVector::from_iterator(
        vt_b.len(),
        vt_b.iter().zip(eig.eigenvalues.iter()).map(|(v, l)| v / l),
    );
    Some(&eig.eigenvectors * scaled)
}

/// Firm-specific weekly return: W = ln(1 + residual).
pub fn firm_specific_return(residual: f64) -> Result<f64, MarketModelError> {
    if 1.0 + residual <= 0.0 {
        return Err(MarketModelError::LogDomain { residual });
    }
    Ok((1.0 + residual).ln())
}

/// Group fitted residuals into per-(firm, year) W slices.
///
/// Weeks whose residual falls outside the log domain are dropped with a
/// diagnostic count; slices with fewer than `min_weeks` observations are
/// excluded. Output is ordered by (firm, year).
pub fn build_firm_year_slices(
    fits: &[MarketModelFit],
    min_weeks: usize,
) -> (Vec<FirmYearSlice>, SliceDiagnostics) {
    let mut diag = SliceDiagnostics::default();
    let mut grouped: BTreeMap<(String, i32), (Vec<WeekId>, Vec<f64>)> = BTreeMap::new();

    for fit in fits {
        for &(week, eps) in &fit.residuals {
            match firm_specific_return(eps) {
                Ok(w) => {
                    let entry = grouped
                        .entry((fit.firm_id.clone(), week.fiscal_year()))
                        .or_default();
                    entry.0.push(week);
                    entry.1.push(w);
                }
                Err(_) => diag.weeks_dropped_log_domain += 1,
            }
        }
    }

    let mut slices = Vec::new();
    for ((firm_id, year), (weeks, w)) in grouped {
        if w.len() < min_weeks {
            diag.slices_dropped_min_weeks += 1;
            continue;
        }
        let ret_mean = w.iter().sum::<f64>() / w.len() as f64;
        let sigma = (w.iter().map(|v| (v - ret_mean).powi(2)).sum::<f64>()
            / (w.len() - 1) as f64)
            .sqrt();
        slices.push(FirmYearSlice {
            firm_id,
            year,
            weeks,
            w,
            ret_mean,
            sigma,
        });
    }

    (slices, diag)
}
