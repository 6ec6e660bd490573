//! Classical per-(firm, year) crash risk measures on firm-specific weekly
//! returns: negative skewness (NCSKEW), down-to-up volatility (DUVOL), the
//! k-sigma CRASH indicator, and the MCD-based NEGOUTLIER, aggregated with
//! per-measure missingness instead of row rejection.

use thiserror::Error;

use crate::market_model::FirmYearSlice;
use crate::mcd::{self, McdConfig, McdError};

/// Default sigma multiple for the CRASH rule.
pub const DEFAULT_CRASH_SIGMA: f64 = 3.2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CrashMeasureError {
    #[error("need at least {required} weeks, got {actual}")]
    InsufficientData { required: usize, actual: usize },

    #[error("need at least 2 up and 2 down weeks, got {n_up} up / {n_down} down")]
    InsufficientUpDownWeeks { n_up: usize, n_down: usize },

    #[error("measure undefined: {0}")]
    UndefinedMeasure(String),
}

/// Why a measure could not be computed for a slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MissingReason {
    TooFewWeeks { required: usize, actual: usize },
    ZeroDispersion,
    InsufficientUpDownWeeks { n_up: usize, n_down: usize },
    Undefined(String),
}

impl MissingReason {
    pub fn code(&self) -> &'static str {
        match self {
            MissingReason::TooFewWeeks { .. } => "too_few_weeks",
            MissingReason::ZeroDispersion => "zero_dispersion",
            MissingReason::InsufficientUpDownWeeks { .. } => "insufficient_up_down_weeks",
            MissingReason::Undefined(_) => "undefined_measure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureKind {
    Negoutlier,
    Crash,
    Ncskew,
    Duvol,
}

impl MeasureKind {
    pub fn name(&self) -> &'static str {
        match self {
            MeasureKind::Negoutlier => "negoutlier",
            MeasureKind::Crash => "crash",
            MeasureKind::Ncskew => "ncskew",
            MeasureKind::Duvol => "duvol",
        }
    }
}

/// All crash measures for one firm-year. Individually missing measures are
/// None with the reason recorded in `missing`; non-fatal notes (for example
/// a zero-dispersion CRASH defaulting to 0) land in `diagnostics`.
#[derive(Debug, Clone)]
pub struct CrashMeasures {
    pub firm_id: String,
    pub year: i32,
    pub negoutlier: Option<u8>,
    pub crash: Option<u8>,
    pub ncskew: Option<f64>,
    pub duvol: Option<f64>,
    pub n_weeks: usize,
    pub n_up: usize,
    pub n_down: usize,
    pub ret_mean: f64,
    pub sigma: f64,
    pub missing: Vec<(MeasureKind, MissingReason)>,
    pub diagnostics: Vec<String>,
}

fn demean(w: &[f64]) -> (f64, Vec<f64>) {
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    (mean, w.iter().map(|v| v - mean).collect())
}

/// All values identical: no dispersion regardless of summation rounding.
fn is_constant(w: &[f64]) -> bool {
    w.windows(2).all(|pair| pair[0] == pair[1])
}

/// Negative coefficient of skewness with the standard finite-sample factors:
/// -[n (n-1)^{3/2} sum(d^3)] / [(n-1)(n-2) (sum(d^2))^{3/2}] on demeaned w.
pub fn ncskew(w: &[f64]) -> Result<f64, CrashMeasureError> {
    let n = w.len();
    if n < 3 {
        return Err(CrashMeasureError::InsufficientData {
            required: 3,
            actual: n,
        });
    }
    if is_constant(w) {
        return Err(CrashMeasureError::UndefinedMeasure(
            "zero dispersion".into(),
        ));
    }
    let (_, dev) = demean(w);
    let s2: f64 = dev.iter().map(|d| d * d).sum();
    let s3: f64 = dev.iter().map(|d| d * d * d).sum();
    let nf = n as f64;
    Ok(-(nf * (nf - 1.0).powf(1.5) * s3) / ((nf - 1.0) * (nf - 2.0) * s2.powf(1.5)))
}

/// Down-to-up volatility: ln[((n_u - 1) sum_down d^2) / ((n_d - 1) sum_up d^2)],
/// where down/up weeks lie strictly below/above the annual mean.
pub fn duvol(w: &[f64]) -> Result<f64, CrashMeasureError> {
    let (_, dev) = demean(w);
    let mut n_up = 0usize;
    let mut n_down = 0usize;
    let mut sum_up = 0.0f64;
    let mut sum_down = 0.0f64;
    for d in dev {
        if d > 0.0 {
            n_up += 1;
            sum_up += d * d;
        } else if d < 0.0 {
            n_down += 1;
            sum_down += d * d;
        }
    }
    if n_up < 2 || n_down < 2 {
        return Err(CrashMeasureError::InsufficientUpDownWeeks { n_up, n_down });
    }
    if sum_up == 0.0 || sum_down == 0.0 {
        return Err(CrashMeasureError::UndefinedMeasure(
            "one-sided dispersion is zero".into(),
        ));
    }
    Ok((((n_up - 1) as f64 * sum_down) / ((n_down - 1) as f64 * sum_up)).ln())
}

/// Outcome of the CRASH rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrashOutcome {
    pub indicator: u8,
    /// The slice had no dispersion, so the rule defaulted to 0.
    pub zero_dispersion: bool,
}

/// CRASH = 1 iff some week falls strictly below mean - k * sigma
/// (sample standard deviation, divisor n-1).
pub fn crash_indicator(w: &[f64], k: f64) -> Result<CrashOutcome, CrashMeasureError> {
    let n = w.len();
    if n < 2 {
        return Err(CrashMeasureError::InsufficientData {
            required: 2,
            actual: n,
        });
    }
    if is_constant(w) {
        return Ok(CrashOutcome {
            indicator: 0,
            zero_dispersion: true,
        });
    }
    let mean = w.iter().sum::<f64>() / n as f64;
    let sigma = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let threshold = mean - k * sigma;
    Ok(CrashOutcome {
        indicator: u8::from(w.iter().any(|&v| v < threshold)),
        zero_dispersion: false,
    })
}

/// Compute all four measures for a slice. Precondition failures become
/// per-measure missing values, never a rejected row.
pub fn compute_all(slice: &FirmYearSlice, mcd_config: &McdConfig, crash_sigma: f64) -> CrashMeasures {
    compute_all_with_fit(slice, mcd_config, crash_sigma).0
}

/// Like [`compute_all`], additionally returning the underlying MCD fit
/// (when one was possible) for distance audits.
pub fn compute_all_with_fit(
    slice: &FirmYearSlice,
    mcd_config: &McdConfig,
    crash_sigma: f64,
) -> (CrashMeasures, Option<crate::mcd::McdFit>) {
    let w = &slice.w;
    let (_, dev) = demean(w);
    let n_up = dev.iter().filter(|&&d| d > 0.0).count();
    let n_down = dev.iter().filter(|&&d| d < 0.0).count();

    let mut missing = Vec::new();
    let mut diagnostics = Vec::new();
    let mut mcd_fit = None;

    let negoutlier = match mcd::negoutlier(slice, mcd_config) {
        Ok(out) => {
            if out.degenerate {
                diagnostics.push("negoutlier: zero dispersion, defaulted to 0".into());
            }
            mcd_fit = out.fit;
            Some(out.indicator)
        }
        Err(McdError::InsufficientData { required, actual }) => {
            missing.push((
                MeasureKind::Negoutlier,
                MissingReason::TooFewWeeks { required, actual },
            ));
            None
        }
        Err(e) => {
            missing.push((
                MeasureKind::Negoutlier,
                MissingReason::Undefined(e.to_string()),
            ));
            None
        }
    };

    let crash = match crash_indicator(w, crash_sigma) {
        Ok(out) => {
            if out.zero_dispersion {
                diagnostics.push("crash: zero dispersion, defaulted to 0".into());
            }
            Some(out.indicator)
        }
        Err(CrashMeasureError::InsufficientData { required, actual }) => {
            missing.push((
                MeasureKind::Crash,
                MissingReason::TooFewWeeks { required, actual },
            ));
            None
        }
        Err(e) => {
            missing.push((MeasureKind::Crash, MissingReason::Undefined(e.to_string())));
            None
        }
    };

    let ncskew_value = match ncskew(w) {
        Ok(v) => Some(v),
        Err(CrashMeasureError::InsufficientData { required, actual }) => {
            missing.push((
                MeasureKind::Ncskew,
                MissingReason::TooFewWeeks { required, actual },
            ));
            None
        }
        Err(CrashMeasureError::UndefinedMeasure(_)) => {
            missing.push((MeasureKind::Ncskew, MissingReason::ZeroDispersion));
            None
        }
        Err(e) => {
            missing.push((MeasureKind::Ncskew, MissingReason::Undefined(e.to_string())));
            None
        }
    };

    let duvol_value = match duvol(w) {
        Ok(v) => Some(v),
        Err(CrashMeasureError::InsufficientUpDownWeeks { n_up, n_down }) => {
            missing.push((
                MeasureKind::Duvol,
                MissingReason::InsufficientUpDownWeeks { n_up, n_down },
            ));
            None
        }
        Err(CrashMeasureError::UndefinedMeasure(m)) => {
            missing.push((MeasureKind::Duvol, MissingReason::Undefined(m)));
            None
        }
        Err(e) => {
            missing.push((MeasureKind::Duvol, MissingReason::Undefined(e.to_string())));
            None
        }
    };

    let measures = CrashMeasures {
        firm_id: slice.firm_id.clone(),
        year: slice.year,
        negoutlier,
        crash,
        ncskew: ncskew_value,
        duvol: duvol_value,
        n_weeks: w.len(),
        n_up,
        n_down,
        ret_mean: slice.ret_mean,
        sigma: slice.sigma,
        missing,
        diagnostics,
    };
    (measures, mcd_fit)
}
