//! Panel estimation: pooled OLS and logistic regressions of next-year
//! crash measures on current-year regressors with industry/year fixed
//! effects and heteroskedasticity-robust standard errors, plus the
//! Arellano-Bond one-step difference GMM for the dynamic panel.

mod abgmm;
mod design;
pub(crate) mod logit;
mod ols;
mod suite;

pub use abgmm::{arellano_bond, AbFirmSeries, AbGmmSpec};
pub use design::{build_design, DesignInput, DesignMatrix};
pub use logit::{gradient_check, logit_fit, DEFAULT_LOGIT_MAX_ITER, DEFAULT_LOGIT_TOL};
pub use ols::{ols_fit, SeType};
pub use suite::{assemble_rows, run_model_suite, size_quartiles, AnalysisRow, SuiteConfig, SuiteOutput};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EconError {
    #[error("rank-deficient design: offending column(s): {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("insufficient data: need at least {required} observations, got {actual}")]
    InsufficientData { required: usize, actual: usize },

    #[error("dependent variable must contain both classes for a logit fit")]
    OneClass,

    #[error("dependent variable must be binary 0/1 for a logit fit, found {0}")]
    NotBinary(f64),

    #[error("perfect separation detected: coefficient magnitude {max_coef:.1} with non-vanishing score")]
    Separation { max_coef: f64 },

    #[error("panel supplies too few periods: need at least {required} consecutive periods per firm")]
    InsufficientPeriods { required: usize },

    #[error("instrument matrix rank failure; instruments per period: {}",
        counts.iter().map(|(t, c)| format!("t={t}:{c}")).collect::<Vec<_>>().join(", "))]
    InstrumentRank { counts: Vec<(i32, usize)> },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("missing column `{0}` in the analysis panel")]
    MissingColumn(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),
}

/// Coefficients and inference for one fitted model.
#[derive(Debug, Clone)]
pub struct RegressionResult {
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// t statistics (linear) or z statistics (logit / GMM).
    pub statistics: Vec<f64>,
    pub p_values: Vec<f64>,
    pub n_obs: usize,
    /// R-squared (linear) or McFadden pseudo R-squared (logit); NaN for GMM.
    pub fit_stat: f64,
    pub fit_stat_name: &'static str,
    pub converged: bool,
    pub iterations: usize,
}

impl RegressionResult {
    pub fn coefficient(&self, term: &str) -> Option<f64> {
        self.terms
            .iter()
            .position(|t| t == term)
            .map(|i| self.coefficients[i])
    }

    pub fn standard_error(&self, term: &str) -> Option<f64> {
        self.terms
            .iter()
            .position(|t| t == term)
            .map(|i| self.standard_errors[i])
    }

    pub fn p_value(&self, term: &str) -> Option<f64> {
        self.terms
            .iter()
            .position(|t| t == term)
            .map(|i| self.p_values[i])
    }
}

/// Significance stars at the 10/5/1% levels.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}
