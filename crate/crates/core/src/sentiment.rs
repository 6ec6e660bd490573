//! Firm-specific investor sentiment index.
//!
//! Seven firm-level inputs (P/E, TURN, EQS, CEFD, TOBIN, LEV, BSI) are
//! standardized and combined into a single score, either with a built-in
//! reference weight vector or with weights fitted by PCA on the current
//! panel (eigenvalue-share-weighted average of the eigenvectors). The
//! detoned variant removes the first principal component - the common
//! market-wide factor - before scoring, leaving a series uncorrelated
//! with the PC1 scores.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// The seven sentiment inputs, in canonical order.
pub const SENTIMENT_VARS: [&str; 7] = ["pe", "turn", "eqs", "cefd", "tobin", "lev", "bsi"];

/// Reference index weights applied to standardized inputs in fixed mode,
/// ordered as [`SENTIMENT_VARS`].
pub const FIXED_WEIGHTS: [f64; 7] = [-0.136, 0.208, 0.052, -0.216, 0.006, 0.17, 0.048];

pub const N_VARS: usize = 7;

#[derive(Debug, Error)]
pub enum SentimentError {
    #[error("column `{0}` is constant; cannot standardize")]
    DegenerateColumn(String),

    #[error("need at least {required} rows for PCA, got {actual}")]
    InsufficientRows { required: usize, actual: usize },

    #[error("expected {expected} values, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("eigen-decomposition produced non-finite values")]
    Numeric,
}

/// Which weights score the standardized inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentimentMode {
    /// Built-in reference weight vector.
    Fixed,
    /// Weights fitted from the panel's principal components.
    Fitted,
}

/// Per-variable centering/scaling parameters from the estimation panel.
#[derive(Debug, Clone)]
pub struct Standardizer {
    pub means: [f64; N_VARS],
    /// Sample standard deviations (divisor n-1); all strictly positive.
    pub sds: [f64; N_VARS],
}

impl Standardizer {
    pub fn apply(&self, raw: &[f64; N_VARS]) -> [f64; N_VARS] {
        let mut out = [0.0; N_VARS];
        for j in 0..N_VARS {
            out[j] = (raw[j] - self.means[j]) / self.sds[j];
        }
        out
    }
}

/// Index weights plus, in fitted mode, the eigenvalue shares behind them.
#[derive(Debug, Clone)]
pub struct SentimentLoadings {
    pub weights: [f64; N_VARS],
    pub mode: SentimentMode,
    /// Eigenvalue shares per component (fitted mode only).
    pub explained_variance: Option<[f64; N_VARS]>,
}

impl SentimentLoadings {
    pub fn fixed() -> Self {
        SentimentLoadings {
            weights: FIXED_WEIGHTS,
            mode: SentimentMode::Fixed,
            explained_variance: None,
        }
    }
}

/// Eigen-decomposition of the panel's 7x7 sample covariance.
#[derive(Debug, Clone)]
pub struct Pca {
    /// Descending.
    pub eigenvalues: [f64; N_VARS],
    /// Columns are eigenvectors, ordered like `eigenvalues`; each column's
    /// largest-magnitude entry is positive.
    pub eigenvectors: DMatrix<f64>,
    /// Centered projections, one row per observation.
    pub scores: DMatrix<f64>,
}

impl Pca {
    pub fn explained_shares(&self) -> [f64; N_VARS] {
        let total: f64 = self.eigenvalues.iter().map(|l| l.max(0.0)).sum();
        let mut shares = [0.0; N_VARS];
        if total > 0.0 {
            for (s, l) in shares.iter_mut().zip(&self.eigenvalues) {
                *s = l.max(0.0) / total;
            }
        }
        shares
    }
}

/// One scored firm-year.
#[derive(Debug, Clone)]
pub struct SentimentRow {
    pub firm_id: String,
    pub year: i32,
    pub sent: f64,
    pub sent_detoned: f64,
}

/// The sentiment inputs of one firm-year, ordered as [`SENTIMENT_VARS`].
#[derive(Debug, Clone)]
pub struct SentimentInput {
    pub firm_id: String,
    pub year: i32,
    pub values: [f64; N_VARS],
}

/// Full output of the sentiment stage, with component scores retained
/// for audit.
#[derive(Debug, Clone)]
pub struct SentimentSeries {
    pub rows: Vec<SentimentRow>,
    pub standardizer: Standardizer,
    pub loadings: SentimentLoadings,
    pub pca: Pca,
}

/// Standardize each column to mean 0, sample standard deviation 1.
pub fn standardize(data: &DMatrix<f64>) -> Result<(DMatrix<f64>, Standardizer), SentimentError> {
    if data.ncols() != N_VARS {
        return Err(SentimentError::ShapeMismatch {
            expected: N_VARS,
            actual: data.ncols(),
        });
    }
    let n = data.nrows();
    let mut means = [0.0; N_VARS];
    let mut sds = [0.0; N_VARS];
    for j in 0..N_VARS {
        let col = data.column(j);
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            return Err(SentimentError::DegenerateColumn(SENTIMENT_VARS[j].into()));
        }
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1).max(1) as f64;
        means[j] = mean;
        sds[j] = var.sqrt();
    }
    let mut out = data.clone();
    for j in 0..N_VARS {
        for i in 0..n {
            out[(i, j)] = (data[(i, j)] - means[j]) / sds[j];
        }
    }
    Ok((out, Standardizer { means, sds }))
}

/// Eigen-decomposition of the sample covariance of `data` (rows are
/// observations). Eigenvalues descend; each eigenvector's
/// largest-magnitude entry is made positive so signs are deterministic.
pub fn pca(data: &DMatrix<f64>) -> Result<Pca, SentimentError> {
    let n = data.nrows();
    if n < 8 {
        return Err(SentimentError::InsufficientRows {
            required: 8,
            actual: n,
        });
    }
    if data.ncols() != N_VARS {
        return Err(SentimentError::ShapeMismatch {
            expected: N_VARS,
            actual: data.ncols(),
        });
    }

    let means = DVector::from_iterator(
        N_VARS,
        (0..N_VARS).map(|j| data.column(j).sum() / n as f64),
    );
    let mut centered = data.clone();
    for j in 0..N_VARS {
        for i in 0..n {
            centered[(i, j)] -= means[j];
        }
    }
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let eig = cov.symmetric_eigen();
    if eig.eigenvalues.iter().any(|l| !l.is_finite()) {
        return Err(SentimentError::Numeric);
    }

    // Order components by descending eigenvalue (index-stable on ties).
    let mut order: Vec<usize> = (0..N_VARS).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut eigenvalues = [0.0; N_VARS];
    let mut vectors = DMatrix::zeros(N_VARS, N_VARS);
    for (slot, &src) in order.iter().enumerate() {
        eigenvalues[slot] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).clone_owned();
        // Largest-magnitude entry positive (lowest index wins magnitude ties).
        let mut pivot = 0;
        for i in 1..N_VARS {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(slot, &col);
    }

    let scores = centered * &vectors;
    Ok(Pca {
        eigenvalues,
        eigenvectors: vectors,
        scores,
    })
}

/// Weights in fitted mode: eigenvalue-share-weighted average of the
/// eigenvectors.
pub fn fitted_loadings(pca: &Pca) -> SentimentLoadings {
    let shares = pca.explained_shares();
    let mut weights = [0.0; N_VARS];
    for k in 0..N_VARS {
        for j in 0..N_VARS {
            weights[j] += shares[k] * pca.eigenvectors[(j, k)];
        }
    }
    SentimentLoadings {
        weights,
        mode: SentimentMode::Fitted,
        explained_variance: Some(shares),
    }
}

/// Score one observation of standardized inputs.
pub fn build_sent(inputs: &[f64], loadings: &SentimentLoadings) -> Result<f64, SentimentError> {
    if inputs.len() != N_VARS {
        return Err(SentimentError::ShapeMismatch {
            expected: N_VARS,
            actual: inputs.len(),
        });
    }
    Ok(inputs
        .iter()
        .zip(&loadings.weights)
        .map(|(x, w)| x * w)
        .sum())
}

/// Reconstruct every observation from components 2..7 only and re-score:
/// the returned series has zero sample covariance with the PC1 scores.
pub fn detone(pca: &Pca, loadings: &SentimentLoadings) -> Vec<f64> {
    let n = pca.scores.nrows();
    // Zero the first component's contribution.
    let mut reduced = pca.scores.clone();
    for i in 0..n {
        reduced[(i, 0)] = 0.0;
    }
    let reconstructed = reduced * pca.eigenvectors.transpose();
    (0..n)
        .map(|i| {
            (0..N_VARS)
                .map(|j| reconstructed[(i, j)] * loadings.weights[j])
                .sum()
        })
        .collect()
}

/// Winsorize each column at the [q, 1-q] empirical quantiles
/// (nearest-rank), in place.
pub fn winsorize_columns(data: &mut DMatrix<f64>, q: f64) {
    let n = data.nrows();
    if n == 0 || q <= 0.0 {
        return;
    }
    let rank = |frac: f64| -> usize {
        ((frac * n as f64).ceil() as usize).clamp(1, n) - 1
    };
    for j in 0..data.ncols() {
        let mut sorted: Vec<f64> = data.column(j).iter().copied().collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lo = sorted[rank(q)];
        let hi = sorted[rank(1.0 - q)];
        for i in 0..n {
            data[(i, j)] = data[(i, j)].clamp(lo, hi);
        }
    }
}

/// Run the whole sentiment stage over a panel of inputs: standardize,
/// fit the PCA (always needed for detoning), score per the requested
/// mode, and detone. Row order is preserved.
pub fn build_series(
    inputs: &[SentimentInput],
    mode: SentimentMode,
    winsor_quantile: Option<f64>,
) -> Result<SentimentSeries, SentimentError> {
    let n = inputs.len();
    let mut raw = DMatrix::zeros(n, N_VARS);
    for (i, row) in inputs.iter().enumerate() {
        for j in 0..N_VARS {
            raw[(i, j)] = row.values[j];
        }
    }
    if let Some(q) = winsor_quantile {
        winsorize_columns(&mut raw, q);
    }

    let (standardized, standardizer) = standardize(&raw)?;
    let pca = pca(&standardized)?;
    let loadings = match mode {
        SentimentMode::Fixed => SentimentLoadings::fixed(),
        SentimentMode::Fitted => fitted_loadings(&pca),
    };

    let detoned = detone(&pca, &loadings);
    let rows = inputs
        .iter()
        .enumerate()
        .map(|(i, input)| {
            let z: Vec<f64> = (0..N_VARS).map(|j| standardized[(i, j)]).collect();
            Ok(SentimentRow {
                firm_id: input.firm_id.clone(),
                year: input.year,
                sent: build_sent(&z, &loadings)?,
                sent_detoned: detoned[i],
            })
        })
        .collect::<Result<Vec<_>, SentimentError>>()?;

    Ok(SentimentSeries {
        rows,
        standardizer,
        loadings,
        pca,
    })
}
