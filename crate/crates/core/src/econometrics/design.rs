//! Design matrix assembly: listwise deletion, dummy coding of fixed
//! effects with a deterministic reference level, and a rank check that
//! names offending columns.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use super::EconError;

/// Columns going into a design matrix. `None` cells trigger listwise
/// deletion of the whole row.
#[derive(Debug, Clone, Default)]
pub struct DesignInput {
    pub dependent: Vec<Option<f64>>,
    pub regressors: Vec<(String, Vec<Option<f64>>)>,
    /// Industry code per row; `Some` adds industry dummies.
    pub industry: Option<Vec<String>>,
    /// Year per row; `Some` adds year dummies.
    pub year: Option<Vec<i32>>,
}

/// Rank-checked numeric design with an intercept first.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub column_names: Vec<String>,
    /// Reference category dropped per fixed-effect dimension.
    pub dropped_levels: Vec<(String, String)>,
    pub n_dropped_rows: usize,
    pub diagnostics: Vec<String>,
}

/// Build the design: intercept, regressors in the given order, then
/// industry and year dummies (lowest-sorted level is the reference).
/// A fixed-effect dimension with a single level is skipped with a
/// diagnostic rather than an error.
pub fn build_design(input: &DesignInput) -> Result<DesignMatrix, EconError> {
    let n_raw = input.dependent.len();
    for (name, col) in &input.regressors {
        if col.len() != n_raw {
            return Err(EconError::InvalidSpec(format!(
                "regressor `{name}` has {} rows, dependent has {n_raw}",
                col.len()
            )));
        }
    }
    if let Some(ind) = &input.industry {
        if ind.len() != n_raw {
            return Err(EconError::InvalidSpec("industry column length mismatch".into()));
        }
    }
    if let Some(years) = &input.year {
        if years.len() != n_raw {
            return Err(EconError::InvalidSpec("year column length mismatch".into()));
        }
    }

    // Listwise deletion.
    let keep: Vec<usize> = (0..n_raw)
        .filter(|&i| {
            input.dependent[i].is_some()
                && input.regressors.iter().all(|(_, col)| col[i].is_some())
        })
        .collect();
    let n = keep.len();
    let n_dropped_rows = n_raw - n;
    if n == 0 {
        return Err(EconError::InsufficientData {
            required: 1,
            actual: 0,
        });
    }

    let mut diagnostics = Vec::new();
    let mut dropped_levels = Vec::new();

    let mut column_names = vec!["const".to_string()];
    let mut columns: Vec<Vec<f64>> = vec![vec![1.0; n]];

    for (name, col) in &input.regressors {
        column_names.push(name.clone());
        columns.push(keep.iter().map(|&i| col[i].unwrap()).collect());
    }

    if let Some(industry) = &input.industry {
        let levels: BTreeSet<&String> = keep.iter().map(|&i| &industry[i]).collect();
        let levels: Vec<&String> = levels.into_iter().collect();
        if levels.len() < 2 {
            diagnostics.push("industry fixed effect skipped: single level".into());
        } else {
            dropped_levels.push(("industry".to_string(), levels[0].clone()));
            for level in &levels[1..] {
                column_names.push(format!("industry[{level}]"));
                columns.push(
                    keep.iter()
                        .map(|&i| f64::from(industry[i] == **level))
                        .collect(),
                );
            }
        }
    }

    if let Some(years) = &input.year {
        let levels: BTreeSet<i32> = keep.iter().map(|&i| years[i]).collect();
        let levels: Vec<i32> = levels.into_iter().collect();
        if levels.len() < 2 {
            diagnostics.push("year fixed effect skipped: single level".into());
        } else {
            dropped_levels.push(("year".to_string(), levels[0].to_string()));
            for level in &levels[1..] {
                column_names.push(format!("year[{level}]"));
                columns.push(keep.iter().map(|&i| f64::from(years[i] == *level)).collect());
            }
        }
    }

    let k = columns.len();
    if n <= k {
        return Err(EconError::InsufficientData {
            required: k + 1,
            actual: n,
        });
    }

    let offending = rank_check(&columns, &column_names);
    if !offending.is_empty() {
        return Err(EconError::RankDeficient { columns: offending });
    }

    let x = DMatrix::from_fn(n, k, |i, j| columns[j][i]);
    let y = DVector::from_iterator(n, keep.iter().map(|&i| input.dependent[i].unwrap()));

    Ok(DesignMatrix {
        x,
        y,
        column_names,
        dropped_levels,
        n_dropped_rows,
        diagnostics,
    })
}

/// Modified Gram-Schmidt with reorthogonalization; a column whose residual
/// norm collapses relative to its input norm is linearly dependent on the
/// columns before it.
fn rank_check(columns: &[Vec<f64>], names: &[String]) -> Vec<String> {
    let n = columns[0].len();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut offending = Vec::new();

    for (col, name) in columns.iter().zip(names) {
        let orig_norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if orig_norm == 0.0 {
            offending.push(name.clone());
            continue;
        }
        let mut v = col.clone();
        for _pass in 0..2 {
            for b in &basis {
                let proj: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= proj * bi;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= orig_norm * 1e-9 * (n as f64).sqrt() {
            offending.push(name.clone());
            continue;
        }
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        basis.push(v);
    }
    offending
}
