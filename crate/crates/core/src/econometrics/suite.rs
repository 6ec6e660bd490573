//! The standard model suite: next-year crash measures regressed on
//! current-year sentiment and controls (logit for the binary measures,
//! OLS for the continuous ones, industry and year fixed effects, robust
//! standard errors), the size-quartile dynamic-panel GMM runs, and the
//! detoned-sentiment reruns per size quartile.

use std::collections::BTreeMap;

use super::{
    arellano_bond, build_design, logit_fit, ols_fit, AbFirmSeries, AbGmmSpec, DesignInput,
    EconError, RegressionResult, SeType,
};
use crate::crash_measures::CrashMeasures;
use crate::data_panel::FundamentalsRow;
use crate::sentiment::SentimentRow;

/// One (firm, year) row of the estimation panel: dependents led one year,
/// regressors current-year. Missing joins stay `None` and fall to
/// listwise deletion.
#[derive(Debug, Clone, Default)]
pub struct AnalysisRow {
    pub firm_id: String,
    pub year: i32,
    pub industry: String,
    pub negoutlier_lead: Option<f64>,
    pub crash_lead: Option<f64>,
    pub ncskew_lead: Option<f64>,
    pub duvol_lead: Option<f64>,
    pub negoutlier: Option<f64>,
    pub ncskew: Option<f64>,
    pub duvol: Option<f64>,
    pub ret: Option<f64>,
    pub sigma: Option<f64>,
    pub sent: Option<f64>,
    pub sent_detoned: Option<f64>,
    pub size: Option<f64>,
    pub mtb: Option<f64>,
    pub roa: Option<f64>,
    pub dturn: Option<f64>,
    pub accm: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub ols_se: SeType,
    pub logit_robust: bool,
    pub logit_max_iter: usize,
    pub logit_tol: f64,
    pub ab: AbGmmSpec,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            ols_se: SeType::Hc1,
            logit_robust: true,
            logit_max_iter: super::logit::DEFAULT_LOGIT_MAX_ITER,
            logit_tol: super::logit::DEFAULT_LOGIT_TOL,
            ab: AbGmmSpec::default(),
        }
    }
}

/// Results keyed by model name; estimation failures stay keyed so one
/// broken model never hides the others.
#[derive(Debug)]
pub struct SuiteOutput {
    pub models: BTreeMap<String, Result<RegressionResult, EconError>>,
    pub diagnostics: Vec<String>,
}

/// Join measures, sentiment, and fundamentals into analysis rows, leading
/// the dependents by one year.
pub fn assemble_rows(
    measures: &[CrashMeasures],
    sentiment: &[SentimentRow],
    fundamentals: &[FundamentalsRow],
) -> Vec<AnalysisRow> {
    let by_key: BTreeMap<(&str, i32), &CrashMeasures> = measures
        .iter()
        .map(|m| ((m.firm_id.as_str(), m.year), m))
        .collect();
    let sent_by_key: BTreeMap<(&str, i32), &SentimentRow> = sentiment
        .iter()
        .map(|s| ((s.firm_id.as_str(), s.year), s))
        .collect();
    let fund_by_key: BTreeMap<(&str, i32), &FundamentalsRow> = fundamentals
        .iter()
        .map(|f| ((f.firm_id.as_str(), f.fiscal_year), f))
        .collect();

    by_key
        .iter()
        .map(|(&(firm, year), m)| {
            let lead = by_key.get(&(firm, year + 1));
            let sent = sent_by_key.get(&(firm, year));
            let fund = fund_by_key.get(&(firm, year));
            AnalysisRow {
                firm_id: firm.to_string(),
                year,
                industry: fund.map(|f| f.industry.clone()).unwrap_or_default(),
                negoutlier_lead: lead.and_then(|l| l.negoutlier).map(f64::from),
                crash_lead: lead.and_then(|l| l.crash).map(f64::from),
                ncskew_lead: lead.and_then(|l| l.ncskew),
                duvol_lead: lead.and_then(|l| l.duvol),
                negoutlier: m.negoutlier.map(f64::from),
                ncskew: m.ncskew,
                duvol: m.duvol,
                ret: Some(m.ret_mean),
                sigma: Some(m.sigma),
                sent: sent.map(|s| s.sent),
                sent_detoned: sent.map(|s| s.sent_detoned),
                size: fund.map(|f| f.size),
                mtb: fund.map(|f| f.mtb),
                roa: fund.map(|f| f.roa),
                dturn: fund.map(|f| f.dturn),
                accm: fund.map(|f| f.accm),
            }
        })
        .collect()
}

/// Size-quartile of each firm: firm-years are cut at the within-year
/// 25/50/75 percentiles of SIZE (nearest rank, ties to the lower
/// quartile); a firm takes the lower median of its per-year quartiles.
/// 0 = smallest, 3 = largest.
pub fn size_quartiles(rows: &[AnalysisRow]) -> BTreeMap<String, usize> {
    let mut by_year: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    for row in rows {
        if let Some(size) = row.size {
            by_year.entry(row.year).or_default().push(size);
        }
    }
    let mut cuts: BTreeMap<i32, [f64; 3]> = BTreeMap::new();
    for (year, sizes) in &mut by_year {
        sizes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sizes.len();
        let rank = |q: f64| sizes[((q * n as f64).ceil() as usize).clamp(1, n) - 1];
        cuts.insert(*year, [rank(0.25), rank(0.5), rank(0.75)]);
    }

    let mut per_firm: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for row in rows {
        let (Some(size), Some(c)) = (row.size, cuts.get(&row.year)) else {
            continue;
        };
        let q = if size <= c[0] {
            0
        } else if size <= c[1] {
            1
        } else if size <= c[2] {
            2
        } else {
            3
        };
        per_firm.entry(row.firm_id.clone()).or_default().push(q);
    }

    per_firm
        .into_iter()
        .map(|(firm, mut qs)| {
            qs.sort_unstable();
            let median = qs[(qs.len() - 1) / 2];
            (firm, median)
        })
        .collect()
}

const QUARTILE_LABELS: [&str; 4] = ["q1_small", "q2", "q3", "q4_large"];

/// The GMM regressors, pulled from the year before the dependent.
const AB_REGRESSORS: [&str; 8] = [
    "ret", "size", "mtb", "roa", "sigma", "sent", "dturn", "ncskew",
];

pub fn run_model_suite(rows: &[AnalysisRow], config: &SuiteConfig) -> SuiteOutput {
    let mut models = BTreeMap::new();
    let mut diagnostics = Vec::new();

    // Main four: dependents led one year, lagged skewness control mirrors
    // the published layout (DUVOL controls the NCSKEW model and vice versa).
    let main_specs: [(&str, &str, bool, &str); 4] = [
        ("main_negoutlier", "negoutlier_lead", true, "ncskew"),
        ("main_crash", "crash_lead", true, "ncskew"),
        ("main_ncskew", "ncskew_lead", false, "duvol"),
        ("main_duvol", "duvol_lead", false, "ncskew"),
    ];
    for (name, dep, is_logit, lag_measure) in main_specs {
        let result = fit_pooled(rows, dep, lag_measure, "sent", is_logit, config, &mut diagnostics);
        models.insert(name.to_string(), result);
    }

    // Size-quartile dynamic panels and detoned reruns.
    let quartile_of = size_quartiles(rows);
    for (q, label) in QUARTILE_LABELS.iter().enumerate() {
        let subset: Vec<&AnalysisRow> = rows
            .iter()
            .filter(|r| quartile_of.get(&r.firm_id) == Some(&q))
            .collect();

        models.insert(
            format!("gmm_size_{label}"),
            fit_quartile_gmm(&subset, config),
        );

        let owned: Vec<AnalysisRow> = subset.iter().map(|r| (*r).clone()).collect();
        models.insert(
            format!("detoned_{label}"),
            fit_pooled(
                &owned,
                "negoutlier_lead",
                "ncskew",
                "sent_detoned",
                true,
                config,
                &mut diagnostics,
            ),
        );
    }

    SuiteOutput {
        models,
        diagnostics,
    }
}

fn field(row: &AnalysisRow, name: &str) -> Option<f64> {
    match name {
        "negoutlier_lead" => row.negoutlier_lead,
        "crash_lead" => row.crash_lead,
        "ncskew_lead" => row.ncskew_lead,
        "duvol_lead" => row.duvol_lead,
        "negoutlier" => row.negoutlier,
        "ncskew" => row.ncskew,
        "duvol" => row.duvol,
        "ret" => row.ret,
        "sigma" => row.sigma,
        "sent" => row.sent,
        "sent_detoned" => row.sent_detoned,
        "size" => row.size,
        "mtb" => row.mtb,
        "roa" => row.roa,
        "dturn" => row.dturn,
        "accm" => row.accm,
        _ => None,
    }
}

fn fit_pooled(
    rows: &[AnalysisRow],
    dep: &str,
    lag_measure: &str,
    sent_column: &str,
    is_logit: bool,
    config: &SuiteConfig,
    diagnostics: &mut Vec<String>,
) -> Result<RegressionResult, EconError> {
    let regressor_names = [
        lag_measure,
        "ret",
        "size",
        "mtb",
        "roa",
        "sigma",
        sent_column,
        "dturn",
        "accm",
    ];
    let input = DesignInput {
        dependent: rows.iter().map(|r| field(r, dep)).collect(),
        regressors: regressor_names
            .iter()
            .map(|&name| {
                (
                    name.to_string(),
                    rows.iter().map(|r| field(r, name)).collect(),
                )
            })
            .collect(),
        industry: Some(rows.iter().map(|r| r.industry.clone()).collect()),
        year: Some(rows.iter().map(|r| r.year).collect()),
    };
    let design = build_design(&input)?;
    for d in &design.diagnostics {
        diagnostics.push(format!("{dep}: {d}"));
    }
    if is_logit {
        logit_fit(
            &design,
            config.logit_robust,
            config.logit_max_iter,
            config.logit_tol,
        )
    } else {
        ols_fit(&design, config.ols_se)
    }
}

/// Dynamic panel for one size quartile: the dependent is the NEGOUTLIER
/// level by year, regressors come from the prior year, so the estimated
/// equation has the same next-year timing as the pooled models.
fn fit_quartile_gmm(
    subset: &[&AnalysisRow],
    config: &SuiteConfig,
) -> Result<RegressionResult, EconError> {
    let mut by_firm: BTreeMap<&str, BTreeMap<i32, &AnalysisRow>> = BTreeMap::new();
    for row in subset {
        by_firm
            .entry(row.firm_id.as_str())
            .or_default()
            .insert(row.year, row);
    }

    let base_year = subset.iter().map(|r| r.year).min().unwrap_or(0);
    let mut panel = Vec::new();
    for (firm_id, years) in by_firm {
        // Longest run of consecutive years with the dependent present and
        // all prior-year regressors available.
        let usable: Vec<(i32, &AnalysisRow)> = years
            .range(..)
            .filter_map(|(&year, row)| {
                let prev = years.get(&(year - 1))?;
                let complete = row.negoutlier.is_some()
                    && AB_REGRESSORS.iter().all(|name| field(prev, name).is_some());
                complete.then_some((year, *row))
            })
            .collect();

        let mut best: Option<(usize, usize)> = None; // (start index, len)
        let mut start = 0usize;
        while start < usable.len() {
            let mut end = start;
            while end + 1 < usable.len() && usable[end + 1].0 == usable[end].0 + 1 {
                end += 1;
            }
            let len = end - start + 1;
            if best.map_or(true, |(_, best_len)| len > best_len) {
                best = Some((start, len));
            }
            start = end + 1;
        }
        let Some((run_start, run_len)) = best else {
            continue;
        };
        if run_len < config.ab.dep_lags + 2 {
            continue;
        }

        let run = &usable[run_start..run_start + run_len];
        let y: Vec<f64> = run.iter().map(|(_, r)| r.negoutlier.unwrap()).collect();
        let x: Vec<Vec<f64>> = run
            .iter()
            .map(|(year, _)| {
                let prev = years[&(year - 1)];
                AB_REGRESSORS
                    .iter()
                    .map(|name| field(prev, name).unwrap())
                    .collect()
            })
            .collect();
        panel.push(AbFirmSeries {
            firm_id: firm_id.to_string(),
            start_period: run[0].0 - base_year,
            y,
            x,
        });
    }

    arellano_bond(
        &panel,
        "negoutlier",
        &AB_REGRESSORS.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
        &config.ab,
    )
}
