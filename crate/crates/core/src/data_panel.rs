//! Ingestion of firm-week returns and firm-year fundamentals from delimited
//! files, sample cleaning filters, and (firm, year) panel alignment.
//!
//! Loading never drops a row silently: every malformed cell becomes a
//! [`RowDiagnostic`] and the row is excluded from the data set. Duplicate
//! keys are hard errors.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::week::WeekId;

/// Errors raised by loading, cleaning, or alignment.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("missing required column `{column}` in {path} (have: {available})")]
    MissingColumn {
        column: String,
        path: String,
        available: String,
    },

    #[error("duplicate key {key} at row {row} (first seen at row {first_row})")]
    DuplicateKey {
        key: String,
        row: usize,
        first_row: usize,
    },

    #[error("invalid filter parameter: {0}")]
    InvalidFilter(String),
}

/// One firm-week observation: raw simple return paired with the
/// value-weighted market return for the same week.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmWeekRecord {
    pub firm_id: String,
    pub week: WeekId,
    pub ret: f64,
    pub market_ret: f64,
}

/// Per-(firm, fiscal year) controls and sentiment inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundamentalsRow {
    pub firm_id: String,
    pub fiscal_year: i32,
    pub size: f64,
    pub mtb: f64,
    pub roa: f64,
    pub dturn: f64,
    /// Absolute discretionary accruals; nonnegative by construction.
    pub accm: f64,
    pub pe: f64,
    pub turn: f64,
    pub eqs: f64,
    pub cefd: f64,
    pub tobin: f64,
    pub lev: f64,
    pub bsi: f64,
    pub industry: String,
}

/// A row that could not be parsed; retained for reporting, excluded from data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowDiagnostic {
    /// 1-based data row number (header not counted).
    pub row: usize,
    pub column: String,
    pub message: String,
}

/// Column-name remapping for the returns file. Field values are the actual
/// header names to look for.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReturnsSchema {
    pub firm_id: String,
    pub week: String,
    pub ret: String,
    pub market_ret: String,
}

impl Default for ReturnsSchema {
    fn default() -> Self {
        ReturnsSchema {
            firm_id: "firm_id".into(),
            week: "week".into(),
            ret: "ret".into(),
            market_ret: "market_ret".into(),
        }
    }
}

/// Column-name remapping for the fundamentals file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FundamentalsSchema {
    pub firm_id: String,
    pub fiscal_year: String,
    pub size: String,
    pub mtb: String,
    pub roa: String,
    pub dturn: String,
    pub accm: String,
    pub pe: String,
    pub turn: String,
    pub eqs: String,
    pub cefd: String,
    pub tobin: String,
    pub lev: String,
    pub bsi: String,
    pub industry: String,
}

impl Default for FundamentalsSchema {
    fn default() -> Self {
        FundamentalsSchema {
            firm_id: "firm_id".into(),
            fiscal_year: "fiscal_year".into(),
            size: "size".into(),
            mtb: "mtb".into(),
            roa: "roa".into(),
            dturn: "dturn".into(),
            accm: "accm".into(),
            pe: "pe".into(),
            turn: "turn".into(),
            eqs: "eqs".into(),
            cefd: "cefd".into(),
            tobin: "tobin".into(),
            lev: "lev".into(),
            bsi: "bsi".into(),
            industry: "industry".into(),
        }
    }
}

/// Parsed records plus the diagnostics for rows that were excluded.
#[derive(Debug, Clone)]
pub struct LoadOutcome<T> {
    pub records: Vec<T>,
    pub diagnostics: Vec<RowDiagnostic>,
}

/// Counts reconciling what the cleaning filters removed.
///
/// Invariant: `firms_out = firms_in - firms_dropped_nonzero_filter -
/// firms_dropped_min_weeks`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CleaningReport {
    pub firms_in: usize,
    pub firms_dropped_nonzero_filter: usize,
    pub firms_dropped_min_weeks: usize,
    /// Weekly observations removed by either filter.
    pub weeks_dropped_invalid: usize,
    pub firms_out: usize,
}

/// One (firm, year) panel cell: the year's weekly records joined to the
/// firm-year fundamentals.
#[derive(Debug, Clone)]
pub struct PanelEntry {
    pub firm_id: String,
    pub year: i32,
    pub weeks: Vec<FirmWeekRecord>,
    pub fundamentals: FundamentalsRow,
}

/// Panel keyed by (firm, year); only keys present in both sources survive.
#[derive(Debug, Clone)]
pub struct AlignedPanel {
    pub entries: Vec<PanelEntry>,
    /// (firm, year) keys present in returns but not fundamentals.
    pub dropped_return_keys: usize,
    /// (firm, year) keys present in fundamentals but not returns.
    pub dropped_fundamental_keys: usize,
}

struct HeaderIndex {
    by_name: HashMap<String, usize>,
    path: String,
}

impl HeaderIndex {
    fn new(headers: &csv::StringRecord, path: &str) -> Self {
        let by_name = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect();
        HeaderIndex {
            by_name,
            path: path.to_string(),
        }
    }

    fn require(&self, column: &str) -> Result<usize, DataError> {
        self.by_name
            .get(column)
            .copied()
            .ok_or_else(|| DataError::MissingColumn {
                column: column.to_string(),
                path: self.path.clone(),
                available: {
                    let mut names: Vec<&str> =
                        self.by_name.keys().map(String::as_str).collect();
                    names.sort_unstable();
                    names.join(", ")
                },
            })
    }
}

fn parse_finite(
    record: &csv::StringRecord,
    idx: usize,
    column: &str,
    row: usize,
) -> Result<f64, RowDiagnostic> {
    let raw = record.get(idx).unwrap_or("").trim();
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(RowDiagnostic {
            row,
            column: column.to_string(),
            message: format!("non-finite value `{v}`"),
        }),
        Err(_) => Err(RowDiagnostic {
            row,
            column: column.to_string(),
            message: format!("cannot parse `{raw}` as a number"),
        }),
    }
}

/// Load the returns file. Every data row either becomes a record or a
/// diagnostic; duplicate (firm, week) keys abort with an error naming the key.
pub fn load_returns(
    path: impl AsRef<Path>,
    schema: &ReturnsSchema,
) -> Result<LoadOutcome<FirmWeekRecord>, DataError> {
    let path_str = path.as_ref().display().to_string();
    let mut reader = csv::Reader::from_path(path.as_ref()).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => DataError::Io {
            path: path_str.clone(),
            source: io::Error::new(io::ErrorKind::Other, e.to_string()),
        },
        _ => DataError::Csv {
            path: path_str.clone(),
            source: e,
        },
    })?;

    let headers = reader
        .headers()
        .map_err(|e| DataError::Csv {
            path: path_str.clone(),
            source: e,
        })?
        .clone();
    let index = HeaderIndex::new(&headers, &path_str);
    let firm_idx = index.require(&schema.firm_id)?;
    let week_idx = index.require(&schema.week)?;
    let ret_idx = index.require(&schema.ret)?;
    let mkt_idx = index.require(&schema.market_ret)?;

    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    let mut seen: HashMap<(String, WeekId), usize> = HashMap::new();

    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| DataError::Csv {
            path: path_str.clone(),
            source: e,
        })?;

        let firm_id = row.get(firm_idx).unwrap_or("").trim().to_string();
        let week_raw = row.get(week_idx).unwrap_or("").trim();
        let week: WeekId = match week_raw.parse() {
            Ok(w) => w,
            Err(_) => {
                diagnostics.push(RowDiagnostic {
                    row: row_no,
                    column: schema.week.clone(),
                    message: format!("cannot parse `{week_raw}` as an ISO week"),
                });
                continue;
            }
        };
        let ret = match parse_finite(&row, ret_idx, &schema.ret, row_no) {
            Ok(v) => v,
            Err(d) => {
                diagnostics.push(d);
                continue;
            }
        };
        let market_ret = match parse_finite(&row, mkt_idx, &schema.market_ret, row_no) {
            Ok(v) => v,
            Err(d) => {
                diagnostics.push(d);
                continue;
            }
        };

        let key = (firm_id.clone(), week);
        if let Some(&first_row) = seen.get(&key) {
            return Err(DataError::DuplicateKey {
                key: format!("({firm_id}, {week})"),
                row: row_no,
                first_row,
            });
        }
        seen.insert(key, row_no);

        records.push(FirmWeekRecord {
            firm_id,
            week,
            ret,
            market_ret,
        });
    }

    Ok(LoadOutcome {
        records,
        diagnostics,
    })
}

/// Load the fundamentals file; same diagnostics contract as [`load_returns`].
/// Negative `accm` violates its domain and is reported as a row diagnostic.
pub fn load_fundamentals(
    path: impl AsRef<Path>,
    schema: &FundamentalsSchema,
) -> Result<LoadOutcome<FundamentalsRow>, DataError> {
    let path_str = path.as_ref().display().to_string();
    let mut reader = csv::Reader::from_path(path.as_ref()).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => DataError::Io {
            path: path_str.clone(),
            source: io::Error::new(io::ErrorKind::Other, e.to_string()),
        },
        _ => DataError::Csv {
            path: path_str.clone(),
            source: e,
        },
    })?;

    let headers = reader
        .headers()
        .map_err(|e| DataError::Csv {
            path: path_str.clone(),
            source: e,
        })?
        .clone();
    let index = HeaderIndex::new(&headers, &path_str);

    let firm_idx = index.require(&schema.firm_id)?;
    let year_idx = index.require(&schema.fiscal_year)?;
    let numeric_cols: Vec<(&str, usize)> = vec![
        (schema.size.as_str(), index.require(&schema.size)?),
        (schema.mtb.as_str(), index.require(&schema.mtb)?),
        (schema.roa.as_str(), index.require(&schema.roa)?),
        (schema.dturn.as_str(), index.require(&schema.dturn)?),
        (schema.accm.as_str(), index.require(&schema.accm)?),
        (schema.pe.as_str(), index.require(&schema.pe)?),
        (schema.turn.as_str(), index.require(&schema.turn)?),
        (schema.eqs.as_str(), index.require(&schema.eqs)?),
        (schema.cefd.as_str(), index.require(&schema.cefd)?),
        (schema.tobin.as_str(), index.require(&schema.tobin)?),
        (schema.lev.as_str(), index.require(&schema.lev)?),
        (schema.bsi.as_str(), index.require(&schema.bsi)?),
    ];
    let industry_idx = index.require(&schema.industry)?;

    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    let mut seen: HashMap<(String, i32), usize> = HashMap::new();

    'rows: for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| DataError::Csv {
            path: path_str.clone(),
            source: e,
        })?;

        let firm_id = row.get(firm_idx).unwrap_or("").trim().to_string();
        let year_raw = row.get(year_idx).unwrap_or("").trim();
        let fiscal_year: i32 = match year_raw.parse() {
            Ok(y) => y,
            Err(_) => {
                diagnostics.push(RowDiagnostic {
                    row: row_no,
                    column: schema.fiscal_year.clone(),
                    message: format!("cannot parse `{year_raw}` as a year"),
                });
                continue;
            }
        };

        let mut values = [0.0f64; 12];
        for (slot, (name, idx)) in numeric_cols.iter().enumerate() {
            match parse_finite(&row, *idx, name, row_no) {
                Ok(v) => values[slot] = v,
                Err(d) => {
                    diagnostics.push(d);
                    continue 'rows;
                }
            }
        }
        let [size, mtb, roa, dturn, accm, pe, turn, eqs, cefd, tobin, lev, bsi] = values;
        if accm < 0.0 {
            diagnostics.push(RowDiagnostic {
                row: row_no,
                column: schema.accm.clone(),
                message: format!("accm must be nonnegative, got {accm}"),
            });
            continue;
        }

        let key = (firm_id.clone(), fiscal_year);
        if let Some(&first_row) = seen.get(&key) {
            return Err(DataError::DuplicateKey {
                key: format!("({firm_id}, {fiscal_year})"),
                row: row_no,
                first_row,
            });
        }
        seen.insert(key, row_no);

        records.push(FundamentalsRow {
            firm_id,
            fiscal_year,
            size,
            mtb,
            roa,
            dturn,
            accm,
            pe,
            turn,
            eqs,
            cefd,
            tobin,
            lev,
            bsi,
            industry: row.get(industry_idx).unwrap_or("").trim().to_string(),
        });
    }

    Ok(LoadOutcome {
        records,
        diagnostics,
    })
}

/// Write returns in the same delimited format [`load_returns`] accepts
/// (default column names).
pub fn write_returns<W: io::Write>(out: W, records: &[FirmWeekRecord]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["firm_id", "week", "ret", "market_ret"])?;
    for r in records {
        w.write_record([
            r.firm_id.as_str(),
            &r.week.to_string(),
            &r.ret.to_string(),
            &r.market_ret.to_string(),
        ])?;
    }
    w.flush()
}

/// Write fundamentals in the format [`load_fundamentals`] accepts.
pub fn write_fundamentals<W: io::Write>(out: W, rows: &[FundamentalsRow]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "firm_id",
        "fiscal_year",
        "size",
        "mtb",
        "roa",
        "dturn",
        "accm",
        "pe",
        "turn",
        "eqs",
        "cefd",
        "tobin",
        "lev",
        "bsi",
        "industry",
    ])?;
    for r in rows {
        w.write_record([
            r.firm_id.as_str(),
            &r.fiscal_year.to_string(),
            &r.size.to_string(),
            &r.mtb.to_string(),
            &r.roa.to_string(),
            &r.dturn.to_string(),
            &r.accm.to_string(),
            &r.pe.to_string(),
            &r.turn.to_string(),
            &r.eqs.to_string(),
            &r.cefd.to_string(),
            &r.tobin.to_string(),
            &r.lev.to_string(),
            &r.bsi.to_string(),
            r.industry.as_str(),
        ])?;
    }
    w.flush()
}

/// Apply the sample cleaning filters.
///
/// Firm-years with fewer than `min_weeks_per_year` weekly observations are
/// removed first; firms whose remaining history has a non-zero-return
/// fraction below `min_nonzero_frac` are then removed entirely. Running the
/// min-weeks pass first makes the composite filter idempotent: a second
/// application sees only firm-years that already satisfy both rules.
///
/// Output records are sorted by (firm, week).
pub fn apply_cleaning_filters(
    records: &[FirmWeekRecord],
    min_nonzero_frac: f64,
    min_weeks_per_year: usize,
) -> Result<(Vec<FirmWeekRecord>, CleaningReport), DataError> {
    if !(0.0..=1.0).contains(&min_nonzero_frac) {
        return Err(DataError::InvalidFilter(format!(
            "min_nonzero_frac must lie in [0, 1], got {min_nonzero_frac}"
        )));
    }
    if min_weeks_per_year < 1 {
        return Err(DataError::InvalidFilter(
            "min_weeks_per_year must be >= 1".into(),
        ));
    }

    // firm -> year -> records
    let mut by_firm: BTreeMap<&str, BTreeMap<i32, Vec<&FirmWeekRecord>>> = BTreeMap::new();
    for r in records {
        by_firm
            .entry(r.firm_id.as_str())
            .or_default()
            .entry(r.week.fiscal_year())
            .or_default()
            .push(r);
    }

    let firms_in = by_firm.len();
    let mut report = CleaningReport {
        firms_in,
        ..CleaningReport::default()
    };

    let mut kept: Vec<FirmWeekRecord> = Vec::new();
    for (_firm, years) in by_firm {
        let mut surviving: Vec<&FirmWeekRecord> = Vec::new();
        for (_year, recs) in years {
            if recs.len() < min_weeks_per_year {
                report.weeks_dropped_invalid += recs.len();
            } else {
                surviving.extend(recs);
            }
        }
        if surviving.is_empty() {
            report.firms_dropped_min_weeks += 1;
            continue;
        }
        let nonzero = surviving.iter().filter(|r| r.ret != 0.0).count();
        let frac = nonzero as f64 / surviving.len() as f64;
        if frac < min_nonzero_frac {
            report.firms_dropped_nonzero_filter += 1;
            report.weeks_dropped_invalid += surviving.len();
            continue;
        }
        kept.extend(surviving.into_iter().cloned());
    }

    kept.sort_by(|a, b| (a.firm_id.as_str(), a.week).cmp(&(b.firm_id.as_str(), b.week)));
    report.firms_out =
        report.firms_in - report.firms_dropped_nonzero_filter - report.firms_dropped_min_weeks;
    Ok((kept, report))
}

/// Join weekly return slices to fundamentals on (firm, fiscal year).
/// Keys present on only one side are dropped and counted; entries are
/// ordered by (firm, year).
pub fn align_panel(returns: &[FirmWeekRecord], fundamentals: &[FundamentalsRow]) -> AlignedPanel {
    let mut weeks_by_key: BTreeMap<(String, i32), Vec<FirmWeekRecord>> = BTreeMap::new();
    for r in returns {
        weeks_by_key
            .entry((r.firm_id.clone(), r.week.fiscal_year()))
            .or_default()
            .push(r.clone());
    }

    let mut fund_by_key: BTreeMap<(String, i32), &FundamentalsRow> = BTreeMap::new();
    for f in fundamentals {
        fund_by_key.insert((f.firm_id.clone(), f.fiscal_year), f);
    }

    let return_keys: BTreeSet<_> = weeks_by_key.keys().cloned().collect();
    let fund_keys: BTreeSet<_> = fund_by_key.keys().cloned().collect();
    let dropped_return_keys = return_keys.difference(&fund_keys).count();
    let dropped_fundamental_keys = fund_keys.difference(&return_keys).count();

    let mut entries = Vec::new();
    for (key, mut weeks) in weeks_by_key {
        if let Some(f) = fund_by_key.get(&key) {
            weeks.sort_by_key(|r| r.week);
            entries.push(PanelEntry {
                firm_id: key.0,
                year: key.1,
                weeks,
                fundamentals: (*f).clone(),
            });
        }
    }

    AlignedPanel {
        entries,
        dropped_return_keys,
        dropped_fundamental_keys,
    }
}
