//! Synthetic panels and independent oracles.
//!
//! `generate`/`gen_panel` build firm-week return files (with injected
//! crash weeks recorded in a ground-truth sidecar) plus matching
//! fundamentals, deterministic under the configured seed. The oracles -
//! exhaustive MCD enumeration and a chi-squared CDF/quantile built on a
//! local incomplete-gamma evaluation - deliberately share no numerical
//! code with the estimation modules they are used to check.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_panel::{write_fundamentals, write_returns, FirmWeekRecord, FundamentalsRow};
use crate::week::WeekId;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("io error writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("enumeration budget exceeded: C({n}, {h}) > {budget}")]
    BudgetExceeded { n: usize, h: usize, budget: u64 },

    #[error("degenerate data: no nonsingular half-sample exists")]
    Degenerate,

    #[error("argument out of domain: {0}")]
    Domain(String),
}

/// Data-generating knobs for synthetic firm panels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_firms: usize,
    pub n_years: usize,
    pub weeks_per_year: usize,
    /// Weekly volatility of the idiosyncratic log return component.
    pub base_sigma: f64,
    /// Baseline probability that a firm-year receives one injected crash
    /// week. With a nonzero `sentiment_effect` this becomes the intercept
    /// of the per-firm crash propensity.
    pub crash_prob: f64,
    /// Crash depth in multiples of `base_sigma`.
    pub crash_magnitude: f64,
    /// Link strength from the firm's latent sentiment level to its crash
    /// propensity (log-odds per unit of sentiment).
    pub sentiment_effect: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_firms: 100,
            n_years: 5,
            weeks_per_year: 52,
            base_sigma: 0.02,
            crash_prob: 0.2,
            crash_magnitude: 6.0,
            sentiment_effect: 0.0,
            seed: 42,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.crash_prob) {
            return Err(SimError::InvalidConfig(format!(
                "crash_prob must lie in [0, 1], got {}",
                self.crash_prob
            )));
        }
        if self.weeks_per_year < 5 {
            return Err(SimError::InvalidConfig(format!(
                "weeks_per_year must be >= 5, got {}",
                self.weeks_per_year
            )));
        }
        if self.n_firms == 0 || self.n_years == 0 {
            return Err(SimError::InvalidConfig(
                "n_firms and n_years must be positive".into(),
            ));
        }
        if self.base_sigma <= 0.0 {
            return Err(SimError::InvalidConfig("base_sigma must be positive".into()));
        }
        Ok(())
    }
}

/// One injected crash week.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectedCrash {
    pub firm_id: String,
    pub year: i32,
    pub week: WeekId,
    pub magnitude: f64,
}

/// In-memory simulated panel.
#[derive(Debug, Clone)]
pub struct SimPanel {
    pub returns: Vec<FirmWeekRecord>,
    pub fundamentals: Vec<FundamentalsRow>,
    pub ground_truth: Vec<InjectedCrash>,
    /// Latent per-firm sentiment levels, for diagnostics.
    pub latent_sentiment: Vec<f64>,
}

/// Paths written by [`gen_panel`].
#[derive(Debug, Clone)]
pub struct GeneratedFiles {
    pub returns_path: PathBuf,
    pub fundamentals_path: PathBuf,
    pub ground_truth_path: PathBuf,
}

const FIRST_YEAR: i32 = 2010;
const MARKET_SIGMA: f64 = 0.02;
const N_INDUSTRIES: usize = 8;

fn fnv_mix(seed: u64, tag: &str, index: u64) -> u64 {
    const BASIS: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = BASIS;
    for b in seed
        .to_le_bytes()
        .iter()
        .chain(tag.as_bytes())
        .chain(index.to_le_bytes().iter())
    {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// The ISO weeks whose Monday falls inside calendar `year`, in order.
fn fiscal_weeks(year: i32) -> Vec<WeekId> {
    let mut date = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid date");
    while date.weekday() != Weekday::Mon {
        date += Duration::days(1);
    }
    let mut weeks = Vec::with_capacity(53);
    while date.year() == year {
        let iso = date.iso_week();
        weeks.push(WeekId {
            year: iso.year(),
            week: iso.week() as u8,
        });
        date += Duration::days(7);
    }
    weeks
}

/// Generate the synthetic panel in memory.
///
/// Firm returns follow a one-factor market model whose residual is
/// exp(W) - 1 with W Gaussian; an injected crash replaces one uniformly
/// chosen week's W by -magnitude * base_sigma. The market series covers
/// two extra weeks on each side of the sample so every firm week has a
/// complete lead/lag window. Per-firm RNG streams are derived from the
/// master seed, so output is independent of scheduling.
pub fn generate(config: &SimConfig) -> Result<SimPanel, SimError> {
    config.validate()?;

    // Weeks per simulated year (truncated to weeks_per_year).
    let year_weeks: Vec<(i32, Vec<WeekId>)> = (0..config.n_years as i32)
        .map(|offset| {
            let year = FIRST_YEAR + offset;
            let mut weeks = fiscal_weeks(year);
            weeks.truncate(config.weeks_per_year);
            (year, weeks)
        })
        .collect();

    // Continuous market series spanning the sample plus a two-week margin.
    let first_week = year_weeks.first().unwrap().1[0];
    let last_week = *year_weeks.last().unwrap().1.last().unwrap();
    let mut market: Vec<(WeekId, f64)> = Vec::new();
    {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv_mix(config.seed, "market", 0));
        let mut w = first_week.offset(-2).unwrap();
        loop {
            market.push((w, MARKET_SIGMA * gaussian(&mut rng)));
            if w >= last_week {
                break;
            }
            w = w.offset(1).unwrap();
        }
        let extra1 = last_week.offset(1).unwrap();
        let extra2 = last_week.offset(2).unwrap();
        market.push((extra1, MARKET_SIGMA * gaussian(&mut rng)));
        market.push((extra2, MARKET_SIGMA * gaussian(&mut rng)));
    }
    let market_map: std::collections::BTreeMap<WeekId, f64> = market.iter().copied().collect();

    let sentiment_dir: [f64; crate::sentiment::N_VARS] = {
        let w = crate::sentiment::FIXED_WEIGHTS;
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        std::array::from_fn(|i| w[i] / norm)
    };

    struct FirmOutput {
        returns: Vec<FirmWeekRecord>,
        fundamentals: Vec<FundamentalsRow>,
        crashes: Vec<InjectedCrash>,
        latent: f64,
    }

    let firms: Vec<FirmOutput> = (0..config.n_firms)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(fnv_mix(config.seed, "firm", i as u64));
            let firm_id = format!("F{i:05}");
            let alpha = 0.0005 * gaussian(&mut rng);
            let beta = 1.0 + 0.2 * gaussian(&mut rng);
            let latent = gaussian(&mut rng);
            let size_base = 6.0 + 2.0 * gaussian(&mut rng);

            let crash_p = if config.crash_prob <= 0.0 {
                0.0
            } else if config.crash_prob >= 1.0 {
                1.0
            } else if config.sentiment_effect == 0.0 {
                config.crash_prob
            } else {
                let base_logit = (config.crash_prob / (1.0 - config.crash_prob)).ln();
                logistic(base_logit + config.sentiment_effect * latent)
            };

            let mut returns = Vec::new();
            let mut fundamentals = Vec::new();
            let mut crashes = Vec::new();

            for (year, weeks) in &year_weeks {
                let injected = if rng.gen::<f64>() < crash_p {
                    Some(rng.gen_range(0..weeks.len()))
                } else {
                    None
                };
                for (slot, &week) in weeks.iter().enumerate() {
                    let w_value = if injected == Some(slot) {
                        -config.crash_magnitude * config.base_sigma
                    } else {
                        config.base_sigma * gaussian(&mut rng)
                    };
                    let residual = w_value.exp() - 1.0;
                    let market_ret = market_map[&week];
                    returns.push(FirmWeekRecord {
                        firm_id: firm_id.clone(),
                        week,
                        ret: alpha + beta * market_ret + residual,
                        market_ret,
                    });
                }
                if let Some(slot) = injected {
                    crashes.push(InjectedCrash {
                        firm_id: firm_id.clone(),
                        year: *year,
                        week: weeks[slot],
                        magnitude: config.crash_magnitude,
                    });
                }

                let mut sentiment_inputs = [0.0; crate::sentiment::N_VARS];
                for (k, slot) in sentiment_inputs.iter_mut().enumerate() {
                    *slot = latent * sentiment_dir[k] + 0.5 * gaussian(&mut rng);
                }
                let [pe, turn, eqs, cefd, tobin, lev, bsi] = sentiment_inputs;
                fundamentals.push(FundamentalsRow {
                    firm_id: firm_id.clone(),
                    fiscal_year: *year,
                    size: size_base + 0.1 * gaussian(&mut rng),
                    mtb: (0.5 + 1.0 * gaussian(&mut rng)).exp(),
                    roa: 0.02 + 0.15 * gaussian(&mut rng),
                    dturn: gaussian(&mut rng),
                    accm: (0.1 + 0.3 * gaussian(&mut rng)).abs(),
                    pe,
                    turn,
                    eqs,
                    cefd,
                    tobin,
                    lev,
                    bsi,
                    industry: format!("ind{}", i % N_INDUSTRIES),
                });
            }

            FirmOutput {
                returns,
                fundamentals,
                crashes,
                latent,
            }
        })
        .collect();

    let mut panel = SimPanel {
        returns: Vec::new(),
        fundamentals: Vec::new(),
        ground_truth: Vec::new(),
        latent_sentiment: Vec::with_capacity(config.n_firms),
    };
    for firm in firms {
        panel.returns.extend(firm.returns);
        panel.fundamentals.extend(firm.fundamentals);
        panel.ground_truth.extend(firm.crashes);
        panel.latent_sentiment.push(firm.latent);
    }
    Ok(panel)
}

/// Generate and write the panel under `dir` as `returns.csv`,
/// `fundamentals.csv`, and `ground_truth.csv`. Each file is written to a
/// temporary name and renamed into place, so a failed run never leaves a
/// partial file under a final name.
pub fn gen_panel(config: &SimConfig, dir: impl AsRef<Path>) -> Result<GeneratedFiles, SimError> {
    let panel = generate(config)?;
    let dir = dir.as_ref();

    let files = GeneratedFiles {
        returns_path: dir.join("returns.csv"),
        fundamentals_path: dir.join("fundamentals.csv"),
        ground_truth_path: dir.join("ground_truth.csv"),
    };

    let wrap = |path: &Path, source: io::Error| SimError::Io {
        path: path.display().to_string(),
        source,
    };

    let atomic = |path: &Path, write: &dyn Fn(&mut BufWriter<File>) -> io::Result<()>| {
        let tmp = path.with_extension("csv.tmp");
        let run = || -> io::Result<()> {
            let mut out = BufWriter::new(File::create(&tmp)?);
            write(&mut out)?;
            out.flush()?;
            std::fs::rename(&tmp, path)
        };
        run().map_err(|e| wrap(path, e))
    };

    atomic(&files.returns_path, &|out| write_returns(out, &panel.returns))?;
    atomic(&files.fundamentals_path, &|out| {
        write_fundamentals(out, &panel.fundamentals)
    })?;
    atomic(&files.ground_truth_path, &|out| {
        writeln!(out, "firm_id,year,injected_week,magnitude")?;
        for c in &panel.ground_truth {
            writeln!(out, "{},{},{},{}", c.firm_id, c.year, c.week, c.magnitude)?;
        }
        Ok(())
    })?;

    Ok(files)
}

// ---------------------------------------------------------------------------
// Oracle: exhaustive MCD
// ---------------------------------------------------------------------------

/// Exhaustive minimum-determinant half sample, independent of the
/// estimation code: covariance determinants come from Gaussian
/// elimination here, and ties resolve to the lexicographically smallest
/// subset by enumerating combinations in lexicographic order.
pub fn mcd_bruteforce(
    data: &[f64],
    n: usize,
    p: usize,
    budget: u64,
) -> Result<(Vec<usize>, f64), SimError> {
    assert_eq!(data.len(), n * p, "data must be n*p values, row-major");
    if n <= p {
        return Err(SimError::Domain(format!("need n > p, got n={n}, p={p}")));
    }
    let h = (n + p + 1) / 2;

    // C(n, h) against the budget.
    let mut combos: u128 = 1;
    let k = h.min(n - h);
    for i in 1..=k {
        combos = combos * (n - k + i) as u128 / i as u128;
        if combos > u128::from(budget) {
            return Err(SimError::BudgetExceeded { n, h, budget });
        }
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut subset: Vec<usize> = (0..h).collect();
    loop {
        if let Some(det) = subset_cov_det(data, p, &subset) {
            if best.as_ref().map_or(true, |(b, _)| det < *b) {
                best = Some((det, subset.clone()));
            }
        }

        // Next combination in lexicographic order.
        let mut i = h;
        let mut advanced = false;
        while i > 0 {
            i -= 1;
            if subset[i] != i + n - h {
                subset[i] += 1;
                for j in (i + 1)..h {
                    subset[j] = subset[j - 1] + 1;
                }
                advanced = true;
                break;
            }
        }
        if !advanced {
            break;
        }
    }

    let (det, support) = best.ok_or(SimError::Degenerate)?;
    Ok((support, det))
}

/// Sample covariance determinant (divisor h-1) of the subset, by Gaussian
/// elimination with partial pivoting; None when singular.
fn subset_cov_det(data: &[f64], p: usize, subset: &[usize]) -> Option<f64> {
    let m = subset.len();
    let mut mean = vec![0.0; p];
    for &i in subset {
        for (acc, v) in mean.iter_mut().zip(&data[i * p..(i + 1) * p]) {
            *acc += v;
        }
    }
    for v in mean.iter_mut() {
        *v /= m as f64;
    }

    let mut cov = vec![0.0; p * p];
    for &i in subset {
        let row = &data[i * p..(i + 1) * p];
        for a in 0..p {
            for b in 0..p {
                cov[a * p + b] += (row[a] - mean[a]) * (row[b] - mean[b]);
            }
        }
    }
    let denom = (m - 1) as f64;
    for v in cov.iter_mut() {
        *v /= denom;
    }

    let scale = cov
        .iter()
        .map(|v| v.abs())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut det = 1.0f64;
    for col in 0..p {
        let pivot_row = (col..p)
            .max_by(|&a, &b| {
                cov[a * p + col]
                    .abs()
                    .partial_cmp(&cov[b * p + col].abs())
                    .unwrap()
            })
            .unwrap();
        let pivot = cov[pivot_row * p + col];
        if pivot.abs() <= scale * 1e-12 {
            return None;
        }
        if pivot_row != col {
            for j in 0..p {
                cov.swap(col * p + j, pivot_row * p + j);
            }
            det = -det;
        }
        det *= cov[col * p + col];
        for r in (col + 1)..p {
            let f = cov[r * p + col] / cov[col * p + col];
            for j in col..p {
                cov[r * p + j] -= f * cov[col * p + j];
            }
        }
    }
    (det > 0.0).then_some(det)
}

// ---------------------------------------------------------------------------
// Oracle: chi-squared distribution
// ---------------------------------------------------------------------------

/// ln Gamma(x) by the Lanczos approximation (x > 0).
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000000000190015;
    let mut yy = y;
    for c in COEFFS {
        yy += 1.0;
        ser += c / yy;
    }
    -tmp + (2.5066282746310005 * ser / x).ln()
}

/// Regularized lower incomplete gamma P(a, x): series expansion for
/// x < a + 1, Lentz continued fraction for the complement otherwise.
fn reg_lower_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let ln_ga = ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..500 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        sum * (-x + a * x.ln() - ln_ga).exp()
    } else {
        // Continued fraction for Q(a, x).
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut f = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let q = (-x + a * x.ln() - ln_ga).exp() * f;
        1.0 - q
    }
}

/// Chi-squared CDF with `dof` degrees of freedom.
pub fn chi2_cdf(x: f64, dof: usize) -> Result<f64, SimError> {
    if dof < 1 {
        return Err(SimError::Domain("dof must be >= 1".into()));
    }
    if x < 0.0 {
        return Err(SimError::Domain(format!("x must be >= 0, got {x}")));
    }
    Ok(reg_lower_gamma(dof as f64 / 2.0, x / 2.0))
}

/// Chi-squared quantile (inverse CDF) by bisection.
pub fn chi2_quantile(dof: usize, q: f64) -> Result<f64, SimError> {
    if dof < 1 {
        return Err(SimError::Domain("dof must be >= 1".into()));
    }
    if !(0.0 < q && q < 1.0) {
        return Err(SimError::Domain(format!("q must lie in (0, 1), got {q}")));
    }
    let mut hi = dof as f64 + 10.0 * (2.0 * dof as f64).sqrt() + 10.0;
    while chi2_cdf(hi, dof)? < q {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(mid, dof)? < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn config_validation() {
        let mut config = SimConfig::default();
        config.weeks_per_year = 3;
        assert!(matches!(config.validate(), Err(SimError::InvalidConfig(_))));
        config.weeks_per_year = 52;
        config.crash_prob = 1.2;
        assert!(matches!(config.validate(), Err(SimError::InvalidConfig(_))));
    }

    #[test]
    fn generation_is_deterministic() {
        let config = SimConfig {
            n_firms: 5,
            n_years: 2,
            ..SimConfig::default()
        };
        let a = generate(&config).unwrap();
        let b = generate(&config).unwrap();
        assert_eq!(a.returns, b.returns);
        assert_eq!(a.fundamentals, b.fundamentals);
        assert_eq!(a.ground_truth, b.ground_truth);
    }

    #[test]
    fn gen_panel_writes_byte_identical_files() {
        let config = SimConfig {
            n_firms: 4,
            n_years: 2,
            ..SimConfig::default()
        };
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let fa = gen_panel(&config, dir_a.path()).unwrap();
        let fb = gen_panel(&config, dir_b.path()).unwrap();
        for (pa, pb) in [
            (&fa.returns_path, &fb.returns_path),
            (&fa.fundamentals_path, &fb.fundamentals_path),
            (&fa.ground_truth_path, &fb.ground_truth_path),
        ] {
            let ba = std::fs::read(pa).unwrap();
            let bb = std::fs::read(pb).unwrap();
            assert_eq!(ba, bb);
            assert!(!ba.is_empty());
        }
    }

    #[test]
    fn zero_crash_prob_means_empty_sidecar() {
        let config = SimConfig {
            n_firms: 10,
            n_years: 3,
            crash_prob: 0.0,
            ..SimConfig::default()
        };
        let panel = generate(&config).unwrap();
        assert!(panel.ground_truth.is_empty());
    }

    #[test]
    fn certain_crash_prob_injects_one_week_per_firm_year() {
        let config = SimConfig {
            n_firms: 10,
            n_years: 3,
            crash_prob: 1.0,
            crash_magnitude: 10.0,
            ..SimConfig::default()
        };
        let panel = generate(&config).unwrap();
        assert_eq!(panel.ground_truth.len(), 30);
        let mut keys: Vec<(String, i32)> = panel
            .ground_truth
            .iter()
            .map(|c| (c.firm_id.clone(), c.year))
            .collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 30, "exactly one injection per firm-year");
    }

    #[test]
    fn returns_parse_back_through_the_loader() {
        let config = SimConfig {
            n_firms: 3,
            n_years: 2,
            ..SimConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let files = gen_panel(&config, dir.path()).unwrap();
        let loaded = crate::data_panel::load_returns(
            &files.returns_path,
            &crate::data_panel::ReturnsSchema::default(),
        )
        .unwrap();
        assert!(loaded.diagnostics.is_empty());
        assert_eq!(loaded.records.len(), 3 * 2 * 52);
        let funds = crate::data_panel::load_fundamentals(
            &files.fundamentals_path,
            &crate::data_panel::FundamentalsSchema::default(),
        )
        .unwrap();
        assert!(funds.diagnostics.is_empty());
        assert_eq!(funds.records.len(), 3 * 2);
    }

    #[test]
    fn fiscal_weeks_have_consistent_year_assignment() {
        for year in 2010..2020 {
            let weeks = fiscal_weeks(year);
            assert!(weeks.len() == 52 || weeks.len() == 53, "{year}");
            for w in &weeks {
                assert_eq!(w.fiscal_year(), year);
            }
        }
    }

    #[test]
    fn bruteforce_matches_hand_determinant_on_outlier_instance() {
        let data = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 1000.0];
        let (support, det) = mcd_bruteforce(&data, 10, 1, 1_000).unwrap();
        assert_eq!(support, vec![0, 1, 2, 3, 4, 5]);
        assert_abs_diff_eq!(det, 3.5, epsilon = 1e-12);
    }

    #[test]
    fn bruteforce_single_subset_when_n_is_p_plus_one() {
        let data = [0.0, 1.0];
        let (support, _) = mcd_bruteforce(&data, 2, 1, 10).unwrap();
        assert_eq!(support, vec![0, 1]);
    }

    #[test]
    fn bruteforce_refuses_oversized_problems() {
        let data = vec![0.0; 50];
        let err = mcd_bruteforce(&data, 50, 1, 200_000).unwrap_err();
        assert!(matches!(err, SimError::BudgetExceeded { .. }));
    }

    #[test]
    fn chi2_reference_values() {
        // Standard table entries.
        assert_abs_diff_eq!(chi2_quantile(1, 0.975).unwrap(), 5.023886, epsilon = 1e-4);
        assert_abs_diff_eq!(chi2_quantile(2, 0.95).unwrap(), 5.991465, epsilon = 1e-4);
        assert_abs_diff_eq!(chi2_quantile(10, 0.5).unwrap(), 9.341818, epsilon = 1e-4);
        assert_eq!(chi2_cdf(0.0, 3).unwrap(), 0.0);
        assert_abs_diff_eq!(chi2_cdf(3.841459, 1).unwrap(), 0.95, epsilon = 1e-6);
    }

    #[test]
    fn chi2_quantile_round_trips() {
        for &(dof, q) in &[(1usize, 0.9f64), (2, 0.975), (5, 0.5), (7, 0.025), (30, 0.99)] {
            let x = chi2_quantile(dof, q).unwrap();
            assert_abs_diff_eq!(chi2_cdf(x, dof).unwrap(), q, epsilon = 1e-8);
        }
    }

    #[test]
    fn chi2_domain_errors() {
        assert!(chi2_cdf(-1.0, 3).is_err());
        assert!(chi2_quantile(0, 0.5).is_err());
        assert!(chi2_quantile(3, 1.5).is_err());
    }
}
