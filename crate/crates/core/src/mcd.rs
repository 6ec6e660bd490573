//! Minimum Covariance Determinant estimation.
//!
//! The MCD location/scatter pair is defined by the half sample of
//! `h = floor((n + p + 1) / 2)` observations whose covariance matrix has the
//! smallest determinant. For small problems the optimum is found by
//! exhaustive enumeration over h-subsets; otherwise a concentration-step
//! search from random elemental starts is used (each C-step provably does
//! not increase the determinant). Robust squared Mahalanobis distances are
//! compared against a chi-squared cutoff to flag outliers, and
//! [`negoutlier`] reduces a firm-year slice of weekly returns to the binary
//! "flagged below the robust center" crash indicator.
//!
//! Subset covariances use the sample divisor (h - 1) throughout.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::market_model::FirmYearSlice;

#[derive(Debug, Error)]
pub enum McdError {
    #[error("need more observations than dimensions: n={n}, p={p}")]
    Dimensionality { n: usize, p: usize },

    #[error("insufficient data: need at least {required} observations, got {actual}")]
    InsufficientData { required: usize, actual: usize },

    #[error("degenerate data: every candidate half-sample has a singular covariance")]
    DegenerateData,

    #[error("subset covariance is singular")]
    SingularSubset,

    #[error("scatter matrix is not positive definite")]
    SingularScatter,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("data buffer length {len} does not equal n*p = {expected}")]
    ShapeMismatch { len: usize, expected: usize },
}

/// Tuning knobs for the MCD search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McdConfig {
    /// Random elemental starts for the concentration search.
    pub n_starts: usize,
    /// C-step cap per start.
    pub max_csteps: usize,
    /// Exhaustive enumeration is used when C(n, h) is at most this.
    pub exhaustive_threshold: u64,
    /// Chi-squared quantile for the outlier cutoff.
    pub quantile: f64,
    pub seed: u64,
    /// Rescale the raw scatter so distances are chi-squared calibrated
    /// under Gaussian data.
    pub consistency_correction: bool,
}

impl Default for McdConfig {
    fn default() -> Self {
        McdConfig {
            n_starts: 500,
            max_csteps: 100,
            exhaustive_threshold: 200_000,
            quantile: 0.975,
            seed: 0,
            consistency_correction: true,
        }
    }
}

impl McdConfig {
    fn validate(&self) -> Result<(), McdError> {
        if !(self.quantile > 0.5 && self.quantile < 1.0) {
            return Err(McdError::InvalidConfig(format!(
                "quantile must lie in (0.5, 1), got {}",
                self.quantile
            )));
        }
        if self.n_starts < 1 {
            return Err(McdError::InvalidConfig("n_starts must be >= 1".into()));
        }
        Ok(())
    }

    /// Copy of this config with a slice-specific derived seed, so results
    /// do not depend on how slices are scheduled across threads.
    pub fn for_slice(&self, firm_id: &str, year: i32) -> McdConfig {
        McdConfig {
            seed: derive_slice_seed(self.seed, firm_id, year),
            ..self.clone()
        }
    }
}

/// FNV-1a mix of (global seed, firm, year) into a per-slice RNG seed.
pub fn derive_slice_seed(global_seed: u64, firm_id: &str, year: i32) -> u64 {
    const BASIS: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = BASIS;
    for b in global_seed
        .to_le_bytes()
        .iter()
        .chain(firm_id.as_bytes())
        .chain(year.to_le_bytes().iter())
    {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

/// Row-major n x p observation matrix view.
#[derive(Debug, Clone, Copy)]
pub struct Observations<'a> {
    values: &'a [f64],
    n: usize,
    p: usize,
}

impl<'a> Observations<'a> {
    pub fn new(values: &'a [f64], n: usize, p: usize) -> Result<Self, McdError> {
        if values.len() != n * p {
            return Err(McdError::ShapeMismatch {
                len: values.len(),
                expected: n * p,
            });
        }
        Ok(Observations { values, n, p })
    }

    pub fn univariate(values: &'a [f64]) -> Self {
        Observations {
            values,
            n: values.len(),
            p: 1,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    fn row(&self, i: usize) -> &'a [f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    /// True when some dimension is constant across all observations, in
    /// which case every half-sample covariance is singular.
    fn has_constant_dimension(&self) -> bool {
        (0..self.p).any(|j| {
            let first = self.values[j];
            (1..self.n).all(|i| self.values[i * self.p + j] == first)
        })
    }
}

/// Robust location/scatter fit with per-observation distances and flags.
#[derive(Debug, Clone)]
pub struct McdFit {
    pub n: usize,
    pub p: usize,
    pub h: usize,
    /// Robust mean (p entries).
    pub location: Vec<f64>,
    /// Robust covariance, p x p row-major, consistency-corrected when enabled.
    pub scatter: Vec<f64>,
    /// Determinant of the uncorrected half-sample covariance.
    pub raw_determinant: f64,
    /// Sorted indices of the h observations defining the fit.
    pub support: Vec<usize>,
    /// Squared robust Mahalanobis distance per observation.
    pub distances: Vec<f64>,
    /// Chi-squared cutoff at the configured quantile (p degrees of freedom).
    pub cutoff: f64,
    pub flags: Vec<bool>,
    /// False when the best start hit the C-step cap before stabilizing.
    pub converged: bool,
    /// Candidate subsets skipped for singular covariance (exact path) or
    /// abandoned starts (search path).
    pub singular_candidates_skipped: usize,
}

/// Outcome of the per-slice crash indicator.
#[derive(Debug, Clone)]
pub struct NegoutlierOutcome {
    /// 1 when some week is flagged below the robust center, else 0.
    pub indicator: u8,
    /// True when the slice had no dispersion and MCD could not be fit.
    pub degenerate: bool,
    /// The underlying fit, when one was possible.
    pub fit: Option<McdFit>,
}

/// Half-sample size h = floor((n + p + 1) / 2).
pub fn half_sample_size(n: usize, p: usize) -> Result<usize, McdError> {
    if n <= p {
        return Err(McdError::Dimensionality { n, p });
    }
    Ok((n + p + 1) / 2)
}

/// Squared Mahalanobis distance (x - mu)' S^-1 (x - mu).
pub fn mahalanobis_sq(x: &[f64], location: &[f64], scatter: &[f64]) -> Result<f64, McdError> {
    let p = location.len();
    if x.len() != p || scatter.len() != p * p {
        return Err(McdError::ShapeMismatch {
            len: scatter.len(),
            expected: p * p,
        });
    }
    let mut chol = scatter.to_vec();
    if !cholesky_in_place(p, &mut chol) {
        return Err(McdError::SingularScatter);
    }
    let mut diff: Vec<f64> = x.iter().zip(location).map(|(a, b)| a - b).collect();
    Ok(mahal_sq_from_chol(p, &chol, &mut diff))
}

/// One concentration step: fit mean/covariance on `subset`, then return the
/// indices of the h observations nearest in Mahalanobis distance to that
/// fit. The new subset's covariance determinant never exceeds the old one.
pub fn c_step(data: Observations<'_>, subset: &[usize]) -> Result<Vec<usize>, McdError> {
    let p = data.p();
    let h = subset.len();
    let mut mean = vec![0.0; p];
    let mut cov = vec![0.0; p * p];
    subset_mean_cov(data, subset, &mut mean, &mut cov);
    let mut chol = cov;
    if !cholesky_in_place(p, &mut chol) {
        return Err(McdError::SingularSubset);
    }

    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(data.n());
    let mut diff = vec![0.0; p];
    for i in 0..data.n() {
        for (d, (a, b)) in diff.iter_mut().zip(data.row(i).iter().zip(&mean)) {
            *d = a - b;
        }
        scored.push((mahal_sq_from_chol(p, &chol, &mut diff), i));
    }
    scored.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let mut next: Vec<usize> = scored[..h].iter().map(|&(_, i)| i).collect();
    next.sort_unstable();
    Ok(next)
}

/// Exhaustive MCD: global minimum of det(cov) over all h-subsets, in
/// lexicographic order so determinant ties resolve to the smallest index
/// set. Singular subsets are skipped and counted.
pub fn mcd_exact(data: Observations<'_>, config: &McdConfig) -> Result<McdFit, McdError> {
    config.validate()?;
    let (n, p) = (data.n(), data.p());
    let h = half_sample_size(n, p)?;
    if data.has_constant_dimension() {
        return Err(McdError::DegenerateData);
    }
    let combos = binomial_capped(n, h, config.exhaustive_threshold);
    if combos > config.exhaustive_threshold {
        return Err(McdError::InvalidConfig(format!(
            "C({n}, {h}) exceeds the exhaustive threshold {}",
            config.exhaustive_threshold
        )));
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut skipped = 0usize;
    let mut subset: Vec<usize> = (0..h).collect();
    let mut mean = vec![0.0; p];
    let mut cov = vec![0.0; p * p];

    loop {
        subset_mean_cov(data, &subset, &mut mean, &mut cov);
        let mut chol = cov.clone();
        if cholesky_in_place(p, &mut chol) {
            let det = chol_det(p, &chol);
            if best.as_ref().map_or(true, |(b, _)| det < *b) {
                best = Some((det, subset.clone()));
            }
        } else {
            skipped += 1;
        }
        if !next_combination(&mut subset, n) {
            break;
        }
    }

    let (_, support) = best.ok_or(McdError::DegenerateData)?;
    finalize_fit(data, support, config, true, skipped)
}

/// MCD via the concentration-step search; delegates to [`mcd_exact`] when
/// every h-subset can be enumerated within the configured threshold.
/// Deterministic for a fixed seed.
pub fn fast_mcd(data: Observations<'_>, config: &McdConfig) -> Result<McdFit, McdError> {
    config.validate()?;
    let (n, p) = (data.n(), data.p());
    if n <= p + 1 {
        return Err(McdError::Dimensionality { n, p });
    }
    if data.has_constant_dimension() {
        return Err(McdError::DegenerateData);
    }
    let h = half_sample_size(n, p)?;
    if binomial_capped(n, h, config.exhaustive_threshold) <= config.exhaustive_threshold {
        return mcd_exact(data, config);
    }

    let search = if p == 1 {
        univariate_search(data.values, h, config)
    } else {
        multivariate_search(data, h, config)
    }?;
    finalize_fit(data, search.support, config, search.converged, search.failed_starts)
}

struct SearchOutcome {
    support: Vec<usize>,
    converged: bool,
    failed_starts: usize,
}

/// Consistency factor for the raw MCD scatter: alpha / F_{chi2_{p+2}}(q)
/// with alpha = h/n and q the chi2_p quantile at alpha. Approaches 1 as
/// h -> n; at h = n the sample covariance needs no rescaling.
pub fn consistency_factor(h: usize, n: usize, p: usize) -> f64 {
    assert!(p >= 1 && p < h && h <= n, "need 1 <= p < h <= n");
    if h == n {
        return 1.0;
    }
    let alpha = h as f64 / n as f64;
    let chi_p = ChiSquared::new(p as f64).expect("dof >= 1");
    let chi_p2 = ChiSquared::new((p + 2) as f64).expect("dof >= 3");
    let q = chi_p.inverse_cdf(alpha);
    alpha / chi_p2.cdf(q)
}

/// Firm-year crash indicator: 1 iff the univariate MCD fit of the slice's
/// weekly returns flags at least one week whose value lies strictly below
/// the robust location. A dispersion-free slice cannot show crash evidence
/// and yields 0 with the degenerate marker set.
pub fn negoutlier(slice: &FirmYearSlice, config: &McdConfig) -> Result<NegoutlierOutcome, McdError> {
    let p = 1usize;
    let min_weeks = 5usize.max(p + 2);
    if slice.w.len() < min_weeks {
        return Err(McdError::InsufficientData {
            required: min_weeks,
            actual: slice.w.len(),
        });
    }
    let slice_config = config.for_slice(&slice.firm_id, slice.year);
    match fast_mcd(Observations::univariate(&slice.w), &slice_config) {
        Ok(fit) => {
            let center = fit.location[0];
            let hit = fit
                .flags
                .iter()
                .zip(&slice.w)
                .any(|(&flagged, &w)| flagged && w < center);
            Ok(NegoutlierOutcome {
                indicator: u8::from(hit),
                degenerate: false,
                fit: Some(fit),
            })
        }
        Err(McdError::DegenerateData) => Ok(NegoutlierOutcome {
            indicator: 0,
            degenerate: true,
            fit: None,
        }),
        Err(e) => Err(e),
    }
}

// ---------------------------------------------------------------------------
// Search internals
// ---------------------------------------------------------------------------

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Scalar-path search for p = 1: Mahalanobis ranking reduces to squared
/// deviation from the subset mean, so no matrix work is needed until the
/// final fit.
fn univariate_search(x: &[f64], h: usize, config: &McdConfig) -> Result<SearchOutcome, McdError> {
    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(f64, Vec<usize>, bool)> = None;
    let mut failed = 0usize;

    let mut scored: Vec<(f64, usize)> = vec![(0.0, 0); n];
    'starts: for _ in 0..config.n_starts {
        // Elemental start: two observations, extended while degenerate.
        let mut members: Vec<usize> = rand::seq::index::sample(&mut rng, n, 2).into_vec();
        let mut spread = (x[members[0]] - x[members[1]]).abs();
        while spread == 0.0 && members.len() < n {
            let candidate = rng.gen_range(0..n);
            if !members.contains(&candidate) {
                members.push(candidate);
                let lo = members.iter().map(|&i| x[i]).fold(f64::INFINITY, f64::min);
                let hi = members.iter().map(|&i| x[i]).fold(f64::NEG_INFINITY, f64::max);
                spread = hi - lo;
            }
        }
        if spread == 0.0 {
            // Every observation is identical.
            return Err(McdError::DegenerateData);
        }

        let mut center: f64 =
            members.iter().map(|&i| x[i]).sum::<f64>() / members.len() as f64;
        let mut support: Vec<usize> = Vec::with_capacity(h);
        let mut converged = false;

        for _step in 0..config.max_csteps {
            for (slot, (&v, i)) in scored.iter_mut().zip(x.iter().zip(0..)) {
                let d = v - center;
                *slot = (d * d, i);
            }
            scored.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            let mut next: Vec<usize> = scored[..h].iter().map(|&(_, i)| i).collect();
            next.sort_unstable();
            let next_center = next.iter().map(|&i| x[i]).sum::<f64>() / h as f64;
            if next == support {
                converged = true;
                break;
            }
            support = next;
            center = next_center;
        }

        let ss: f64 = support.iter().map(|&i| (x[i] - center).powi(2)).sum();
        let det = ss / (h - 1) as f64;
        if det == 0.0 {
            failed += 1;
            continue 'starts;
        }
        let better = match &best {
            None => true,
            Some((b, s, _)) => det < *b || (det == *b && support < *s),
        };
        if better {
            best = Some((det, support, converged));
        }
    }

    let (_, support, converged) = best.ok_or(McdError::DegenerateData)?;
    Ok(SearchOutcome {
        support,
        converged,
        failed_starts: failed,
    })
}

/// General-p concentration search from random (p+1)-element starts.
fn multivariate_search(
    data: Observations<'_>,
    h: usize,
    config: &McdConfig,
) -> Result<SearchOutcome, McdError> {
    let (n, p) = (data.n(), data.p());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(f64, Vec<usize>, bool)> = None;
    let mut failed = 0usize;

    let mut mean = vec![0.0; p];
    let mut cov = vec![0.0; p * p];
    let mut diff = vec![0.0; p];

    'starts: for _ in 0..config.n_starts {
        let mut members: Vec<usize> = rand::seq::index::sample(&mut rng, n, p + 1).into_vec();
        // Extend the elemental set until its covariance is nonsingular.
        let mut chol;
        loop {
            subset_mean_cov(data, &members, &mut mean, &mut cov);
            chol = cov.clone();
            if cholesky_in_place(p, &mut chol) {
                break;
            }
            if members.len() == n {
                return Err(McdError::DegenerateData);
            }
            loop {
                let candidate = rng.gen_range(0..n);
                if !members.contains(&candidate) {
                    members.push(candidate);
                    break;
                }
            }
        }

        // Expand to the h nearest observations, then concentrate.
        let mut scored: Vec<(f64, usize)> = (0..n)
            .map(|i| {
                for (d, (a, b)) in diff.iter_mut().zip(data.row(i).iter().zip(&mean)) {
                    *d = a - b;
                }
                (mahal_sq_from_chol(p, &chol, &mut diff), i)
            })
            .collect();
        scored.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let mut support: Vec<usize> = scored[..h].iter().map(|&(_, i)| i).collect();
        support.sort_unstable();

        let mut converged = false;
        for _step in 0..config.max_csteps {
            match c_step(data, &support) {
                Ok(next) => {
                    if next == support {
                        converged = true;
                        break;
                    }
                    support = next;
                }
                Err(McdError::SingularSubset) => {
                    failed += 1;
                    continue 'starts;
                }
                Err(e) => return Err(e),
            }
        }

        subset_mean_cov(data, &support, &mut mean, &mut cov);
        let mut final_chol = cov.clone();
        if !cholesky_in_place(p, &mut final_chol) {
            failed += 1;
            continue 'starts;
        }
        let det = chol_det(p, &final_chol);
        let better = match &best {
            None => true,
            Some((b, s, _)) => det < *b || (det == *b && support < *s),
        };
        if better {
            best = Some((det, support, converged));
        }
    }

    let (_, support, converged) = best.ok_or(McdError::DegenerateData)?;
    Ok(SearchOutcome {
        support,
        converged,
        failed_starts: failed,
    })
}

fn finalize_fit(
    data: Observations<'_>,
    support: Vec<usize>,
    config: &McdConfig,
    converged: bool,
    singular_candidates_skipped: usize,
) -> Result<McdFit, McdError> {
    let (n, p) = (data.n(), data.p());
    let h = support.len();

    let mut location = vec![0.0; p];
    let mut raw_cov = vec![0.0; p * p];
    subset_mean_cov(data, &support, &mut location, &mut raw_cov);

    let mut raw_chol = raw_cov.clone();
    if !cholesky_in_place(p, &mut raw_chol) {
        return Err(McdError::DegenerateData);
    }
    let raw_determinant = chol_det(p, &raw_chol);

    let factor = if config.consistency_correction {
        consistency_factor(h, n, p)
    } else {
        1.0
    };
    let scatter: Vec<f64> = raw_cov.iter().map(|v| v * factor).collect();

    let mut chol = scatter.clone();
    if !cholesky_in_place(p, &mut chol) {
        return Err(McdError::SingularScatter);
    }

    let mut diff = vec![0.0; p];
    let distances: Vec<f64> = (0..n)
        .map(|i| {
            for (d, (a, b)) in diff.iter_mut().zip(data.row(i).iter().zip(&location)) {
                *d = a - b;
            }
            mahal_sq_from_chol(p, &chol, &mut diff)
        })
        .collect();

    let chi = ChiSquared::new(p as f64).expect("dof >= 1");
    let cutoff = chi.inverse_cdf(config.quantile);
    let flags = distances.iter().map(|&d| d > cutoff).collect();

    Ok(McdFit {
        n,
        p,
        h,
        location,
        scatter,
        raw_determinant,
        support,
        distances,
        cutoff,
        flags,
        converged,
        singular_candidates_skipped,
    })
}

// ---------------------------------------------------------------------------
// Small dense helpers (row-major, p is tiny)
// ---------------------------------------------------------------------------

/// Mean and sample covariance (divisor len-1) of the given rows.
fn subset_mean_cov(data: Observations<'_>, subset: &[usize], mean: &mut [f64], cov: &mut [f64]) {
    let p = data.p();
    let m = subset.len();
    mean.fill(0.0);
    for &i in subset {
        for (acc, v) in mean.iter_mut().zip(data.row(i)) {
            *acc += v;
        }
    }
    for acc in mean.iter_mut() {
        *acc /= m as f64;
    }
    cov.fill(0.0);
    for &i in subset {
        let row = data.row(i);
        for a in 0..p {
            let da = row[a] - mean[a];
            for b in a..p {
                cov[a * p + b] += da * (row[b] - mean[b]);
            }
        }
    }
    let denom = (m - 1) as f64;
    for a in 0..p {
        for b in a..p {
            let v = cov[a * p + b] / denom;
            cov[a * p + b] = v;
            cov[b * p + a] = v;
        }
    }
}

/// In-place Cholesky of a p x p row-major SPD matrix; lower factor is left
/// in the lower triangle. Returns false when the matrix is not (numerically)
/// positive definite; the pivot threshold is relative to the original
/// diagonal, so cancellation noise on a rank-deficient matrix is treated as
/// singular rather than as a tiny positive variance.
fn cholesky_in_place(p: usize, a: &mut [f64]) -> bool {
    let max_diag = (0..p).fold(0.0f64, |acc, j| acc.max(a[j * p + j].abs()));
    let tol = max_diag * 1e-12;
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= a[j * p + k] * a[j * p + k];
        }
        if d <= tol || !d.is_finite() {
            return false;
        }
        let l_jj = d.sqrt();
        a[j * p + j] = l_jj;
        for i in (j + 1)..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = s / l_jj;
        }
    }
    true
}

/// det(A) from its Cholesky factor: product of squared diagonal entries.
fn chol_det(p: usize, chol: &[f64]) -> f64 {
    let mut det = 1.0;
    for j in 0..p {
        let d = chol[j * p + j];
        det *= d * d;
    }
    det
}

/// Squared Mahalanobis distance given the Cholesky factor of the scatter;
/// `diff` holds x - mu on entry and is overwritten by the forward solve.
fn mahal_sq_from_chol(p: usize, chol: &[f64], diff: &mut [f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..p {
        let mut v = diff[i];
        for k in 0..i {
            v -= chol[i * p + k] * diff[k];
        }
        let z = v / chol[i * p + i];
        diff[i] = z;
        acc += z * z;
    }
    acc
}

/// C(n, k), saturating just above `cap` so callers can compare cheaply.
fn binomial_capped(n: usize, k: usize, cap: u64) -> u64 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    let cap = u128::from(cap);
    for i in 1..=k {
        c = c * (n - k + i) as u128 / i as u128;
        if c > cap {
            return cap as u64 + 1;
        }
    }
    c as u64
}

/// Advance `subset` to the next k-combination of {0..n-1} in lexicographic
/// order; false when exhausted.
fn next_combination(subset: &mut [usize], n: usize) -> bool {
    let k = subset.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if subset[i] != i + n - k {
            subset[i] += 1;
            for j in (i + 1)..k {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const OUTLIER_TEN: [f64; 10] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 1000.0];

    #[test]
    fn half_sample_formula() {
        assert_eq!(half_sample_size(10, 1).unwrap(), 6);
        assert_eq!(half_sample_size(52, 1).unwrap(), 27);
        assert_eq!(half_sample_size(7, 2).unwrap(), 5);
        assert!(matches!(
            half_sample_size(2, 2),
            Err(McdError::Dimensionality { .. })
        ));
    }

    #[test]
    fn mahalanobis_basics() {
        assert_eq!(mahalanobis_sq(&[1.0], &[1.0], &[4.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            mahalanobis_sq(&[3.0], &[1.0], &[4.0]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert!(matches!(
            mahalanobis_sq(&[1.0], &[0.0], &[0.0]),
            Err(McdError::SingularScatter)
        ));
    }

    #[test]
    fn mahalanobis_matches_closed_form_2x2_inverse() {
        let mu = [0.5, -1.0];
        let s = [2.0, 0.3, 0.3, 1.5]; // SPD
        let x = [1.7, 0.4];
        let got = mahalanobis_sq(&x, &mu, &s).unwrap();

        // Explicit 2x2 inverse oracle.
        let det = s[0] * s[3] - s[1] * s[2];
        let inv = [s[3] / det, -s[1] / det, -s[2] / det, s[0] / det];
        let d = [x[0] - mu[0], x[1] - mu[1]];
        let want = d[0] * (inv[0] * d[0] + inv[1] * d[1]) + d[1] * (inv[2] * d[0] + inv[3] * d[1]);
        assert_abs_diff_eq!(got, want, epsilon = 1e-12);
    }

    #[test]
    fn c_step_fixed_point_on_optimal_support() {
        let data = Observations::univariate(&OUTLIER_TEN);
        let support = vec![0, 1, 2, 3, 4, 5];
        let next = c_step(data, &support).unwrap();
        assert_eq!(next, support);
    }

    #[test]
    fn c_step_escapes_contaminated_start() {
        let data = Observations::univariate(&OUTLIER_TEN);
        // Start that includes the gross outlier.
        let mut subset = vec![0, 2, 4, 6, 8, 9];
        for _ in 0..20 {
            let next = c_step(data, &subset).unwrap();
            if next == subset {
                break;
            }
            subset = next;
        }
        assert!(!subset.contains(&9), "support still contains 1000: {subset:?}");
    }

    #[test]
    fn c_step_determinant_is_monotone() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let n = rng.gen_range(10..30);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let data = Observations::univariate(&x);
            let h = half_sample_size(n, 1).unwrap();
            let mut subset: Vec<usize> = rand::seq::index::sample(&mut rng, n, h).into_vec();
            subset.sort_unstable();

            let det_of = |s: &[usize]| {
                let mean = s.iter().map(|&i| x[i]).sum::<f64>() / s.len() as f64;
                s.iter().map(|&i| (x[i] - mean).powi(2)).sum::<f64>() / (s.len() - 1) as f64
            };

            let mut prev = det_of(&subset);
            for _ in 0..30 {
                let next = c_step(data, &subset).unwrap();
                let d = det_of(&next);
                assert!(
                    d <= prev + 1e-12 * prev.abs().max(1.0),
                    "determinant increased: {prev} -> {d}"
                );
                if next == subset {
                    break;
                }
                subset = next;
                prev = d;
            }
        }
    }

    #[test]
    fn exact_flags_gross_outlier_and_picks_lex_smallest_run() {
        let config = McdConfig::default();
        let fit = mcd_exact(Observations::univariate(&OUTLIER_TEN), &config).unwrap();
        // All runs of six consecutive integers tie at variance 3.5; the
        // lexicographically smallest support wins.
        assert_eq!(fit.support, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(fit.h, 6);
        assert_abs_diff_eq!(fit.raw_determinant, 3.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.cutoff, 5.023886, epsilon = 1e-4);
        let flagged: Vec<usize> = (0..10).filter(|&i| fit.flags[i]).collect();
        assert_eq!(flagged, vec![9]);
    }

    #[test]
    fn exact_on_identical_points_is_degenerate() {
        let x = vec![3.0; 8];
        let err = mcd_exact(Observations::univariate(&x), &McdConfig::default()).unwrap_err();
        assert!(matches!(err, McdError::DegenerateData));
    }

    #[test]
    fn exact_flags_planted_outliers_in_two_dimensions() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut values = Vec::new();
        for _ in 0..17 {
            values.push(rng.gen_range(-1.0..1.0));
            values.push(rng.gen_range(-1.0..1.0));
        }
        for _ in 0..3 {
            values.push(10.0 + rng.gen_range(-0.5..0.5));
            values.push(-10.0 + rng.gen_range(-0.5..0.5));
        }
        let data = Observations::new(&values, 20, 2).unwrap();
        let fit = mcd_exact(data, &McdConfig::default()).unwrap();
        let flagged: Vec<usize> = (0..20).filter(|&i| fit.flags[i]).collect();
        assert_eq!(flagged, vec![17, 18, 19]);
    }

    #[test]
    fn fast_delegates_to_exact_below_threshold() {
        let config = McdConfig::default();
        let data = Observations::univariate(&OUTLIER_TEN);
        let fast = fast_mcd(data, &config).unwrap();
        let exact = mcd_exact(data, &config).unwrap();
        assert_eq!(fast.support, exact.support);
        assert_eq!(fast.raw_determinant, exact.raw_determinant);
    }

    #[test]
    fn fast_is_bit_identical_for_fixed_seed() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..80).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let config = McdConfig {
            n_starts: 50,
            seed: 99,
            ..McdConfig::default()
        };
        let a = fast_mcd(Observations::univariate(&x), &config).unwrap();
        let b = fast_mcd(Observations::univariate(&x), &config).unwrap();
        assert_eq!(a.support, b.support);
        assert_eq!(a.location, b.location);
        assert_eq!(a.scatter, b.scatter);
        assert_eq!(a.distances, b.distances);
        assert_eq!(a.flags, b.flags);
    }

    #[test]
    fn fast_beats_random_half_samples() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..20 {
            let n = 80;
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let h = half_sample_size(n, 1).unwrap();
            let config = McdConfig {
                n_starts: 100,
                seed: trial,
                ..McdConfig::default()
            };
            let fit = fast_mcd(Observations::univariate(&x), &config).unwrap();
            for _ in 0..10 {
                let subset: Vec<usize> = rand::seq::index::sample(&mut rng, n, h).into_vec();
                let mean = subset.iter().map(|&i| x[i]).sum::<f64>() / h as f64;
                let var =
                    subset.iter().map(|&i| (x[i] - mean).powi(2)).sum::<f64>() / (h - 1) as f64;
                assert!(fit.raw_determinant <= var + 1e-12);
            }
        }
    }

    #[test]
    fn fast_univariate_affine_equivariance() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x: Vec<f64> = (0..70).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (a, b) = (-2.5, 0.7);
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();

        let config = McdConfig {
            n_starts: 80,
            seed: 5,
            ..McdConfig::default()
        };
        let fx = fast_mcd(Observations::univariate(&x), &config).unwrap();
        let fy = fast_mcd(Observations::univariate(&y), &config).unwrap();

        assert_eq!(fx.support, fy.support);
        assert_eq!(fx.flags, fy.flags);
        assert_abs_diff_eq!(fy.location[0], a * fx.location[0] + b, epsilon = 1e-10);
        assert_abs_diff_eq!(fy.scatter[0], a * a * fx.scatter[0], epsilon = 1e-9);
    }

    #[test]
    fn seed_stability_of_determinants() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut agree = 0usize;
        let total = 100usize;
        for _ in 0..total {
            let x: Vec<f64> = (0..60).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mk = |seed| McdConfig {
                n_starts: 120,
                seed,
                ..McdConfig::default()
            };
            let d1 = fast_mcd(Observations::univariate(&x), &mk(1)).unwrap().raw_determinant;
            let d2 = fast_mcd(Observations::univariate(&x), &mk(2)).unwrap().raw_determinant;
            if ((d1 - d2).abs() / d1.abs().max(1e-300)) < 1e-6 {
                agree += 1;
            }
        }
        assert!(agree >= 95, "only {agree}/{total} instances seed-stable");
    }

    #[test]
    fn flags_recomputable_from_distances_and_cutoff() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let x: Vec<f64> = (0..90).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fit = fast_mcd(Observations::univariate(&x), &McdConfig::default()).unwrap();
        let recomputed: Vec<bool> = fit.distances.iter().map(|&d| d > fit.cutoff).collect();
        assert_eq!(recomputed, fit.flags);
    }

    #[test]
    fn consistency_factor_limits_and_bounds() {
        // Exactly 1 when the half sample is the whole sample.
        assert_eq!(consistency_factor(40, 40, 1), 1.0);

        // Ratio >= 1 across the alpha range; shrinks toward 1 as alpha -> 1.
        let f_half = consistency_factor(50, 100, 1);
        let f_mid = consistency_factor(75, 100, 1);
        let f_high = consistency_factor(9999, 10000, 1);
        assert!(f_half > f_mid && f_mid > f_high && f_high > 1.0);
        assert!((f_high - 1.0).abs() < 2e-3);

        // Maximal-breakdown univariate factor: the central half of a normal
        // carries about 1/7 of the variance.
        assert_abs_diff_eq!(f_half, 7.0, epsilon = 0.05);
    }

    fn slice_from(w: Vec<f64>) -> FirmYearSlice {
        let n = w.len();
        let ret_mean = w.iter().sum::<f64>() / n as f64;
        let sigma = (w.iter().map(|v| (v - ret_mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        FirmYearSlice {
            firm_id: "A".into(),
            year: 2015,
            weeks: Vec::new(),
            w,
            ret_mean,
            sigma,
        }
    }

    fn gaussian_w(n: usize, sd: f64, seed: u64) -> Vec<f64> {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                // Box-Muller
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                sd * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect()
    }

    #[test]
    fn negoutlier_detects_injected_crash_week() {
        let mut w = gaussian_w(52, 0.02, 7);
        w[20] = -10.0 * 0.02;
        let out = negoutlier(&slice_from(w), &McdConfig::default()).unwrap();
        assert_eq!(out.indicator, 1);
        assert!(!out.degenerate);
    }

    #[test]
    fn negoutlier_ignores_positive_jumps() {
        let mut w = gaussian_w(52, 0.02, 8);
        w[20] = 10.0 * 0.02;
        let out = negoutlier(&slice_from(w), &McdConfig::default()).unwrap();
        assert_eq!(out.indicator, 0);
    }

    #[test]
    fn negoutlier_zero_on_clean_tight_slice() {
        // A slice whose values all sit within a fraction of the robust
        // scale cannot produce a flag.
        let w: Vec<f64> = (0..52).map(|i| (i as f64) * 1e-4).collect();
        let out = negoutlier(&slice_from(w), &McdConfig::default()).unwrap();
        assert_eq!(out.indicator, 0);
    }

    #[test]
    fn negoutlier_degenerate_slice_reports_zero() {
        let out = negoutlier(&slice_from(vec![0.01; 30]), &McdConfig::default()).unwrap();
        assert_eq!(out.indicator, 0);
        assert!(out.degenerate);
    }

    #[test]
    fn negoutlier_requires_minimum_weeks() {
        let err = negoutlier(&slice_from(vec![0.0, 0.1, 0.2, 0.3]), &McdConfig::default())
            .unwrap_err();
        assert!(matches!(err, McdError::InsufficientData { required: 5, .. }));
    }

    #[test]
    fn negoutlier_invariant_to_week_order() {
        let mut w = gaussian_w(52, 0.02, 9);
        w[5] = -0.18;
        let forward = negoutlier(&slice_from(w.clone()), &McdConfig::default()).unwrap();
        w.reverse();
        let reversed = negoutlier(&slice_from(w), &McdConfig::default()).unwrap();
        assert_eq!(forward.indicator, reversed.indicator);
    }

    #[test]
    fn slice_seed_is_stable_and_distinguishes_keys() {
        let a = derive_slice_seed(1, "F001", 2015);
        assert_eq!(a, derive_slice_seed(1, "F001", 2015));
        assert_ne!(a, derive_slice_seed(1, "F001", 2016));
        assert_ne!(a, derive_slice_seed(1, "F002", 2015));
        assert_ne!(a, derive_slice_seed(2, "F001", 2015));
    }

    #[test]
    fn binomial_cap_behaviour() {
        assert_eq!(binomial_capped(10, 6, 1000), 210);
        assert_eq!(binomial_capped(52, 27, 200_000), 200_001);
        assert_eq!(binomial_capped(20, 11, 200_000), 167_960);
    }
}
