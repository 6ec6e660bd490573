//! Pipeline configuration: a single TOML file covering input locations,
//! filter thresholds, estimator knobs, and the simulation block.

use std::path::{Path, PathBuf};

use crashrisk::data_panel::{FundamentalsSchema, ReturnsSchema};
use crashrisk::econometrics::SeType;
use crashrisk::mcd::McdConfig;
use crashrisk::sentiment::SentimentMode;
use crashrisk::simlab::SimConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; 0 keeps the library default. Parallelism never
    /// changes results.
    pub threads: usize,
    pub input: InputConfig,
    pub filters: FilterConfig,
    pub mcd: McdSection,
    pub crash: CrashSection,
    pub sentiment: SentimentSection,
    pub regression: RegressionSection,
    pub output: OutputConfig,
    pub simulate: SimConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            threads: 0,
            input: InputConfig::default(),
            filters: FilterConfig::default(),
            mcd: McdSection::default(),
            crash: CrashSection::default(),
            sentiment: SentimentSection::default(),
            regression: RegressionSection::default(),
            output: OutputConfig::default(),
            simulate: SimConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub returns: PathBuf,
    pub fundamentals: PathBuf,
    pub returns_columns: ReturnsSchema,
    pub fundamentals_columns: FundamentalsSchema,
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig {
            returns: PathBuf::from("returns.csv"),
            fundamentals: PathBuf::from("fundamentals.csv"),
            returns_columns: ReturnsSchema::default(),
            fundamentals_columns: FundamentalsSchema::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_nonzero_frac: f64,
    pub min_weeks_per_year: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_nonzero_frac: 0.10,
            min_weeks_per_year: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McdSection {
    pub n_starts: usize,
    pub max_csteps: usize,
    pub exhaustive_threshold: u64,
    pub quantile: f64,
    pub consistency_correction: bool,
}

impl Default for McdSection {
    fn default() -> Self {
        let d = McdConfig::default();
        McdSection {
            n_starts: d.n_starts,
            max_csteps: d.max_csteps,
            exhaustive_threshold: d.exhaustive_threshold,
            quantile: d.quantile,
            consistency_correction: d.consistency_correction,
        }
    }
}

impl McdSection {
    pub fn to_mcd_config(&self, seed: u64) -> McdConfig {
        McdConfig {
            n_starts: self.n_starts,
            max_csteps: self.max_csteps,
            exhaustive_threshold: self.exhaustive_threshold,
            quantile: self.quantile,
            seed,
            consistency_correction: self.consistency_correction,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrashSection {
    pub crash_sigma: f64,
}

impl Default for CrashSection {
    fn default() -> Self {
        CrashSection { crash_sigma: 3.2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SentimentSection {
    pub mode: SentimentMode,
    pub detone: bool,
    /// Two-sided winsorization quantile for the raw inputs; 0 disables.
    pub winsor_quantile: f64,
}

impl Default for SentimentSection {
    fn default() -> Self {
        SentimentSection {
            mode: SentimentMode::Fixed,
            detone: true,
            winsor_quantile: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionSection {
    pub ols_se: SeType,
    pub logit_robust: bool,
    pub logit_max_iter: usize,
    pub logit_tol: f64,
    pub dep_lags: usize,
    pub max_instruments_per_period: usize,
}

impl Default for RegressionSection {
    fn default() -> Self {
        RegressionSection {
            ols_se: SeType::Hc1,
            logit_robust: true,
            logit_max_iter: crashrisk::econometrics::DEFAULT_LOGIT_MAX_ITER,
            logit_tol: crashrisk::econometrics::DEFAULT_LOGIT_TOL,
            dep_lags: 2,
            max_instruments_per_period: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub export_market_fits: bool,
    pub export_mcd_audit: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            export_market_fits: true,
            export_mcd_audit: false,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config: PipelineConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(0.0..=1.0).contains(&self.filters.min_nonzero_frac) {
            return Err(CliError::Config(format!(
                "filters.min_nonzero_frac must lie in [0, 1], got {}",
                self.filters.min_nonzero_frac
            )));
        }
        if self.filters.min_weeks_per_year < 1 {
            return Err(CliError::Config(
                "filters.min_weeks_per_year must be >= 1".into(),
            ));
        }
        if !(self.mcd.quantile > 0.5 && self.mcd.quantile < 1.0) {
            return Err(CliError::Config(format!(
                "mcd.quantile must lie in (0.5, 1), got {}",
                self.mcd.quantile
            )));
        }
        if self.mcd.n_starts < 1 {
            return Err(CliError::Config("mcd.n_starts must be >= 1".into()));
        }
        if self.crash.crash_sigma <= 0.0 {
            return Err(CliError::Config("crash.crash_sigma must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.sentiment.winsor_quantile) {
            return Err(CliError::Config(
                "sentiment.winsor_quantile must lie in [0, 0.5)".into(),
            ));
        }
        if self.regression.dep_lags < 1 {
            return Err(CliError::Config("regression.dep_lags must be >= 1".into()));
        }
        self.simulate
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    /// Fail fast when the configured input files do not resolve.
    pub fn check_inputs_exist(&self) -> Result<(), CliError> {
        for path in [&self.input.returns, &self.input.fundamentals] {
            if !path.exists() {
                return Err(CliError::Data(format!(
                    "input file not found: {}",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    /// Hash of the canonical serialized config, for the run manifest.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = toml::to_string(self).unwrap_or_default();
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
