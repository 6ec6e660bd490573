//! Stock price crash risk toolkit: panel ingestion, the expanded market
//! model, robust (MCD-based) and classical crash measures, a firm-specific
//! sentiment index with detoning, and the panel regressions tying them
//! together. Everything is deterministic under a fixed seed.

pub mod crash_measures;
pub mod data_panel;
pub mod econometrics;
pub mod market_model;
pub mod mcd;
pub mod sentiment;
pub mod simlab;
pub mod week;

pub use week::WeekId;
