//! Delta-hedging laboratory.
//!
//! The crate is organized around a single workflow: simulate (or ingest) an
//! option-quote panel, pair consecutive quotes into one-step hedge samples,
//! train a feedforward network to improve on the implied Black-Scholes delta
//! (either directly or as a residual correction), and score the result with
//! gain ratios over delta and maturity buckets.
//!
//! Modules:
//! - [`bs`] — closed-form Black-Scholes prices, Greeks, and implied-vol inversion.
//! - [`market`] — synthetic market panels under GBM or Heston dynamics.
//! - [`pipeline`] — filtering, hedge-sample construction, feature vectors, splits, CSV formats.
//! - [`neural`] — from-scratch MLP with batch norm, Xavier init, Adam, gradient clipping.
//! - [`learner`] — direct and residual training objectives with early stopping.
//! - [`evaluation`] — gain ratios, bucketed reports, OLS constant-correction oracle.
//! - [`experiment`] — reproducible end-to-end runs driven by a TOML config.

pub mod bs;
pub mod evaluation;
pub mod experiment;
pub mod learner;
pub mod market;
pub mod neural;
pub mod pipeline;

pub use bs::{EuroOptionTerms, GreekSet, OptionKind};
pub use evaluation::GainReport;
pub use learner::{Objective, TrainPlan, TrainedModel};
pub use market::{GbmParams, HestonParams, LatticeSpec, MarketSnapshot, OptionQuote};
pub use neural::{NetConfig, Network};
pub use pipeline::{DeltaBucket, FeatureModel, FeatureSpec, FilterPolicy, HedgeSample, SplitPlan, TtmBucket};

/// Year-fraction convention used throughout: day counts divide by 365.
pub const DAYS_PER_YEAR: f64 = 365.0;

/// Trading days per "month" for hedge horizons and the synthetic expiry lattice.
pub const DAYS_PER_MONTH: u32 = 21;
