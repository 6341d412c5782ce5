//! Desk-scale lab for ESG-aware portfolio management with deep RL.
//!
//! The crate is organized as a pipeline:
//!
//! - [`marketdata`]: load/validate OHLCV and ESG CSVs, align them onto one
//!   trading calendar with nearest-date ESG fill, split train/trade, and
//!   generate deterministic synthetic markets.
//! - [`indicators`]: MACD, Bollinger bands, RSI, CCI, DX and SMAs with
//!   explicit warm-up semantics.
//! - [`env`]: the portfolio MDP with the ESG grant/tax reward regulator.
//! - [`nn`]: a minimal MLP engine with exact reverse-mode gradients, Adam,
//!   and a diagonal-Gaussian policy head.
//! - [`agents`]: A2C and PPO training over the env, plus deterministic
//!   evaluation.
//! - [`analytics`]: the risk-performance metric suite and the classical
//!   min-variance / stratified baselines.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); experiments
//! run at [`Real`] precision.

pub mod agents;
pub mod analytics;
pub mod env;
pub mod indicators;
pub mod marketdata;
pub mod nn;
pub mod scalar;

pub use scalar::Scalar;

/// Working precision for experiments and the CLI.
pub type Real = f64;

/// A fully aligned market + ESG panel at working precision.
pub type Dataset = marketdata::AlignedDataset<Real>;

/// Per-day technical features at working precision.
pub type Features = indicators::FeaturePanel<Real>;
