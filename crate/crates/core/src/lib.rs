//! Long-term feeder peak-load forecasting toolkit.
//!
//! The crate covers the full annual-study pipeline for distribution
//! feeders:
//!
//! - from-scratch LSTM/GRU sequence networks with hand-derived
//!   backpropagation through time ([`net`]), trained on mean-absolute-error
//!   objectives in one-output or output-per-step arrangements;
//! - feature engineering ([`features`], [`pipeline`]): virtual feeders that
//!   splice transfer-affected histories back together, min-max
//!   normalization, and eigendecomposition-based component reduction of the
//!   regional drivers;
//! - sequence dataset construction and record-level splits ([`data`]);
//! - classical baselines ([`baselines`]): bottom-up peak+large-customer
//!   addition, an order-2 autoregressive model, and feed-forward networks
//!   on one-year or three-year inputs;
//! - evaluation ([`eval`]) with MAPE, cumulative error shares, and error
//!   histograms; multi-year chained forecasting under temperature
//!   scenarios ([`forecast`]); hyperparameter search ([`tune`]); and a
//!   seeded synthetic grid generator ([`synth`]).
//!
//! Every stochastic step is driven by one user-facing seed through named
//! RNG streams ([`rng`]), so complete runs reproduce bit-identically. The
//! `loadcast` binary ([`cli`]) orchestrates the whole flow and records a
//! manifest per run.

pub mod baselines;
pub mod cli;
pub mod data;
pub mod document;
pub mod error;
pub mod eval;
pub mod features;
pub mod forecast;
pub mod net;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod tune;

pub use error::{Error, Result};
