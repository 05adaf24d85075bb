//! Continual relearning for data-driven HVAC supply-air temperature control.
//!
//! The crate is organised as a pipeline:
//!
//! * [`nn`]: dense and LSTM layers, losses, backpropagation through time and
//!   an adaptive-moment optimizer.
//! * [`data`]: CSV ingestion, cleaning, half-hour aggregation, min-max
//!   scaling, sliding train/eval windows and a synthetic building generator.
//! * [`models`]: the heating-energy, valve-state and cooling-energy models,
//!   their training with early stopping, warm-start retraining with frozen
//!   feature layers, and CVRMSE / ROC-AUC evaluation.
//! * [`env`]: the data-driven building environment with exogenous weather,
//!   set-point delta actions and the energy/comfort reward.
//! * [`ppo`]: a Gaussian-policy PPO agent with clipped surrogate updates.
//! * [`relearn`]: the weekly relearning loop and the adaptive / static / rule
//!   based controller comparison.

pub mod config;
pub mod data;
pub mod env;
pub mod error;
pub mod models;
pub mod nn;
pub mod ppo;
pub mod relearn;
pub(crate) mod util;

pub use error::{Error, Result};
