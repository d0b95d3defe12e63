//! Dirichlet pruning: learn per-layer channel-importance distributions by
//! variational inference and physically remove the channels that matter
//! least.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: dense f64 tensors and a reverse-mode autodiff tape.
//! * [`special`]: log-gamma, digamma, incomplete gamma, Gamma sampling and
//!   implicit shape-gradients.
//! * [`dirichlet`]: Dirichlet sampling, mean, log-density and closed-form KL.
//! * [`switch`]: importance switches and the variational objective.
//! * [`models`]: layer graphs, LeNet-5 / MLP builders, FLOPs and parameter
//!   accounting, the `DPM1` model file format.
//! * [`pruning`]: channel rankers, pruning plans, channel removal and
//!   fine-tuning.
//! * [`harness`]: configs, data ingestion, synthetic tasks, experiment
//!   drivers and report writers.

pub mod data;
pub mod dirichlet;
pub mod error;
pub mod harness;
pub mod models;
pub mod pruning;
pub mod special;
pub mod switch;
pub mod tensor;

pub use error::{Error, Result};
