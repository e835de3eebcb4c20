//! QFFN-BERT: a compact BERT-style text classifier whose feedforward
//! sub-layers can be replaced by a residual four-qubit quantum block.
//!
//! - [`state`]: dense statevector simulator (RY, RZ, CNOT, CZ, ⟨Z⟩)
//! - [`pqc`]: optimized and vanilla ansätze, parameter-shift Jacobians
//! - [`qffn`]: the quantum feedforward block applied to the [CLS] row
//! - [`encoder`]: the transformer classifier with manual backprop
//! - [`data`]: TSV ingestion, WordPiece tokenizer, few-shot subsampling,
//!   synthetic keyword task
//! - [`trainer`]: Adam fine-tuning loop and metrics
//! - [`diagnostics`]: gradient-variance probe, finite differences
//! - [`cli`]: the `qffn` experiment runner

pub mod cli;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod encoder;
pub mod error;
pub mod exec;
pub mod io;
pub mod params;
pub mod pqc;
pub mod qffn;
pub mod state;
pub mod trainer;

pub use error::{Error, Result};
pub use exec::Exec;
pub use params::ParamSet;
