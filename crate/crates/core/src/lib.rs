//! Joint rating prediction and review generation with a denoising diffusion
//! process over word embeddings.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`]: tensors and tape-based reverse-mode differentiation
//! - [`corpus`]: records, vocabulary, persona/profile construction, synthetic data
//! - [`model`]: persona encoder, noisy transformer decoder, prediction heads
//! - [`diffusion`]: noise schedules, forward corruption, reverse sampler
//! - [`training`]: losses, multi-task objective, SGD with clipping and decay
//! - [`metrics`]: RMSE/MAE, FMR/FCR/DIV/USR, BLEU and ROUGE
//! - [`pipeline`]: raw splits to encoded records and encoder inputs

pub mod corpus;
pub mod diffusion;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
pub use numerics::{ParamGrads, ParamId, ParamStore, Tape, Tensor, Var};
