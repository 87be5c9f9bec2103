//! Dropout-regularized multilayer perceptron for the Pima Indians Diabetes
//! data, built from scratch on `f64` vectors.
//!
//! The default network is dense 8→64 (ELU), dropout 0.25, dense 64→32 (ELU),
//! dropout 0.5, dense 32→1 (softplus), trained on raw features with MSE loss
//! and Adadelta.
//!
//! ```no_run
//! use dropout_mlp::{data, trainer};
//!
//! let dataset = data::load_pid("pima-indians-diabetes.csv")?;
//! let config = trainer::TrainConfig { seed: 7, ..Default::default() };
//! let model = trainer::train(&config, &dataset)?;
//! println!("validation accuracy {:.4}", model.validation_metrics.accuracy);
//! # Ok::<(), dropout_mlp::Error>(())
//! ```

pub mod cli;
pub mod data;
pub mod error;
pub mod linalg;
pub mod network;
pub mod optim;
pub mod trainer;

pub use error::{Error, Result};
