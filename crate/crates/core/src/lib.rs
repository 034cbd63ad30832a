//! Fair representation learning with a Wasserstein critic.
//!
//! A linear autoencoder (the generator) is trained against a linear critic
//! that estimates the Wasserstein-1 distance between the latent
//! distributions of protected groups. The crate also ships the exact
//! optimal-transport oracle used to evaluate those representations, the
//! fairness metrics computed on downstream ridge-logistic classifiers, and
//! a label-flipping bias audit.
//!
//! Module map:
//!
//! * [`dataset`]: CSV ingestion, one-hot encoding, standardization, splits.
//! * [`linear_models`]: encoder/decoder, critic and ridge logistic regression.
//! * [`transport`]: exact W1 (1-D closed form and min-cost flow) and the
//!   critic's dual estimate.
//! * [`training`]: the adversarial minimax loop and its variants.
//! * [`metrics`]: parity, consistency, F1, K-S, group EMD, the parity bound.
//! * [`audit`]: label-flip injection, recovery and discrimination ranking.

pub mod audit;
pub mod dataset;
pub mod error;
pub mod linear_models;
pub mod metrics;
pub mod model_io;
pub mod training;
pub mod transport;

pub use audit::{DiscriminationRanking, FlipExperiment};
pub use dataset::{ColumnKind, ColumnSchema, Dataset, GroupPartition, RawTable, Schema};
pub use error::{Error, Result};
pub use linear_models::{
    ClassifierState, CriticState, EncoderState, Generator, MlpAutoencoder, Representation,
};
pub use metrics::FairnessReport;
pub use training::{TrainConfig, TrainHistory};
pub use transport::EmpiricalCloud;
