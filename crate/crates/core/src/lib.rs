//! Distribution normality testing with learned Mahalanobis metrics.
//!
//! A sample is mapped to a feature vector (its sorted standardised values or
//! statistics of its rasterised Q-Q plot), and its distance to a centroid of
//! normal samples under a learned metric is compared with a Monte Carlo null
//! distribution. Classical normality tests and image-similarity baselines
//! share the same calibration and power-study harness.

pub mod classical;
pub mod config;
pub mod engine;
pub mod error;
pub mod features;
pub mod harness;
pub mod metric;
pub mod qq;
pub mod similarity;
pub mod stats;

pub use engine::{dnt_test, load_model, save_model, train, DntModel, TestReport, TrainConfig};
pub use error::{Error, Result};
pub use harness::{run_power_study, Method, PowerTable, RunConfig};
