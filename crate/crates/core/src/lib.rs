//! Least-squares density-difference estimation and related tools.

pub mod applications;
pub mod data;
pub mod divergence;
pub mod error;
pub mod experiment;
pub mod folds;
pub mod kde;
pub mod kernel;
pub mod kliep;
pub mod lsdd;
pub mod rng;
pub mod sample;
pub mod two_sample;

pub use divergence::{estimates_for_model, lsdd_l2, L2Estimates};
pub use error::{Error, ErrorKind, Result};
pub use kernel::{Coefficients, DesignPair, GaussianBasis};
pub use lsdd::{fit_cv, fit_fixed, CvOptions, CvReport, DensityDiffModel, HyperGrid};
pub use rng::Rng;
pub use sample::SampleSet;
pub use two_sample::{permutation_test, TestResult};
