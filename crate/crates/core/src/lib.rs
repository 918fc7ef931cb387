//! Counterfactually fair regression by partialling sensitive variables out of
//! the outcome and every predictor with cross-fitted machine-learning models.
//!
//! The workflow:
//!
//! 1. [`tabular`] loads a role-tagged table (sensitive, non-sensitive,
//!    outcome) and encodes it.
//! 2. [`orthogonal`] fits nuisance models of the outcome and each predictor
//!    on the sensitive features with K-fold cross-fitting, and subtracts their
//!    out-of-fold predictions.
//! 3. [`pipeline`] fits any [`learners`] regressor on the residuals and
//!    recentres its predictions on a declared base-case profile.
//! 4. [`simlab`] and [`fairmetrics`] measure counterfactual error against a
//!    simulation with known ground truth, and summarize group outcomes.
//!
//! ```
//! use dmlfair::learners::LearnerSpec;
//! use dmlfair::pipeline::{train, BaseCase, TrainConfig};
//! use dmlfair::simlab::{generate, SimConfig};
//!
//! let (data, _latents) = generate(&SimConfig { n: 400, seed: 7, ..SimConfig::default() })?;
//! let base = BaseCase::parse("age=18,gender=male,race=white")?;
//! let cfg = TrainConfig::new(LearnerSpec::Linear, LearnerSpec::Linear, 5, 1, base);
//! let model = train(&data, &cfg)?;
//! let preds = model.predict(&data, false)?;
//! assert_eq!(preds.len(), 400);
//! # Ok::<(), dmlfair::Error>(())
//! ```

pub mod error;
pub mod fairmetrics;
pub mod io;
pub mod learners;
pub mod matrix;
pub mod orthogonal;
pub mod persist;
pub mod pipeline;
pub mod seed;
pub mod simlab;
pub mod tabular;

pub use error::{Error, Result};
pub use matrix::Matrix;
