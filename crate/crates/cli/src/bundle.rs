//! The model file written by `train`.

use dmlfair::persist::Persist;
use dmlfair::pipeline::{DmlFairModel, RegularizedModel, UnawareModel};
use serde::{Deserialize, Serialize};

/// A fair model plus the optional comparison models trained alongside it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelBundle {
    pub dml: DmlFairModel,
    pub unaware: Option<UnawareModel>,
    pub regularized: Option<RegularizedModel>,
}

impl Persist for ModelBundle {
    const KIND: &'static str = "dmlfair_cli_bundle";
}
