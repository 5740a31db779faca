use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelSpec, Parameters};
use crate::em::FitSummary;
use crate::error::Result;
use crate::panel::ItemSchema;

/// On-disk model: spec, item schema, parameters and optional fit metadata.
///
/// Floats are written in shortest round-trip form, so reading a model back
/// reproduces every parameter bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub spec: ModelSpec,
    pub schema: ItemSchema,
    /// Number of time points the parameters were fitted on.
    pub n_times: usize,
    pub params: Parameters,
    /// `(covariate, center)` pairs subtracted from the raw covariates before
    /// fitting; panels must be centered the same way before use.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub centering: Vec<(String, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSummary>,
}

impl ModelFile {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let model: ModelFile = serde_json::from_str(&text)?;
        model.schema.validate()?;
        model.params.validate(&model.spec, &model.schema, model.n_times)?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
