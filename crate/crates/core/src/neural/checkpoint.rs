use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{Adam, Params};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Format tag written into every checkpoint file.
pub const CHECKPOINT_FORMAT: &str = "aoi-uav-checkpoint/1";

/// A self-describing network snapshot: parameters, shapes, optimizer moments and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "N: Serialize, T: Serialize", deserialize = "N: DeserializeOwned, T: DeserializeOwned"))]
pub struct Checkpoint<N, T> {
    pub format: String,
    pub kind: String,
    pub scalar: String,
    pub seed: u64,
    pub shapes: Vec<Vec<usize>>,
    pub network: N,
    pub optimizer: Option<Adam<T>>,
}

impl<T: Scalar, N: Params<T> + Serialize + DeserializeOwned> Checkpoint<N, T> {
    pub fn new(kind: &str, seed: u64, network: N, optimizer: Option<Adam<T>>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            kind: kind.to_string(),
            scalar: T::type_name().to_string(),
            seed,
            shapes: network.param_shapes(),
            network,
            optimizer,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str, kind: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(text)?;
        ck.validate(kind)?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Loads and validates a checkpoint; a missing file is a dependency error.
    pub fn load(path: &Path, kind: &str) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Dependency(format!("checkpoint {} not found", path.display())));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, kind)
    }

    fn validate(&self, kind: &str) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Serde(format!("unknown checkpoint format {:?}", self.format)));
        }
        if self.kind != kind {
            return Err(Error::Serde(format!("checkpoint holds a {:?} network, expected {kind:?}", self.kind)));
        }
        if self.scalar != T::type_name() {
            return Err(Error::Serde(format!("checkpoint scalar {} does not match {}", self.scalar, T::type_name())));
        }
        if self.shapes != self.network.param_shapes() {
            return Err(Error::Serde("checkpoint shape metadata disagrees with the stored parameters".into()));
        }
        if let Some(opt) = &self.optimizer {
            if !opt.shapes_match(&self.network) {
                return Err(Error::Serde("optimizer moments do not match parameter shapes".into()));
            }
        }
        if !self.network.all_finite() {
            return Err(Error::Numerical("checkpoint contains non-finite parameters".into()));
        }
        Ok(())
    }
}
