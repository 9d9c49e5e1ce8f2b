use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arch::{ArchSpec, Model};
use crate::params::Parameters;
use crate::tensor::Tensor;
use crate::NnError;

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Architecture, training step and every named weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub spec: ArchSpec,
    pub step: u64,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(spec: ArchSpec, step: u64, params: &Parameters) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT,
            spec,
            step,
            tensors: params
                .iter()
                .map(|(name, t)| NamedTensor {
                    name: name.to_string(),
                    shape: t.shape.clone(),
                    data: t.data.clone(),
                })
                .collect(),
        }
    }

    pub fn parameters(&self) -> Result<Parameters, NnError> {
        let mut p = Parameters::new();
        for t in &self.tensors {
            if p.by_name(&t.name).is_some() {
                return Err(NnError::Checkpoint(format!("duplicate tensor {}", t.name)));
            }
            let tensor = Tensor::new(t.shape.clone(), t.data.clone()).map_err(|e| NnError::Checkpoint(e.to_string()))?;
            p.add(t.name.clone(), tensor);
        }
        Ok(p)
    }

    /// Structure plus weights, validated against each other.
    pub fn load_model(&self) -> Result<(Model, Parameters), NnError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(NnError::Checkpoint(format!("unsupported format {}", self.format)));
        }
        let p = self.parameters()?;
        let model = Model::for_params(self.spec, &p)?;
        Ok((model, p))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Checkpoint, NnError> {
        serde_json::from_str(s).map_err(|e| NnError::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        std::fs::write(path, self.to_json()).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Checkpoint, NnError> {
        let s = std::fs::read_to_string(path).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))?;
        Checkpoint::from_json(&s)
    }
}
