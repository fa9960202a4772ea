//! JSON tensor dumps.
//!
//! ```json
//! {"tensors": [{"name": "actor0.0.w", "shape": [60, 256], "data": [...]}]}
//! ```
//!
//! `data` is row-major. Loading matches tensors by name and shape.

use std::collections::HashMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{NeuralError, Param};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_params<'a>(params: impl IntoIterator<Item = &'a Param>) -> Self {
        Checkpoint {
            tensors: params
                .into_iter()
                .map(|p| NamedTensor {
                    name: p.name.clone(),
                    shape: [p.value.nrows(), p.value.ncols()],
                    data: p.value.iter().copied().collect(),
                })
                .collect(),
        }
    }

    pub fn extend<'a>(&mut self, params: impl IntoIterator<Item = &'a Param>) {
        self.tensors.extend(Self::from_params(params).tensors);
    }

    /// Overwrites every parameter with the tensor of the same name.
    pub fn load_into(&self, params: &mut [&mut Param]) -> Result<(), NeuralError> {
        let by_name: HashMap<&str, &NamedTensor> =
            self.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        for p in params.iter_mut() {
            let t = by_name
                .get(p.name.as_str())
                .ok_or_else(|| NeuralError::Checkpoint(format!("missing tensor {}", p.name)))?;
            let shape = (t.shape[0], t.shape[1]);
            if shape != p.value.dim() {
                return Err(NeuralError::Checkpoint(format!(
                    "{}: stored {:?}, expected {:?}",
                    p.name,
                    shape,
                    p.value.dim()
                )));
            }
            p.value = Array2::from_shape_vec(shape, t.data.clone())
                .map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NeuralError> {
        serde_json::from_str(text).map_err(|e| NeuralError::Checkpoint(e.to_string()))
    }
}
