//! JSON model checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;

use super::{Model, ModelConfig, NeuralError, Normalizer, OutputScale};

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NormRecord {
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: u32,
    seed: u64,
    config: ModelConfig,
    normalizer: Normalizer,
    output: OutputScale,
    params: Vec<ParamRecord>,
    batch_norm: Vec<NormRecord>,
}

impl Model {
    pub fn to_json(&self) -> Result<String, NeuralError> {
        let file = CheckpointFile {
            format: FORMAT_VERSION,
            seed: self.config.seed,
            config: self.config.clone(),
            normalizer: self.normalizer.clone(),
            output: self.output.clone(),
            params: self
                .params
                .iter()
                .map(|(name, t)| ParamRecord { name: name.to_string(), shape: t.shape().to_vec(), data: t.data().to_vec() })
                .collect(),
            batch_norm: self
                .norms
                .iter()
                .map(|n| NormRecord { running_mean: n.running_mean.clone(), running_var: n.running_var.clone() })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Rebuilds the layer structure from the stored config, then overwrites
    /// every parameter and running statistic.
    pub fn from_json(text: &str) -> Result<Self, NeuralError> {
        let file: CheckpointFile = serde_json::from_str(text)?;
        if file.format != FORMAT_VERSION {
            return Err(NeuralError::Checkpoint(format!("unsupported format version {}", file.format)));
        }
        let mut model = Model::init(file.config, file.seed)?;
        if file.params.len() != model.params.len() {
            return Err(NeuralError::Checkpoint(format!(
                "expected {} parameter arrays, found {}",
                model.params.len(),
                file.params.len()
            )));
        }
        for rec in file.params {
            let id = model
                .params
                .find(&rec.name)
                .ok_or_else(|| NeuralError::Checkpoint(format!("unknown parameter `{}`", rec.name)))?;
            if model.params.get(id).shape() != rec.shape.as_slice() {
                return Err(NeuralError::Checkpoint(format!("shape mismatch for `{}`", rec.name)));
            }
            *model.params.get_mut(id) = Tensor::new(rec.shape, rec.data)?;
        }
        if file.batch_norm.len() != model.norms.len() {
            return Err(NeuralError::Checkpoint("batch norm layer count mismatch".into()));
        }
        for (state, rec) in model.norms.iter_mut().zip(file.batch_norm) {
            if rec.running_mean.len() != state.channels() || rec.running_var.len() != state.channels() {
                return Err(NeuralError::Checkpoint("batch norm channel mismatch".into()));
            }
            state.running_mean = rec.running_mean;
            state.running_var = rec.running_var;
        }
        model.normalizer = file.normalizer;
        model.output = file.output;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NeuralError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NeuralError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
