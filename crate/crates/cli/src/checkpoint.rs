//! Checkpoint files.
//!
//! A checkpoint is one JSON document: a header (`format_version`, `task`,
//! `topology`), one record per layer with base64-encoded little-endian
//! `f64` tensors, an optional `bayesian` block, and the training metadata.
//! After Bayesianization every adapted layer also carries its singular
//! values `d`.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use tfb_core::adapter::{AdapterSet, PosteriorFamily};
use tfb_core::linalg::DenseMatrix;
use tfb_core::netcore::{Layer, LayerSpec, Network, Task};

use crate::data::DataSpec;
use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tensor {
    shape: Vec<usize>,
    data: String,
}

impl Tensor {
    fn encode(shape: Vec<usize>, values: &[f64]) -> Self {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self {
            shape,
            data: STANDARD.encode(bytes),
        }
    }

    fn matrix(m: &DenseMatrix) -> Self {
        Self::encode(vec![m.rows(), m.cols()], m.data())
    }

    fn vector(v: &[f64]) -> Self {
        Self::encode(vec![v.len()], v)
    }

    fn decode(&self) -> Result<Vec<f64>, String> {
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| format!("bad base64: {e}"))?;
        if bytes.len() % 8 != 0 {
            return Err(format!(
                "tensor byte length {} is not a multiple of 8",
                bytes.len()
            ));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let expected: usize = self.shape.iter().product();
        if values.len() != expected {
            return Err(format!(
                "shape {:?} needs {expected} values, found {}",
                self.shape,
                values.len()
            ));
        }
        Ok(values)
    }

    fn to_matrix(&self) -> Result<DenseMatrix, String> {
        let [rows, cols] = self.shape[..] else {
            return Err(format!("expected a matrix, got shape {:?}", self.shape));
        };
        DenseMatrix::new(rows, cols, self.decode()?).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerRecord {
    w0: Tensor,
    b: Option<Tensor>,
    a: Option<Tensor>,
    bias: Tensor,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    d: Option<Tensor>,
}

/// Posterior attached to a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesState {
    pub sigma_q: f64,
    pub family: PosteriorFamily,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub task: Task,
    pub train_seed: u64,
    pub steps: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub data: DataSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Document {
    format_version: u32,
    task: Task,
    topology: Vec<LayerSpec>,
    layers: Vec<LayerRecord>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    bayesian: Option<BayesState>,
    meta: Meta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: Network,
    pub meta: Meta,
    pub bayes: Option<BayesState>,
}

impl Checkpoint {
    /// Regrouped adapters at the stored scale, if the checkpoint is Bayesian.
    pub fn adapter_set(&self) -> tfb_core::Result<Option<AdapterSet>> {
        self.bayes
            .map(|b| AdapterSet::bayesianize(&self.net.adapters(), b.sigma_q))
            .transpose()
    }

    pub fn to_json(&self) -> CliResult<String> {
        let set = self.adapter_set()?;
        let layers = self
            .net
            .layers()
            .iter()
            .enumerate()
            .map(|(idx, layer)| LayerRecord {
                w0: Tensor::matrix(layer.w0()),
                b: layer.b().map(Tensor::matrix),
                a: layer.a().map(Tensor::matrix),
                bias: Tensor::vector(layer.bias()),
                d: set
                    .as_ref()
                    .and_then(|s| s.get(idx))
                    .map(|b| Tensor::vector(b.d())),
            })
            .collect();
        let doc = Document {
            format_version: FORMAT_VERSION,
            task: self.net.task(),
            topology: self.net.topology(),
            layers,
            bayesian: self.bayes,
            meta: self.meta.clone(),
        };
        let mut text =
            serde_json::to_string_pretty(&doc).map_err(|e| CliError::Config(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str, path: &Path) -> CliResult<Self> {
        let bad = |m: String| CliError::format(path, m);
        let doc: Document = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if doc.format_version != FORMAT_VERSION {
            return Err(bad(format!(
                "unsupported format_version {}",
                doc.format_version
            )));
        }
        if doc.topology.len() != doc.layers.len() {
            return Err(bad("topology and layer records differ in length".into()));
        }
        let mut layers = Vec::with_capacity(doc.layers.len());
        for (spec, rec) in doc.topology.iter().zip(&doc.layers) {
            let adapter = match (&rec.b, &rec.a) {
                (Some(b), Some(a)) => {
                    Some((b.to_matrix().map_err(bad)?, a.to_matrix().map_err(bad)?))
                }
                (None, None) => None,
                _ => return Err(bad("a layer has only one of b and a".into())),
            };
            let layer = Layer::new(
                *spec,
                rec.w0.to_matrix().map_err(bad)?,
                adapter,
                rec.bias.decode().map_err(bad)?,
            )?;
            layers.push(layer);
        }
        let net = Network::new(doc.task, layers)?;
        let ckpt = Checkpoint {
            net,
            meta: doc.meta,
            bayes: doc.bayesian,
        };
        if let Some(set) = ckpt.adapter_set()? {
            for (idx, rec) in doc.layers.iter().enumerate() {
                let stored = rec
                    .d
                    .as_ref()
                    .map(Tensor::decode)
                    .transpose()
                    .map_err(bad)?;
                let recomputed = set.get(idx).map(|b| b.d().to_vec());
                if stored != recomputed {
                    return Err(bad(format!(
                        "layer {idx}: stored singular values do not match the adapter"
                    )));
                }
            }
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text, path)
    }
}
