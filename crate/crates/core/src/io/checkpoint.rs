//! Versioned binary checkpoints.
//!
//! Layout: 8-byte magic, format version (u32 LE), header length (u32 LE),
//! a JSON header naming every tensor and its shape, then the tensor values
//! as little-endian f64 in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autoencoder::{build_autoencoder, AutoencoderModel, EmbeddingNormalizer, EncoderSpec};
use crate::error::{Error, Result};
use crate::nn::ParamSet;
use crate::sequence::{HeadKind, SequenceModel};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"EMBRCKPT";
pub const FORMAT_VERSION: u32 = 1;
const NORMALIZER_MEAN: &str = "normalizer.mean";
const NORMALIZER_STD: &str = "normalizer.std";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub epochs: usize,
    pub final_loss: Option<f64>,
    /// Mean training loss of every epoch.
    pub loss_history: Vec<f64>,
}

impl TrainingMetadata {
    pub fn new(seed: u64, epochs: usize, history: &[f64]) -> Self {
        Self {
            seed,
            epochs,
            final_loss: history.last().copied(),
            loss_history: history.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Autoencoder(AutoencoderModel),
    Grade(SequenceModel),
    Binary(SequenceModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Autoencoder(_) => "autoencoder",
            Model::Grade(_) => "grade",
            Model::Binary(_) => "binary",
        }
    }

    pub fn sequence(model: SequenceModel) -> Self {
        match model.head {
            HeadKind::Grade => Model::Grade(model),
            HeadKind::Binary => Model::Binary(model),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub metadata: TrainingMetadata,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Architecture {
    Autoencoder { spec: EncoderSpec, normalized: bool },
    Grade { embedding_dim: usize, hidden_dim: usize },
    Binary { embedding_dim: usize, hidden_dim: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    architecture: Architecture,
    metadata: TrainingMetadata,
    tensors: Vec<TensorEntry>,
}

/// The model's tensors, including normalizer statistics, keyed by name.
fn tensors_of(model: &Model) -> ParamSet {
    match model {
        Model::Autoencoder(m) => {
            let mut all = m.params.clone();
            if let Some(n) = &m.normalizer {
                all.insert(NORMALIZER_MEAN, n.mean.clone());
                all.insert(NORMALIZER_STD, n.std.clone());
            }
            all
        }
        Model::Grade(m) | Model::Binary(m) => m.params.clone(),
    }
}

fn architecture_of(model: &Model) -> Architecture {
    match model {
        Model::Autoencoder(m) => Architecture::Autoencoder {
            spec: m.spec.clone(),
            normalized: m.normalizer.is_some(),
        },
        Model::Grade(m) => Architecture::Grade {
            embedding_dim: m.embedding_dim,
            hidden_dim: m.hidden_dim,
        },
        Model::Binary(m) => Architecture::Binary {
            embedding_dim: m.embedding_dim,
            hidden_dim: m.hidden_dim,
        },
    }
}

pub fn encode_checkpoint(checkpoint: &Checkpoint) -> Result<Vec<u8>> {
    let tensors = tensors_of(&checkpoint.model);
    let header = Header {
        architecture: architecture_of(&checkpoint.model),
        metadata: checkpoint.metadata.clone(),
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::Serde(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + header.len() + 8 * tensors.num_scalars());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, t) in tensors.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::CheckpointHeader("file shorter than the fixed preamble".into()))
}

/// Fresh model with the right architecture, used as the shape template.
fn skeleton(architecture: &Architecture) -> Result<Model> {
    Ok(match *architecture {
        Architecture::Autoencoder { ref spec, normalized } => {
            let mut m = build_autoencoder(spec, 0)?;
            if normalized {
                let d = Tensor::zeros(&[spec.embedding_dim]);
                m.normalizer = Some(EmbeddingNormalizer {
                    mean: d.clone(),
                    std: d,
                });
            }
            Model::Autoencoder(m)
        }
        Architecture::Grade {
            embedding_dim,
            hidden_dim,
        } => Model::Grade(SequenceModel::new(embedding_dim, hidden_dim, HeadKind::Grade, 0)),
        Architecture::Binary {
            embedding_dim,
            hidden_dim,
        } => Model::Binary(SequenceModel::new(embedding_dim, hidden_dim, HeadKind::Binary, 0)),
    })
}

fn install(model: &mut Model, mut tensors: ParamSet) {
    match model {
        Model::Autoencoder(m) => {
            if let Some(n) = &mut m.normalizer {
                n.mean = tensors.remove(NORMALIZER_MEAN).expect("checked against skeleton");
                n.std = tensors.remove(NORMALIZER_STD).expect("checked against skeleton");
            }
            m.params = tensors;
        }
        Model::Grade(m) | Model::Binary(m) => m.params = tensors,
    }
}

/// Parse a checkpoint. Nothing is returned unless every tensor is present,
/// correctly shaped and fully read.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::CheckpointHeader("missing checkpoint magic".into()));
    }
    let version = read_u32(bytes, 8)?;
    if version != FORMAT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let header_len = read_u32(bytes, 12)? as usize;
    let header_bytes = bytes
        .get(16..16 + header_len)
        .ok_or_else(|| Error::CheckpointHeader(format!("header of {header_len} bytes runs past end of file")))?;
    let header: Header = serde_json::from_slice(header_bytes).map_err(|e| Error::CheckpointHeader(e.to_string()))?;

    let mut model = skeleton(&header.architecture).map_err(|e| Error::CheckpointHeader(e.to_string()))?;
    let template = tensors_of(&model);
    if header.tensors.len() != template.len() {
        return Err(Error::CheckpointHeader(format!(
            "{} tensors listed, model has {}",
            header.tensors.len(),
            template.len()
        )));
    }
    for entry in &header.tensors {
        let expected = template
            .get(&entry.name)
            .map_err(|_| Error::CheckpointHeader(format!("unexpected tensor `{}`", entry.name)))?;
        if expected.shape() != entry.shape.as_slice() {
            return Err(Error::CheckpointShape {
                name: entry.name.clone(),
                expected: expected.shape().to_vec(),
                found: entry.shape.clone(),
            });
        }
    }

    let payload = &bytes[16 + header_len..];
    let expected: usize = template.num_scalars() * 8;
    if payload.len() < expected {
        return Err(Error::CheckpointTruncated {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::CheckpointHeader(format!(
            "{} trailing bytes after the payload",
            payload.len() - expected
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut tensors = ParamSet::new();
    for entry in header.tensors {
        let n: usize = entry.shape.iter().product();
        let data: Vec<f64> = values.by_ref().take(n).collect();
        tensors.insert(entry.name, Tensor::new(entry.shape, data)?);
    }
    install(&mut model, tensors);
    Ok(Checkpoint {
        model,
        metadata: header.metadata,
    })
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(checkpoint)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
