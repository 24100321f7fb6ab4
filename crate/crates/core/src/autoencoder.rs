//! Frame-level convolutional autoencoder. The encoder half turns each video
//! frame into a fixed-length embedding for the sequence model.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{l2_loss, Activation, Adam, AdamConfig, Layer, LayerKind, ParamSet, Stack};
use crate::record::Frame;
use crate::tensor::Tensor;

/// One encoder layer. Convolutions and hidden dense layers carry a ReLU; the
/// final dense layer (the embedding) is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    MaxPool {
        size: usize,
    },
    Flatten,
    Dense {
        units: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub frame_size: usize,
    pub embedding_dim: usize,
    pub layer_count: usize,
    pub layers: Vec<LayerSpec>,
}

impl EncoderSpec {
    /// 32×32 frames, three stride-2 convolutions and a 32-d embedding.
    pub fn desk() -> Self {
        Self::desk_sized(32)
    }

    /// The desk layout applied to `frame_size × frame_size` frames.
    pub fn desk_sized(frame_size: usize) -> Self {
        let conv = |channels| LayerSpec::Conv {
            channels,
            kernel: 3,
            stride: 2,
            padding: 1,
        };
        let layers = vec![
            conv(8),
            conv(16),
            conv(32),
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 32 },
        ];
        Self {
            frame_size,
            embedding_dim: 32,
            layer_count: layers.len(),
            layers,
        }
    }

    /// Ten-layer encoder producing a 968-d embedding from 256×256 frames.
    pub fn full_scale() -> Self {
        let conv = |channels, stride| LayerSpec::Conv {
            channels,
            kernel: 3,
            stride,
            padding: 1,
        };
        let layers = vec![
            conv(16, 2),
            conv(16, 1),
            LayerSpec::MaxPool { size: 2 },
            conv(32, 2),
            conv(32, 1),
            LayerSpec::MaxPool { size: 2 },
            conv(64, 2),
            conv(64, 1),
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 968 },
        ];
        Self {
            frame_size: 256,
            embedding_dim: 968,
            layer_count: layers.len(),
            layers,
        }
    }

    /// Resolve the encoder into concrete layers, checking every shape.
    fn encoder_stack(&self) -> Result<Stack> {
        let invalid = |layer, reason: String| Error::InvalidSpec { layer, reason };
        if self.layers.is_empty() || self.layer_count != self.layers.len() {
            return Err(invalid(
                0,
                format!(
                    "layer_count {} does not match {} layer descriptors",
                    self.layer_count,
                    self.layers.len()
                ),
            ));
        }
        if self.frame_size == 0 || self.embedding_dim == 0 {
            return Err(invalid(0, "frame_size and embedding_dim must be positive".into()));
        }
        let last = self.layers.len() - 1;
        let mut shape = vec![1, self.frame_size, self.frame_size];
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, spec) in self.layers.iter().enumerate() {
            let (kind, out) = match *spec {
                LayerSpec::Conv {
                    channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    let [_, h, w] = shape[..] else {
                        return Err(invalid(i, format!("conv needs a [C, H, W] input, got {shape:?}")));
                    };
                    if channels == 0 || stride == 0 {
                        return Err(invalid(i, "channels and stride must be positive".into()));
                    }
                    let dim = |n| crate::nn::conv_output_dim(n, kernel, stride, padding);
                    let (Some(oh), Some(ow)) = (dim(h), dim(w)) else {
                        return Err(invalid(i, format!("kernel {kernel} does not fit input {h}x{w}")));
                    };
                    (
                        LayerKind::Conv {
                            kernel,
                            stride,
                            padding,
                            activation: Activation::Relu,
                        },
                        vec![channels, oh, ow],
                    )
                }
                LayerSpec::MaxPool { size } => {
                    let [c, h, w] = shape[..] else {
                        return Err(invalid(i, format!("pool needs a [C, H, W] input, got {shape:?}")));
                    };
                    if size == 0 || h % size != 0 || w % size != 0 {
                        return Err(invalid(i, format!("pool size {size} does not divide {h}x{w}")));
                    }
                    (LayerKind::MaxPool { size }, vec![c, h / size, w / size])
                }
                LayerSpec::Flatten => (LayerKind::Flatten, vec![shape.iter().product()]),
                LayerSpec::Dense { units } => {
                    if shape.len() != 1 {
                        return Err(invalid(i, format!("dense needs a flat input, got {shape:?}")));
                    }
                    if units == 0 {
                        return Err(invalid(i, "dense units must be positive".into()));
                    }
                    let activation = if i == last {
                        Activation::Identity
                    } else {
                        Activation::Relu
                    };
                    (LayerKind::Dense { activation }, vec![units])
                }
            };
            layers.push(Layer {
                name: format!("encoder.{i}"),
                kind,
                in_shape: shape,
                out_shape: out.clone(),
            });
            shape = out;
        }
        if shape != [self.embedding_dim] {
            return Err(invalid(
                last,
                format!(
                    "final output {shape:?} does not match embedding_dim {}",
                    self.embedding_dim
                ),
            ));
        }
        Ok(Stack { layers })
    }
}

/// Mirror an encoder: each layer is replaced by its shape-inverse, in
/// reverse order. The last parametric layer squashes to [0, 1].
fn mirror(encoder: &Stack) -> Stack {
    let mut layers: Vec<Layer> = encoder
        .layers
        .iter()
        .rev()
        .enumerate()
        .map(|(i, enc)| {
            let kind = match enc.kind {
                LayerKind::Conv {
                    kernel,
                    stride,
                    padding,
                    ..
                } => LayerKind::ConvTranspose {
                    kernel,
                    stride,
                    padding,
                    activation: Activation::Relu,
                },
                LayerKind::MaxPool { size } => LayerKind::Upsample { factor: size },
                LayerKind::Flatten => LayerKind::Reshape,
                LayerKind::Dense { .. } => LayerKind::Dense {
                    activation: Activation::Relu,
                },
                ref other => unreachable!("encoder never contains {other:?}"),
            };
            Layer {
                name: format!("decoder.{i}"),
                kind,
                in_shape: enc.out_shape.clone(),
                out_shape: enc.in_shape.clone(),
            }
        })
        .collect();
    if let Some(last) = layers.iter_mut().rev().find(|l| l.param_shapes().is_some()) {
        match &mut last.kind {
            LayerKind::ConvTranspose { activation, .. } | LayerKind::Dense { activation } => {
                *activation = Activation::Sigmoid
            }
            _ => {}
        }
    }
    Stack { layers }
}

/// Per-dimension standardization of raw embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingNormalizer {
    pub mean: Tensor,
    pub std: Tensor,
}

impl EmbeddingNormalizer {
    pub fn fit(embeddings: &[Tensor]) -> Result<Self> {
        let first = embeddings.first().ok_or(Error::EmptyInput("embeddings"))?;
        let n = embeddings.len() as f64;
        let mut mean = Tensor::zeros(first.shape());
        for e in embeddings {
            mean.axpy(1.0 / n, e);
        }
        let mut var = Tensor::zeros(first.shape());
        for e in embeddings {
            for ((v, x), m) in var.data_mut().iter_mut().zip(e.data()).zip(mean.data()) {
                *v += (x - m) * (x - m) / n;
            }
        }
        Ok(Self {
            mean,
            std: var.map(|v| v.sqrt().max(1e-6)),
        })
    }

    pub fn apply(&self, raw: &Tensor) -> Tensor {
        Tensor::from_fn(raw.shape(), |i| {
            (raw.data()[i] - self.mean.data()[i]) / self.std.data()[i]
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameEmbedding {
    pub vector: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub spec: EncoderSpec,
    pub encoder: Stack,
    pub decoder: Stack,
    pub params: ParamSet,
    pub normalizer: Option<EmbeddingNormalizer>,
}

pub fn build_autoencoder(spec: &EncoderSpec, seed: u64) -> Result<AutoencoderModel> {
    let encoder = spec.encoder_stack()?;
    let decoder = mirror(&encoder);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = encoder.init_params(&mut rng);
    params.merge(decoder.init_params(&mut rng));
    Ok(AutoencoderModel {
        spec: spec.clone(),
        encoder,
        decoder,
        params,
        normalizer: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderTraining {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for AutoencoderTraining {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            adam: AdamConfig::default(),
        }
    }
}

impl AutoencoderModel {
    fn check_frame(&self, frame: &Frame) -> Result<()> {
        let expected = [1, self.spec.frame_size, self.spec.frame_size];
        if frame.tensor().shape() != expected {
            return Err(Error::ShapeMismatch {
                op: "autoencoder frame",
                left: frame.tensor().shape().to_vec(),
                right: expected.to_vec(),
            });
        }
        Ok(())
    }

    /// Raw encoder output, before any normalization.
    pub fn encode_raw(&self, frame: &Frame) -> Result<Tensor> {
        self.check_frame(frame)?;
        self.encoder.forward(&self.params, frame.tensor())
    }

    pub fn reconstruct(&self, frame: &Frame) -> Result<Tensor> {
        let z = self.encode_raw(frame)?;
        self.decoder.forward(&self.params, &z)
    }

    pub fn reconstruction_loss(&self, frame: &Frame) -> Result<f64> {
        Ok(l2_loss(&self.reconstruct(frame)?, frame.tensor())?.value)
    }

    /// Reconstruction loss and its parameter gradients for one frame.
    fn loss_and_grads(&self, frame: &Frame) -> Result<(f64, ParamSet)> {
        self.check_frame(frame)?;
        let (z, enc_cache) = self.encoder.forward_cached(&self.params, frame.tensor())?;
        let (recon, dec_cache) = self.decoder.forward_cached(&self.params, &z)?;
        let loss = l2_loss(&recon, frame.tensor())?;
        let mut grads = ParamSet::new();
        let gz = self
            .decoder
            .backward(&self.params, &dec_cache, &loss.gradient, &mut grads)?;
        self.encoder.backward(&self.params, &enc_cache, &gz, &mut grads)?;
        Ok((loss.value, grads))
    }

    /// Fit the embedding normalizer used by [`encode_frame`].
    pub fn fit_normalizer(&mut self, frames: &[Frame]) -> Result<()> {
        let raw = frames
            .par_iter()
            .map(|f| self.encode_raw(f))
            .collect::<Result<Vec<_>>>()?;
        self.normalizer = Some(EmbeddingNormalizer::fit(&raw)?);
        Ok(())
    }
}

/// Embed one frame (normalized when the model carries a normalizer).
pub fn encode_frame(model: &AutoencoderModel, frame: &Frame) -> Result<FrameEmbedding> {
    let raw = model.encode_raw(frame)?;
    let vector = match &model.normalizer {
        Some(n) => n.apply(&raw),
        None => raw,
    };
    Ok(FrameEmbedding { vector })
}

pub fn embed_video(model: &AutoencoderModel, frames: &[Frame]) -> Result<Vec<FrameEmbedding>> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("video frames"));
    }
    frames.iter().map(|f| encode_frame(model, f)).collect()
}

/// Minibatch Adam on the mean-squared reconstruction error. Returns the
/// final-epoch model and the mean training loss of every epoch.
pub fn train_autoencoder(
    mut model: AutoencoderModel,
    frames: &[Frame],
    training: &AutoencoderTraining,
    seed: u64,
) -> Result<(AutoencoderModel, Vec<f64>)> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("autoencoder training frames"));
    }
    for f in frames {
        model.check_frame(f)?;
    }
    let batch_size = training.batch_size.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = Adam::new(training.adam, &model.params);
    let mut order: Vec<usize> = (0..frames.len()).collect();
    let mut history = Vec::with_capacity(training.epochs);
    for _ in 0..training.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| model.loss_and_grads(&frames[i]))
                .collect::<Result<Vec<_>>>()?;
            let mut grads = model.params.zeros_like();
            for (loss, g) in &results {
                epoch_loss += loss;
                grads.accumulate(g);
            }
            grads.scale(1.0 / batch.len() as f64);
            adam.step(&mut model.params, &grads)?;
        }
        history.push(epoch_loss / frames.len() as f64);
    }
    Ok((model, history))
}
