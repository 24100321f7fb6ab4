//! A sequential stack of layers with cached forward activations and an
//! explicit backward pass.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::conv::{conv2d, conv2d_backward, conv_transpose2d, conv_transpose2d_backward};
use super::dense::{dense, dense_backward};
use super::init::glorot_uniform;
use super::params::ParamSet;
use super::pool::{max_pool2d, max_pool2d_backward, upsample2d, upsample2d_backward};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum LayerKind {
    Conv {
        kernel: usize,
        stride: usize,
        padding: usize,
        activation: Activation,
    },
    /// Adjoint of a `Conv` whose input has this layer's output shape.
    ConvTranspose {
        kernel: usize,
        stride: usize,
        padding: usize,
        activation: Activation,
    },
    MaxPool {
        size: usize,
    },
    Upsample {
        factor: usize,
    },
    Flatten,
    Reshape,
    Dense {
        activation: Activation,
    },
}

/// A layer with resolved input and output shapes. Parametric layers read
/// `{name}.weight` and `{name}.bias` from a [`ParamSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
}

impl Layer {
    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    /// `(weight, bias)` shapes and `(fan_in, fan_out)` of parametric layers.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>, usize, usize)> {
        match self.kind {
            LayerKind::Conv { kernel: k, .. } => {
                let (ci, co) = (self.in_shape[0], self.out_shape[0]);
                Some((vec![co, ci, k, k], vec![co], ci * k * k, co * k * k))
            }
            LayerKind::ConvTranspose { kernel: k, .. } => {
                let (ci, co) = (self.in_shape[0], self.out_shape[0]);
                Some((vec![ci, co, k, k], vec![co], ci * k * k, co * k * k))
            }
            LayerKind::Dense { .. } => {
                let (i, o) = (self.in_shape[0], self.out_shape[0]);
                Some((vec![o, i], vec![o], i, o))
            }
            _ => None,
        }
    }

    fn activation(&self) -> Activation {
        match self.kind {
            LayerKind::Conv { activation, .. }
            | LayerKind::ConvTranspose { activation, .. }
            | LayerKind::Dense { activation } => activation,
            _ => Activation::Identity,
        }
    }
}

/// Cached forward state of one layer.
#[derive(Debug, Clone)]
pub struct LayerCache {
    input: Tensor,
    output: Tensor,
    argmax: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Stack {
    pub layers: Vec<Layer>,
}

fn add_channel_bias(y: &mut Tensor, bias: &Tensor) {
    let c = y.shape()[0];
    let plane = y.len() / c;
    let b = bias.data();
    for (i, v) in y.data_mut().iter_mut().enumerate() {
        *v += b[i / plane];
    }
}

fn channel_sums(g: &Tensor) -> Tensor {
    let c = g.shape()[0];
    let plane = g.len() / c;
    Tensor::from_fn(&[c], |ch| g.data()[ch * plane..(ch + 1) * plane].iter().sum())
}

impl Stack {
    pub fn input_shape(&self) -> Option<&[usize]> {
        self.layers.first().map(|l| l.in_shape.as_slice())
    }

    pub fn output_shape(&self) -> Option<&[usize]> {
        self.layers.last().map(|l| l.out_shape.as_slice())
    }

    /// Glorot-uniform weights and zero biases for every parametric layer.
    pub fn init_params(&self, rng: &mut impl Rng) -> ParamSet {
        let mut p = ParamSet::new();
        for layer in &self.layers {
            if let Some((w, b, fan_in, fan_out)) = layer.param_shapes() {
                p.insert(layer.weight_name(), glorot_uniform(&w, fan_in, fan_out, rng));
                p.insert(layer.bias_name(), Tensor::zeros(&b));
            }
        }
        p
    }

    fn layer_forward(layer: &Layer, params: &ParamSet, x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
        let mut argmax = Vec::new();
        let pre = match &layer.kind {
            LayerKind::Conv { stride, padding, .. } => {
                let mut y = conv2d(x, params.get(&layer.weight_name())?, *stride, *padding)?;
                add_channel_bias(&mut y, params.get(&layer.bias_name())?);
                y
            }
            LayerKind::ConvTranspose { stride, padding, .. } => {
                let hw = (layer.out_shape[1], layer.out_shape[2]);
                let mut y = conv_transpose2d(x, params.get(&layer.weight_name())?, *stride, *padding, hw)?;
                add_channel_bias(&mut y, params.get(&layer.bias_name())?);
                y
            }
            LayerKind::MaxPool { size } => {
                let (y, arg) = max_pool2d(x, *size)?;
                argmax = arg;
                y
            }
            LayerKind::Upsample { factor } => upsample2d(x, *factor)?,
            LayerKind::Flatten | LayerKind::Reshape => x.reshape(&layer.out_shape)?,
            LayerKind::Dense { .. } => dense(x, params.get(&layer.weight_name())?, params.get(&layer.bias_name())?)?,
        };
        Ok((layer.activation().forward(&pre), argmax))
    }

    pub fn forward(&self, params: &ParamSet, input: &Tensor) -> Result<Tensor> {
        let mut x = input.clone();
        for layer in &self.layers {
            check_input(layer, &x)?;
            x = Self::layer_forward(layer, params, &x)?.0;
        }
        Ok(x)
    }

    pub fn forward_cached(&self, params: &ParamSet, input: &Tensor) -> Result<(Tensor, Vec<LayerCache>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            check_input(layer, &x)?;
            let (y, argmax) = Self::layer_forward(layer, params, &x)?;
            caches.push(LayerCache {
                input: x,
                output: y.clone(),
                argmax,
            });
            x = y;
        }
        Ok((x, caches))
    }

    /// Backpropagate `grad_out` through the stack, adding parameter gradients
    /// into `grads`. Returns the gradient with respect to the stack input.
    pub fn backward(
        &self,
        params: &ParamSet,
        caches: &[LayerCache],
        grad_out: &Tensor,
        grads: &mut ParamSet,
    ) -> Result<Tensor> {
        let mut g = grad_out.clone();
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            let g_pre = layer.activation().backward(&g, &cache.output);
            g = match &layer.kind {
                LayerKind::Conv { stride, padding, .. } => {
                    let w = params.get(&layer.weight_name())?;
                    let (gx, gw) = conv2d_backward(&g_pre, &cache.input, w, *stride, *padding)?;
                    add_grad(grads, layer.weight_name(), &gw);
                    add_grad(grads, layer.bias_name(), &channel_sums(&g_pre));
                    gx
                }
                LayerKind::ConvTranspose { stride, padding, .. } => {
                    let w = params.get(&layer.weight_name())?;
                    let (gx, gw) = conv_transpose2d_backward(&g_pre, &cache.input, w, *stride, *padding)?;
                    add_grad(grads, layer.weight_name(), &gw);
                    add_grad(grads, layer.bias_name(), &channel_sums(&g_pre));
                    gx
                }
                LayerKind::MaxPool { .. } => max_pool2d_backward(&g_pre, &cache.argmax, &layer.in_shape)?,
                LayerKind::Upsample { factor } => upsample2d_backward(&g_pre, *factor)?,
                LayerKind::Flatten | LayerKind::Reshape => g_pre.reshape(&layer.in_shape)?,
                LayerKind::Dense { .. } => {
                    let w = params.get(&layer.weight_name())?;
                    let (gx, gw, gb) = dense_backward(&g_pre, &cache.input, w)?;
                    add_grad(grads, layer.weight_name(), &gw);
                    add_grad(grads, layer.bias_name(), &gb);
                    gx
                }
            };
        }
        Ok(g)
    }
}

fn check_input(layer: &Layer, x: &Tensor) -> Result<()> {
    if x.shape() != layer.in_shape.as_slice() {
        return Err(Error::ShapeMismatch {
            op: "layer input",
            left: x.shape().to_vec(),
            right: layer.in_shape.clone(),
        });
    }
    Ok(())
}

fn add_grad(grads: &mut ParamSet, name: String, g: &Tensor) {
    match grads.get_mut(&name) {
        Ok(t) => t.axpy(1.0, g),
        Err(_) => grads.insert(name, g.clone()),
    }
}
