use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn forward(self, pre: &Tensor) -> Tensor {
        match self {
            Activation::Identity => pre.clone(),
            Activation::Relu => pre.map(|x| x.max(0.0)),
            Activation::Sigmoid => pre.map(sigmoid),
            Activation::Tanh => pre.map(f64::tanh),
        }
    }

    /// Gradient with respect to the pre-activation, given the forward output.
    pub fn backward(self, grad_out: &Tensor, out: &Tensor) -> Tensor {
        let mut g = grad_out.clone();
        let y = out.data();
        match self {
            Activation::Identity => {}
            Activation::Relu => g.data_mut().iter_mut().zip(y).for_each(|(g, &y)| {
                if y <= 0.0 {
                    *g = 0.0
                }
            }),
            Activation::Sigmoid => g.data_mut().iter_mut().zip(y).for_each(|(g, &y)| *g *= y * (1.0 - y)),
            Activation::Tanh => g.data_mut().iter_mut().zip(y).for_each(|(g, &y)| *g *= 1.0 - y * y),
        }
        g
    }
}
