//! Single LSTM cell with an explicit backward pass.
//!
//! Each gate has its own `[U, D + U]` weight matrix acting on the
//! concatenation `[x; h]` and a `[U]` bias:
//!
//! ```text
//! i = σ(W_i z + b_i)   f = σ(W_f z + b_f)   o = σ(W_o z + b_o)   g = tanh(W_g z + b_g)
//! c' = f ⊙ c + i ⊙ g
//! h' = o ⊙ tanh(c')
//! ```

use rand::Rng;

use super::activation::sigmoid;
use super::init::glorot_uniform;
use super::params::ParamSet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const GATES: [&str; 4] = ["input", "forget", "output", "cell"];

/// Borrowed view of one LSTM's parameters inside a [`ParamSet`].
#[derive(Debug, Clone, Copy)]
pub struct LstmParams<'a> {
    pub input_dim: usize,
    pub hidden_dim: usize,
    weights: [&'a Tensor; 4],
    biases: [&'a Tensor; 4],
}

pub fn weight_name(prefix: &str, gate: &str) -> String {
    format!("{prefix}.w_{gate}")
}

pub fn bias_name(prefix: &str, gate: &str) -> String {
    format!("{prefix}.b_{gate}")
}

/// Fresh LSTM parameters: Glorot-uniform weights, zero biases except the
/// forget gate, which starts at 1.
pub fn init_lstm(prefix: &str, input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> ParamSet {
    let mut p = ParamSet::new();
    for gate in GATES {
        p.insert(
            weight_name(prefix, gate),
            glorot_uniform(
                &[hidden_dim, input_dim + hidden_dim],
                input_dim + hidden_dim,
                hidden_dim,
                rng,
            ),
        );
        let b = if gate == "forget" { 1.0 } else { 0.0 };
        p.insert(bias_name(prefix, gate), Tensor::full(&[hidden_dim], b));
    }
    p
}

impl<'a> LstmParams<'a> {
    pub fn from_set(set: &'a ParamSet, prefix: &str) -> Result<Self> {
        let w0 = set.get(&weight_name(prefix, GATES[0]))?;
        let (hidden_dim, total) = match w0.shape() {
            [u, t] if t > u => (*u, *t),
            s => {
                return Err(Error::ShapeMismatch {
                    op: "lstm params",
                    left: s.to_vec(),
                    right: vec![],
                })
            }
        };
        let mut weights = [w0; 4];
        let mut biases = [w0; 4];
        for (k, gate) in GATES.iter().enumerate() {
            let w = set.get(&weight_name(prefix, gate))?;
            let b = set.get(&bias_name(prefix, gate))?;
            if w.shape() != [hidden_dim, total] || b.shape() != [hidden_dim] {
                return Err(Error::ShapeMismatch {
                    op: "lstm params",
                    left: w.shape().to_vec(),
                    right: b.shape().to_vec(),
                });
            }
            weights[k] = w;
            biases[k] = b;
        }
        Ok(Self {
            input_dim: total - hidden_dim,
            hidden_dim,
            weights,
            biases,
        })
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct LstmCache {
    z: Vec<f64>,
    c_prev: Vec<f64>,
    /// Post-nonlinearity gate values in `GATES` order.
    gates: [Vec<f64>; 4],
    tanh_c: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmStepGrads {
    pub input: Tensor,
    pub h_prev: Tensor,
    pub c_prev: Tensor,
}

/// One forward step; returns `(h', c')`.
pub fn lstm_step(x: &Tensor, h: &Tensor, c: &Tensor, params: &LstmParams) -> Result<(Tensor, Tensor)> {
    let (h, c, _) = lstm_step_cached(x, h, c, params)?;
    Ok((h, c))
}

pub fn lstm_step_cached(
    x: &Tensor,
    h: &Tensor,
    c: &Tensor,
    params: &LstmParams,
) -> Result<(Tensor, Tensor, LstmCache)> {
    let (d, u) = (params.input_dim, params.hidden_dim);
    if x.len() != d || h.len() != u || c.len() != u {
        return Err(Error::ShapeMismatch {
            op: "lstm_step",
            left: vec![x.len(), h.len(), c.len()],
            right: vec![d, u, u],
        });
    }
    let mut z = Vec::with_capacity(d + u);
    z.extend_from_slice(x.data());
    z.extend_from_slice(h.data());

    let gates: [Vec<f64>; 4] = std::array::from_fn(|k| {
        let w = params.weights[k].data();
        let b = params.biases[k].data();
        (0..u)
            .map(|r| {
                let row = &w[r * (d + u)..(r + 1) * (d + u)];
                let a = b[r] + row.iter().zip(&z).map(|(p, q)| p * q).sum::<f64>();
                if k == 3 {
                    a.tanh()
                } else {
                    sigmoid(a)
                }
            })
            .collect()
    });
    let [i, f, o, g] = &gates;
    let c_prev = c.data().to_vec();
    let c_next: Vec<f64> = (0..u).map(|r| f[r] * c_prev[r] + i[r] * g[r]).collect();
    let tanh_c: Vec<f64> = c_next.iter().map(|v| v.tanh()).collect();
    let h_next: Vec<f64> = (0..u).map(|r| o[r] * tanh_c[r]).collect();
    let cache = LstmCache {
        z,
        c_prev,
        gates,
        tanh_c,
    };
    Ok((Tensor::new(vec![u], h_next)?, Tensor::new(vec![u], c_next)?, cache))
}

/// Backward through one step. Parameter gradients are added into `grads`
/// under the same names as the parameters (`prefix.w_*`, `prefix.b_*`).
pub fn lstm_step_backward(
    grad_h: &Tensor,
    grad_c: &Tensor,
    cache: &LstmCache,
    params: &LstmParams,
    prefix: &str,
    grads: &mut ParamSet,
) -> Result<LstmStepGrads> {
    let (d, u) = (params.input_dim, params.hidden_dim);
    if grad_h.len() != u || grad_c.len() != u {
        return Err(Error::ShapeMismatch {
            op: "lstm_step_backward",
            left: vec![grad_h.len(), grad_c.len()],
            right: vec![u, u],
        });
    }
    let [i, f, o, g] = &cache.gates;
    let dh = grad_h.data();
    let mut dc = vec![0.0; u];
    let mut pre = [vec![0.0; u], vec![0.0; u], vec![0.0; u], vec![0.0; u]];
    let mut dc_prev = vec![0.0; u];
    for r in 0..u {
        let t = cache.tanh_c[r];
        dc[r] = grad_c.data()[r] + dh[r] * o[r] * (1.0 - t * t);
        let d_o = dh[r] * t;
        let d_i = dc[r] * g[r];
        let d_f = dc[r] * cache.c_prev[r];
        let d_g = dc[r] * i[r];
        dc_prev[r] = dc[r] * f[r];
        pre[0][r] = d_i * i[r] * (1.0 - i[r]);
        pre[1][r] = d_f * f[r] * (1.0 - f[r]);
        pre[2][r] = d_o * o[r] * (1.0 - o[r]);
        pre[3][r] = d_g * (1.0 - g[r] * g[r]);
    }

    let mut dz = vec![0.0; d + u];
    for (k, gate) in GATES.iter().enumerate() {
        let w = params.weights[k].data();
        let wname = weight_name(prefix, gate);
        let bname = bias_name(prefix, gate);
        if !grads.contains(&wname) {
            grads.insert(wname.clone(), Tensor::zeros(&[u, d + u]));
        }
        if !grads.contains(&bname) {
            grads.insert(bname.clone(), Tensor::zeros(&[u]));
        }
        {
            let gw = grads.get_mut(&wname)?.data_mut();
            for r in 0..u {
                let p = pre[k][r];
                if p == 0.0 {
                    continue;
                }
                let row = &w[r * (d + u)..(r + 1) * (d + u)];
                let grow = &mut gw[r * (d + u)..(r + 1) * (d + u)];
                for j in 0..d + u {
                    grow[j] += p * cache.z[j];
                    dz[j] += p * row[j];
                }
            }
        }
        let gb = grads.get_mut(&bname)?.data_mut();
        for r in 0..u {
            gb[r] += pre[k][r];
        }
    }
    let h_prev = dz.split_off(d);
    Ok(LstmStepGrads {
        input: Tensor::new(vec![d], dz)?,
        h_prev: Tensor::new(vec![u], h_prev)?,
        c_prev: Tensor::new(vec![u], dc_prev)?,
    })
}
