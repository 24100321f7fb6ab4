//! Non-overlapping 2-D pooling and its nearest-neighbour mirror.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn pooled_dims(op: &'static str, input: &Tensor, size: usize) -> Result<(usize, usize, usize)> {
    match input.shape() {
        [c, h, w] if size > 0 && h % size == 0 && w % size == 0 => Ok((*c, h / size, w / size)),
        s => Err(Error::ShapeMismatch {
            op,
            left: s.to_vec(),
            right: vec![size, size],
        }),
    }
}

/// Max pooling with a `size × size` window and equal stride. Returns the
/// pooled tensor and the flat input index of each maximum.
pub fn max_pool2d(input: &Tensor, size: usize) -> Result<(Tensor, Vec<usize>)> {
    let (c, oh, ow) = pooled_dims("max_pool2d", input, size)?;
    let (h, w) = (oh * size, ow * size);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oi in 0..oh {
            for oj in 0..ow {
                let mut best = usize::MAX;
                for di in 0..size {
                    for dj in 0..size {
                        let idx = ch * h * w + (oi * size + di) * w + oj * size + dj;
                        if best == usize::MAX || x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::new(vec![c, oh, ow], out)?, argmax))
}

pub fn max_pool2d_backward(grad_out: &Tensor, argmax: &[usize], input_shape: &[usize]) -> Result<Tensor> {
    if grad_out.len() != argmax.len() {
        return Err(Error::ShapeMismatch {
            op: "max_pool2d_backward",
            left: grad_out.shape().to_vec(),
            right: vec![argmax.len()],
        });
    }
    let mut gx = Tensor::zeros(input_shape);
    let d = gx.data_mut();
    for (&g, &idx) in grad_out.data().iter().zip(argmax) {
        d[idx] += g;
    }
    Ok(gx)
}

pub fn avg_pool2d(input: &Tensor, size: usize) -> Result<Tensor> {
    let (c, oh, ow) = pooled_dims("avg_pool2d", input, size)?;
    let (h, w) = (oh * size, ow * size);
    let x = input.data();
    let norm = 1.0 / (size * size) as f64;
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for i in 0..h {
            for j in 0..w {
                out[ch * oh * ow + (i / size) * ow + j / size] += x[ch * h * w + i * w + j] * norm;
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

pub fn avg_pool2d_backward(grad_out: &Tensor, size: usize, input_shape: &[usize]) -> Result<Tensor> {
    let (c, h, w) = match input_shape {
        [c, h, w] if size > 0 && h % size == 0 && w % size == 0 => (*c, *h, *w),
        s => {
            return Err(Error::ShapeMismatch {
                op: "avg_pool2d_backward",
                left: s.to_vec(),
                right: vec![size, size],
            })
        }
    };
    let (oh, ow) = (h / size, w / size);
    if grad_out.shape() != [c, oh, ow] {
        return Err(Error::ShapeMismatch {
            op: "avg_pool2d_backward",
            left: grad_out.shape().to_vec(),
            right: vec![c, oh, ow],
        });
    }
    let norm = 1.0 / (size * size) as f64;
    let go = grad_out.data();
    Ok(Tensor::from_fn(input_shape, |idx| {
        let ch = idx / (h * w);
        let (i, j) = ((idx % (h * w)) / w, idx % w);
        go[ch * oh * ow + (i / size) * ow + j / size] * norm
    }))
}

/// Nearest-neighbour upsampling by an integer factor.
pub fn upsample2d(input: &Tensor, factor: usize) -> Result<Tensor> {
    let (c, h, w) = match input.shape() {
        [c, h, w] if factor > 0 => (*c, *h, *w),
        s => {
            return Err(Error::ShapeMismatch {
                op: "upsample2d",
                left: s.to_vec(),
                right: vec![factor],
            })
        }
    };
    let (oh, ow) = (h * factor, w * factor);
    let x = input.data();
    Ok(Tensor::from_fn(&[c, oh, ow], |idx| {
        let ch = idx / (oh * ow);
        let (i, j) = ((idx % (oh * ow)) / ow, idx % ow);
        x[ch * h * w + (i / factor) * w + j / factor]
    }))
}

pub fn upsample2d_backward(grad_out: &Tensor, factor: usize) -> Result<Tensor> {
    // Summing each block is exactly avg-pool scaled by the block area.
    let mut g = avg_pool2d(grad_out, factor)?;
    g.scale((factor * factor) as f64);
    Ok(g)
}
