use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `y = W x + b` with `W: [out, in]`, `x: [in]`, `b: [out]`.
pub fn dense(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    check("dense", input, weight, bias)?;
    let (n_out, n_in) = (weight.shape()[0], weight.shape()[1]);
    let w = weight.data();
    let x = input.data();
    let out = (0..n_out)
        .map(|o| {
            let row = &w[o * n_in..(o + 1) * n_in];
            bias.data()[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect();
    Tensor::new(vec![n_out], out)
}

/// Returns `(grad_input, grad_weight, grad_bias)`.
pub fn dense_backward(grad_out: &Tensor, input: &Tensor, weight: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (n_out, n_in) = match weight.shape() {
        [o, i] => (*o, *i),
        s => {
            return Err(Error::ShapeMismatch {
                op: "dense_backward",
                left: s.to_vec(),
                right: input.shape().to_vec(),
            })
        }
    };
    if input.len() != n_in || grad_out.len() != n_out {
        return Err(Error::ShapeMismatch {
            op: "dense_backward",
            left: grad_out.shape().to_vec(),
            right: weight.shape().to_vec(),
        });
    }
    let w = weight.data();
    let x = input.data();
    let go = grad_out.data();
    let mut gx = vec![0.0; n_in];
    let mut gw = vec![0.0; n_out * n_in];
    for o in 0..n_out {
        let g = go[o];
        let row = &w[o * n_in..(o + 1) * n_in];
        let grow = &mut gw[o * n_in..(o + 1) * n_in];
        for i in 0..n_in {
            gx[i] += row[i] * g;
            grow[i] = x[i] * g;
        }
    }
    Ok((
        Tensor::new(input.shape().to_vec(), gx)?,
        Tensor::new(vec![n_out, n_in], gw)?,
        grad_out.reshape(&[n_out])?,
    ))
}

fn check(op: &'static str, input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<()> {
    match weight.shape() {
        [o, i] if *i == input.len() && bias.shape() == [*o] => Ok(()),
        _ => Err(Error::ShapeMismatch {
            op,
            left: input.shape().to_vec(),
            right: weight.shape().to_vec(),
        }),
    }
}
