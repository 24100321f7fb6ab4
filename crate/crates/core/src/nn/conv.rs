//! 2-D cross-correlation over `[C, H, W]` tensors and its adjoint.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Output spatial size of a convolution along one axis.
pub fn conv_output_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if kernel == 0 || stride == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

struct Geometry {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

fn geometry(
    op: &'static str,
    input_shape: &[usize],
    kernel: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Geometry> {
    let ks = kernel.shape();
    if input_shape.len() != 3 || ks.len() != 4 || ks[1] != input_shape[0] {
        return Err(Error::ShapeMismatch {
            op,
            left: input_shape.to_vec(),
            right: ks.to_vec(),
        });
    }
    let (c_in, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
    let (c_out, kh, kw) = (ks[0], ks[2], ks[3]);
    let too_large = || Error::KernelTooLarge {
        op,
        kernel: kh,
        kernel_w: kw,
        height: h + 2 * padding,
        width: w + 2 * padding,
    };
    if stride == 0 {
        return Err(too_large());
    }
    let oh = conv_output_dim(h, kh, stride, padding).ok_or_else(too_large)?;
    let ow = conv_output_dim(w, kw, stride, padding).ok_or_else(too_large)?;
    Ok(Geometry {
        c_in,
        h,
        w,
        c_out,
        kh,
        kw,
        oh,
        ow,
    })
}

/// Zero-padded strided cross-correlation.
///
/// `input` is `[C_in, H, W]`, `kernel` is `[C_out, C_in, kH, kW]`; the result is
/// `[C_out, H', W']` with `H' = (H + 2p - kH) / stride + 1`.
pub fn conv2d(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let g = geometry("conv2d", input.shape(), kernel, stride, padding)?;
    let x = input.data();
    let k = kernel.data();
    let mut out = vec![0.0; g.c_out * g.oh * g.ow];
    for co in 0..g.c_out {
        let o_plane = &mut out[co * g.oh * g.ow..(co + 1) * g.oh * g.ow];
        for ci in 0..g.c_in {
            let x_plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            let k_base = (co * g.c_in + ci) * g.kh * g.kw;
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    let kv = k[k_base + ki * g.kw + kj];
                    if kv == 0.0 {
                        continue;
                    }
                    for oi in 0..g.oh {
                        let ii = (oi * stride + ki) as isize - padding as isize;
                        if ii < 0 || ii >= g.h as isize {
                            continue;
                        }
                        let x_row = &x_plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                        let o_row = &mut o_plane[oi * g.ow..(oi + 1) * g.ow];
                        for (oj, o) in o_row.iter_mut().enumerate() {
                            let jj = (oj * stride + kj) as isize - padding as isize;
                            if jj >= 0 && jj < g.w as isize {
                                *o += kv * x_row[jj as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![g.c_out, g.oh, g.ow], out)
}

/// Gradient of `conv2d` with respect to its input only. This is also the
/// forward map of a transposed convolution.
fn conv2d_input_grad(g: &Geometry, grad_out: &[f64], kernel: &[f64], stride: usize, padding: usize) -> Vec<f64> {
    let mut gx = vec![0.0; g.c_in * g.h * g.w];
    for co in 0..g.c_out {
        let go_plane = &grad_out[co * g.oh * g.ow..(co + 1) * g.oh * g.ow];
        for ci in 0..g.c_in {
            let gx_plane = &mut gx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            let k_base = (co * g.c_in + ci) * g.kh * g.kw;
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    let kv = kernel[k_base + ki * g.kw + kj];
                    for oi in 0..g.oh {
                        let ii = (oi * stride + ki) as isize - padding as isize;
                        if ii < 0 || ii >= g.h as isize {
                            continue;
                        }
                        let row = ii as usize * g.w;
                        for oj in 0..g.ow {
                            let jj = (oj * stride + kj) as isize - padding as isize;
                            if jj >= 0 && jj < g.w as isize {
                                gx_plane[row + jj as usize] += kv * go_plane[oi * g.ow + oj];
                            }
                        }
                    }
                }
            }
        }
    }
    gx
}

fn conv2d_kernel_grad(g: &Geometry, grad_out: &[f64], input: &[f64], stride: usize, padding: usize) -> Vec<f64> {
    let mut gk = vec![0.0; g.c_out * g.c_in * g.kh * g.kw];
    for co in 0..g.c_out {
        let go_plane = &grad_out[co * g.oh * g.ow..(co + 1) * g.oh * g.ow];
        for ci in 0..g.c_in {
            let x_plane = &input[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            let k_base = (co * g.c_in + ci) * g.kh * g.kw;
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    let mut acc = 0.0;
                    for oi in 0..g.oh {
                        let ii = (oi * stride + ki) as isize - padding as isize;
                        if ii < 0 || ii >= g.h as isize {
                            continue;
                        }
                        let row = ii as usize * g.w;
                        for oj in 0..g.ow {
                            let jj = (oj * stride + kj) as isize - padding as isize;
                            if jj >= 0 && jj < g.w as isize {
                                acc += x_plane[row + jj as usize] * go_plane[oi * g.ow + oj];
                            }
                        }
                    }
                    gk[k_base + ki * g.kw + kj] += acc;
                }
            }
        }
    }
    gk
}

/// Backward pass of [`conv2d`]: returns `(grad_input, grad_kernel)`.
pub fn conv2d_backward(
    grad_out: &Tensor,
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(Tensor, Tensor)> {
    let g = geometry("conv2d_backward", input.shape(), kernel, stride, padding)?;
    let expected = [g.c_out, g.oh, g.ow];
    if grad_out.shape() != expected {
        return Err(Error::ShapeMismatch {
            op: "conv2d_backward",
            left: grad_out.shape().to_vec(),
            right: expected.to_vec(),
        });
    }
    let gx = conv2d_input_grad(&g, grad_out.data(), kernel.data(), stride, padding);
    let gk = conv2d_kernel_grad(&g, grad_out.data(), input.data(), stride, padding);
    Ok((
        Tensor::new(input.shape().to_vec(), gx)?,
        Tensor::new(kernel.shape().to_vec(), gk)?,
    ))
}

/// Transposed convolution: the adjoint of `conv2d(·, kernel, stride, padding)`
/// applied to an input of shape `[C_in, out_hw.0, out_hw.1]`.
///
/// `input` is `[C_out, H', W']` where `(H', W')` is what `conv2d` would produce
/// from `out_hw`. Naming the target size resolves the ambiguity stride > 1
/// introduces.
pub fn conv_transpose2d(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: usize,
    out_hw: (usize, usize),
) -> Result<Tensor> {
    let c_in = kernel.shape().get(1).copied().unwrap_or(0);
    let target = [c_in, out_hw.0, out_hw.1];
    let g = geometry("conv_transpose2d", &target, kernel, stride, padding)?;
    if input.shape() != [g.c_out, g.oh, g.ow] {
        return Err(Error::ShapeMismatch {
            op: "conv_transpose2d",
            left: input.shape().to_vec(),
            right: vec![g.c_out, g.oh, g.ow],
        });
    }
    let out = conv2d_input_grad(&g, input.data(), kernel.data(), stride, padding);
    Tensor::new(target.to_vec(), out)
}

/// Backward pass of [`conv_transpose2d`]: returns `(grad_input, grad_kernel)`.
pub fn conv_transpose2d_backward(
    grad_out: &Tensor,
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(Tensor, Tensor)> {
    let g = geometry("conv_transpose2d_backward", grad_out.shape(), kernel, stride, padding)?;
    if input.shape() != [g.c_out, g.oh, g.ow] {
        return Err(Error::ShapeMismatch {
            op: "conv_transpose2d_backward",
            left: input.shape().to_vec(),
            right: vec![g.c_out, g.oh, g.ow],
        });
    }
    // y = A^T x, so dx = A dy and dK pairs dy (as conv input) with x (as conv output grad).
    let gx = conv2d(grad_out, kernel, stride, padding)?;
    let gk = conv2d_kernel_grad(&g, input.data(), grad_out.data(), stride, padding);
    Ok((gx, Tensor::new(kernel.shape().to_vec(), gk)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sum() {
        let x = Tensor::full(&[1, 3, 3], 1.0);
        let k = Tensor::full(&[1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &k, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn identity_kernel() {
        let x = Tensor::from_fn(&[1, 4, 5], |i| (i as f64).sin());
        let k = Tensor::full(&[1, 1, 1, 1], 1.0);
        assert_eq!(conv2d(&x, &k, 1, 0).unwrap(), x);

        let go = Tensor::from_fn(&[1, 4, 5], |i| (i as f64).cos());
        let (gx, _) = conv2d_backward(&go, &x, &k, 1, 0).unwrap();
        assert_eq!(gx, go);
    }

    #[test]
    fn output_shape_formula() {
        let x = Tensor::zeros(&[1, 32, 32]);
        let k = Tensor::zeros(&[8, 1, 3, 3]);
        assert_eq!(conv2d(&x, &k, 2, 1).unwrap().shape(), &[8, 16, 16]);
    }

    #[test]
    fn channel_mismatch_names_both_shapes() {
        let x = Tensor::zeros(&[2, 5, 5]);
        let k = Tensor::zeros(&[4, 3, 3, 3]);
        match conv2d(&x, &k, 1, 0) {
            Err(Error::ShapeMismatch { left, right, .. }) => {
                assert_eq!(left, vec![2, 5, 5]);
                assert_eq!(right, vec![4, 3, 3, 3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn kernel_larger_than_padded_input() {
        let x = Tensor::zeros(&[1, 2, 2]);
        let k = Tensor::zeros(&[1, 1, 5, 5]);
        assert!(matches!(conv2d(&x, &k, 1, 1), Err(Error::KernelTooLarge { .. })));
        assert!(conv2d(&x, &k, 1, 2).is_ok());
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let x = Tensor::from_fn(&[2, 6, 6], |i| i as f64 * 0.1);
        let k = Tensor::from_fn(&[3, 2, 3, 3], |i| i as f64 * 0.01);
        let go = Tensor::zeros(&[3, 3, 3]);
        let (gx, gk) = conv2d_backward(&go, &x, &k, 2, 1).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        assert!(gk.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transpose_is_adjoint() {
        // <conv(x), y> == <x, conv_T(y)>
        let x = Tensor::from_fn(&[2, 7, 7], |i| ((i * 37 % 11) as f64) - 5.0);
        let k = Tensor::from_fn(&[3, 2, 3, 3], |i| ((i * 13 % 7) as f64) - 3.0);
        let cx = conv2d(&x, &k, 2, 1).unwrap();
        let y = Tensor::from_fn(cx.shape(), |i| ((i * 5 % 9) as f64) - 4.0);
        let ty = conv_transpose2d(&y, &k, 2, 1, (7, 7)).unwrap();
        assert_eq!(ty.shape(), x.shape());
        assert_eq!(cx.dot(&y), x.dot(&ty));
    }
}
