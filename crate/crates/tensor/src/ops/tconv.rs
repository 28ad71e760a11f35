use crate::error::{Result, TensorError};
use crate::ops::valid_range;
use crate::shape::Shape;
use crate::tensor::Tensor;

fn output_shape(x: Shape, w: Shape, stride: usize, pad: usize) -> Result<Shape> {
    if w.n != x.c {
        return Err(TensorError::shape(
            "transposed_conv2d",
            format!("weight {w} expects C_in {}, input is {x}", w.n),
        ));
    }
    if stride == 0 || x.h == 0 || x.w == 0 {
        return Err(TensorError::shape("transposed_conv2d", "zero stride or empty input"));
    }
    let full_h = (x.h - 1) * stride + w.h;
    let full_w = (x.w - 1) * stride + w.w;
    if full_h <= 2 * pad || full_w <= 2 * pad {
        return Err(TensorError::shape(
            "transposed_conv2d",
            format!("padding {pad} consumes the whole output"),
        ));
    }
    Ok(Shape::new(x.n, w.c, full_h - 2 * pad, full_w - 2 * pad))
}

/// Transposed convolution (the adjoint of [`conv2d`](super::conv2d) with
/// `groups = 1`). `w` is `(C_in, C_out, kh, kw)`; the output extent is
/// `(H − 1)·stride − 2·pad + k`.
pub fn transposed_conv2d(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let xs = x.shape();
    let ws = w.shape();
    let ys = output_shape(xs, ws, stride, pad)?;
    let mut y = Tensor::zeros(ys);
    let (xp, yp) = (xs.plane(), ys.plane());
    let xd = x.data();
    let wd = w.data();
    let yd = y.data_mut();
    for n in 0..xs.n {
        for oc in 0..ys.c {
            let out = &mut yd[(n * ys.c + oc) * yp..(n * ys.c + oc + 1) * yp];
            for ic in 0..xs.c {
                let inp = &xd[(n * xs.c + ic) * xp..(n * xs.c + ic + 1) * xp];
                for ki in 0..ws.h {
                    // input rows ih whose target row ih*s + ki - p lies inside the output
                    let (ih_lo, ih_hi) = valid_range(xs.h, ys.h, stride, ki, pad);
                    for kj in 0..ws.w {
                        let wv = wd[ws.index(ic, oc, ki, kj)];
                        if wv == 0.0 {
                            continue;
                        }
                        let (iw_lo, iw_hi) = valid_range(xs.w, ys.w, stride, kj, pad);
                        for ih in ih_lo..ih_hi {
                            let oh = ih * stride + ki - pad;
                            let irow = &inp[ih * xs.w..(ih + 1) * xs.w];
                            let orow = &mut out[oh * ys.w..(oh + 1) * ys.w];
                            for iw in iw_lo..iw_hi {
                                orow[iw * stride + kj - pad] += wv * irow[iw];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(y)
}

/// Gradients `(dx, dw)` of [`transposed_conv2d`].
pub fn transposed_conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(Tensor, Tensor)> {
    let xs = x.shape();
    let ws = w.shape();
    let ys = output_shape(xs, ws, stride, pad)?;
    if dy.shape() != ys {
        return Err(TensorError::shape(
            "transposed_conv2d_backward",
            format!("dy {} but output is {ys}", dy.shape()),
        ));
    }
    let mut dx = Tensor::zeros(xs);
    let mut dw = Tensor::zeros(ws);
    let (xp, yp) = (xs.plane(), ys.plane());
    let xd = x.data();
    let wd = w.data();
    let gd = dy.data();
    let dxd = dx.data_mut();
    let dwd = dw.data_mut();
    for n in 0..xs.n {
        for ic in 0..xs.c {
            let xbase = (n * xs.c + ic) * xp;
            for oc in 0..ys.c {
                let g = &gd[(n * ys.c + oc) * yp..(n * ys.c + oc + 1) * yp];
                for ki in 0..ws.h {
                    let (ih_lo, ih_hi) = valid_range(xs.h, ys.h, stride, ki, pad);
                    for kj in 0..ws.w {
                        let widx = ws.index(ic, oc, ki, kj);
                        let wv = wd[widx];
                        let (iw_lo, iw_hi) = valid_range(xs.w, ys.w, stride, kj, pad);
                        let mut acc = 0.0;
                        for ih in ih_lo..ih_hi {
                            let oh = ih * stride + ki - pad;
                            let grow = &g[oh * ys.w..(oh + 1) * ys.w];
                            let xrow = &xd[xbase + ih * xs.w..xbase + (ih + 1) * xs.w];
                            let dxrow = &mut dxd[xbase + ih * xs.w..xbase + (ih + 1) * xs.w];
                            for iw in iw_lo..iw_hi {
                                let gv = grow[iw * stride + kj - pad];
                                acc += gv * xrow[iw];
                                dxrow[iw] += wv * gv;
                            }
                        }
                        dwd[widx] += acc;
                    }
                }
            }
        }
    }
    Ok((dx, dw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{conv2d, Conv2dConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_value_spreads_over_stride_block() {
        let x = Tensor::full(Shape::new(1, 1, 1, 1), 2.5);
        let w = Tensor::full(Shape::new(1, 1, 2, 2), 1.0);
        let y = transposed_conv2d(&x, &w, 2, 0).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 2, 2));
        assert_eq!(y.data(), &[2.5; 4]);
    }

    #[test]
    fn output_extent() {
        let x = Tensor::zeros(Shape::new(1, 2, 4, 5));
        let w = Tensor::zeros(Shape::new(2, 3, 4, 4));
        let y = transposed_conv2d(&x, &w, 2, 1).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 3, 8, 10));
        let w16 = Tensor::zeros(Shape::new(2, 2, 16, 16));
        let y = transposed_conv2d(&x, &w16, 8, 4).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 2, 32, 40));
    }

    #[test]
    fn adjoint_of_conv2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // (H + 2p - k) divisible by s so both directions agree on extents
        for (h, k, s, p) in [(6usize, 4usize, 2usize, 1usize), (8, 3, 1, 1), (9, 3, 3, 0), (16, 16, 8, 4)] {
            let x = Tensor::randn(Shape::new(2, 3, h, h), 1.0, &mut rng);
            let w = Tensor::randn(Shape::new(4, 3, k, k), 1.0, &mut rng);
            let cx = conv2d(&x, &w, None, Conv2dConfig::new(s, p, 1)).unwrap();
            let y = Tensor::randn(cx.shape(), 1.0, &mut rng);
            let ty = transposed_conv2d(&y, &w, s, p).unwrap();
            assert_eq!(ty.shape(), x.shape());
            let lhs = cx.dot(&y);
            let rhs = x.dot(&ty);
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn rejects_channel_mismatch() {
        let x = Tensor::zeros(Shape::new(1, 2, 4, 4));
        let w = Tensor::zeros(Shape::new(3, 2, 4, 4));
        assert!(transposed_conv2d(&x, &w, 2, 1).is_err());
    }
}
