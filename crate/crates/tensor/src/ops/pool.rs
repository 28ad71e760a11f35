use crate::error::{Result, TensorError};
use crate::ops::out_extent;
use crate::shape::Shape;
use crate::tensor::Tensor;

/// Square pooling window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolConfig {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl PoolConfig {
    pub const fn new(kernel: usize, stride: usize, pad: usize) -> Self {
        PoolConfig { kernel, stride, pad }
    }
}

fn out_shape(op: &'static str, x: Shape, cfg: PoolConfig) -> Result<Shape> {
    match (
        out_extent(x.h, cfg.kernel, cfg.stride, cfg.pad),
        out_extent(x.w, cfg.kernel, cfg.stride, cfg.pad),
    ) {
        (Some(h), Some(w)) if cfg.pad < cfg.kernel => Ok(Shape::new(x.n, x.c, h, w)),
        _ => Err(TensorError::shape(op, format!("window {cfg:?} does not fit {x}"))),
    }
}

/// Max pooling; padding never wins. Returns the output and the flat input
/// index that produced each output element.
pub fn max_pool(x: &Tensor, cfg: PoolConfig) -> Result<(Tensor, Vec<usize>)> {
    let xs = x.shape();
    let ys = out_shape("max_pool", xs, cfg)?;
    let mut y = Tensor::zeros(ys);
    let mut argmax = vec![0usize; ys.len()];
    let xd = x.data();
    for n in 0..xs.n {
        for c in 0..xs.c {
            let base = (n * xs.c + c) * xs.plane();
            for oh in 0..ys.h {
                for ow in 0..ys.w {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = usize::MAX;
                    for ki in 0..cfg.kernel {
                        let ih = (oh * cfg.stride + ki) as isize - cfg.pad as isize;
                        if ih < 0 || ih >= xs.h as isize {
                            continue;
                        }
                        for kj in 0..cfg.kernel {
                            let iw = (ow * cfg.stride + kj) as isize - cfg.pad as isize;
                            if iw < 0 || iw >= xs.w as isize {
                                continue;
                            }
                            let idx = base + ih as usize * xs.w + iw as usize;
                            if xd[idx] > best || best_idx == usize::MAX {
                                best = xd[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = ys.index(n, c, oh, ow);
                    y.data_mut()[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
    }
    Ok((y, argmax))
}

pub fn max_pool_backward(x_shape: Shape, argmax: &[usize], dy: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(x_shape);
    let dxd = dx.data_mut();
    for (&src, &g) in argmax.iter().zip(dy.data()) {
        dxd[src] += g;
    }
    dx
}

/// Average pooling. Padded cells count as zeros in the divisor (`k²` always).
pub fn avg_pool(x: &Tensor, cfg: PoolConfig) -> Result<Tensor> {
    let xs = x.shape();
    let ys = out_shape("avg_pool", xs, cfg)?;
    let mut y = Tensor::zeros(ys);
    let norm = 1.0 / (cfg.kernel * cfg.kernel) as f64;
    for n in 0..xs.n {
        for c in 0..xs.c {
            let src = x.plane(n, c);
            let dst = y.plane_mut(n, c);
            for oh in 0..ys.h {
                for ow in 0..ys.w {
                    let mut acc = 0.0;
                    for ki in 0..cfg.kernel {
                        let ih = (oh * cfg.stride + ki) as isize - cfg.pad as isize;
                        if ih < 0 || ih >= xs.h as isize {
                            continue;
                        }
                        for kj in 0..cfg.kernel {
                            let iw = (ow * cfg.stride + kj) as isize - cfg.pad as isize;
                            if iw < 0 || iw >= xs.w as isize {
                                continue;
                            }
                            acc += src[ih as usize * xs.w + iw as usize];
                        }
                    }
                    dst[oh * ys.w + ow] = acc * norm;
                }
            }
        }
    }
    Ok(y)
}

pub fn avg_pool_backward(x_shape: Shape, cfg: PoolConfig, dy: &Tensor) -> Result<Tensor> {
    let ys = out_shape("avg_pool_backward", x_shape, cfg)?;
    if dy.shape() != ys {
        return Err(TensorError::shape("avg_pool_backward", "dy shape"));
    }
    let xs = x_shape;
    let mut dx = Tensor::zeros(xs);
    let norm = 1.0 / (cfg.kernel * cfg.kernel) as f64;
    for n in 0..xs.n {
        for c in 0..xs.c {
            let g = dy.plane(n, c).to_vec();
            let dst = dx.plane_mut(n, c);
            for oh in 0..ys.h {
                for ow in 0..ys.w {
                    let gv = g[oh * ys.w + ow] * norm;
                    for ki in 0..cfg.kernel {
                        let ih = (oh * cfg.stride + ki) as isize - cfg.pad as isize;
                        if ih < 0 || ih >= xs.h as isize {
                            continue;
                        }
                        for kj in 0..cfg.kernel {
                            let iw = (ow * cfg.stride + kj) as isize - cfg.pad as isize;
                            if iw < 0 || iw >= xs.w as isize {
                                continue;
                            }
                            dst[ih as usize * xs.w + iw as usize] += gv;
                        }
                    }
                }
            }
        }
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_pool_picks_window_max() {
        let x = Tensor::from_vec(Shape::new(1, 1, 4, 4), (0..16).map(f64::from).collect()).unwrap();
        let (y, arg) = max_pool(&x, PoolConfig::new(3, 2, 1)).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 2, 2));
        assert_eq!(y.data(), &[5.0, 7.0, 13.0, 15.0]);
        assert_eq!(arg, vec![5, 7, 13, 15]);
    }

    #[test]
    fn avg_pool_counts_padding() {
        let x = Tensor::full(Shape::new(1, 1, 4, 4), 9.0);
        let y = avg_pool(&x, PoolConfig::new(3, 2, 1)).unwrap();
        // top-left window sees 4 real cells, bottom-right sees 9
        assert_eq!(y.data()[0], 4.0);
        assert_eq!(y.data()[3], 9.0);
    }

    #[test]
    fn odd_extent_follows_window_formula() {
        let x = Tensor::zeros(Shape::new(1, 1, 5, 7));
        let y = avg_pool(&x, PoolConfig::new(3, 2, 1)).unwrap();
        assert_eq!((y.shape().h, y.shape().w), (3, 4));
    }
}
