use crate::error::{Result, TensorError};
use crate::ops::{out_extent, valid_range};
use crate::shape::Shape;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dConfig {
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
}

impl Conv2dConfig {
    pub const fn new(stride: usize, pad: usize, groups: usize) -> Self {
        Conv2dConfig { stride, pad, groups }
    }
}

impl Default for Conv2dConfig {
    fn default() -> Self {
        Conv2dConfig::new(1, 0, 1)
    }
}

struct Geometry {
    x: Shape,
    w: Shape,
    y: Shape,
    cin_g: usize,
    cout_g: usize,
}

fn geometry(x: Shape, w: Shape, b: Option<Shape>, cfg: Conv2dConfig) -> Result<Geometry> {
    let g = cfg.groups;
    if g == 0 || !x.c.is_multiple_of(g) || !w.n.is_multiple_of(g) {
        return Err(TensorError::shape(
            "conv2d",
            format!("groups {g} must divide C_in {} and C_out {}", x.c, w.n),
        ));
    }
    if w.c != x.c / g {
        return Err(TensorError::shape(
            "conv2d",
            format!("weight {w} expects C_in/groups = {}, input is {x}", w.c),
        ));
    }
    if let Some(b) = b {
        if b.len() != w.n {
            return Err(TensorError::shape("conv2d", format!("bias {b} for C_out {}", w.n)));
        }
    }
    let (Some(ho), Some(wo)) = (
        out_extent(x.h, w.h, cfg.stride, cfg.pad),
        out_extent(x.w, w.w, cfg.stride, cfg.pad),
    ) else {
        return Err(TensorError::shape("conv2d", format!("kernel {w} does not fit input {x}")));
    };
    Ok(Geometry {
        x,
        w,
        y: Shape::new(x.n, w.n, ho, wo),
        cin_g: x.c / g,
        cout_g: w.n / g,
    })
}

/// Grouped 2-D cross-correlation. `w` is `(C_out, C_in/groups, kh, kw)`,
/// `b` (optional) has `C_out` elements.
pub fn conv2d(x: &Tensor, w: &Tensor, b: Option<&Tensor>, cfg: Conv2dConfig) -> Result<Tensor> {
    let geo = geometry(x.shape(), w.shape(), b.map(Tensor::shape), cfg)?;
    let Geometry { x: xs, w: ws, y: ys, cin_g, cout_g } = geo;
    let (s, p) = (cfg.stride, cfg.pad);
    let mut y = Tensor::zeros(ys);
    let xd = x.data();
    let wd = w.data();
    let yp = ys.plane();
    let xp = xs.plane();
    let yd = y.data_mut();
    for n in 0..xs.n {
        for oc in 0..ys.c {
            let group = oc / cout_g;
            let out = &mut yd[(n * ys.c + oc) * yp..(n * ys.c + oc + 1) * yp];
            if let Some(b) = b {
                out.fill(b.data()[oc]);
            }
            for icl in 0..cin_g {
                let ic = group * cin_g + icl;
                let inp = &xd[(n * xs.c + ic) * xp..(n * xs.c + ic + 1) * xp];
                for ki in 0..ws.h {
                    let (oh_lo, oh_hi) = valid_range(ys.h, xs.h, s, ki, p);
                    for kj in 0..ws.w {
                        let wv = wd[ws.index(oc, icl, ki, kj)];
                        if wv == 0.0 {
                            continue;
                        }
                        let (ow_lo, ow_hi) = valid_range(ys.w, xs.w, s, kj, p);
                        for oh in oh_lo..oh_hi {
                            let ih = oh * s + ki - p;
                            let row = &inp[ih * xs.w..(ih + 1) * xs.w];
                            let orow = &mut out[oh * ys.w..(oh + 1) * ys.w];
                            if s == 1 {
                                let off = kj as isize - p as isize;
                                for ow in ow_lo..ow_hi {
                                    orow[ow] += wv * row[(ow as isize + off) as usize];
                                }
                            } else {
                                for ow in ow_lo..ow_hi {
                                    orow[ow] += wv * row[ow * s + kj - p];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(y)
}

/// Gradients `(dx, dw, db)` of [`conv2d`] given the upstream gradient `dy`.
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    cfg: Conv2dConfig,
) -> Result<(Tensor, Tensor, Tensor)> {
    let geo = geometry(x.shape(), w.shape(), None, cfg)?;
    let Geometry { x: xs, w: ws, y: ys, cin_g, cout_g } = geo;
    if dy.shape() != ys {
        return Err(TensorError::shape(
            "conv2d_backward",
            format!("dy {} but output is {ys}", dy.shape()),
        ));
    }
    let (s, p) = (cfg.stride, cfg.pad);
    let mut dx = Tensor::zeros(xs);
    let mut dw = Tensor::zeros(ws);
    let mut db = Tensor::zeros(Shape::vector(ws.n));
    let xd = x.data();
    let wd = w.data();
    let dyd = dy.data();
    let yp = ys.plane();
    let xp = xs.plane();

    for oc in 0..ys.c {
        db.data_mut()[oc] = (0..ys.n)
            .map(|n| dyd[(n * ys.c + oc) * yp..(n * ys.c + oc + 1) * yp].iter().sum::<f64>())
            .sum();
    }

    let dxd = dx.data_mut();
    let dwd = dw.data_mut();
    for n in 0..xs.n {
        for oc in 0..ys.c {
            let group = oc / cout_g;
            let g = &dyd[(n * ys.c + oc) * yp..(n * ys.c + oc + 1) * yp];
            for icl in 0..cin_g {
                let ic = group * cin_g + icl;
                let base = (n * xs.c + ic) * xp;
                for ki in 0..ws.h {
                    let (oh_lo, oh_hi) = valid_range(ys.h, xs.h, s, ki, p);
                    for kj in 0..ws.w {
                        let widx = ws.index(oc, icl, ki, kj);
                        let wv = wd[widx];
                        let (ow_lo, ow_hi) = valid_range(ys.w, xs.w, s, kj, p);
                        let mut acc = 0.0;
                        for oh in oh_lo..oh_hi {
                            let ih = oh * s + ki - p;
                            let grow = &g[oh * ys.w..(oh + 1) * ys.w];
                            let xrow = &xd[base + ih * xs.w..base + (ih + 1) * xs.w];
                            for ow in ow_lo..ow_hi {
                                acc += grow[ow] * xrow[ow * s + kj - p];
                            }
                            let dxrow = &mut dxd[base + ih * xs.w..base + (ih + 1) * xs.w];
                            for ow in ow_lo..ow_hi {
                                dxrow[ow * s + kj - p] += wv * grow[ow];
                            }
                        }
                        dwd[widx] += acc;
                    }
                }
            }
        }
    }
    Ok((dx, dw, db))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct summation, independent of the strided row kernel above.
    fn naive(x: &Tensor, w: &Tensor, b: Option<&Tensor>, cfg: Conv2dConfig) -> Tensor {
        let (xs, ws) = (x.shape(), w.shape());
        let ho = (xs.h + 2 * cfg.pad - ws.h) / cfg.stride + 1;
        let wo = (xs.w + 2 * cfg.pad - ws.w) / cfg.stride + 1;
        let ys = Shape::new(xs.n, ws.n, ho, wo);
        let cin_g = xs.c / cfg.groups;
        let cout_g = ws.n / cfg.groups;
        let mut y = Tensor::zeros(ys);
        for n in 0..xs.n {
            for o in 0..ws.n {
                for i in 0..ho {
                    for j in 0..wo {
                        let mut acc = b.map_or(0.0, |b| b.data()[o]);
                        for c in 0..cin_g {
                            let ic = (o / cout_g) * cin_g + c;
                            for ki in 0..ws.h {
                                for kj in 0..ws.w {
                                    let ih = (i * cfg.stride + ki) as isize - cfg.pad as isize;
                                    let iw = (j * cfg.stride + kj) as isize - cfg.pad as isize;
                                    if ih < 0 || iw < 0 || ih >= xs.h as isize || iw >= xs.w as isize {
                                        continue;
                                    }
                                    acc += w.at(o, c, ki, kj) * x.at(n, ic, ih as usize, iw as usize);
                                }
                            }
                        }
                        let idx = ys.index(n, o, i, j);
                        y.data_mut()[idx] = acc;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn ones_kernel_sums_to_nine() {
        let x = Tensor::full(Shape::new(1, 1, 3, 3), 1.0);
        let w = Tensor::full(Shape::new(1, 1, 3, 3), 1.0);
        let y = conv2d(&x, &w, None, Conv2dConfig::default()).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 1, 1));
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn depthwise_identity_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::randn(Shape::new(2, 4, 5, 5), 1.0, &mut rng);
        let w = Tensor::full(Shape::new(4, 1, 1, 1), 1.0);
        let y = conv2d(&x, &w, None, Conv2dConfig::new(1, 0, 4)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::randn(Shape::new(2, 4, 5, 5), 1.0, &mut rng);
        for cfg in [
            Conv2dConfig::new(1, 0, 1),
            Conv2dConfig::new(1, 1, 1),
            Conv2dConfig::new(2, 1, 1),
            Conv2dConfig::new(2, 1, 2),
            Conv2dConfig::new(1, 1, 4),
            Conv2dConfig::new(3, 2, 2),
        ] {
            let w = Tensor::randn(Shape::new(8, 4 / cfg.groups, 3, 3), 1.0, &mut rng);
            let b = Tensor::randn(Shape::vector(8), 1.0, &mut rng);
            let got = conv2d(&x, &w, Some(&b), cfg).unwrap();
            let want = naive(&x, &w, Some(&b), cfg);
            assert_eq!(got.shape(), want.shape());
            assert!(got.max_abs_diff(&want) < 1e-12, "{cfg:?}");
        }
    }

    #[test]
    fn output_extent_formula() {
        let x = Tensor::zeros(Shape::new(1, 2, 7, 9));
        let w = Tensor::zeros(Shape::new(2, 2, 3, 3));
        let y = conv2d(&x, &w, None, Conv2dConfig::new(2, 1, 1)).unwrap();
        assert_eq!((y.shape().h, y.shape().w), ((7 + 2 - 3) / 2 + 1, (9 + 2 - 3) / 2 + 1));
    }

    #[test]
    fn rejects_indivisible_groups() {
        let x = Tensor::zeros(Shape::new(1, 3, 4, 4));
        let w = Tensor::zeros(Shape::new(4, 1, 1, 1));
        assert!(matches!(
            conv2d(&x, &w, None, Conv2dConfig::new(1, 0, 2)),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn rejects_wrong_weight_depth() {
        let x = Tensor::zeros(Shape::new(1, 4, 4, 4));
        let w = Tensor::zeros(Shape::new(4, 4, 1, 1));
        assert!(conv2d(&x, &w, None, Conv2dConfig::new(1, 0, 2)).is_err());
    }
}
