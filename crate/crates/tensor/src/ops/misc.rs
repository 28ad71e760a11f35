use crate::error::{Result, TensorError};
use crate::shape::Shape;
use crate::tensor::Tensor;

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(TensorError::shape("add", format!("{} vs {}", a.shape(), b.shape())));
    }
    let mut y = a.clone();
    y.add_assign(b);
    Ok(y)
}

/// Concatenates along the channel axis, preserving argument order.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let Some(first) = parts.first() else {
        return Err(TensorError::shape("concat_channels", "no inputs"));
    };
    let s0 = first.shape();
    for p in parts {
        let s = p.shape();
        if (s.n, s.h, s.w) != (s0.n, s0.h, s0.w) {
            return Err(TensorError::shape("concat_channels", format!("{s} vs {s0}")));
        }
    }
    let c: usize = parts.iter().map(|p| p.shape().c).sum();
    let ys = Shape::new(s0.n, c, s0.h, s0.w);
    let mut data = Vec::with_capacity(ys.len());
    for n in 0..s0.n {
        for p in parts {
            let ps = p.shape();
            let chunk = ps.c * ps.plane();
            data.extend_from_slice(&p.data()[n * chunk..(n + 1) * chunk]);
        }
    }
    Tensor::from_vec(ys, data)
}

/// Inverse of [`concat_channels`]: slices `dy` into pieces with the given channel counts.
pub fn split_channels(dy: &Tensor, channels: &[usize]) -> Result<Vec<Tensor>> {
    let s = dy.shape();
    if channels.iter().sum::<usize>() != s.c {
        return Err(TensorError::shape("split_channels", "channel counts do not sum"));
    }
    let mut out: Vec<Vec<f64>> = channels
        .iter()
        .map(|&c| Vec::with_capacity(s.n * c * s.plane()))
        .collect();
    for n in 0..s.n {
        let mut c0 = 0;
        for (i, &c) in channels.iter().enumerate() {
            let start = (n * s.c + c0) * s.plane();
            out[i].extend_from_slice(&dy.data()[start..start + c * s.plane()]);
            c0 += c;
        }
    }
    channels
        .iter()
        .zip(out)
        .map(|(&c, d)| Tensor::from_vec(Shape::new(s.n, c, s.h, s.w), d))
        .collect()
}

/// Copies the top-left `h×w` corner of every plane into a zero tensor of
/// spatial size `h×w`: zero-pads on the bottom/right when growing, crops
/// when shrinking. It is its own adjoint up to the swap of sizes.
pub fn fit_spatial(x: &Tensor, h: usize, w: usize) -> Tensor {
    let s = x.shape();
    let mut y = Tensor::zeros(Shape::new(s.n, s.c, h, w));
    let (rows, cols) = (s.h.min(h), s.w.min(w));
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let dst = y.plane_mut(n, c);
            for r in 0..rows {
                dst[r * w..r * w + cols].copy_from_slice(&src[r * s.w..r * s.w + cols]);
            }
        }
    }
    y
}

fn shuffle_permutation(c: usize, groups: usize) -> Result<Vec<usize>> {
    if groups == 0 || !c.is_multiple_of(groups) {
        return Err(TensorError::shape(
            "channel_shuffle",
            format!("{groups} groups do not divide {c} channels"),
        ));
    }
    let per = c / groups;
    // out[i * groups + g] = in[g * per + i]
    let mut src = vec![0; c];
    for g in 0..groups {
        for i in 0..per {
            src[i * groups + g] = g * per + i;
        }
    }
    Ok(src)
}

/// View channels as `(groups, C/groups)`, transpose, flatten.
pub fn channel_shuffle(x: &Tensor, groups: usize) -> Result<Tensor> {
    let s = x.shape();
    let src = shuffle_permutation(s.c, groups)?;
    let mut y = Tensor::zeros(s);
    for n in 0..s.n {
        for (o, &i) in src.iter().enumerate() {
            let plane = x.plane(n, i).to_vec();
            y.plane_mut(n, o).copy_from_slice(&plane);
        }
    }
    Ok(y)
}

pub fn channel_shuffle_backward(dy: &Tensor, groups: usize) -> Result<Tensor> {
    let s = dy.shape();
    let src = shuffle_permutation(s.c, groups)?;
    let mut dx = Tensor::zeros(s);
    for n in 0..s.n {
        for (o, &i) in src.iter().enumerate() {
            let plane = dy.plane(n, o).to_vec();
            dx.plane_mut(n, i).copy_from_slice(&plane);
        }
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn channel_ids(c: usize) -> Tensor {
        Tensor::from_vec(Shape::new(1, c, 1, 1), (0..c).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn fit_pads_then_crops_back() {
        let x = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let padded = fit_spatial(&x, 3, 4);
        assert_eq!(padded.data(), &[1.0, 2.0, 0.0, 0.0, 3.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(fit_spatial(&padded, 2, 2), x);
    }

    #[test]
    fn relu_definition() {
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![-1.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 2.0]);
    }

    #[test]
    fn shuffle_six_channels_two_groups() {
        let y = channel_shuffle(&channel_ids(6), 2).unwrap();
        assert_eq!(y.data(), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
    }

    #[test]
    fn shuffle_one_group_is_identity() {
        let x = channel_ids(5);
        assert_eq!(channel_shuffle(&x, 1).unwrap(), x);
    }

    #[test]
    fn shuffle_rejects_indivisible() {
        assert!(channel_shuffle(&channel_ids(5), 2).is_err());
    }

    #[test]
    fn concat_preserves_order() {
        let a = Tensor::from_vec(Shape::new(2, 3, 1, 2), (0..12).map(f64::from).collect()).unwrap();
        let b = Tensor::from_vec(Shape::new(2, 2, 1, 2), (100..108).map(f64::from).collect()).unwrap();
        let y = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(y.shape(), Shape::new(2, 5, 1, 2));
        for n in 0..2 {
            for c in 0..3 {
                assert_eq!(y.plane(n, c), a.plane(n, c));
            }
            for c in 0..2 {
                assert_eq!(y.plane(n, 3 + c), b.plane(n, c));
            }
        }
        let parts = split_channels(&y, &[3, 2]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let a = Tensor::zeros(Shape::new(1, 1, 2, 2));
        let b = Tensor::zeros(Shape::new(1, 1, 2, 3));
        assert!(concat_channels(&[&a, &b]).is_err());
    }
}
