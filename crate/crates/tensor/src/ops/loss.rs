use crate::error::{Result, TensorError};
use crate::shape::Shape;
use crate::tensor::Tensor;

/// Softmax over the channel axis at every `(n, h, w)`.
pub fn softmax_channels(logits: &Tensor) -> Tensor {
    let s = logits.shape();
    let mut p = Tensor::zeros(s);
    let plane = s.plane();
    let ld = logits.data();
    let pd = p.data_mut();
    for n in 0..s.n {
        for i in 0..plane {
            let at = |c: usize| (n * s.c + c) * plane + i;
            let max = (0..s.c).map(|c| ld[at(c)]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for c in 0..s.c {
                let e = (ld[at(c)] - max).exp();
                pd[at(c)] = e;
                z += e;
            }
            for c in 0..s.c {
                pd[at(c)] /= z;
            }
        }
    }
    p
}

fn check(logits: Shape, targets: &[u8], weights: &[f64]) -> Result<()> {
    if weights.len() != logits.c {
        return Err(TensorError::shape(
            "weighted_cross_entropy",
            format!("{} class weights for {} channels", weights.len(), logits.c),
        ));
    }
    if targets.len() != logits.n * logits.plane() {
        return Err(TensorError::shape(
            "weighted_cross_entropy",
            format!("{} targets for logits {logits}", targets.len()),
        ));
    }
    if let Some(&t) = targets.iter().find(|&&t| t as usize >= logits.c) {
        return Err(TensorError::shape(
            "weighted_cross_entropy",
            format!("target class {t} out of range"),
        ));
    }
    Ok(())
}

/// Mean over all pixels of `w[t] · −log softmax(logits)[t]`.
///
/// `targets` is laid out `N×H×W`. Returns the scalar loss together with the
/// softmax probabilities, which the backward pass reuses.
pub fn weighted_cross_entropy(
    logits: &Tensor,
    targets: &[u8],
    weights: &[f64],
) -> Result<(f64, Tensor)> {
    let s = logits.shape();
    check(s, targets, weights)?;
    let plane = s.plane();
    let ld = logits.data();
    let mut total = 0.0;
    for n in 0..s.n {
        for i in 0..plane {
            let at = |c: usize| (n * s.c + c) * plane + i;
            let max = (0..s.c).map(|c| ld[at(c)]).fold(f64::NEG_INFINITY, f64::max);
            let lse = max + (0..s.c).map(|c| (ld[at(c)] - max).exp()).sum::<f64>().ln();
            let t = targets[n * plane + i] as usize;
            total += weights[t] * (lse - ld[at(t)]);
        }
    }
    let loss = total / (s.n * plane) as f64;
    Ok((loss, softmax_channels(logits)))
}

/// Gradient w.r.t. the logits, scaled by the upstream scalar gradient.
pub fn weighted_cross_entropy_backward(
    probs: &Tensor,
    targets: &[u8],
    weights: &[f64],
    upstream: f64,
) -> Result<Tensor> {
    let s = probs.shape();
    check(s, targets, weights)?;
    let plane = s.plane();
    let scale = upstream / (s.n * plane) as f64;
    let mut g = probs.clone();
    let gd = g.data_mut();
    for n in 0..s.n {
        for i in 0..plane {
            let t = targets[n * plane + i] as usize;
            let k = weights[t] * scale;
            for c in 0..s.c {
                let idx = (n * s.c + c) * plane + i;
                let onehot = if c == t { 1.0 } else { 0.0 };
                gd[idx] = (gd[idx] - onehot) * k;
            }
        }
    }
    Ok(g)
}
