//! Forward and backward kernels.
//!
//! The kernels are plain functions over [`Tensor`](crate::Tensor)s and never
//! mutate their inputs. [`Tape`](crate::Tape) wires them together; they are
//! public so that tests can check them in isolation.

mod conv;
mod loss;
mod misc;
mod norm;
mod pool;
mod tconv;

pub use conv::{conv2d, conv2d_backward, Conv2dConfig};
pub use loss::{softmax_channels, weighted_cross_entropy, weighted_cross_entropy_backward};
pub use misc::{
    add, channel_shuffle, channel_shuffle_backward, concat_channels, fit_spatial, relu, relu_backward,
    split_channels,
};
pub use norm::{
    batch_norm_eval, batch_norm_eval_backward, batch_norm_train, batch_norm_train_backward,
    BatchStats,
};
pub use pool::{avg_pool, avg_pool_backward, max_pool, max_pool_backward, PoolConfig};
pub use tconv::{transposed_conv2d, transposed_conv2d_backward};

/// Output extent of a strided window sweep; `None` when the window does not fit.
pub(crate) fn out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Range of output columns `o` for which `o * stride + k - pad` lands in `0..input`.
#[inline]
pub(crate) fn valid_range(out: usize, input: usize, stride: usize, k: usize, pad: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    // largest o with o*stride + k - pad <= input - 1
    let top = input + pad;
    let hi = if top > k { (top - k - 1) / stride + 1 } else { 0 };
    (lo.min(out), hi.min(out))
}
