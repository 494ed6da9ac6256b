//! Layer forward/backward kernels for the embedding network.
//!
//! All convolutions are 3x3, stride 1, zero-padded by 1. The kernels are
//! phrased as row-wise AXPY/dot operations over contiguous slices.

use super::tensor::{axpy, dot, Scalar, Tensor};
use serde::{Deserialize, Serialize};

/// Architecture element; parameters live separately in [`Layer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    /// Non-overlapping average pooling by an integer factor (input stem).
    AvgPool { factor: usize },
    /// 3x3 convolution, stride 1, zero padding 1.
    Conv { in_ch: usize, out_ch: usize },
    Relu,
    /// 2x2 max pooling, stride 2 (truncating odd borders).
    MaxPool,
    GlobalAvgPool,
    /// Average pooling onto a fixed output grid (floor-partitioned regions).
    AdaptiveAvgPool { out_h: usize, out_w: usize },
    /// Fully connected layer on the flattened (c,1,1) input.
    Dense { in_dim: usize, out_dim: usize },
}

/// A layer together with its parameters (empty for parameter-free layers).
#[derive(Debug, Clone)]
pub struct Layer<T> {
    pub spec: LayerSpec,
    /// Conv: `[out][in][3][3]`; Dense: `[out][in]`; empty otherwise.
    pub weight: Vec<T>,
    /// Conv/Dense bias `[out]`; empty otherwise.
    pub bias: Vec<T>,
}

/// Per-layer state captured during the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub enum LayerTrace<T> {
    /// Input activation (conv, dense, pools need it or its shape).
    Input(Tensor<T>),
    /// Input shape plus argmax offsets for max pooling.
    MaxPool {
        input_shape: (usize, usize, usize),
        argmax: Vec<u32>,
    },
    /// Output mask positions for ReLU (true where input > 0).
    ReluMask(Vec<bool>),
}

impl<T: Scalar> Layer<T> {
    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Run the layer, returning the output and the trace needed for backward.
    pub fn forward(&self, input: &Tensor<T>) -> (Tensor<T>, LayerTrace<T>) {
        match self.spec {
            LayerSpec::AvgPool { factor } => {
                let out = avg_pool_forward(input, factor);
                (
                    out,
                    LayerTrace::MaxPool {
                        input_shape: (input.c, input.h, input.w),
                        argmax: Vec::new(),
                    },
                )
            }
            LayerSpec::Conv { in_ch, out_ch } => {
                debug_assert_eq!(input.c, in_ch);
                let out = conv3x3_forward(input, out_ch, &self.weight, &self.bias);
                (out, LayerTrace::Input(input.clone()))
            }
            LayerSpec::Relu => {
                let mut out = input.clone();
                let mask: Vec<bool> = out
                    .data
                    .iter_mut()
                    .map(|v| {
                        if *v > T::zero() {
                            true
                        } else {
                            *v = T::zero();
                            false
                        }
                    })
                    .collect();
                (out, LayerTrace::ReluMask(mask))
            }
            LayerSpec::MaxPool => {
                let (out, argmax) = max_pool_forward(input);
                (
                    out,
                    LayerTrace::MaxPool {
                        input_shape: (input.c, input.h, input.w),
                        argmax,
                    },
                )
            }
            LayerSpec::GlobalAvgPool => {
                let mut out = Tensor::zeros(input.c, 1, 1);
                let norm = T::from_f64(1.0 / (input.h * input.w) as f64);
                for c in 0..input.c {
                    let mut acc = T::zero();
                    for &v in input.channel(c) {
                        acc += v;
                    }
                    out.data[c] = acc * norm;
                }
                (
                    out,
                    LayerTrace::MaxPool {
                        input_shape: (input.c, input.h, input.w),
                        argmax: Vec::new(),
                    },
                )
            }
            LayerSpec::AdaptiveAvgPool { out_h, out_w } => {
                let out = adaptive_avg_forward(input, out_h, out_w);
                (
                    out,
                    LayerTrace::MaxPool {
                        input_shape: (input.c, input.h, input.w),
                        argmax: Vec::new(),
                    },
                )
            }
            LayerSpec::Dense { in_dim, out_dim } => {
                debug_assert_eq!(input.data.len(), in_dim);
                let mut out = Tensor::zeros(out_dim, 1, 1);
                for o in 0..out_dim {
                    out.data[o] = self.bias[o] + dot(&self.weight[o * in_dim..(o + 1) * in_dim], &input.data);
                }
                (out, LayerTrace::Input(input.clone()))
            }
        }
    }

    /// Backpropagate `grad_out`, returning the input gradient and accumulating
    /// parameter gradients into `grad_weight`/`grad_bias` (same layout as the
    /// layer's parameters).
    pub fn backward(
        &self,
        trace: &LayerTrace<T>,
        grad_out: &Tensor<T>,
        grad_weight: &mut [T],
        grad_bias: &mut [T],
    ) -> Tensor<T> {
        match self.spec {
            LayerSpec::AvgPool { factor } => {
                let LayerTrace::MaxPool { input_shape, .. } = trace else {
                    unreachable!("avg pool trace")
                };
                avg_pool_backward(grad_out, *input_shape, factor)
            }
            LayerSpec::Conv { in_ch, out_ch } => {
                let LayerTrace::Input(input) = trace else {
                    unreachable!("conv trace")
                };
                conv3x3_backward(
                    input, grad_out, in_ch, out_ch, &self.weight, grad_weight, grad_bias,
                )
            }
            LayerSpec::Relu => {
                let LayerTrace::ReluMask(mask) = trace else {
                    unreachable!("relu trace")
                };
                let mut grad_in = grad_out.clone();
                for (g, &m) in grad_in.data.iter_mut().zip(mask.iter()) {
                    if !m {
                        *g = T::zero();
                    }
                }
                grad_in
            }
            LayerSpec::MaxPool => {
                let LayerTrace::MaxPool {
                    input_shape,
                    argmax,
                } = trace
                else {
                    unreachable!("max pool trace")
                };
                let (c, h, w) = *input_shape;
                let mut grad_in = Tensor::zeros(c, h, w);
                for (slot, &g) in argmax.iter().zip(grad_out.data.iter()) {
                    grad_in.data[*slot as usize] += g;
                }
                grad_in
            }
            LayerSpec::GlobalAvgPool => {
                let LayerTrace::MaxPool { input_shape, .. } = trace else {
                    unreachable!("gap trace")
                };
                let (c, h, w) = *input_shape;
                let norm = T::from_f64(1.0 / (h * w) as f64);
                let mut grad_in = Tensor::zeros(c, h, w);
                for ch in 0..c {
                    let g = grad_out.data[ch] * norm;
                    for v in grad_in.channel_mut(ch) {
                        *v = g;
                    }
                }
                grad_in
            }
            LayerSpec::AdaptiveAvgPool { out_h, out_w } => {
                let LayerTrace::MaxPool { input_shape, .. } = trace else {
                    unreachable!("adaptive pool trace")
                };
                adaptive_avg_backward(grad_out, *input_shape, out_h, out_w)
            }
            LayerSpec::Dense { in_dim, out_dim } => {
                let LayerTrace::Input(input) = trace else {
                    unreachable!("dense trace")
                };
                let mut grad_in = Tensor::zeros(in_dim, 1, 1);
                for o in 0..out_dim {
                    let g = grad_out.data[o];
                    grad_bias[o] += g;
                    let row = &self.weight[o * in_dim..(o + 1) * in_dim];
                    axpy(&mut grad_in.data, g, row);
                    axpy(
                        &mut grad_weight[o * in_dim..(o + 1) * in_dim],
                        g,
                        &input.data,
                    );
                }
                grad_in
            }
        }
    }
}

fn conv3x3_forward<T: Scalar>(
    input: &Tensor<T>,
    out_ch: usize,
    weight: &[T],
    bias: &[T],
) -> Tensor<T> {
    let (h, w) = (input.h, input.w);
    let mut out = Tensor::zeros(out_ch, h, w);
    for oc in 0..out_ch {
        {
            let b = bias[oc];
            for v in out.channel_mut(oc) {
                *v = b;
            }
        }
        for ic in 0..input.c {
            let in_plane = input.channel(ic);
            let w_base = (oc * input.c + ic) * 9;
            for dy in 0..3usize {
                let y_lo = 1usize.saturating_sub(dy);
                let y_hi = (h + 1 - dy).min(h);
                for y in y_lo..y_hi {
                    let iny = y + dy - 1;
                    let in_row = &in_plane[iny * w..(iny + 1) * w];
                    let out_plane = out.channel_mut(oc);
                    let out_row = &mut out_plane[y * w..(y + 1) * w];
                    for dx in 0..3usize {
                        let k = weight[w_base + dy * 3 + dx];
                        let x_lo = 1usize.saturating_sub(dx);
                        let x_hi = (w + 1 - dx).min(w);
                        if x_lo >= x_hi {
                            continue;
                        }
                        axpy(
                            &mut out_row[x_lo..x_hi],
                            k,
                            &in_row[x_lo + dx - 1..x_hi + dx - 1],
                        );
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv3x3_backward<T: Scalar>(
    input: &Tensor<T>,
    grad_out: &Tensor<T>,
    in_ch: usize,
    out_ch: usize,
    weight: &[T],
    grad_weight: &mut [T],
    grad_bias: &mut [T],
) -> Tensor<T> {
    let (h, w) = (input.h, input.w);
    let mut grad_in = Tensor::zeros(in_ch, h, w);
    for oc in 0..out_ch {
        let go_plane = grad_out.channel(oc);
        let mut bias_acc = T::zero();
        for &g in go_plane {
            bias_acc += g;
        }
        grad_bias[oc] += bias_acc;

        for ic in 0..in_ch {
            let in_plane = input.channel(ic);
            let gi_plane = grad_in.channel_mut(ic);
            let w_base = (oc * in_ch + ic) * 9;
            for dy in 0..3usize {
                let y_lo = 1usize.saturating_sub(dy);
                let y_hi = (h + 1 - dy).min(h);
                for y in y_lo..y_hi {
                    let iny = y + dy - 1;
                    let go_row = &go_plane[y * w..(y + 1) * w];
                    let in_row = &in_plane[iny * w..(iny + 1) * w];
                    let gi_row = &mut gi_plane[iny * w..(iny + 1) * w];
                    for dx in 0..3usize {
                        let x_lo = 1usize.saturating_sub(dx);
                        let x_hi = (w + 1 - dx).min(w);
                        if x_lo >= x_hi {
                            continue;
                        }
                        let k_idx = w_base + dy * 3 + dx;
                        grad_weight[k_idx] +=
                            dot(&go_row[x_lo..x_hi], &in_row[x_lo + dx - 1..x_hi + dx - 1]);
                        axpy(
                            &mut gi_row[x_lo + dx - 1..x_hi + dx - 1],
                            weight[k_idx],
                            &go_row[x_lo..x_hi],
                        );
                    }
                }
            }
        }
    }
    grad_in
}

#[inline]
fn cell_bounds(i: usize, cells: usize, extent: usize) -> (usize, usize) {
    (i * extent / cells, ((i + 1) * extent / cells).max(i * extent / cells + 1))
}

fn adaptive_avg_forward<T: Scalar>(input: &Tensor<T>, out_h: usize, out_w: usize) -> Tensor<T> {
    let mut out = Tensor::zeros(input.c, out_h, out_w);
    for c in 0..input.c {
        let in_plane = input.channel(c);
        let out_plane = out.channel_mut(c);
        for oy in 0..out_h {
            let (y0, y1) = cell_bounds(oy, out_h, input.h);
            for ox in 0..out_w {
                let (x0, x1) = cell_bounds(ox, out_w, input.w);
                let mut acc = T::zero();
                for y in y0..y1 {
                    for x in x0..x1 {
                        acc += in_plane[y * input.w + x];
                    }
                }
                let norm = T::from_f64(1.0 / ((y1 - y0) * (x1 - x0)) as f64);
                out_plane[oy * out_w + ox] = acc * norm;
            }
        }
    }
    out
}

fn adaptive_avg_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input_shape: (usize, usize, usize),
    out_h: usize,
    out_w: usize,
) -> Tensor<T> {
    let (c, h, w) = input_shape;
    let mut grad_in = Tensor::zeros(c, h, w);
    for ch in 0..c {
        let go_plane = grad_out.channel(ch);
        let gi_plane = grad_in.channel_mut(ch);
        for oy in 0..out_h {
            let (y0, y1) = cell_bounds(oy, out_h, h);
            for ox in 0..out_w {
                let (x0, x1) = cell_bounds(ox, out_w, w);
                let g = go_plane[oy * out_w + ox]
                    * T::from_f64(1.0 / ((y1 - y0) * (x1 - x0)) as f64);
                for y in y0..y1 {
                    for x in x0..x1 {
                        gi_plane[y * w + x] += g;
                    }
                }
            }
        }
    }
    grad_in
}

fn avg_pool_forward<T: Scalar>(input: &Tensor<T>, factor: usize) -> Tensor<T> {
    let oh = input.h / factor;
    let ow = input.w / factor;
    let norm = T::from_f64(1.0 / (factor * factor) as f64);
    let mut out = Tensor::zeros(input.c, oh, ow);
    for c in 0..input.c {
        let in_plane = input.channel(c);
        let out_plane = out.channel_mut(c);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = T::zero();
                for fy in 0..factor {
                    let row = (oy * factor + fy) * input.w;
                    for fx in 0..factor {
                        acc += in_plane[row + ox * factor + fx];
                    }
                }
                out_plane[oy * ow + ox] = acc * norm;
            }
        }
    }
    out
}

fn avg_pool_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input_shape: (usize, usize, usize),
    factor: usize,
) -> Tensor<T> {
    let (c, h, w) = input_shape;
    let norm = T::from_f64(1.0 / (factor * factor) as f64);
    let mut grad_in = Tensor::zeros(c, h, w);
    for ch in 0..c {
        let go_plane = grad_out.channel(ch);
        let gi_plane = grad_in.channel_mut(ch);
        for oy in 0..grad_out.h {
            for ox in 0..grad_out.w {
                let g = go_plane[oy * grad_out.w + ox] * norm;
                for fy in 0..factor {
                    let row = (oy * factor + fy) * w;
                    for fx in 0..factor {
                        gi_plane[row + ox * factor + fx] += g;
                    }
                }
            }
        }
    }
    grad_in
}

fn max_pool_forward<T: Scalar>(input: &Tensor<T>) -> (Tensor<T>, Vec<u32>) {
    let oh = input.h / 2;
    let ow = input.w / 2;
    let plane = input.h * input.w;
    let mut out = Tensor::zeros(input.c, oh, ow);
    let mut argmax = vec![0u32; input.c * oh * ow];
    for c in 0..input.c {
        let in_plane = input.channel(c);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = T::neg_infinity();
                let mut best_idx = 0usize;
                for fy in 0..2 {
                    for fx in 0..2 {
                        let idx = (oy * 2 + fy) * input.w + ox * 2 + fx;
                        // Strict comparison keeps the first (row-major) maximum
                        // on ties, which makes backward deterministic.
                        if in_plane[idx] > best {
                            best = in_plane[idx];
                            best_idx = idx;
                        }
                    }
                }
                let out_idx = c * oh * ow + oy * ow + ox;
                out.data[out_idx] = best;
                argmax[out_idx] = (c * plane + best_idx) as u32;
            }
        }
    }
    (out, argmax)
}
