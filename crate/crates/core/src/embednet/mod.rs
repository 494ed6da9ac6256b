//! Deep-metric-learning core: a compact convolutional embedding network
//! trained in Siamese configuration with the overlap loss
//! `L = (d - (1 - o))^2`, where `d` is the L2 distance between the two
//! embeddings and `o` the footprint overlap of the pair.
//!
//! Forward, backward, and the Adam optimizer are implemented from scratch;
//! embeddings are the raw activations of the final fully-connected layer
//! (not length-normalized, since the loss targets absolute distances).

pub mod checkpoint;
mod layers;
mod optimizer;
mod tensor;
mod train;

pub use layers::{Layer, LayerSpec, LayerTrace};
pub use optimizer::Adam;
pub use tensor::{Scalar, Tensor};
pub use train::{
    mean_abs_residual, train_siamese, validation_split, ImageStore, TrainConfig, TrainReport,
};

use crate::error::{Error, Result};
use crate::raster::Raster;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

/// Architecture description: conv-pool blocks on a pooled stem, global
/// average pooling, then one fully-connected embedding layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedNetConfig {
    /// Expected input raster size (width, height).
    pub input_px: (usize, usize),
    /// Average-pool factor applied to the input before the first conv block.
    pub stem_pool: usize,
    /// Output channels of each conv block (conv 3x3 -> ReLU -> max pool 2x2).
    pub conv_widths: Vec<usize>,
    /// Adaptive-average-pool output grid before the embedding layer;
    /// `(1, 1)` is global average pooling.
    pub pool_grid: (usize, usize),
    /// Dimension of the final embedding.
    pub embed_dim: usize,
}

impl Default for EmbedNetConfig {
    fn default() -> Self {
        Self {
            input_px: (128, 96),
            stem_pool: 2,
            conv_widths: vec![16, 32, 64, 64],
            pool_grid: (1, 1),
            embed_dim: 64,
        }
    }
}

impl EmbedNetConfig {
    /// Expand the config into the layer sequence.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        if self.stem_pool > 1 {
            specs.push(LayerSpec::AvgPool {
                factor: self.stem_pool,
            });
        }
        let mut in_ch = 1;
        for &width in &self.conv_widths {
            specs.push(LayerSpec::Conv {
                in_ch,
                out_ch: width,
            });
            specs.push(LayerSpec::Relu);
            specs.push(LayerSpec::MaxPool);
            in_ch = width;
        }
        let (gh, gw) = self.pool_grid;
        if (gh, gw) == (1, 1) {
            specs.push(LayerSpec::GlobalAvgPool);
        } else {
            specs.push(LayerSpec::AdaptiveAvgPool { out_h: gh, out_w: gw });
        }
        specs.push(LayerSpec::Dense {
            in_dim: in_ch * gh * gw,
            out_dim: self.embed_dim,
        });
        specs
    }

    /// Validate that the spatial extent survives all pooling stages.
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.conv_widths.is_empty() {
            return Err(Error::invalid("network needs conv widths and embed_dim > 0"));
        }
        if self.stem_pool == 0 {
            return Err(Error::invalid("stem_pool must be at least 1"));
        }
        if self.pool_grid.0 == 0 || self.pool_grid.1 == 0 {
            return Err(Error::invalid("pool_grid cells must be positive"));
        }
        let (mut w, mut h) = self.input_px;
        w /= self.stem_pool;
        h /= self.stem_pool;
        for _ in &self.conv_widths {
            w /= 2;
            h /= 2;
        }
        if w < self.pool_grid.1 || h < self.pool_grid.0 {
            return Err(Error::invalid(format!(
                "input {}x{} pools below the {}x{} output grid",
                self.input_px.0, self.input_px.1, self.pool_grid.0, self.pool_grid.1
            )));
        }
        Ok(())
    }
}

/// The embedding network: architecture plus parameters.
#[derive(Debug, Clone)]
pub struct EmbeddingNet<T> {
    pub config: EmbedNetConfig,
    pub layers: Vec<Layer<T>>,
}

/// Per-layer parameter gradients, aligned with [`EmbeddingNet::layers`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub weight: Vec<Vec<T>>,
    pub bias: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &EmbeddingNet<T>) -> Self {
        Self {
            weight: net.layers.iter().map(|l| vec![T::zero(); l.weight.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![T::zero(); l.bias.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.weight.iter_mut().zip(other.weight.iter()) {
            for (x, &y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
        for (a, b) in self.bias.iter_mut().zip(other.bias.iter()) {
            for (x, &y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for v in self.weight.iter_mut().flatten() {
            *v *= s;
        }
        for v in self.bias.iter_mut().flatten() {
            *v *= s;
        }
    }

    pub fn l2_norm(&self) -> f64 {
        let mut acc = 0.0;
        for v in self.weight.iter().flatten().chain(self.bias.iter().flatten()) {
            let x = v.as_f64();
            acc += x * x;
        }
        acc.sqrt()
    }
}

impl<T: Scalar> EmbeddingNet<T> {
    /// Initialize with fan-in-scaled uniform weights and zero biases,
    /// deterministically from the seed. The random stream is drawn in f64 so
    /// f32 and f64 nets share initial values.
    pub fn init(config: &EmbedNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = StdRng::seed_from_u64(seed);
        let layers = config
            .layer_specs()
            .into_iter()
            .map(|spec| {
                let (w_len, b_len, fan_in) = match spec {
                    LayerSpec::Conv { in_ch, out_ch } => (out_ch * in_ch * 9, out_ch, in_ch * 9),
                    LayerSpec::Dense { in_dim, out_dim } => (out_dim * in_dim, out_dim, in_dim),
                    _ => (0, 0, 1),
                };
                let bound = (6.0 / fan_in as f64).sqrt();
                let weight = (0..w_len)
                    .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
                    .collect();
                Layer {
                    spec,
                    weight,
                    bias: vec![T::zero(); b_len],
                }
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            layers,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.parameter_count()).sum()
    }

    pub fn weights_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Full forward pass, keeping per-layer traces for backpropagation.
    pub fn forward_traced(&self, input: &Tensor<T>) -> (Vec<T>, Vec<LayerTrace<T>>) {
        let mut traces = Vec::with_capacity(self.layers.len());
        let mut act = input.clone();
        for layer in &self.layers {
            let (out, trace) = layer.forward(&act);
            traces.push(trace);
            act = out;
        }
        (act.data, traces)
    }

    /// Forward pass without traces.
    pub fn forward(&self, input: &Tensor<T>) -> Vec<T> {
        let mut act = input.clone();
        for layer in &self.layers {
            let (out, _) = layer.forward(&act);
            act = out;
        }
        act.data
    }

    /// Backpropagate an embedding gradient, accumulating into `grads`.
    pub fn backward_into(
        &self,
        traces: &[LayerTrace<T>],
        grad_embedding: &[T],
        grads: &mut Gradients<T>,
    ) {
        let mut grad = Tensor {
            c: grad_embedding.len(),
            h: 1,
            w: 1,
            data: grad_embedding.to_vec(),
        };
        for (i, layer) in self.layers.iter().enumerate().rev() {
            grad = layer.backward(&traces[i], &grad, &mut grads.weight[i], &mut grads.bias[i]);
        }
    }
}

/// Per-image standardization to zero mean, unit variance. Constant rasters
/// map to all zeros. Statistics are computed in f64 regardless of `T`.
pub fn normalize_input<T: Scalar>(raster: &Raster) -> Tensor<T> {
    let n = raster.data().len();
    let mut tensor = Tensor::zeros(1, raster.height(), raster.width());
    if n == 0 {
        return tensor;
    }
    let sum: f64 = raster.data().iter().map(|&v| v as f64).sum();
    let mean = sum / n as f64;
    let var: f64 = raster
        .data()
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n as f64;
    if var <= 0.0 {
        return tensor;
    }
    let inv_std = 1.0 / var.sqrt();
    for (out, &v) in tensor.data.iter_mut().zip(raster.data().iter()) {
        *out = T::from_f64((v as f64 - mean) * inv_std);
    }
    tensor
}

/// Embed one raster with the network. The raster must match the configured
/// input dimensions.
pub fn embed<T: Scalar>(net: &EmbeddingNet<T>, raster: &Raster) -> Result<Vec<T>> {
    let (w, h) = net.config.input_px;
    if raster.width() != w || raster.height() != h {
        return Err(Error::invalid(format!(
            "raster {}x{} does not match network input {}x{}",
            raster.width(),
            raster.height(),
            w,
            h
        )));
    }
    let out = net.forward(&normalize_input(raster));
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("network produced non-finite embedding"));
    }
    Ok(out)
}

/// Euclidean distance between two embeddings.
pub fn pair_distance<T: Scalar>(e_q: &[T], e_r: &[T]) -> Result<T> {
    if e_q.len() != e_r.len() {
        return Err(Error::invalid(format!(
            "embedding dims differ: {} vs {}",
            e_q.len(),
            e_r.len()
        )));
    }
    let mut acc = T::zero();
    for (&a, &b) in e_q.iter().zip(e_r.iter()) {
        let d = a - b;
        acc += d * d;
    }
    Ok(acc.sqrt())
}

/// The overlap loss `(d - (1 - o))^2`: zero exactly when the embedding
/// distance hits the target `1 - o`.
pub fn overlap_loss<T: Scalar>(d: T, o: f64) -> Result<T> {
    if !(0.0..=1.0).contains(&o) {
        return Err(Error::invalid(format!("overlap {o} outside [0, 1]")));
    }
    let residual = d - T::from_f64(1.0 - o);
    Ok(residual * residual)
}

/// One Siamese sample: two normalized input tensors plus the overlap label.
pub struct PairInput<T> {
    pub query: Tensor<T>,
    pub reference: Tensor<T>,
    pub overlap: f64,
}

/// Loss and shared-weight gradient contribution of a single pair.
/// Both branches' gradients are summed into one gradient set.
pub fn pair_backward<T: Scalar>(net: &EmbeddingNet<T>, pair: &PairInput<T>) -> (T, Gradients<T>) {
    let (e_q, trace_q) = net.forward_traced(&pair.query);
    let (e_r, trace_r) = net.forward_traced(&pair.reference);
    let d = pair_distance(&e_q, &e_r).expect("branch outputs share the embed dim");
    let target = T::from_f64(1.0 - pair.overlap);
    let residual = d - target;
    let loss = residual * residual;

    let mut grads = Gradients::zeros_like(net);
    if d > T::zero() {
        // dL/de_q = 2 (d - t) (e_q - e_r) / d; the reference branch gets the
        // negation. At d == 0 the norm is not differentiable; use the zero
        // subgradient. Each branch accumulates into its own buffer and the two
        // are combined with one addition per weight, so swapping (q, r) gives
        // bit-identical shared gradients.
        let scale = (residual + residual) / d;
        let grad_q: Vec<T> = e_q
            .iter()
            .zip(e_r.iter())
            .map(|(&a, &b)| scale * (a - b))
            .collect();
        let grad_r: Vec<T> = grad_q.iter().map(|&g| -g).collect();
        net.backward_into(&trace_q, &grad_q, &mut grads);
        let mut grads_r = Gradients::zeros_like(net);
        net.backward_into(&trace_r, &grad_r, &mut grads_r);
        grads.add_assign(&grads_r);
    }
    (loss, grads)
}

/// Mean loss and mean gradients over a batch of pairs.
///
/// Per-sample results are computed in parallel but reduced in input order, so
/// the outcome is identical for any worker count.
pub fn pair_batch_backward<T: Scalar>(
    net: &EmbeddingNet<T>,
    batch: &[PairInput<T>],
) -> (T, Gradients<T>) {
    use rayon::prelude::*;
    if batch.is_empty() {
        return (T::zero(), Gradients::zeros_like(net));
    }
    let per_sample: Vec<(T, Gradients<T>)> = batch
        .par_iter()
        .map(|pair| pair_backward(net, pair))
        .collect();
    let mut loss = T::zero();
    let mut grads = Gradients::zeros_like(net);
    for (l, g) in &per_sample {
        loss += *l;
        grads.add_assign(g);
    }
    let inv = T::from_f64(1.0 / batch.len() as f64);
    grads.scale(inv);
    (loss * inv, grads)
}

/// Mean loss of a batch without gradients (validation).
pub fn pair_batch_loss<T: Scalar>(net: &EmbeddingNet<T>, batch: &[PairInput<T>]) -> T {
    use rayon::prelude::*;
    if batch.is_empty() {
        return T::zero();
    }
    let total: f64 = batch
        .par_iter()
        .map(|pair| {
            let e_q = net.forward(&pair.query);
            let e_r = net.forward(&pair.reference);
            let d = pair_distance(&e_q, &e_r).expect("dims match");
            overlap_loss(d, pair.overlap).expect("label in range").as_f64()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    T::from_f64(total / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> EmbedNetConfig {
        EmbedNetConfig {
            input_px: (16, 12),
            stem_pool: 1,
            conv_widths: vec![4, 6],
            embed_dim: 8,
        }
    }

    fn random_raster(w: usize, h: usize, seed: u64) -> Raster {
        let mut rng = StdRng::seed_from_u64(seed);
        let data = (0..w * h).map(|_| rng.gen_range(0..=255)).collect();
        Raster::from_vec(w, h, data).unwrap()
    }

    #[test]
    fn normalize_constant_raster_is_all_zero() {
        let r = Raster::from_vec(4, 3, vec![77; 12]).unwrap();
        let t: Tensor<f64> = normalize_input(&r);
        assert!(t.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_standardizes_mean_and_variance() {
        let r = random_raster(16, 12, 3);
        let t: Tensor<f64> = normalize_input(&r);
        let n = t.data.len() as f64;
        let mean: f64 = t.data.iter().sum::<f64>() / n;
        let var: f64 = t.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-6, "mean {mean}");
        assert!((var - 1.0).abs() < 1e-6, "var {var}");
    }

    #[test]
    fn normalize_is_shift_invariant() {
        let mut rng = StdRng::seed_from_u64(4);
        let data: Vec<u8> = (0..48).map(|_| rng.gen_range(0..=200)).collect();
        let shifted: Vec<u8> = data.iter().map(|&v| v + 50).collect();
        let a: Tensor<f64> = normalize_input(&Raster::from_vec(8, 6, data).unwrap());
        let b: Tensor<f64> = normalize_input(&Raster::from_vec(8, 6, shifted).unwrap());
        for (x, y) in a.data.iter().zip(b.data.iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn embed_is_deterministic_and_sized() {
        let cfg = tiny_config();
        let net: EmbeddingNet<f32> = EmbeddingNet::init(&cfg, 5).unwrap();
        let r = random_raster(16, 12, 6);
        let a = embed(&net, &r).unwrap();
        let b = embed(&net, &r).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn embed_rejects_dim_mismatch() {
        let net: EmbeddingNet<f32> = EmbeddingNet::init(&tiny_config(), 5).unwrap();
        let r = random_raster(10, 12, 6);
        assert!(embed(&net, &r).is_err());
    }

    #[test]
    fn pair_distance_examples() {
        assert_eq!(pair_distance(&[1.0f64, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(pair_distance(&[0.0f64, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        let a = [0.3f64, -1.2, 0.7];
        let b = [1.0f64, 0.4, -0.2];
        assert_eq!(
            pair_distance(&a, &b).unwrap(),
            pair_distance(&b, &a).unwrap()
        );
        assert!(pair_distance(&a, &b[..2]).is_err());
    }

    #[test]
    fn overlap_loss_examples() {
        assert_eq!(overlap_loss(1.0f64, 0.0).unwrap(), 0.0);
        assert_eq!(overlap_loss(0.0f64, 1.0).unwrap(), 0.0);
        let l = overlap_loss(0.2f64, 0.5).unwrap();
        assert!((l - 0.09).abs() < 1e-12);
        assert!(overlap_loss(0.5f64, 1.5).is_err());
        assert!(overlap_loss(0.5f64, -0.1).is_err());
    }

    #[test]
    fn zero_residual_batch_has_zero_gradient() {
        let cfg = tiny_config();
        let mut net: EmbeddingNet<f64> = EmbeddingNet::init(&cfg, 7).unwrap();
        // Shrink the weights so distances land well inside (0, 1).
        for layer in &mut net.layers {
            for w in &mut layer.weight {
                *w *= 0.2;
            }
        }
        let q = normalize_input(&random_raster(16, 12, 8));
        let r = normalize_input(&random_raster(16, 12, 9));
        let d = pair_distance(&net.forward(&q), &net.forward(&r)).unwrap();
        assert!(d > 0.0 && d < 1.0, "pick weights so d lands in (0,1): {d}");
        let pair = PairInput {
            query: q,
            reference: r,
            overlap: 1.0 - d,
        };
        let (loss, grads) = pair_backward(&net, &pair);
        // o is set from a rounded 1 - d, so the residual is ulp-level.
        assert!(loss < 1e-16, "loss {loss}");
        assert!(grads.l2_norm() < 1e-8, "grad norm {}", grads.l2_norm());
    }

    #[test]
    fn duplicated_pair_leaves_mean_gradient_unchanged() {
        let cfg = tiny_config();
        let net: EmbeddingNet<f64> = EmbeddingNet::init(&cfg, 11).unwrap();
        let pair = || PairInput {
            query: normalize_input(&random_raster(16, 12, 12)),
            reference: normalize_input(&random_raster(16, 12, 13)),
            overlap: 0.4,
        };
        let single = [pair()];
        let doubled = [pair(), pair()];
        let (l1, g1) = pair_batch_backward(&net, &single);
        let (l2, g2) = pair_batch_backward(&net, &doubled);
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.weight.iter().flatten().zip(g2.weight.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn siamese_swap_is_symmetric() {
        let cfg = tiny_config();
        let net: EmbeddingNet<f64> = EmbeddingNet::init(&cfg, 15).unwrap();
        let q = normalize_input(&random_raster(16, 12, 16));
        let r = normalize_input(&random_raster(16, 12, 17));
        let (loss_a, grads_a) = pair_backward(
            &net,
            &PairInput {
                query: q.clone(),
                reference: r.clone(),
                overlap: 0.3,
            },
        );
        let (loss_b, grads_b) = pair_backward(
            &net,
            &PairInput {
                query: r,
                reference: q,
                overlap: 0.3,
            },
        );
        assert_eq!(loss_a, loss_b);
        for (a, b) in grads_a
            .weight
            .iter()
            .flatten()
            .zip(grads_b.weight.iter().flatten())
        {
            assert_eq!(*a, *b);
        }
    }

    /// Central finite differences over a sample of weights in every
    /// parameterized layer; the full-scale version runs in the acceptance
    /// suite.
    #[test]
    fn gradients_match_finite_differences() {
        let cfg = tiny_config();
        let net: EmbeddingNet<f64> = EmbeddingNet::init(&cfg, 19).unwrap();
        let pair = PairInput {
            query: normalize_input(&random_raster(16, 12, 20)),
            reference: normalize_input(&random_raster(16, 12, 21)),
            overlap: 0.35,
        };
        let (_, grads) = pair_backward(&net, &pair);

        let loss_of = |net: &EmbeddingNet<f64>| -> f64 {
            let e_q = net.forward(&pair.query);
            let e_r = net.forward(&pair.reference);
            let d = pair_distance(&e_q, &e_r).unwrap();
            overlap_loss(d, pair.overlap).unwrap()
        };

        let h = 1e-4;
        let mut rng = StdRng::seed_from_u64(22);
        let mut checked = 0;
        for li in 0..net.layers.len() {
            let wlen = net.layers[li].weight.len();
            if wlen == 0 {
                continue;
            }
            for _ in 0..12 {
                let wi = rng.gen_range(0..wlen);
                let mut perturbed = net.clone();
                perturbed.layers[li].weight[wi] += h;
                let up = loss_of(&perturbed);
                perturbed.layers[li].weight[wi] -= 2.0 * h;
                let down = loss_of(&perturbed);
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads.weight[li][wi];
                let denom = numeric.abs().max(analytic.abs()).max(1e-8);
                assert!(
                    (numeric - analytic).abs() / denom < 1e-3,
                    "layer {li} weight {wi}: analytic {analytic} numeric {numeric}"
                );
                checked += 1;
            }
            // A couple of bias entries per layer too.
            let blen = net.layers[li].bias.len();
            for _ in 0..3.min(blen) {
                let bi = rng.gen_range(0..blen);
                let mut perturbed = net.clone();
                perturbed.layers[li].bias[bi] += h;
                let up = loss_of(&perturbed);
                perturbed.layers[li].bias[bi] -= 2.0 * h;
                let down = loss_of(&perturbed);
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads.bias[li][bi];
                let denom = numeric.abs().max(analytic.abs()).max(1e-8);
                assert!(
                    (numeric - analytic).abs() / denom < 1e-3,
                    "layer {li} bias {bi}: analytic {analytic} numeric {numeric}"
                );
                checked += 1;
            }
        }
        assert!(checked >= 30, "checked only {checked} parameters");
    }
}
