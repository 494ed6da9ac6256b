//! Minibatch Adam with decoupled weight decay.
//!
//! Decay is applied directly to the weights (not through the gradient) and
//! skips biases, so a step with zero data gradient strictly shrinks nonzero
//! weight magnitudes and leaves biases alone.

use super::tensor::Scalar;
use super::{EmbeddingNet, Gradients};

pub struct Adam<T> {
    learning_rate: T,
    beta1: T,
    beta2: T,
    epsilon: T,
    weight_decay: T,
    step: u32,
    m: Gradients<T>,
    v: Gradients<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(net: &EmbeddingNet<T>, learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            learning_rate: T::from_f64(learning_rate),
            beta1: T::from_f64(0.9),
            beta2: T::from_f64(0.999),
            epsilon: T::from_f64(1e-8),
            weight_decay: T::from_f64(weight_decay),
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    /// Apply one optimizer step for the given mean-batch gradients.
    pub fn step(&mut self, net: &mut EmbeddingNet<T>, grads: &Gradients<T>) {
        self.step += 1;
        let one = T::one();
        let bias_c1 = one - self.beta1.powi(self.step as i32);
        let bias_c2 = one - self.beta2.powi(self.step as i32);
        let lr_t = self.learning_rate * bias_c2.sqrt() / bias_c1;
        let decay = one - self.learning_rate * self.weight_decay;

        for (li, layer) in net.layers.iter_mut().enumerate() {
            update_slice(
                &mut layer.weight,
                &grads.weight[li],
                &mut self.m.weight[li],
                &mut self.v.weight[li],
                self.beta1,
                self.beta2,
                lr_t,
                self.epsilon,
            );
            if self.weight_decay > T::zero() {
                for w in &mut layer.weight {
                    *w *= decay;
                }
            }
            update_slice(
                &mut layer.bias,
                &grads.bias[li],
                &mut self.m.bias[li],
                &mut self.v.bias[li],
                self.beta1,
                self.beta2,
                lr_t,
                self.epsilon,
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn update_slice<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    m: &mut [T],
    v: &mut [T],
    beta1: T,
    beta2: T,
    lr_t: T,
    epsilon: T,
) {
    let one = T::one();
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (one - beta1) * g;
        v[i] = beta2 * v[i] + (one - beta2) * g * g;
        params[i] = params[i] - lr_t * m[i] / (v[i].sqrt() + epsilon);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embednet::EmbedNetConfig;

    fn tiny_net() -> EmbeddingNet<f64> {
        EmbeddingNet::init(
            &EmbedNetConfig {
                input_px: (8, 8),
                stem_pool: 1,
                conv_widths: vec![3],
                embed_dim: 4,
            },
            1,
        )
        .unwrap()
    }

    #[test]
    fn zero_gradient_step_shrinks_weights_and_keeps_biases() {
        let mut net = tiny_net();
        for layer in &mut net.layers {
            for b in &mut layer.bias {
                *b = 0.5;
            }
        }
        let before = net.clone();
        let grads = Gradients::zeros_like(&net);
        let mut adam = Adam::new(&net, 1e-2, 1e-2);
        adam.step(&mut net, &grads);
        for (layer, prev) in net.layers.iter().zip(before.layers.iter()) {
            for (w, pw) in layer.weight.iter().zip(prev.weight.iter()) {
                if *pw != 0.0 {
                    assert!(w.abs() < pw.abs(), "weight {pw} -> {w} did not shrink");
                    assert_eq!(w.signum(), pw.signum());
                }
            }
            for (b, pb) in layer.bias.iter().zip(prev.bias.iter()) {
                assert_eq!(b, pb, "bias must not decay");
            }
        }
    }

    #[test]
    fn step_descends_on_a_constant_gradient() {
        let mut net = tiny_net();
        let mut grads = Gradients::zeros_like(&net);
        for g in grads.weight.iter_mut().flatten() {
            *g = 1.0;
        }
        let w_before = net.layers[0].weight[0];
        let mut adam = Adam::new(&net, 1e-2, 0.0);
        adam.step(&mut net, &grads);
        assert!(net.layers[0].weight[0] < w_before);
    }
}
