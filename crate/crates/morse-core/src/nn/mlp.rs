//! A small dense feedforward denoiser with hand-rolled reverse-mode
//! gradients.
//!
//! Layers are affine-then-activation with a linear final layer. The forward
//! pass can retain a tape of intermediates; `backprop` consumes the tape and
//! produces flat parameter gradients (layout matching `params_flat`) plus
//! the gradient with respect to the input, which the shared-weight residual
//! model needs to chain through.

use crate::error::{Error, Result};
use crate::estimator::DashEstimator;
use crate::linalg::{Matrix, Vector};
use crate::nn::embed::sinusoidal_time_embed;
use crate::stream::NoiseStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    SiLU,
    ReLU,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::SiLU => x / (1.0 + (-x).exp()),
            Activation::ReLU => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative evaluated at the pre-activation value.
    #[inline]
    pub fn grad(self, x: f64) -> f64 {
        match self {
            Activation::SiLU => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 + x * (1.0 - s))
            }
            Activation::ReLU => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }
}

/// One affine layer: weight is (out x in), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn init(in_width: usize, out_width: usize, stream: &mut NoiseStream) -> Self {
        let scale = (1.0 / in_width as f64).sqrt();
        let mut weight = Matrix::zeros(out_width, in_width);
        for r in 0..out_width {
            for c in 0..in_width {
                weight.set(r, c, scale * stream.standard_normal());
            }
        }
        Self { weight, bias: vec![0.0; out_width] }
    }

    pub fn in_width(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_width(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_width());
        let mut out = self.weight.matvec(x);
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.weight.rows() * self.weight.cols() + self.bias.len()
    }
}

/// Architecture of an `MlpDenoiser`. `extra_cond_dim` widens the input for
/// bodies that receive conditioning beyond (x, t); it is 0 for a plain
/// denoiser.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub data_dim: usize,
    pub embed_dim: usize,
    pub extra_cond_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub total_steps: usize,
}

impl MlpConfig {
    /// Defaults used throughout the benchmarks: hidden [128, 128, 128],
    /// SiLU, 32-dim time embedding.
    pub fn denoiser_default(data_dim: usize, total_steps: usize) -> Self {
        Self {
            data_dim,
            embed_dim: 32,
            extra_cond_dim: 0,
            hidden: vec![128, 128, 128],
            activation: Activation::SiLU,
            total_steps,
        }
    }

    pub fn input_width(&self) -> usize {
        self.data_dim + self.embed_dim + self.extra_cond_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.data_dim == 0 {
            return Err(Error::Config("data_dim must be >= 1".into()));
        }
        if self.embed_dim == 0 || self.embed_dim % 2 != 0 {
            return Err(Error::Config("embed_dim must be positive even".into()));
        }
        if self.hidden.iter().any(|w| *w == 0) {
            return Err(Error::Config("hidden widths must be >= 1".into()));
        }
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Dense feedforward denoiser predicting noise from (x_t, t).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpDenoiser {
    config: MlpConfig,
    layers: Vec<DenseLayer>,
}

/// Intermediates retained by a tape-building forward pass.
#[derive(Debug, Clone)]
pub struct MlpTape {
    /// acts[l] is the input to layer l (acts[0] = network input).
    acts: Vec<Vec<f64>>,
    /// pres[l] is the pre-activation output of layer l.
    pres: Vec<Vec<f64>>,
}

impl MlpDenoiser {
    pub fn new(config: MlpConfig, stream: &mut NoiseStream) -> Result<Self> {
        config.validate()?;
        let mut widths = vec![config.input_width()];
        widths.extend_from_slice(&config.hidden);
        widths.push(config.data_dim);
        let layers = widths
            .windows(2)
            .map(|w| DenseLayer::init(w[0], w[1], stream))
            .collect();
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// Flat parameters: per layer, weight row-major then bias.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(layer.weight.as_slice());
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape { expected: self.param_count(), got: params.len() });
        }
        let mut off = 0;
        for layer in &mut self.layers {
            let w = layer.weight.rows() * layer.weight.cols();
            layer.weight.as_mut_slice().copy_from_slice(&params[off..off + w]);
            off += w;
            let b = layer.bias.len();
            layer.bias.copy_from_slice(&params[off..off + b]);
            off += b;
        }
        Ok(())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.config.input_width() {
            return Err(Error::Shape { expected: self.config.input_width(), got: input.len() });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let last = self.layers.len() - 1;
        let mut a = input.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut pre = layer.forward(&a);
            if l < last {
                for v in pre.iter_mut() {
                    *v = self.config.activation.apply(*v);
                }
            }
            a = pre;
        }
        Ok(a)
    }

    pub fn forward_with_tape(&self, input: &[f64]) -> Result<(Vec<f64>, MlpTape)> {
        self.check_input(input)?;
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut a = input.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let pre = layer.forward(&a);
            acts.push(a);
            pres.push(pre.clone());
            let mut next = pre;
            if l < last {
                for v in next.iter_mut() {
                    *v = self.config.activation.apply(*v);
                }
            }
            a = next;
        }
        Ok((a, MlpTape { acts, pres }))
    }

    fn check_tape(&self, tape: &MlpTape) -> Result<()> {
        let ok = tape.acts.len() == self.layers.len()
            && tape.pres.len() == self.layers.len()
            && self
                .layers
                .iter()
                .zip(&tape.acts)
                .zip(&tape.pres)
                .all(|((l, a), p)| a.len() == l.in_width() && p.len() == l.out_width());
        if ok {
            Ok(())
        } else {
            Err(Error::Contract("tape does not match this network's shape".into()))
        }
    }

    /// Reverse pass. `out_grad` is dL/d(output). Returns the flat parameter
    /// gradient (same layout as `params_flat`) and dL/d(input).
    pub fn backprop(&self, tape: &MlpTape, out_grad: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_tape(tape)?;
        if out_grad.len() != self.config.data_dim {
            return Err(Error::Shape { expected: self.config.data_dim, got: out_grad.len() });
        }
        let last = self.layers.len() - 1;
        let mut grads = vec![0.0; self.param_count()];
        // offsets of each layer's block in the flat layout
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            offsets.push(off);
            off += layer.param_count();
        }

        let mut g_pre: Vec<f64> = out_grad.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if l < last {
                // g_pre currently holds dL/d(act(pre_l)); fold in act'
                for (g, pre) in g_pre.iter_mut().zip(&tape.pres[l]) {
                    *g *= self.config.activation.grad(*pre);
                }
            }
            let (rows, cols) = (layer.out_width(), layer.in_width());
            let block = &mut grads[offsets[l]..offsets[l] + layer.param_count()];
            for r in 0..rows {
                let g = g_pre[r];
                let w_row = &mut block[r * cols..(r + 1) * cols];
                for (wc, a) in w_row.iter_mut().zip(&tape.acts[l]) {
                    *wc = g * a;
                }
            }
            block[rows * cols..].copy_from_slice(&g_pre);
            // dL/d(input of layer l) = W^T g_pre
            let mut g_in = vec![0.0; cols];
            for r in 0..rows {
                let g = g_pre[r];
                let w_row = layer.weight.row(r);
                for c in 0..cols {
                    g_in[c] += w_row[c] * g;
                }
            }
            g_pre = g_in;
        }
        Ok((grads, g_pre))
    }

    /// Assemble the denoiser input [x, embed(t)]. Only valid when the body
    /// takes no extra conditioning.
    pub fn denoiser_input(&self, x: &Vector, t: usize) -> Result<Vec<f64>> {
        if self.config.extra_cond_dim != 0 {
            return Err(Error::Contract(
                "this body takes extra conditioning; evaluate it through its wrapper".into(),
            ));
        }
        if x.dim() != self.config.data_dim {
            return Err(Error::Shape { expected: self.config.data_dim, got: x.dim() });
        }
        let embed = sinusoidal_time_embed(t, self.config.embed_dim, self.config.total_steps)?;
        let mut input = Vec::with_capacity(self.config.input_width());
        input.extend_from_slice(x.as_slice());
        input.extend_from_slice(embed.as_slice());
        Ok(input)
    }
}

impl DashEstimator for MlpDenoiser {
    fn data_dim(&self) -> usize {
        self.config.data_dim
    }

    fn estimate(&self, x: &Vector, t: usize) -> Result<Vector> {
        let input = self.denoiser_input(x, t)?;
        Vector::new(self.forward(&input)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(hidden: Vec<usize>, activation: Activation) -> MlpConfig {
        MlpConfig {
            data_dim: 2,
            embed_dim: 4,
            extra_cond_dim: 0,
            hidden,
            activation,
            total_steps: 100,
        }
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut stream = NoiseStream::from_seed(1);
        let mut net = MlpDenoiser::new(tiny_config(vec![5], Activation::SiLU), &mut stream).unwrap();
        let zeros = vec![0.0; net.param_count()];
        net.set_params_flat(&zeros).unwrap();
        let out = net.forward(&vec![1.0; 6]).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_linear_layer_is_affine() {
        // no hidden layers: output = W x + b exactly
        let mut stream = NoiseStream::from_seed(2);
        let mut net = MlpDenoiser::new(tiny_config(vec![], Activation::SiLU), &mut stream).unwrap();
        // 2x6 weight + 2 bias
        let params: Vec<f64> = (0..14).map(|i| i as f64 * 0.1).collect();
        net.set_params_flat(&params).unwrap();
        let x: Vec<f64> = vec![1.0, -1.0, 0.5, 0.0, 2.0, 1.0];
        let out = net.forward(&x).unwrap();
        for r in 0..2 {
            let w = &params[r * 6..(r + 1) * 6];
            let b = params[12 + r];
            let want: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + b;
            assert!((out[r] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_is_reproducible() {
        let mut s1 = NoiseStream::from_seed(3);
        let mut s2 = NoiseStream::from_seed(3);
        let net1 = MlpDenoiser::new(tiny_config(vec![8, 8], Activation::SiLU), &mut s1).unwrap();
        let net2 = MlpDenoiser::new(tiny_config(vec![8, 8], Activation::SiLU), &mut s2).unwrap();
        let x = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let a = net1.forward(&x).unwrap();
        let b = net2.forward(&x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_out_grad_gives_zero_gradients() {
        let mut stream = NoiseStream::from_seed(4);
        let net = MlpDenoiser::new(tiny_config(vec![7], Activation::Tanh), &mut stream).unwrap();
        let x = vec![0.3; 6];
        let (_, tape) = net.forward_with_tape(&x).unwrap();
        let (grads, g_in) = net.backprop(&tape, &[0.0, 0.0]).unwrap();
        assert!(grads.iter().all(|g| *g == 0.0));
        assert!(g_in.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn linear_layer_weight_gradient_is_outer_product() {
        // L = 0.5 ||y||^2 -> out_grad = y, dW = y x^T, db = y
        let mut stream = NoiseStream::from_seed(5);
        let net = MlpDenoiser::new(tiny_config(vec![], Activation::SiLU), &mut stream).unwrap();
        let x = vec![1.0, 2.0, -0.5, 0.25, 0.0, -1.0];
        let (y, tape) = net.forward_with_tape(&x).unwrap();
        let (grads, _) = net.backprop(&tape, &y).unwrap();
        for r in 0..2 {
            for c in 0..6 {
                assert!((grads[r * 6 + c] - y[r] * x[c]).abs() < 1e-15);
            }
        }
        assert!((grads[12] - y[0]).abs() < 1e-15);
        assert!((grads[13] - y[1]).abs() < 1e-15);
    }

    /// Central finite differences over every parameter; shared by the
    /// gradient-correctness suites.
    pub(crate) fn finite_diff_check(net: &MlpDenoiser, input: &[f64]) {
        let params = net.params_flat();
        let (y, tape) = net.forward_with_tape(input).unwrap();
        // L = 0.5 ||y - target||^2 with a fixed shifted target
        let target: Vec<f64> = y.iter().enumerate().map(|(i, v)| v - (0.3 + i as f64 * 0.1)).collect();
        let out_grad: Vec<f64> = y.iter().zip(&target).map(|(a, b)| a - b).collect();
        let (grads, _) = net.backprop(&tape, &out_grad).unwrap();

        let loss = |p: &[f64]| -> f64 {
            let mut probe = net.clone();
            probe.set_params_flat(p).unwrap();
            let out = probe.forward(input).unwrap();
            0.5 * out.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        };
        let h = 1e-5;
        for i in 0..params.len() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let bp = grads[i];
            let err = (fd - bp).abs();
            assert!(
                err <= 1e-5 * fd.abs().max(bp.abs()) + 1e-8,
                "param {i}: backprop {bp} vs fd {fd}"
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences_two_hidden() {
        let mut stream = NoiseStream::from_seed(6);
        let net = MlpDenoiser::new(tiny_config(vec![9, 7], Activation::SiLU), &mut stream).unwrap();
        let input: Vec<f64> = (0..6).map(|i| 0.2 * (i as f64) - 0.5).collect();
        finite_diff_check(&net, &input);
    }

    #[test]
    fn gradients_match_finite_differences_all_activations() {
        for activation in [Activation::SiLU, Activation::ReLU, Activation::Tanh] {
            let mut stream = NoiseStream::from_seed(7);
            let net =
                MlpDenoiser::new(tiny_config(vec![6, 5], activation), &mut stream).unwrap();
            let input: Vec<f64> = (0..6).map(|i| 0.37 * (i as f64) - 1.1).collect();
            finite_diff_check(&net, &input);
        }
    }

    #[test]
    fn tape_from_other_shape_rejected() {
        let mut stream = NoiseStream::from_seed(8);
        let net_a = MlpDenoiser::new(tiny_config(vec![5], Activation::SiLU), &mut stream).unwrap();
        let net_b = MlpDenoiser::new(tiny_config(vec![6], Activation::SiLU), &mut stream).unwrap();
        let (_, tape) = net_a.forward_with_tape(&vec![0.1; 6]).unwrap();
        assert!(matches!(
            net_b.backprop(&tape, &[1.0, 1.0]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn params_roundtrip() {
        let mut stream = NoiseStream::from_seed(9);
        let mut net = MlpDenoiser::new(tiny_config(vec![4, 4], Activation::SiLU), &mut stream).unwrap();
        let p = net.params_flat();
        net.set_params_flat(&p).unwrap();
        assert_eq!(net.params_flat(), p);
        assert!(net.set_params_flat(&p[1..]).is_err());
    }
}
