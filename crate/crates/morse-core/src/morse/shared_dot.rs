//! Residual estimator built on a frozen denoiser body.
//!
//! The trained denoiser's layers are reused as-is: a trainable input
//! projection maps the (wider) conditioned input onto the body's input
//! width, every body layer gains a low-rank adapter (frozen(W x + b) +
//! scale * B A x), and a trainable output projection maps back to data
//! width. Only the projections and adapters ever receive updates; the body
//! stays bit-identical through training.
//!
//! The output projection starts at zero, so an untrained residual model is
//! exactly the zero corrector.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::morse::{DotEstimator, InputMask};
use crate::nn::embed::sinusoidal_time_embed;
use crate::nn::mlp::{DenseLayer, MlpDenoiser};
use crate::stream::NoiseStream;

/// Low-rank adapter for one body layer: A is (rank x in), B is (out x rank).
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    pub a: Matrix,
    pub b: Matrix,
}

/// Std-dev of the A-matrix initialization.
const LORA_A_INIT_STD: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct SharedDot {
    base: MlpDenoiser,
    mask: InputMask,
    rank: usize,
    lora_scale: f64,
    in_proj: DenseLayer,
    out_proj: DenseLayer,
    adapters: Vec<LoraAdapter>,
}

/// Intermediates for the trainable-parameter reverse pass.
#[derive(Debug, Clone)]
pub struct SharedDotTape {
    cond: Vec<f64>,
    /// acts[l] = input to body layer l (acts[0] is the projected input).
    acts: Vec<Vec<f64>>,
    pres: Vec<Vec<f64>>,
    /// mids[l] = A_l * acts[l].
    mids: Vec<Vec<f64>>,
    /// input to the output projection.
    body_out: Vec<f64>,
}

/// Flat gradient over the trainable parameters, in `trainable_params_flat`
/// layout.
pub type SharedDotGradients = Vec<f64>;

impl SharedDot {
    /// Wrap a trained denoiser body. The body must be a plain denoiser (no
    /// extra conditioning of its own); `rank` must not exceed any body
    /// layer's input width.
    pub fn build(
        base: &MlpDenoiser,
        mask: InputMask,
        rank: usize,
        lora_scale: f64,
        stream: &mut NoiseStream,
    ) -> Result<Self> {
        if base.config().extra_cond_dim != 0 {
            return Err(Error::Config("the shared body must be a plain denoiser".into()));
        }
        if rank == 0 {
            return Err(Error::Config("lora rank must be >= 1".into()));
        }
        for (l, layer) in base.layers().iter().enumerate() {
            if rank > layer.in_width() {
                return Err(Error::Config(format!(
                    "lora rank {rank} exceeds layer {l} input width {}",
                    layer.in_width()
                )));
            }
        }
        if !(lora_scale > 0.0) {
            return Err(Error::Config("lora scale must be > 0".into()));
        }

        let data_dim = base.config().data_dim;
        let embed_dim = base.config().embed_dim;
        let cond_width = data_dim
            + embed_dim
            + if mask.use_x_ts { data_dim } else { 0 }
            + if mask.use_z_ts { data_dim } else { 0 }
            + if mask.use_t_s { embed_dim } else { 0 };

        let in_proj = DenseLayer::init(cond_width, base.config().input_width(), stream);
        // zero output projection: the untrained model is the zero corrector
        let out_proj = DenseLayer { weight: Matrix::zeros(data_dim, data_dim), bias: vec![0.0; data_dim] };

        let adapters = base
            .layers()
            .iter()
            .map(|layer| {
                let mut a = Matrix::zeros(rank, layer.in_width());
                for v in a.as_mut_slice() {
                    *v = LORA_A_INIT_STD * stream.standard_normal();
                }
                LoraAdapter { a, b: Matrix::zeros(layer.out_width(), rank) }
            })
            .collect();

        Ok(Self { base: base.clone(), mask, rank, lora_scale, in_proj, out_proj, adapters })
    }

    pub fn base(&self) -> &MlpDenoiser {
        &self.base
    }

    pub fn mask(&self) -> InputMask {
        self.mask
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn lora_scale(&self) -> f64 {
        self.lora_scale
    }

    pub fn adapters(&self) -> &[LoraAdapter] {
        &self.adapters
    }

    pub fn cond_width(&self) -> usize {
        self.in_proj.in_width()
    }

    /// Assemble the conditioned input: [x_ti, embed(t_i)] always, then the
    /// masked-in anchor observations [x_ts], [z_ts], [embed(t_s)].
    pub fn cond_input(
        &self,
        x_ts: &Vector,
        x_ti: &Vector,
        z_ts: &Vector,
        t_s: usize,
        t_i: usize,
    ) -> Result<Vec<f64>> {
        let data_dim = self.base.config().data_dim;
        let embed_dim = self.base.config().embed_dim;
        let total = self.base.config().total_steps;
        for (name, v) in [("x_ts", x_ts), ("x_ti", x_ti), ("z_ts", z_ts)] {
            if v.dim() != data_dim {
                return Err(Error::Shape { expected: data_dim, got: v.dim() })
                    .map_err(|e| Error::Config(format!("{name}: {e}")));
            }
        }
        let mut cond = Vec::with_capacity(self.cond_width());
        cond.extend_from_slice(x_ti.as_slice());
        cond.extend_from_slice(sinusoidal_time_embed(t_i, embed_dim, total)?.as_slice());
        if self.mask.use_x_ts {
            cond.extend_from_slice(x_ts.as_slice());
        }
        if self.mask.use_z_ts {
            cond.extend_from_slice(z_ts.as_slice());
        }
        if self.mask.use_t_s {
            cond.extend_from_slice(sinusoidal_time_embed(t_s, embed_dim, total)?.as_slice());
        }
        Ok(cond)
    }

    /// One adapted body layer: frozen affine plus the scaled low-rank path.
    pub fn adapted_layer_pre(&self, l: usize, input: &[f64]) -> Vec<f64> {
        let mut pre = self.base.layers()[l].forward(input);
        let adapter = &self.adapters[l];
        let mid = adapter.a.matvec(input);
        let low = adapter.b.matvec(&mid);
        for (p, v) in pre.iter_mut().zip(&low) {
            *p += self.lora_scale * v;
        }
        pre
    }

    pub fn forward_cond(&self, cond: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cond_with_tape(cond)?.0)
    }

    pub fn forward_cond_with_tape(&self, cond: &[f64]) -> Result<(Vec<f64>, SharedDotTape)> {
        if cond.len() != self.cond_width() {
            return Err(Error::Shape { expected: self.cond_width(), got: cond.len() });
        }
        let layers = self.base.layers();
        let last = layers.len() - 1;
        let activation = self.base.config().activation;

        let mut acts = Vec::with_capacity(layers.len());
        let mut pres = Vec::with_capacity(layers.len());
        let mut mids = Vec::with_capacity(layers.len());

        let mut a = self.in_proj.forward(cond);
        for (l, layer) in layers.iter().enumerate() {
            let mut pre = layer.forward(&a);
            let adapter = &self.adapters[l];
            let mid = adapter.a.matvec(&a);
            let low = adapter.b.matvec(&mid);
            for (p, v) in pre.iter_mut().zip(&low) {
                *p += self.lora_scale * v;
            }
            acts.push(a);
            mids.push(mid);
            pres.push(pre.clone());
            let mut next = pre;
            if l < last {
                for v in next.iter_mut() {
                    *v = activation.apply(*v);
                }
            }
            a = next;
        }
        let out = self.out_proj.forward(&a);
        Ok((out, SharedDotTape { cond: cond.to_vec(), acts, pres, mids, body_out: a }))
    }

    /// Number of trainable scalars (projections + adapters). The frozen body
    /// is excluded.
    pub fn trainable_param_count(&self) -> usize {
        self.in_proj.param_count()
            + self.out_proj.param_count()
            + self
                .adapters
                .iter()
                .map(|ad| ad.a.rows() * ad.a.cols() + ad.b.rows() * ad.b.cols())
                .sum::<usize>()
    }

    /// Flat trainable parameters: in_proj (weight, bias), per body layer the
    /// adapter (A, B), then out_proj (weight, bias).
    pub fn trainable_params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.trainable_param_count());
        out.extend_from_slice(self.in_proj.weight.as_slice());
        out.extend_from_slice(&self.in_proj.bias);
        for ad in &self.adapters {
            out.extend_from_slice(ad.a.as_slice());
            out.extend_from_slice(ad.b.as_slice());
        }
        out.extend_from_slice(self.out_proj.weight.as_slice());
        out.extend_from_slice(&self.out_proj.bias);
        out
    }

    pub fn set_trainable_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.trainable_param_count() {
            return Err(Error::Shape { expected: self.trainable_param_count(), got: params.len() });
        }
        let mut off = 0;
        let take = |dst: &mut [f64], off: &mut usize| {
            dst.copy_from_slice(&params[*off..*off + dst.len()]);
            *off += dst.len();
        };
        take(self.in_proj.weight.as_mut_slice(), &mut off);
        take(&mut self.in_proj.bias, &mut off);
        for ad in &mut self.adapters {
            take(ad.a.as_mut_slice(), &mut off);
            take(ad.b.as_mut_slice(), &mut off);
        }
        take(self.out_proj.weight.as_mut_slice(), &mut off);
        take(&mut self.out_proj.bias, &mut off);
        Ok(())
    }

    /// Reverse pass over the trainable parameters only; gradient flows
    /// through the frozen body weights without touching them.
    pub fn backprop(&self, tape: &SharedDotTape, out_grad: &[f64]) -> Result<SharedDotGradients> {
        let data_dim = self.base.config().data_dim;
        if out_grad.len() != data_dim {
            return Err(Error::Shape { expected: data_dim, got: out_grad.len() });
        }
        if tape.cond.len() != self.cond_width() || tape.acts.len() != self.base.layers().len() {
            return Err(Error::Contract("tape does not match this model's shape".into()));
        }
        let layers = self.base.layers();
        let last = layers.len() - 1;
        let activation = self.base.config().activation;

        // gradient blocks, assembled in flat order at the end
        let mut d_in_w = vec![0.0; self.in_proj.weight.rows() * self.in_proj.weight.cols()];
        let mut d_in_b = vec![0.0; self.in_proj.bias.len()];
        let mut d_adapters: Vec<(Vec<f64>, Vec<f64>)> = self
            .adapters
            .iter()
            .map(|ad| {
                (vec![0.0; ad.a.rows() * ad.a.cols()], vec![0.0; ad.b.rows() * ad.b.cols()])
            })
            .collect();

        // out_proj
        let mut d_out_w = vec![0.0; self.out_proj.weight.rows() * self.out_proj.weight.cols()];
        let d_out_b = out_grad.to_vec();
        let out_in = self.out_proj.weight.cols();
        for r in 0..self.out_proj.weight.rows() {
            for c in 0..out_in {
                d_out_w[r * out_in + c] = out_grad[r] * tape.body_out[c];
            }
        }
        let mut g_a = vec![0.0; out_in];
        for r in 0..self.out_proj.weight.rows() {
            let g = out_grad[r];
            let row = self.out_proj.weight.row(r);
            for c in 0..out_in {
                g_a[c] += row[c] * g;
            }
        }

        // body layers in reverse
        for l in (0..layers.len()).rev() {
            let layer = &layers[l];
            let adapter = &self.adapters[l];
            let mut g_pre = g_a;
            if l < last {
                for (g, pre) in g_pre.iter_mut().zip(&tape.pres[l]) {
                    *g *= activation.grad(*pre);
                }
            }
            let (rows, cols) = (layer.out_width(), layer.in_width());
            // dB = scale * g_pre (outer) mid
            let (d_a, d_b) = &mut d_adapters[l];
            for r in 0..rows {
                let g = self.lora_scale * g_pre[r];
                for k in 0..self.rank {
                    d_b[r * self.rank + k] = g * tape.mids[l][k];
                }
            }
            // g_mid = scale * B^T g_pre
            let mut g_mid = vec![0.0; self.rank];
            for r in 0..rows {
                let g = self.lora_scale * g_pre[r];
                let b_row = adapter.b.row(r);
                for k in 0..self.rank {
                    g_mid[k] += b_row[k] * g;
                }
            }
            // dA = g_mid (outer) act_in
            for k in 0..self.rank {
                let g = g_mid[k];
                for c in 0..cols {
                    d_a[k * cols + c] = g * tape.acts[l][c];
                }
            }
            // g wrt layer input: frozen path W^T g_pre plus lora path A^T g_mid
            let mut g_in = vec![0.0; cols];
            for r in 0..rows {
                let g = g_pre[r];
                let row = layer.weight.row(r);
                for c in 0..cols {
                    g_in[c] += row[c] * g;
                }
            }
            for k in 0..self.rank {
                let g = g_mid[k];
                let a_row = adapter.a.row(k);
                for c in 0..cols {
                    g_in[c] += a_row[c] * g;
                }
            }
            g_a = g_in;
        }

        // in_proj (affine, no activation between it and the body)
        let in_rows = self.in_proj.weight.rows();
        let in_cols = self.in_proj.weight.cols();
        for r in 0..in_rows {
            let g = g_a[r];
            for c in 0..in_cols {
                d_in_w[r * in_cols + c] = g * tape.cond[c];
            }
        }
        d_in_b.copy_from_slice(&g_a);

        let mut flat = Vec::with_capacity(self.trainable_param_count());
        flat.extend_from_slice(&d_in_w);
        flat.extend_from_slice(&d_in_b);
        for (d_a, d_b) in &d_adapters {
            flat.extend_from_slice(d_a);
            flat.extend_from_slice(d_b);
        }
        flat.extend_from_slice(&d_out_w);
        flat.extend_from_slice(&d_out_b);
        Ok(flat)
    }
}

impl DotEstimator for SharedDot {
    fn data_dim(&self) -> usize {
        self.base.config().data_dim
    }

    fn residual(
        &self,
        x_ts: &Vector,
        x_ti: &Vector,
        z_ts: &Vector,
        t_s: usize,
        t_i: usize,
    ) -> Result<Vector> {
        let cond = self.cond_input(x_ts, x_ti, z_ts, t_s, t_i)?;
        Vector::new(self.forward_cond(&cond)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::{Activation, MlpConfig};
    use crate::stream::{NoiseStream, StreamPurpose};

    fn base_net(hidden: Vec<usize>, seed: u64) -> MlpDenoiser {
        let mut stream = NoiseStream::derive(seed, StreamPurpose::ParamInit, 0);
        let config = MlpConfig {
            data_dim: 2,
            embed_dim: 8,
            extra_cond_dim: 0,
            hidden,
            activation: Activation::SiLU,
            total_steps: 100,
        };
        MlpDenoiser::new(config, &mut stream).unwrap()
    }

    fn randomize_trainables(dot: &mut SharedDot, seed: u64) {
        let mut stream = NoiseStream::from_seed(seed);
        let params: Vec<f64> =
            (0..dot.trainable_param_count()).map(|_| 0.1 * stream.standard_normal()).collect();
        dot.set_trainable_params_flat(&params).unwrap();
    }

    #[test]
    fn zero_init_adapters_preserve_each_layer_bitwise() {
        let base = base_net(vec![16, 16], 1);
        let mut stream = NoiseStream::from_seed(2);
        let dot = SharedDot::build(&base, InputMask::full(), 4, 1.0, &mut stream).unwrap();
        let mut probe = NoiseStream::from_seed(3);
        for (l, layer) in base.layers().iter().enumerate() {
            let input: Vec<f64> = (0..layer.in_width()).map(|_| probe.standard_normal()).collect();
            let adapted = dot.adapted_layer_pre(l, &input);
            let frozen = layer.forward(&input);
            assert_eq!(adapted, frozen, "layer {l} not base-equivalent at zero init");
        }
    }

    #[test]
    fn untrained_residual_is_exactly_zero() {
        let base = base_net(vec![16], 4);
        let mut stream = NoiseStream::from_seed(5);
        let dot = SharedDot::build(&base, InputMask::full(), 4, 1.0, &mut stream).unwrap();
        let x = Vector::new(vec![0.5, -0.25]).unwrap();
        let r = dot.residual(&x, &x, &x, 50, 10).unwrap();
        assert!(r.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn trainable_count_pinned_for_default_architecture() {
        // defaults: data 2, embed 32, hidden [128, 128, 128], full mask,
        // rank 8. Counted ahead of the build:
        //   base 37762; in_proj 70*34+34 = 2414; out_proj 6;
        //   lora 8*(34+128) + 8*(128+128)*2 + 8*(128+2) = 6432; total 8852.
        let mut stream = NoiseStream::from_seed(6);
        let config = MlpConfig::denoiser_default(2, 1000);
        let base = MlpDenoiser::new(config, &mut stream).unwrap();
        assert_eq!(base.param_count(), 37762);
        let dot = SharedDot::build(&base, InputMask::full(), 8, 1.0, &mut stream).unwrap();
        assert_eq!(dot.cond_width(), 70);
        assert_eq!(dot.trainable_param_count(), 8852);
        let fraction = dot.trainable_param_count() as f64 / base.param_count() as f64;
        assert!(fraction < 0.30, "trainable fraction {fraction} not under 30%");
    }

    #[test]
    fn rank_exceeding_layer_width_rejected() {
        let base = base_net(vec![4], 7);
        let mut stream = NoiseStream::from_seed(8);
        // body layer 1 has input width 4 < rank 8
        assert!(SharedDot::build(&base, InputMask::full(), 8, 1.0, &mut stream).is_err());
        assert!(SharedDot::build(&base, InputMask::full(), 0, 1.0, &mut stream).is_err());
    }

    #[test]
    fn masked_out_observations_cannot_influence_output() {
        let base = base_net(vec![12], 9);
        let mut stream = NoiseStream::from_seed(10);
        let mut dot = SharedDot::build(&base, InputMask::empty(), 4, 1.0, &mut stream).unwrap();
        randomize_trainables(&mut dot, 11);
        let x_ti = Vector::new(vec![0.4, 0.6]).unwrap();
        let mut probe = NoiseStream::from_seed(12);
        let r0 = dot
            .residual(&probe.standard_normal_vector(2), &x_ti, &probe.standard_normal_vector(2), 90, 10)
            .unwrap();
        for _ in 0..10 {
            let r = dot
                .residual(
                    &probe.standard_normal_vector(2),
                    &x_ti,
                    &probe.standard_normal_vector(2),
                    probe.uniform_inclusive(11, 100),
                    10,
                )
                .unwrap();
            assert_eq!(r, r0, "masked inputs leaked into the output");
        }
    }

    #[test]
    fn full_mask_observations_do_influence_output() {
        let base = base_net(vec![12], 13);
        let mut stream = NoiseStream::from_seed(14);
        let mut dot = SharedDot::build(&base, InputMask::full(), 4, 1.0, &mut stream).unwrap();
        randomize_trainables(&mut dot, 15);
        let x_ti = Vector::new(vec![0.4, 0.6]).unwrap();
        let a = dot
            .residual(&Vector::new(vec![1.0, 1.0]).unwrap(), &x_ti, &Vector::zeros(2), 90, 10)
            .unwrap();
        let b = dot
            .residual(&Vector::new(vec![-1.0, 2.0]).unwrap(), &x_ti, &Vector::zeros(2), 90, 10)
            .unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let base = base_net(vec![10, 9], 16);
        let mut stream = NoiseStream::from_seed(17);
        let mut dot = SharedDot::build(&base, InputMask::full(), 3, 1.0, &mut stream).unwrap();
        randomize_trainables(&mut dot, 18);

        let cond: Vec<f64> = (0..dot.cond_width()).map(|i| 0.1 * (i as f64) - 0.7).collect();
        let (y, tape) = dot.forward_cond_with_tape(&cond).unwrap();
        let target: Vec<f64> = y.iter().map(|v| v - 0.4).collect();
        let out_grad: Vec<f64> = y.iter().zip(&target).map(|(a, b)| a - b).collect();
        let grads = dot.backprop(&tape, &out_grad).unwrap();

        let params = dot.trainable_params_flat();
        let loss = |p: &[f64]| -> f64 {
            let mut probe = dot.clone();
            probe.set_trainable_params_flat(p).unwrap();
            let out = probe.forward_cond(&cond).unwrap();
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
            assert!(
                (fd - bp).abs() <= 1e-5 * fd.abs().max(bp.abs()) + 1e-8,
                "trainable param {i}: backprop {bp} vs fd {fd}"
            );
        }
    }

    #[test]
    fn setting_trainables_never_touches_the_body() {
        let base = base_net(vec![16, 16], 19);
        let frozen = base.params_flat();
        let mut stream = NoiseStream::from_seed(20);
        let mut dot = SharedDot::build(&base, InputMask::full(), 4, 1.0, &mut stream).unwrap();
        randomize_trainables(&mut dot, 21);
        let after = dot.base().params_flat();
        assert_eq!(frozen.len(), after.len());
        assert!(frozen.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn trainable_params_roundtrip() {
        let base = base_net(vec![8], 22);
        let mut stream = NoiseStream::from_seed(23);
        let mut dot = SharedDot::build(&base, InputMask::full(), 2, 1.0, &mut stream).unwrap();
        let p = dot.trainable_params_flat();
        dot.set_trainable_params_flat(&p).unwrap();
        assert_eq!(dot.trainable_params_flat(), p);
        assert!(dot.set_trainable_params_flat(&p[1..]).is_err());
    }
}
