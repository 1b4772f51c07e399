//! Residual-model training: (trajectory observation, residual target) pairs
//! generated from a frozen denoiser, the residual loss, and the training
//! loop.
//!
//! A training pair diffuses clean data to a random step t_s, evaluates the
//! frozen denoiser there, jumps to a random earlier step t_o with the
//! deterministic update, evaluates the denoiser again, and regresses the
//! residual model onto the difference of the two estimates.

use rayon::prelude::*;

use crate::dataset::DataSampler;
use crate::error::{Error, Result};
use crate::estimator::DashEstimator;
use crate::linalg::Vector;
use crate::morse::{DotEstimator, SharedDot};
use crate::nn::adam::{AdamConfig, AdamState};
use crate::sampler::{ddim_step, ddpm_step, SamplerKind};
use crate::schedule::{forward_diffuse, NoiseSchedule};
use crate::stream::{NoiseStream, StreamPurpose};

const GRAD_CHUNKS: usize = 8;

/// An ordered step pair with T >= t_s > t_o >= 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepPair {
    pub t_s: usize,
    pub t_o: usize,
}

impl StepPair {
    pub fn new(t_s: usize, t_o: usize, total_steps: usize) -> Result<Self> {
        if t_s > total_steps || t_o >= t_s {
            return Err(Error::Range(format!(
                "step pair must satisfy T >= t_s > t_o >= 0, got ({t_s}, {t_o}) with T={total_steps}"
            )));
        }
        Ok(Self { t_s, t_o })
    }

    pub fn gap(&self) -> usize {
        self.t_s - self.t_o
    }
}

/// Uniform over ordered pairs t_s > t_o from [0, T] (t_s is therefore in
/// [1, T]); with `max_gap` set, rejection keeps t_s - t_o <= max_gap.
pub fn sample_step_pair(
    stream: &mut NoiseStream,
    total_steps: usize,
    max_gap: Option<usize>,
) -> Result<StepPair> {
    if total_steps < 2 {
        return Err(Error::Config("step-pair sampling needs T >= 2".into()));
    }
    if max_gap == Some(0) {
        return Err(Error::Config("max_gap must be >= 1".into()));
    }
    loop {
        let a = stream.uniform_inclusive(0, total_steps);
        let b = stream.uniform_inclusive(0, total_steps);
        if a == b {
            continue;
        }
        let pair = StepPair { t_s: a.max(b), t_o: a.min(b) };
        if let Some(g) = max_gap {
            if pair.gap() > g {
                continue;
            }
        }
        return Ok(pair);
    }
}

/// One residual-training example. `target` is the difference between the
/// denoiser estimates at the two steps.
#[derive(Debug, Clone)]
pub struct DotTrainingExample {
    pub x_ts: Vector,
    pub x_to: Vector,
    pub z_ts: Vector,
    pub t_s: usize,
    pub t_o: usize,
    pub target: Vector,
}

/// How x_to is reached from x_ts when generating pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairRollout {
    /// One jump with the estimate frozen at t_s (the standard procedure).
    SingleJump,
    /// The gap is split into this many equal hops with a fresh denoiser
    /// estimate per hop, mimicking how intermediate states arise at
    /// inference.
    MultiStep(usize),
}

impl Default for PairRollout {
    fn default() -> Self {
        PairRollout::SingleJump
    }
}

/// Execute the pair-generation pipeline:
/// x_ts = alpha x0 + sigma eps; z_ts = dash(x_ts, t_s);
/// x_to = phi(x_ts, z_ts, t_s, t_o); target = dash(x_to, t_o) - z_ts.
///
/// `stream` supplies the per-hop noise when `kind` is the ancestral update;
/// the deterministic update ignores it.
pub fn make_training_example(
    x0: &Vector,
    eps: &Vector,
    pair: StepPair,
    dash: &dyn DashEstimator,
    kind: SamplerKind,
    sched: &NoiseSchedule,
    stream: &mut NoiseStream,
) -> Result<DotTrainingExample> {
    make_training_example_with_rollout(x0, eps, pair, dash, kind, sched, PairRollout::SingleJump, stream)
}

pub fn make_training_example_with_rollout(
    x0: &Vector,
    eps: &Vector,
    pair: StepPair,
    dash: &dyn DashEstimator,
    kind: SamplerKind,
    sched: &NoiseSchedule,
    rollout: PairRollout,
    stream: &mut NoiseStream,
) -> Result<DotTrainingExample> {
    if sched.sigma(pair.t_s) == 0.0 {
        return Err(Error::Singularity(format!("sigma_{{{}}} = 0", pair.t_s)));
    }
    let x_ts = forward_diffuse(x0, pair.t_s, eps, sched)?;
    let z_ts = dash.estimate(&x_ts, pair.t_s)?;

    let hops: Vec<(usize, usize)> = match rollout {
        PairRollout::SingleJump => vec![(pair.t_s, pair.t_o)],
        PairRollout::MultiStep(k) => {
            if k == 0 {
                return Err(Error::Config("rollout substeps must be >= 1".into()));
            }
            let k = k.min(pair.gap());
            let point = |j: usize| {
                let frac = j as f64 / k as f64;
                (pair.t_s as f64 + (pair.t_o as f64 - pair.t_s as f64) * frac).round() as usize
            };
            (0..k).map(|j| (point(j), point(j + 1))).collect()
        }
    };

    let mut x = x_ts.clone();
    for (i, &(t_in, t_out)) in hops.iter().enumerate() {
        // the first hop reuses z_ts; later hops re-estimate
        let z = if i == 0 { z_ts.clone() } else { dash.estimate(&x, t_in)? };
        x = match kind {
            SamplerKind::Ddim => ddim_step(&x, &z, t_in, t_out, sched)?,
            SamplerKind::DdpmAncestral => {
                let noise = stream.standard_normal_vector(x.dim());
                ddpm_step(&x, &z, t_in, t_out, sched, &noise)?
            }
        };
    }
    let x_to = x;
    let z_to = dash.estimate(&x_to, pair.t_o)?;
    let target = z_to.sub(&z_ts);
    Ok(DotTrainingExample { x_ts, x_to, z_ts, t_s: pair.t_s, t_o: pair.t_o, target })
}

/// Mean over the batch of the squared residual error
/// ||target - residual(x_ts, x_to, z_ts, t_s, t_o)||^2.
pub fn dot_loss(dot: &dyn DotEstimator, batch: &[DotTrainingExample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Contract("dot_loss needs a non-empty batch".into()));
    }
    let mut total = 0.0;
    for ex in batch {
        let r = dot.residual(&ex.x_ts, &ex.x_to, &ex.z_ts, ex.t_s, ex.t_o)?;
        total += ex.target.sub(&r).norm_sq();
    }
    Ok(total / batch.len() as f64)
}

#[derive(Debug, Clone)]
pub struct DotTrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub max_gap: Option<usize>,
    pub rollout: PairRollout,
    /// Update rule used by the pair-generation jump (the standard procedure
    /// uses the deterministic one even when inference is ancestral).
    pub pair_kind: SamplerKind,
    pub validation_examples: usize,
    /// Cosine decay of the learning rate down to this fraction of the base;
    /// 1.0 keeps it constant.
    pub lr_final_fraction: f64,
}

impl Default for DotTrainConfig {
    fn default() -> Self {
        Self {
            iterations: 4000,
            batch_size: 256,
            adam: AdamConfig::default(),
            seed: 0,
            max_gap: None,
            rollout: PairRollout::SingleJump,
            pair_kind: SamplerKind::Ddim,
            validation_examples: 4096,
            lr_final_fraction: 1.0,
        }
    }
}

/// Held-out comparison of the trained residual model against the
/// zero-corrector baseline.
#[derive(Debug, Clone)]
pub struct DotValidationReport {
    pub examples: usize,
    pub trained_mse: f64,
    pub zero_predictor_mse: f64,
}

#[derive(Debug)]
pub struct TrainedDot {
    pub dot: SharedDot,
    pub loss_history: Vec<f64>,
    pub validation: DotValidationReport,
}

fn generate_example(
    dataset: &dyn DataSampler,
    dash: &dyn DashEstimator,
    sched: &NoiseSchedule,
    config: &DotTrainConfig,
    purpose: StreamPurpose,
    index: u64,
) -> Result<DotTrainingExample> {
    let mut stream = NoiseStream::derive(config.seed, purpose, index);
    let x0 = dataset.sample(&mut stream);
    let eps = stream.standard_normal_vector(dataset.dim());
    let pair = sample_step_pair(&mut stream, sched.total_steps(), config.max_gap)?;
    make_training_example_with_rollout(
        &x0, &eps, pair, dash, config.pair_kind, sched, config.rollout, &mut stream,
    )
}

/// Train the residual model against a frozen denoiser. Every example derives
/// from (seed, purpose, example index), so generation parallelizes without
/// affecting the result; gradients reduce over fixed chunks in chunk order.
pub fn train_dot(
    dash: &dyn DashEstimator,
    mut dot: SharedDot,
    dataset: &dyn DataSampler,
    sched: &NoiseSchedule,
    config: &DotTrainConfig,
) -> Result<TrainedDot> {
    if config.iterations == 0 || config.batch_size == 0 {
        return Err(Error::Config("iterations and batch_size must be >= 1".into()));
    }
    if config.validation_examples < 2 {
        return Err(Error::Config("validation_examples must be >= 2".into()));
    }
    if dataset.dim() != dot.data_dim() || dash.data_dim() != dot.data_dim() {
        return Err(Error::Shape { expected: dot.data_dim(), got: dataset.dim() });
    }

    let mut params = dot.trainable_params_flat();
    let mut adam = AdamState::new(params.len(), config.adam);
    let mut loss_history = Vec::with_capacity(config.iterations);

    for iteration in 0..config.iterations {
        let base_index = (iteration * config.batch_size) as u64;
        let examples: Vec<DotTrainingExample> = (0..config.batch_size)
            .into_par_iter()
            .map(|j| {
                generate_example(
                    dataset,
                    dash,
                    sched,
                    config,
                    StreamPurpose::TrainingPairs,
                    base_index + j as u64,
                )
            })
            .collect::<Result<_>>()?;

        let inv_batch = 1.0 / config.batch_size as f64;
        let chunk_size = config.batch_size.div_ceil(GRAD_CHUNKS);
        let partials: Vec<(Vec<f64>, f64)> = examples
            .par_chunks(chunk_size)
            .map(|chunk| {
                let mut grad_sum = vec![0.0; params.len()];
                let mut loss_sum = 0.0;
                for ex in chunk {
                    let cond = dot.cond_input(&ex.x_ts, &ex.x_to, &ex.z_ts, ex.t_s, ex.t_o)?;
                    let (r, tape) = dot.forward_cond_with_tape(&cond)?;
                    let out_grad: Vec<f64> = r
                        .iter()
                        .zip(ex.target.iter())
                        .map(|(ri, ti)| {
                            let e = ri - ti;
                            loss_sum += e * e;
                            2.0 * e * inv_batch
                        })
                        .collect();
                    let g = dot.backprop(&tape, &out_grad)?;
                    for (acc, gi) in grad_sum.iter_mut().zip(&g) {
                        *acc += gi;
                    }
                }
                Ok((grad_sum, loss_sum))
            })
            .collect::<Result<_>>()?;

        let mut grads = vec![0.0; params.len()];
        let mut loss = 0.0;
        for (g, l) in &partials {
            for (acc, gi) in grads.iter_mut().zip(g) {
                *acc += gi;
            }
            loss += l;
        }
        loss *= inv_batch;
        if !loss.is_finite() {
            return Err(Error::Divergence { iteration, loss });
        }
        adam.set_lr(
            config.adam.lr
                * crate::nn::train::lr_scale(iteration, config.iterations, config.lr_final_fraction),
        );
        adam.update(&mut params, &grads)?;
        dot.set_trainable_params_flat(&params)?;
        loss_history.push(loss);
    }

    // held-out validation on a disjoint substream
    let validation: Vec<DotTrainingExample> = (0..config.validation_examples)
        .into_par_iter()
        .map(|j| {
            generate_example(dataset, dash, sched, config, StreamPurpose::Validation, j as u64)
        })
        .collect::<Result<_>>()?;
    let trained_mse = dot_loss(&dot, &validation)?;
    let zero_predictor_mse =
        validation.iter().map(|ex| ex.target.norm_sq()).sum::<f64>() / validation.len() as f64;

    Ok(TrainedDot {
        dot,
        loss_history,
        validation: DotValidationReport {
            examples: config.validation_examples,
            trained_mse,
            zero_predictor_mse,
        },
    })
}
