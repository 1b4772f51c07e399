//! Standard denoiser training: epsilon-prediction MSE over forward-diffused
//! batches.

use rayon::prelude::*;

use crate::dataset::DataSampler;
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::nn::adam::{AdamConfig, AdamState};
use crate::nn::mlp::MlpDenoiser;
use crate::schedule::{forward_diffuse, NoiseSchedule};
use crate::stream::{NoiseStream, StreamPurpose};

/// Number of fixed gradient-accumulation chunks per batch. Chunk results are
/// summed in chunk order, so the reduced gradient is independent of how many
/// workers execute the chunks.
const GRAD_CHUNKS: usize = 8;

#[derive(Debug, Clone)]
pub struct DashTrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Cosine decay of the learning rate down to this fraction of the base
    /// by the final iteration; 1.0 keeps it constant.
    pub lr_final_fraction: f64,
}

impl Default for DashTrainConfig {
    fn default() -> Self {
        Self {
            iterations: 8000,
            batch_size: 256,
            adam: AdamConfig::default(),
            seed: 0,
            lr_final_fraction: 1.0,
        }
    }
}

/// Cosine interpolation from 1.0 down to `final_fraction` over the run.
pub(crate) fn lr_scale(iteration: usize, total: usize, final_fraction: f64) -> f64 {
    if final_fraction >= 1.0 || total <= 1 {
        return 1.0;
    }
    let progress = iteration as f64 / (total - 1) as f64;
    let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
    final_fraction + (1.0 - final_fraction) * cos
}

#[derive(Debug)]
pub struct TrainedDash {
    pub net: MlpDenoiser,
    pub loss_history: Vec<f64>,
}

struct Drawn {
    x_t: Vector,
    eps: Vector,
    t: usize,
}

/// Train `net` to predict the added noise. Per iteration: draw an (x0, eps,
/// t) batch, form x_t with the closed-form forward process, and take one
/// Adam step on the per-element MSE between eps and the prediction.
pub fn train_dash(
    dataset: &dyn DataSampler,
    sched: &NoiseSchedule,
    mut net: MlpDenoiser,
    config: &DashTrainConfig,
) -> Result<TrainedDash> {
    if config.iterations == 0 || config.batch_size == 0 {
        return Err(Error::Config("iterations and batch_size must be >= 1".into()));
    }
    if dataset.dim() != net.config().data_dim {
        return Err(Error::Shape { expected: net.config().data_dim, got: dataset.dim() });
    }
    let dim = dataset.dim();
    let total_steps = sched.total_steps();
    let mut data_stream = NoiseStream::derive(config.seed, StreamPurpose::Dataset, 0);

    let mut params = net.params_flat();
    let mut adam = AdamState::new(params.len(), config.adam);
    let mut loss_history = Vec::with_capacity(config.iterations);

    for iteration in 0..config.iterations {
        // draw the whole batch serially so the sample sequence is fixed
        let batch: Vec<Drawn> = (0..config.batch_size)
            .map(|_| {
                let x0 = dataset.sample(&mut data_stream);
                let eps = data_stream.standard_normal_vector(dim);
                let t = data_stream.uniform_inclusive(1, total_steps);
                let x_t = forward_diffuse(&x0, t, &eps, sched)?;
                Ok(Drawn { x_t, eps, t })
            })
            .collect::<Result<_>>()?;

        let norm = 1.0 / (config.batch_size as f64 * dim as f64);
        let chunk_size = config.batch_size.div_ceil(GRAD_CHUNKS);
        let partials: Vec<(Vec<f64>, f64)> = batch
            .par_chunks(chunk_size)
            .map(|chunk| {
                let mut grad_sum = vec![0.0; params.len()];
                let mut loss_sum = 0.0;
                for drawn in chunk {
                    let input = net.denoiser_input(&drawn.x_t, drawn.t)?;
                    let (y, tape) = net.forward_with_tape(&input)?;
                    let out_grad: Vec<f64> = y
                        .iter()
                        .zip(drawn.eps.iter())
                        .map(|(p, e)| {
                            let r = p - e;
                            loss_sum += r * r;
                            2.0 * r * norm
                        })
                        .collect();
                    let (g, _) = net.backprop(&tape, &out_grad)?;
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
        loss *= norm;

        if !loss.is_finite() {
            return Err(Error::Divergence { iteration, loss });
        }
        adam.set_lr(
            config.adam.lr * lr_scale(iteration, config.iterations, config.lr_final_fraction),
        );
        adam.update(&mut params, &grads)?;
        net.set_params_flat(&params)?;
        loss_history.push(loss);
    }

    Ok(TrainedDash { net, loss_history })
}
