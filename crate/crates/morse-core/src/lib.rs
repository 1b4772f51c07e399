//! Dual-sampling diffusion engine.
//!
//! A full denoiser (Dash) runs under jump sampling while a cheap residual
//! estimator (Dot) restores the dense-trajectory noise estimate at the steps
//! jumped over. The crate provides the variance-preserving forward process,
//! jump-sampling grids and DDIM/ancestral updates, exact Gaussian oracles,
//! trainable MLP denoisers with hand-rolled reverse-mode gradients, the
//! weight-shared low-rank residual model, its training procedure, the LSD
//! cost model, and the matched-quality speedup evaluation machinery.

pub mod dataset;
pub mod dot_training;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod metrics;
pub mod morse;
pub mod nn;
pub mod sampler;
pub mod schedule;
pub mod stream;

pub use dataset::{DataSampler, ToyDataset};
pub use dot_training::{
    dot_loss, make_training_example, sample_step_pair, train_dot, DotTrainConfig,
    DotTrainingExample, DotValidationReport, PairRollout, StepPair, TrainedDot,
};
pub use error::{Error, Result};
pub use estimator::{analytic_gaussian_eps, AnalyticGaussianDash, DashEstimator, GaussianDataSpec};
pub use linalg::{Matrix, Vector};
pub use metrics::{
    average_speedup, exact_ddim_gaussian_oracle, fit_gaussian, gaussian_w2, interpolate,
    median_heuristic_bandwidth, mmd_rbf, speedup_at, AverageSpeedupReport, GaussianMoments,
    QualityCurve, SpeedupOutcome,
};
pub use morse::{
    build_morse_schedule, lsd_cost, lsd_cost_of, make_oracle_dot, measure_observed_ratio,
    morse_sample, recommended_exchange_counts, upper_bound_speedup, ChainSource, DotEstimator,
    InputMask, MorseContext, MorseRun, MorseSchedule, OracleDot, SharedDot, ZeroDot,
    RECOMMENDED_SPEEDUP_RANGE,
};
pub use nn::{
    sinusoidal_time_embed, train_dash, Activation, AdamConfig, AdamState, DashTrainConfig,
    MlpConfig, MlpDenoiser, TrainedDash,
};
pub use sampler::{
    ddim_step, ddpm_step, run_sampler, select_time_grid, Executor, GridStrategy, SamplerKind,
    TimeGrid, TrajectoryStep,
};
pub use schedule::{
    convert_parameterization, eps_to_x0, forward_diffuse, x0_to_eps, NoiseSchedule,
    Parameterization,
};
pub use stream::{NoiseStream, StreamPurpose};
