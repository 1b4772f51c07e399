//! Variance-preserving noise schedules and the closed-form forward process.
//!
//! A schedule stores per-timestep signal/noise coefficients (alpha_t,
//! sigma_t) for t = 0..=T with alpha_t^2 + sigma_t^2 = 1. Index 0 is exactly
//! clean data (alpha_0 = 1, sigma_0 = 0), index T is approximately pure
//! noise.

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Signal/noise coefficient table of a variance-preserving forward process.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    total_steps: usize,
    alpha: Vec<f64>,
    sigma: Vec<f64>,
}

/// Default number of diffusion steps.
pub const DEFAULT_TOTAL_STEPS: usize = 1000;
/// Default linear-beta range endpoints.
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

impl NoiseSchedule {
    /// Linear-beta schedule: beta_t linearly spaced from `beta_start` to
    /// `beta_end` over t = 1..T, alpha_t = sqrt(prod (1 - beta_s)).
    pub fn linear(total_steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if total_steps == 0 {
            return Err(Error::Config("total_steps must be >= 1".into()));
        }
        let valid = |b: f64| b > 0.0 && b < 1.0;
        if !valid(beta_start) || !valid(beta_end) || beta_start > beta_end {
            return Err(Error::Config(format!(
                "beta range must satisfy 0 < start <= end < 1, got [{beta_start}, {beta_end}]"
            )));
        }
        let mut alpha = Vec::with_capacity(total_steps + 1);
        let mut sigma = Vec::with_capacity(total_steps + 1);
        alpha.push(1.0);
        sigma.push(0.0);
        let mut alpha_bar = 1.0f64;
        for t in 1..=total_steps {
            let frac = if total_steps == 1 {
                0.0
            } else {
                (t - 1) as f64 / (total_steps - 1) as f64
            };
            let beta = beta_start + (beta_end - beta_start) * frac;
            alpha_bar *= 1.0 - beta;
            alpha.push(alpha_bar.sqrt());
            sigma.push((1.0 - alpha_bar).sqrt());
        }
        Ok(Self { total_steps, alpha, sigma })
    }

    /// Linear schedule with the conventional defaults (T = 1000,
    /// beta in [1e-4, 0.02]).
    pub fn default_linear() -> Self {
        Self::linear(DEFAULT_TOTAL_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .expect("default schedule parameters are valid")
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn alpha(&self, t: usize) -> f64 {
        assert!(t <= self.total_steps, "timestep {t} out of range");
        self.alpha[t]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        assert!(t <= self.total_steps, "timestep {t} out of range");
        self.sigma[t]
    }

    pub fn check_timestep(&self, t: usize) -> Result<()> {
        if t > self.total_steps {
            return Err(Error::Range(format!(
                "timestep {t} exceeds total steps {}",
                self.total_steps
            )));
        }
        Ok(())
    }

    /// Whether the terminal state is close enough to pure noise for the
    /// N(0, I) prior to be a faithful start (alpha_T^2 <= 1e-3).
    pub fn is_terminal_noise(&self) -> bool {
        self.alpha[self.total_steps].powi(2) <= 1e-3
    }

    /// FNV-1a hash over (T, alpha, sigma); used to pair checkpoints with the
    /// schedule they were trained under.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(&(self.total_steps as u64).to_le_bytes());
        for v in self.alpha.iter().chain(self.sigma.iter()) {
            eat(&v.to_le_bytes());
        }
        h
    }
}

/// Which quantity a model output represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parameterization {
    /// The output estimates the noise added to the data (epsilon-hat).
    NoisePrediction,
    /// The output estimates the clean data (x0-hat).
    DataPrediction,
}

/// Closed form of the forward process: alpha_t * x0 + sigma_t * eps.
pub fn forward_diffuse(x0: &Vector, t: usize, eps: &Vector, sched: &NoiseSchedule) -> Result<Vector> {
    sched.check_timestep(t)?;
    if x0.dim() != eps.dim() {
        return Err(Error::Shape { expected: x0.dim(), got: eps.dim() });
    }
    Ok(x0.scale(sched.alpha(t)).add_scaled(sched.sigma(t), eps))
}

/// Recover the clean-data estimate from a noise estimate:
/// (x_t - sigma_t * eps_hat) / alpha_t.
pub fn eps_to_x0(x_t: &Vector, eps_hat: &Vector, t: usize, sched: &NoiseSchedule) -> Result<Vector> {
    sched.check_timestep(t)?;
    if x_t.dim() != eps_hat.dim() {
        return Err(Error::Shape { expected: x_t.dim(), got: eps_hat.dim() });
    }
    let alpha = sched.alpha(t);
    if alpha == 0.0 {
        return Err(Error::Singularity(format!("alpha_{t} = 0")));
    }
    Ok(x_t.add_scaled(-sched.sigma(t), eps_hat).scale(1.0 / alpha))
}

/// Recover the noise estimate from a clean-data estimate:
/// (x_t - alpha_t * x0_hat) / sigma_t.
pub fn x0_to_eps(x_t: &Vector, x0_hat: &Vector, t: usize, sched: &NoiseSchedule) -> Result<Vector> {
    sched.check_timestep(t)?;
    if x_t.dim() != x0_hat.dim() {
        return Err(Error::Shape { expected: x_t.dim(), got: x0_hat.dim() });
    }
    let sigma = sched.sigma(t);
    if sigma == 0.0 {
        return Err(Error::Singularity(format!("sigma_{t} = 0")));
    }
    Ok(x_t.add_scaled(-sched.alpha(t), x0_hat).scale(1.0 / sigma))
}

/// Convert a model output between parameterizations at (x_t, t).
pub fn convert_parameterization(
    value: &Vector,
    x_t: &Vector,
    t: usize,
    from: Parameterization,
    to: Parameterization,
    sched: &NoiseSchedule,
) -> Result<Vector> {
    match (from, to) {
        (a, b) if a == b => Ok(value.clone()),
        (Parameterization::NoisePrediction, Parameterization::DataPrediction) => {
            eps_to_x0(x_t, value, t, sched)
        }
        (Parameterization::DataPrediction, Parameterization::NoisePrediction) => {
            x0_to_eps(x_t, value, t, sched)
        }
        _ => unreachable!(),
    }
}
