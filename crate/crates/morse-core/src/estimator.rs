//! Noise estimators: the abstract denoiser interface and the exact
//! closed-form denoiser for Gaussian data.
//!
//! The Gaussian denoiser is the testing oracle of this crate: for data
//! ~ N(mu, Sigma) the conditional expectation E[x0 | x_t] is available in
//! closed form, so every downstream sampling routine can be checked against
//! exact distributions.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::schedule::{x0_to_eps, NoiseSchedule};

/// A denoiser: maps (x_t, t) to a noise estimate (noise-prediction
/// parameterization). Implementations must be deterministic and
/// dimension-preserving.
pub trait DashEstimator: Sync {
    fn data_dim(&self) -> usize;
    fn estimate(&self, x: &Vector, t: usize) -> Result<Vector>;
}

/// Gaussian data model N(mean, cov) with a symmetric PSD covariance.
#[derive(Debug, Clone)]
pub struct GaussianDataSpec {
    mean: Vector,
    cov: Matrix,
}

impl GaussianDataSpec {
    pub fn new(mean: Vector, cov: Matrix) -> Result<Self> {
        if cov.rows() != mean.dim() || cov.cols() != mean.dim() {
            return Err(Error::Shape { expected: mean.dim(), got: cov.rows() });
        }
        if cov.max_abs_asymmetry() > 1e-12 {
            return Err(Error::Domain(format!(
                "covariance asymmetry {} exceeds 1e-12",
                cov.max_abs_asymmetry()
            )));
        }
        let (eigs, _) = cov.sym_eigen()?;
        if let Some(bad) = eigs.iter().find(|&&w| w < -1e-12) {
            return Err(Error::Domain(format!("covariance has eigenvalue {bad} < -1e-12")));
        }
        Ok(Self { mean, cov })
    }

    /// Point mass at `point` (zero covariance).
    pub fn point_mass(point: Vector) -> Self {
        let d = point.dim();
        Self { mean: point, cov: Matrix::zeros(d, d) }
    }

    pub fn diagonal(mean: Vector, variances: &[f64]) -> Result<Self> {
        Self::new(mean, Matrix::diag(variances))
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.dim()
    }
}

/// Exact conditional-expectation denoiser for Gaussian data, returned in
/// noise-prediction form:
///
///   x0_hat = mu + alpha_t Sigma (alpha_t^2 Sigma + sigma_t^2 I)^-1 (x_t - alpha_t mu)
///   eps_hat = (x_t - alpha_t x0_hat) / sigma_t
pub fn analytic_gaussian_eps(
    x_t: &Vector,
    t: usize,
    data: &GaussianDataSpec,
    sched: &NoiseSchedule,
) -> Result<Vector> {
    sched.check_timestep(t)?;
    if x_t.dim() != data.dim() {
        return Err(Error::Shape { expected: data.dim(), got: x_t.dim() });
    }
    let alpha = sched.alpha(t);
    let sigma = sched.sigma(t);
    if sigma == 0.0 {
        return Err(Error::Singularity(format!("sigma_{t} = 0")));
    }
    let d = data.dim();
    // system = alpha^2 Sigma + sigma^2 I, SPD for sigma > 0
    let system = Matrix::identity(d)
        .scale(sigma * sigma)
        .add_scaled(alpha * alpha, data.cov());
    let centered: Vec<f64> = x_t.add_scaled(-alpha, data.mean()).into();
    let solved = system.solve_spd(&centered)?;
    let correction = data.cov().matvec(&solved);
    let x0_hat = Vector::new(
        data.mean()
            .iter()
            .zip(&correction)
            .map(|(m, c)| m + alpha * c)
            .collect(),
    )?;
    x0_to_eps(x_t, &x0_hat, t, sched)
}

/// A `DashEstimator` that evaluates the analytic Gaussian denoiser.
#[derive(Debug, Clone)]
pub struct AnalyticGaussianDash {
    data: GaussianDataSpec,
    sched: NoiseSchedule,
}

impl AnalyticGaussianDash {
    pub fn new(data: GaussianDataSpec, sched: NoiseSchedule) -> Self {
        Self { data, sched }
    }

    pub fn data(&self) -> &GaussianDataSpec {
        &self.data
    }
}

impl DashEstimator for AnalyticGaussianDash {
    fn data_dim(&self) -> usize {
        self.data.dim()
    }

    fn estimate(&self, x: &Vector, t: usize) -> Result<Vector> {
        analytic_gaussian_eps(x, t, &self.data, &self.sched)
    }
}
