//! Quality metrics and the matched-quality speedup methodology.
//!
//! Exact 2-Wasserstein between Gaussians and an unbiased RBF-kernel MMD
//! stand in for perceptual metrics at this scale. `exact_ddim_gaussian_oracle`
//! composes the per-step affine maps of the deterministic sampler on
//! Gaussian data symbolically, giving the exact output law that simulations
//! are checked against. Quality-vs-latency curves support inverse
//! interpolation on their lower monotone envelope: the speedup of a
//! candidate point is n / l where n is the smallest baseline latency
//! matching its quality.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::GaussianDataSpec;
use crate::linalg::{Matrix, Vector};
use crate::sampler::TimeGrid;
use crate::schedule::NoiseSchedule;

/// First and second moments of a Gaussian law.
#[derive(Debug, Clone)]
pub struct GaussianMoments {
    mean: Vector,
    cov: Matrix,
}

impl GaussianMoments {
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
        if let Some(bad) = eigs.iter().find(|&&w| w < -1e-10) {
            return Err(Error::Domain(format!("covariance eigenvalue {bad} below -1e-10")));
        }
        Ok(Self { mean, cov })
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

impl From<&GaussianDataSpec> for GaussianMoments {
    fn from(spec: &GaussianDataSpec) -> Self {
        Self { mean: spec.mean().clone(), cov: spec.cov().clone() }
    }
}

/// Exact 2-Wasserstein distance between Gaussian laws:
/// sqrt(||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sb^1/2 Sa Sb^1/2)^1/2)).
pub fn gaussian_w2(a: &GaussianMoments, b: &GaussianMoments) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape { expected: a.dim(), got: b.dim() });
    }
    let root_b = b.cov.sqrt_psd(1e-10)?;
    let inner = root_b.matmul(&a.cov).matmul(&root_b);
    // symmetrize against rounding before taking the root
    let inner_t = inner.transpose();
    let inner_sym = inner.add_scaled(1.0, &inner_t).scale(0.5);
    let cross = inner_sym.sqrt_psd(1e-8)?;
    let mean_term = a.mean.sub(&b.mean).norm_sq();
    let trace_term = a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
    Ok((mean_term + trace_term.max(0.0)).sqrt())
}

/// Sample mean and unbiased covariance.
pub fn fit_gaussian(samples: &[Vector]) -> Result<GaussianMoments> {
    if samples.len() < 2 {
        return Err(Error::Contract("fit_gaussian needs at least 2 samples".into()));
    }
    let dim = samples[0].dim();
    if samples.iter().any(|s| s.dim() != dim) {
        return Err(Error::Shape { expected: dim, got: 0 });
    }
    let n = samples.len() as f64;
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s.iter()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut cov = Matrix::zeros(dim, dim);
    for s in samples {
        let centered: Vec<f64> = s.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for r in 0..dim {
            for c in r..dim {
                let add = centered[r] * centered[c];
                cov.set(r, c, cov.get(r, c) + add);
            }
        }
    }
    for r in 0..dim {
        for c in r..dim {
            let v = cov.get(r, c) / (n - 1.0);
            cov.set(r, c, v);
            cov.set(c, r, v);
        }
    }
    GaussianMoments::new(Vector::new(mean)?, cov)
}

/// Unbiased U-statistic estimate of squared MMD with the RBF kernel
/// exp(-||u - v||^2 / (2 bandwidth^2)). May be slightly negative.
pub fn mmd_rbf(xs: &[Vector], ys: &[Vector], bandwidth: f64) -> Result<f64> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(Error::Contract("mmd_rbf needs at least 2 samples per set".into()));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::Config(format!("bandwidth must be > 0, got {bandwidth}")));
    }
    let gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    #[inline]
    fn kernel_sum(gamma: f64, u: &[f64], others: &[Vector], skip: Option<usize>) -> f64 {
        let mut acc = 0.0;
        for (j, v) in others.iter().enumerate() {
            if skip == Some(j) {
                continue;
            }
            let mut d2 = 0.0;
            for (a, b) in u.iter().zip(v.as_slice()) {
                let d = a - b;
                d2 += d * d;
            }
            acc += (-gamma * d2).exp();
        }
        acc
    }
    // per-row sums computed in parallel, reduced in row order
    let within = |set: &[Vector]| -> f64 {
        let rows: Vec<f64> = set
            .par_iter()
            .enumerate()
            .map(|(i, u)| kernel_sum(gamma, u.as_slice(), set, Some(i)))
            .collect();
        rows.iter().sum::<f64>() / (set.len() as f64 * (set.len() - 1) as f64)
    };
    let cross: f64 = {
        let rows: Vec<f64> = xs
            .par_iter()
            .map(|u| kernel_sum(gamma, u.as_slice(), ys, None))
            .collect();
        rows.iter().sum::<f64>() / (xs.len() as f64 * ys.len() as f64)
    };
    Ok(within(xs) + within(ys) - 2.0 * cross)
}

/// Median pairwise distance of a sample set (the parameter-free bandwidth
/// choice). Capped at the first 2000 samples to keep the pair count bounded.
pub fn median_heuristic_bandwidth(samples: &[Vector]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::Contract("median heuristic needs at least 2 samples".into()));
    }
    let capped = &samples[..samples.len().min(2000)];
    let mut dists = Vec::with_capacity(capped.len() * (capped.len() - 1) / 2);
    for i in 0..capped.len() {
        for j in (i + 1)..capped.len() {
            dists.push(capped[i].sub(&capped[j]).norm());
        }
    }
    dists.sort_by(f64::total_cmp);
    let m = dists[dists.len() / 2];
    if m <= 0.0 {
        return Err(Error::Numeric("median pairwise distance is zero".into()));
    }
    Ok(m)
}

/// Exact output law of the deterministic sampler with the closed-form
/// Gaussian denoiser: each step is affine in x, so the chain composes to
/// x_out = A x_T + b with x_T ~ N(0, I), giving N(b, A A^T).
pub fn exact_ddim_gaussian_oracle(
    grid: &TimeGrid,
    data: &GaussianDataSpec,
    sched: &NoiseSchedule,
) -> Result<GaussianMoments> {
    let d = data.dim();
    let eye = Matrix::identity(d);
    let mut a_total = Matrix::identity(d);
    let mut b_total = vec![0.0; d];
    for (t, t_prev) in grid.pairs() {
        let (a_t, s_t) = (sched.alpha(t), sched.sigma(t));
        let (a_p, s_p) = (sched.alpha(t_prev), sched.sigma(t_prev));
        if s_t == 0.0 {
            return Err(Error::Singularity(format!("sigma_{t} = 0")));
        }
        // x0_hat = mu + K (x - alpha_t mu), K = alpha_t Sigma G
        let system = eye.scale(s_t * s_t).add_scaled(a_t * a_t, data.cov());
        let g = system.inverse_spd()?;
        let k = data.cov().matmul(&g).scale(a_t);
        // step map M = alpha_p K + (sigma_p / sigma_t)(I - alpha_t K)
        let m = k.scale(a_p).add_scaled(s_p / s_t, &eye.add_scaled(-a_t, &k));
        // offset c = alpha_p mu - M (alpha_t mu)
        let mu_scaled: Vec<f64> = data.mean().iter().map(|v| a_t * v).collect();
        let m_mu = m.matvec(&mu_scaled);
        let c: Vec<f64> = data.mean().iter().zip(&m_mu).map(|(mu, mm)| a_p * mu - mm).collect();
        // compose
        a_total = m.matmul(&a_total);
        let m_b = m.matvec(&b_total);
        b_total = m_b.iter().zip(&c).map(|(x, y)| x + y).collect();
    }
    let cov = a_total.matmul(&a_total.transpose());
    // symmetrize rounding residue
    let cov = cov.add_scaled(1.0, &cov.transpose()).scale(0.5);
    GaussianMoments::new(Vector::new(b_total)?, cov)
}

/// A latency-vs-quality curve (quality lower-is-better), strictly
/// increasing in latency.
#[derive(Debug, Clone)]
pub struct QualityCurve {
    points: Vec<(f64, f64)>,
    label: String,
}

impl QualityCurve {
    pub fn new(points: Vec<(f64, f64)>, label: impl Into<String>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Config("a quality curve needs at least 2 points".into()));
        }
        if points.iter().any(|(l, q)| !(l.is_finite() && q.is_finite() && *l > 0.0)) {
            return Err(Error::Config("curve points must be finite with latency > 0".into()));
        }
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Config("curve latencies must be strictly increasing".into()));
        }
        Ok(Self { points, label: label.into() })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn min_latency(&self) -> f64 {
        self.points[0].0
    }

    pub fn max_latency(&self) -> f64 {
        self.points[self.points.len() - 1].0
    }

    /// The lower monotone envelope: the sub-polyline of points that strictly
    /// improve on every cheaper point. Quality is strictly decreasing along
    /// it.
    pub fn monotone_envelope(&self) -> Vec<(f64, f64)> {
        let mut env: Vec<(f64, f64)> = Vec::with_capacity(self.points.len());
        for &(l, q) in &self.points {
            if env.is_empty() || q < env[env.len() - 1].1 {
                env.push((l, q));
            }
        }
        env
    }
}

/// Piecewise-linear interpolation; strictly no extrapolation.
pub fn interpolate(curve: &QualityCurve, latency: f64) -> Result<f64> {
    let pts = curve.points();
    if latency < curve.min_latency() || latency > curve.max_latency() {
        return Err(Error::Range(format!(
            "latency {latency} outside curve range [{}, {}]",
            curve.min_latency(),
            curve.max_latency()
        )));
    }
    for w in pts.windows(2) {
        let ((l0, q0), (l1, q1)) = (w[0], w[1]);
        if latency <= l1 {
            let frac = (latency - l0) / (l1 - l0);
            return Ok(q0 + (q1 - q0) * frac);
        }
    }
    Ok(pts[pts.len() - 1].1)
}

/// Result of a matched-quality comparison at one latency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpeedupOutcome {
    Speedup(f64),
    /// The candidate is better than every baseline quality: no baseline
    /// latency matches it, so no speedup value exists.
    NotApplicable,
    /// The candidate is worse than the worst baseline quality: it provides
    /// no speedup datum.
    NotApplicableLow,
}

impl std::fmt::Display for SpeedupOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpeedupOutcome::Speedup(s) => write!(f, "{s}"),
            SpeedupOutcome::NotApplicable => write!(f, "N/A"),
            SpeedupOutcome::NotApplicableLow => write!(f, "N/A-low"),
        }
    }
}

/// Matched-quality speedup of a candidate point (latency l, quality q):
/// n / l where n is the smallest baseline latency whose envelope quality is
/// at least as good as q (inverse interpolation on the monotone envelope).
pub fn speedup_at(baseline: &QualityCurve, latency: f64, quality: f64) -> Result<SpeedupOutcome> {
    if !(latency > 0.0) {
        return Err(Error::Range(format!("candidate latency must be > 0, got {latency}")));
    }
    let env = baseline.monotone_envelope();
    let best = env[env.len() - 1].1;
    let worst = env[0].1;
    if quality < best {
        return Ok(SpeedupOutcome::NotApplicable);
    }
    if quality > worst {
        return Ok(SpeedupOutcome::NotApplicableLow);
    }
    // quality lies within [best, worst]: find the smallest matching latency
    let mut matched = env[0].0;
    if quality < worst {
        for w in env.windows(2) {
            let ((l0, q0), (l1, q1)) = (w[0], w[1]);
            if quality >= q1 {
                // strictly decreasing segment contains it
                matched = l0 + (l1 - l0) * (q0 - quality) / (q0 - q1);
                break;
            }
        }
    }
    Ok(SpeedupOutcome::Speedup(matched / latency))
}

/// Per-latency outcomes plus the mean over usable points.
#[derive(Debug, Clone)]
pub struct AverageSpeedupReport {
    pub mean: f64,
    pub details: Vec<(f64, SpeedupOutcome)>,
    pub excluded: Vec<f64>,
}

/// Evaluate the candidate curve at each latency, compute matched-quality
/// speedups against the baseline, and average the usable ones.
/// Not-applicable points are excluded from the mean and listed.
pub fn average_speedup(
    baseline: &QualityCurve,
    candidate: &QualityCurve,
    latencies: &[f64],
) -> Result<AverageSpeedupReport> {
    if latencies.is_empty() {
        return Err(Error::EmptyAverage("no latencies requested".into()));
    }
    let mut details = Vec::with_capacity(latencies.len());
    let mut excluded = Vec::new();
    let mut sum = 0.0;
    let mut used = 0usize;
    for &l in latencies {
        let q = interpolate(candidate, l)?;
        let outcome = speedup_at(baseline, l, q)?;
        match outcome {
            SpeedupOutcome::Speedup(s) => {
                sum += s;
                used += 1;
            }
            _ => excluded.push(l),
        }
        details.push((l, outcome));
    }
    if used == 0 {
        return Err(Error::EmptyAverage(
            "every requested latency was not applicable".into(),
        ));
    }
    Ok(AverageSpeedupReport { mean: sum / used as f64, details, excluded })
}
