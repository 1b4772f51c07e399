//! Jump-sampling time grids and the per-step update rules.
//!
//! A `TimeGrid` is the decreasing sub-sequence of timesteps a generation
//! visits. `ddim_step` is the deterministic update; `ddpm_step` the
//! ancestral one generalized to jumps (it reduces to the DDIM map when the
//! posterior noise scale is zero). `run_sampler` drives a full chain and
//! records the trajectory.

use crate::error::{Error, Result};
use crate::estimator::DashEstimator;
use crate::linalg::Vector;
use crate::schedule::{eps_to_x0, NoiseSchedule};
use crate::stream::NoiseStream;

/// Strictly decreasing timesteps from T down to 0 (both included).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeGrid {
    points: Vec<usize>,
}

impl TimeGrid {
    pub fn new(points: Vec<usize>, total_steps: usize) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Config("time grid needs at least 2 points".into()));
        }
        if points[0] != total_steps || *points.last().unwrap() != 0 {
            return Err(Error::Config(format!(
                "time grid must start at T={total_steps} and end at 0, got [{}, {}]",
                points[0],
                points.last().unwrap()
            )));
        }
        if points.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::Config("time grid must be strictly decreasing".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    /// Number of sampling transitions (len - 1).
    pub fn transitions(&self) -> usize {
        self.points.len() - 1
    }

    /// Iterate over (t_in, t_out) pairs in execution order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.points.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Grid selection strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridStrategy {
    Uniform,
}

/// Uniform jump-sampling grid: t_i = round(i * T / n) for i = n..0, with the
/// endpoints forced to exactly T and 0.
pub fn select_time_grid(total_steps: usize, n: usize, strategy: GridStrategy) -> Result<TimeGrid> {
    if n < 1 || n > total_steps {
        return Err(Error::Range(format!(
            "grid size {n} out of range [1, {total_steps}]"
        )));
    }
    match strategy {
        GridStrategy::Uniform => {
            let points: Vec<usize> = (0..=n)
                .rev()
                .map(|i| ((i as f64) * (total_steps as f64) / (n as f64)).round() as usize)
                .collect();
            TimeGrid::new(points, total_steps)
        }
    }
}

/// Per-step update family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    /// Deterministic update; a pure function of (x_t, z, t, t_prev).
    Ddim,
    /// Ancestral sampling; consumes exactly one noise draw per step.
    DdpmAncestral,
}

/// Which model produced a step's noise estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Executor {
    Dash,
    Dot,
}

/// One executed sampling step.
#[derive(Debug, Clone)]
pub struct TrajectoryStep {
    pub t_in: usize,
    pub t_out: usize,
    pub x_in: Vector,
    pub x_out: Vector,
    pub z: Vector,
    pub executor: Executor,
}

fn check_step_pre(x_t: &Vector, z: &Vector, t: usize, t_prev: usize, sched: &NoiseSchedule) -> Result<()> {
    sched.check_timestep(t)?;
    if t_prev > t {
        return Err(Error::Ordering(format!("t_prev {t_prev} > t {t}")));
    }
    if x_t.dim() != z.dim() {
        return Err(Error::Shape { expected: x_t.dim(), got: z.dim() });
    }
    Ok(())
}

/// Deterministic DDIM update: x0_hat = (x_t - sigma_t z) / alpha_t, then
/// alpha_{t_prev} x0_hat + sigma_{t_prev} z.
pub fn ddim_step(
    x_t: &Vector,
    z: &Vector,
    t: usize,
    t_prev: usize,
    sched: &NoiseSchedule,
) -> Result<Vector> {
    check_step_pre(x_t, z, t, t_prev, sched)?;
    let x0_hat = eps_to_x0(x_t, z, t, sched)?;
    Ok(x0_hat.scale(sched.alpha(t_prev)).add_scaled(sched.sigma(t_prev), z))
}

/// Ancestral (posterior) update generalized to jump steps:
///
///   sigma_tilde^2 = (sigma_{t'}^2 / sigma_t^2) (1 - alpha_t^2 / alpha_{t'}^2)
///   mean = alpha_{t'} x0_hat + sqrt(max(sigma_{t'}^2 - sigma_tilde^2, 0)) z
///   out  = mean + sigma_tilde * noise
///
/// With sigma_tilde = 0 this is exactly `ddim_step`.
pub fn ddpm_step(
    x_t: &Vector,
    z: &Vector,
    t: usize,
    t_prev: usize,
    sched: &NoiseSchedule,
    noise: &Vector,
) -> Result<Vector> {
    check_step_pre(x_t, z, t, t_prev, sched)?;
    if noise.dim() != x_t.dim() {
        return Err(Error::Shape { expected: x_t.dim(), got: noise.dim() });
    }
    let x0_hat = eps_to_x0(x_t, z, t, sched)?;
    let (a_t, s_t) = (sched.alpha(t), sched.sigma(t));
    let (a_p, s_p) = (sched.alpha(t_prev), sched.sigma(t_prev));
    let sigma_tilde_sq = if t == t_prev {
        0.0
    } else {
        (s_p * s_p / (s_t * s_t)) * (1.0 - (a_t * a_t) / (a_p * a_p))
    };
    let dir_scale = (s_p * s_p - sigma_tilde_sq).max(0.0).sqrt();
    let mean = x0_hat.scale(a_p).add_scaled(dir_scale, z);
    Ok(mean.add_scaled(sigma_tilde_sq.sqrt(), noise))
}

/// Run a full chain over `grid`, evaluating `dash` at every visited step.
///
/// Draws x_T from the stream as standard normal, applies one update per
/// adjacent grid pair, and returns the final sample at t=0 together with the
/// per-step trajectory (one record per transition).
pub fn run_sampler(
    dash: &dyn DashEstimator,
    grid: &TimeGrid,
    kind: SamplerKind,
    sched: &NoiseSchedule,
    stream: &mut NoiseStream,
) -> Result<(Vector, Vec<TrajectoryStep>)> {
    let dim = dash.data_dim();
    let mut x = stream.standard_normal_vector(dim);
    let mut trajectory = Vec::with_capacity(grid.transitions());
    for (t_in, t_out) in grid.pairs() {
        let z = dash.estimate(&x, t_in)?;
        let x_next = match kind {
            SamplerKind::Ddim => ddim_step(&x, &z, t_in, t_out, sched)?,
            SamplerKind::DdpmAncestral => {
                let noise = stream.standard_normal_vector(dim);
                ddpm_step(&x, &z, t_in, t_out, sched, &noise)?
            }
        };
        trajectory.push(TrajectoryStep {
            t_in,
            t_out,
            x_in: x.clone(),
            x_out: x_next.clone(),
            z,
            executor: Executor::Dash,
        });
        x = x_next;
    }
    Ok((x, trajectory))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{AnalyticGaussianDash, GaussianDataSpec};
    use crate::stream::NoiseStream;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_grid_examples() {
        let g = select_time_grid(1000, 4, GridStrategy::Uniform).unwrap();
        assert_eq!(g.points(), &[1000, 750, 500, 250, 0]);
        let g = select_time_grid(1000, 1, GridStrategy::Uniform).unwrap();
        assert_eq!(g.points(), &[1000, 0]);
        let g = select_time_grid(10, 10, GridStrategy::Uniform).unwrap();
        assert_eq!(g.points(), &[10, 9, 8, 7, 6, 5, 4, 3, 2, 1, 0]);
    }

    #[test]
    fn grid_range_errors() {
        assert!(select_time_grid(1000, 0, GridStrategy::Uniform).is_err());
        assert!(select_time_grid(10, 11, GridStrategy::Uniform).is_err());
    }

    #[test]
    fn grids_are_strictly_decreasing_for_all_sizes() {
        for n in 1..=200 {
            let g = select_time_grid(200, n, GridStrategy::Uniform).unwrap();
            assert_eq!(g.transitions(), n);
            assert!(g.points().windows(2).all(|w| w[0] > w[1]));
        }
    }

    #[test]
    fn ddim_hand_value() {
        // alpha_t=0.8, sigma_t=0.6 at t=2; alpha'=sqrt(0.9), sigma'=sqrt(0.1) at t=1
        let sched = NoiseSchedule::linear(2, 0.1, 1.0 - 0.64 / 0.9).unwrap();
        assert_relative_eq!(sched.alpha(1), 0.9f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(sched.alpha(2), 0.8, epsilon = 1e-12);
        let x_t = Vector::new(vec![0.8, 0.6]).unwrap();
        let z = Vector::new(vec![0.0, 1.0]).unwrap();
        let out = ddim_step(&x_t, &z, 2, 1, &sched).unwrap();
        assert_relative_eq!(out[0], 0.9486833, epsilon = 1e-7);
        assert_relative_eq!(out[1], 0.3162278, epsilon = 1e-7);
    }

    #[test]
    fn ddim_argpoint_identity() {
        let sched = NoiseSchedule::default_linear();
        let mut stream = NoiseStream::from_seed(5);
        for _ in 0..200 {
            let t = stream.uniform_inclusive(0, 1000);
            let x = stream.standard_normal_vector(3);
            let z = stream.standard_normal_vector(3);
            let out = ddim_step(&x, &z, t, t, &sched).unwrap();
            let scale = x.norm().max(1.0);
            assert!(out.max_abs_diff(&x) / scale < 1e-12, "identity broke at t={t}");
        }
    }

    #[test]
    fn ddim_to_zero_returns_x0_hat() {
        let sched = NoiseSchedule::default_linear();
        let x = Vector::new(vec![1.0, 2.0]).unwrap();
        let z = Vector::new(vec![0.5, -0.5]).unwrap();
        let out = ddim_step(&x, &z, 700, 0, &sched).unwrap();
        let x0 = eps_to_x0(&x, &z, 700, &sched).unwrap();
        assert_eq!(out, x0);
    }

    #[test]
    fn ddim_semigroup_under_frozen_estimate() {
        // two hops with the same z equal one hop, to 1e-10
        let sched = NoiseSchedule::default_linear();
        let mut stream = NoiseStream::from_seed(17);
        for _ in 0..100 {
            let t = stream.uniform_inclusive(3, 1000);
            let u = stream.uniform_inclusive(1, t - 1);
            let s = stream.uniform_inclusive(0, u - 1);
            let x = stream.standard_normal_vector(2);
            let z = stream.standard_normal_vector(2);
            let two = {
                let mid = ddim_step(&x, &z, t, u, &sched).unwrap();
                ddim_step(&mid, &z, u, s, &sched).unwrap()
            };
            let one = ddim_step(&x, &z, t, s, &sched).unwrap();
            assert!(
                two.max_abs_diff(&one) < 1e-10,
                "semigroup violated for {t}->{u}->{s}"
            );
        }
    }

    #[test]
    fn ddim_ordering_error() {
        let sched = NoiseSchedule::default_linear();
        let x = Vector::zeros(1);
        let z = Vector::zeros(1);
        assert!(matches!(
            ddim_step(&x, &z, 10, 20, &sched),
            Err(Error::Ordering(_))
        ));
    }

    #[test]
    fn ddpm_reduces_to_ddim_when_noise_scale_vanishes() {
        let sched = NoiseSchedule::default_linear();
        let x = Vector::new(vec![0.4, -1.2]).unwrap();
        let z = Vector::new(vec![0.9, 0.1]).unwrap();
        let noise = Vector::new(vec![3.0, -3.0]).unwrap();
        // t_prev = 0 forces sigma_tilde = 0: exact x0_hat regardless of noise
        let a = ddpm_step(&x, &z, 600, 0, &sched, &noise).unwrap();
        let b = ddim_step(&x, &z, 600, 0, &sched).unwrap();
        assert_eq!(a, b);
        // argpoint case also exact
        let a = ddpm_step(&x, &z, 600, 600, &sched, &noise).unwrap();
        let b = ddim_step(&x, &z, 600, 600, &sched).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ddpm_hand_value() {
        // schedule: abar_1 = 0.81, abar_2 = 0.36 ->
        //   alpha_1 = 0.9, sigma_1 = sqrt(0.19); alpha_2 = 0.6, sigma_2 = 0.8
        // x=1, z=0.5, noise=1 from t=2 to t=1:
        //   out = 1.3852830977003734 (hand-evaluated; 1.385283 at 6 digits)
        let sched = NoiseSchedule::linear(2, 0.19, 5.0 / 9.0).unwrap();
        assert_relative_eq!(sched.alpha(1), 0.9, epsilon = 1e-12);
        assert_relative_eq!(sched.alpha(2), 0.6, epsilon = 1e-12);
        let out = ddpm_step(
            &Vector::new(vec![1.0]).unwrap(),
            &Vector::new(vec![0.5]).unwrap(),
            2,
            1,
            &sched,
            &Vector::new(vec![1.0]).unwrap(),
        )
        .unwrap();
        assert_relative_eq!(out[0], 1.3852830977003734, epsilon = 1e-9);
    }

    #[test]
    fn point_mass_chain_returns_the_point() {
        let sched = NoiseSchedule::default_linear();
        let mu = Vector::new(vec![1.5, -0.5]).unwrap();
        let dash = AnalyticGaussianDash::new(GaussianDataSpec::point_mass(mu.clone()), sched.clone());
        for n in [1usize, 4, 10] {
            let grid = select_time_grid(1000, n, GridStrategy::Uniform).unwrap();
            let mut stream = NoiseStream::from_seed(123);
            let (out, traj) = run_sampler(&dash, &grid, SamplerKind::Ddim, &sched, &mut stream).unwrap();
            assert!(out.max_abs_diff(&mu) < 1e-9, "n={n}");
            assert_eq!(traj.len(), grid.transitions());
        }
    }

    #[test]
    fn trajectory_chains_and_is_deterministic() {
        let sched = NoiseSchedule::default_linear();
        let data = GaussianDataSpec::diagonal(
            Vector::new(vec![1.0, -1.0]).unwrap(),
            &[0.5, 2.0],
        )
        .unwrap();
        let dash = AnalyticGaussianDash::new(data, sched.clone());
        let grid = select_time_grid(1000, 7, GridStrategy::Uniform).unwrap();
        for kind in [SamplerKind::Ddim, SamplerKind::DdpmAncestral] {
            let mut s1 = NoiseStream::from_seed(77);
            let mut s2 = NoiseStream::from_seed(77);
            let (a, traj) = run_sampler(&dash, &grid, kind, &sched, &mut s1).unwrap();
            let (b, _) = run_sampler(&dash, &grid, kind, &sched, &mut s2).unwrap();
            assert_eq!(a, b, "same seed must give bit-identical output");
            for w in traj.windows(2) {
                assert_eq!(w[0].x_out, w[1].x_in, "trajectory must chain");
                assert_eq!(w[0].t_out, w[1].t_in);
            }
        }
    }
}
