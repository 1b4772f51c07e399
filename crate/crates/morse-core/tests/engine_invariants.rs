//! Engine-level invariants over full (grid, split) sweeps.

use morse_core::{
    build_morse_schedule, ddim_step, exact_ddim_gaussian_oracle, gaussian_w2, make_oracle_dot,
    morse_sample, run_sampler, select_time_grid, AnalyticGaussianDash, ChainSource,
    DashEstimator, Executor, GaussianDataSpec, GridStrategy, NoiseSchedule, NoiseStream,
    SamplerKind, Vector, ZeroDot,
};

fn benchmark_data() -> GaussianDataSpec {
    GaussianDataSpec::diagonal(Vector::new(vec![1.0, -1.0]).unwrap(), &[0.5, 2.0]).unwrap()
}

#[test]
fn oracle_dot_is_lossless_over_the_full_sweep() {
    let sched = NoiseSchedule::default_linear();
    let dash = AnalyticGaussianDash::new(benchmark_data(), sched.clone());
    let oracle = make_oracle_dot(&dash);
    for n in [4usize, 6, 10, 20] {
        let grid = select_time_grid(1000, n, GridStrategy::Uniform).unwrap();
        let mut dense_stream = NoiseStream::from_seed(2024);
        let (dense, _) =
            run_sampler(&dash, &grid, SamplerKind::Ddim, &sched, &mut dense_stream).unwrap();
        for d in 1..=n {
            let ms = build_morse_schedule(&grid, d, 4.0).unwrap();
            let mut stream = NoiseStream::from_seed(2024);
            let run = morse_sample(
                &dash,
                &oracle,
                &ms,
                SamplerKind::Ddim,
                ChainSource::FromDash,
                &sched,
                &mut stream,
            )
            .unwrap();
            let dev = run.sample.max_abs_diff(&dense);
            assert!(dev < 1e-9, "n={n} d={d}: deviation {dev}");
        }
    }
}

#[test]
fn zero_residual_equals_jump_sampling_on_the_dash_subgrid() {
    let sched = NoiseSchedule::default_linear();
    let dash = AnalyticGaussianDash::new(benchmark_data(), sched.clone());
    let zero = ZeroDot { dim: 2 };
    for (n, d) in [(8usize, 2usize), (12, 3), (12, 4), (20, 5)] {
        let grid = select_time_grid(1000, n, GridStrategy::Uniform).unwrap();
        let ms = build_morse_schedule(&grid, d, 4.0).unwrap();
        let mut stream = NoiseStream::from_seed(31);
        let run = morse_sample(
            &dash,
            &zero,
            &ms,
            SamplerKind::Ddim,
            ChainSource::FromDash,
            &sched,
            &mut stream,
        )
        .unwrap();

        // one jump per Dash segment under the frozen estimate
        let dash_points: Vec<usize> = ms
            .steps()
            .filter(|(_, _, e)| *e == Executor::Dash)
            .map(|(t_in, _, _)| t_in)
            .collect();
        let mut replay = NoiseStream::from_seed(31);
        let mut x = replay.standard_normal_vector(2);
        for (i, &t_in) in dash_points.iter().enumerate() {
            let t_out = dash_points.get(i + 1).copied().unwrap_or(0);
            let z = dash.estimate(&x, t_in).unwrap();
            x = ddim_step(&x, &z, t_in, t_out, &sched).unwrap();
        }
        assert!(run.sample.max_abs_diff(&x) < 1e-10, "n={n} d={d}");
    }
}

#[test]
fn jump_degradation_is_monotone_in_grid_size() {
    // more steps never hurt: exact W2 to the data law is non-increasing as
    // the grid grows
    let sched = NoiseSchedule::default_linear();
    let data = benchmark_data();
    let target = (&data).into();
    let mut previous = f64::INFINITY;
    for n in [3usize, 5, 10, 20, 50] {
        let grid = select_time_grid(1000, n, GridStrategy::Uniform).unwrap();
        let m = exact_ddim_gaussian_oracle(&grid, &data, &sched).unwrap();
        let w2 = gaussian_w2(&m, &target).unwrap();
        assert!(w2 <= previous + 1e-6, "W2 increased from {previous} to {w2} at n={n}");
        previous = w2;
    }
    // a dense 200-point grid is already close
    let grid = select_time_grid(1000, 200, GridStrategy::Uniform).unwrap();
    let m = exact_ddim_gaussian_oracle(&grid, &data, &sched).unwrap();
    assert!(gaussian_w2(&m, &target).unwrap() < 0.05);
}
