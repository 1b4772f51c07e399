//! The four experiment pipelines behind the CLI subcommands.

pub mod bench;

use std::path::{Path, PathBuf};

use serde_json::json;

use morse_core::{
    build_morse_schedule, morse_sample, run_sampler, select_time_grid, train_dash, train_dot,
    ChainSource, DashEstimator, GridStrategy, MlpDenoiser, MorseRun, NoiseStream, SamplerKind,
    SharedDot, StreamPurpose, TimeGrid, Vector,
};

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::config::ExperimentConfig;
use crate::csvio::{write_loss_csv, CsvWriter};
use crate::error::{CliError, Result};

/// Resolved invocation: config plus command-line overrides.
pub struct RunContext {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl RunContext {
    pub fn new(config: ExperimentConfig, seed_override: Option<u64>, out_override: Option<PathBuf>) -> Self {
        let seed = seed_override.unwrap_or(config.seed);
        let out_dir = out_override.unwrap_or_else(|| PathBuf::from(&config.output.dir));
        Self { config, seed, out_dir }
    }

    pub fn prepare_out_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)?;
        Ok(())
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

/// Train the denoiser and persist it with its loss history.
pub fn cmd_train_dash(ctx: &RunContext) -> Result<PathBuf> {
    ctx.prepare_out_dir()?;
    let dataset = ctx.config.dataset()?;
    let sched = ctx.config.noise_schedule()?;
    let mlp_config = ctx.config.mlp_config(morse_core::DataSampler::dim(&dataset));
    let mut init = NoiseStream::derive(ctx.seed, StreamPurpose::ParamInit, 0);
    let net = MlpDenoiser::new(mlp_config, &mut init).map_err(CliError::from)?;

    let train_config = ctx.config.dash_train_config(ctx.seed);
    let trained = train_dash(&dataset, &sched, net, &train_config)?;

    let ckpt_path = ctx.out_path("dash.ckpt");
    Checkpoint::for_dash(
        &trained.net,
        sched.fingerprint(),
        ctx.seed,
        train_config.iterations as u64,
    )
    .save(&ckpt_path)?;
    write_loss_csv(&ctx.out_path("dash_loss.csv"), &trained.loss_history)?;
    println!(
        "trained dash: {} iterations, final loss {:.6}, checkpoint {}",
        train_config.iterations,
        trained.loss_history.last().unwrap(),
        ckpt_path.display()
    );
    Ok(ckpt_path)
}

pub fn load_dash(path: &Path, expected_fingerprint: u64) -> Result<MlpDenoiser> {
    let ckpt = Checkpoint::load_kind(path, ModelKind::DashMlp)?;
    ckpt.require_fingerprint(expected_fingerprint, "dash checkpoint")?;
    ckpt.into_dash()
}

pub fn load_shared_dot(path: &Path, expected_fingerprint: u64) -> Result<SharedDot> {
    let ckpt = Checkpoint::load_kind(path, ModelKind::SharedDot)?;
    ckpt.require_fingerprint(expected_fingerprint, "dot checkpoint")?;
    ckpt.into_shared_dot()
}

/// Train the residual model against a frozen dash checkpoint.
pub fn cmd_train_dot(ctx: &RunContext, dash_ckpt: &Path) -> Result<PathBuf> {
    ctx.prepare_out_dir()?;
    let dataset = ctx.config.dataset()?;
    let sched = ctx.config.noise_schedule()?;
    let dash = load_dash(dash_ckpt, sched.fingerprint())?;

    let mask: morse_core::InputMask = ctx.config.morse.input_mask.into();
    let mut init = NoiseStream::derive(ctx.seed, StreamPurpose::ParamInit, 1);
    let dot = SharedDot::build(
        &dash,
        mask,
        ctx.config.model.lora_rank,
        ctx.config.model.lora_scale,
        &mut init,
    )?;

    let train_config = ctx.config.dot_train_config(ctx.seed);
    let outcome = train_dot(&dash, dot, &dataset, &sched, &train_config)?;

    let ckpt_path = ctx.out_path("dot.ckpt");
    Checkpoint::for_shared_dot(
        &outcome.dot,
        sched.fingerprint(),
        ctx.seed,
        train_config.iterations as u64,
    )
    .save(&ckpt_path)?;
    write_loss_csv(&ctx.out_path("dot_loss.csv"), &outcome.loss_history)?;

    let report = json!({
        "mask": {
            "x_ts": ctx.config.morse.input_mask.x_ts,
            "z_ts": ctx.config.morse.input_mask.z_ts,
            "t_s": ctx.config.morse.input_mask.t_s,
        },
        "examples": outcome.validation.examples,
        "trained_mse": outcome.validation.trained_mse,
        "zero_predictor_mse": outcome.validation.zero_predictor_mse,
        "seed": ctx.seed,
        "iterations": train_config.iterations,
    });
    std::fs::write(
        ctx.out_path("dot_validation.json"),
        serde_json::to_string_pretty(&report).expect("json serialization") + "\n",
    )?;
    println!(
        "trained dot: held-out mse {:.6} vs zero predictor {:.6}, checkpoint {}",
        outcome.validation.trained_mse,
        outcome.validation.zero_predictor_mse,
        ckpt_path.display()
    );
    Ok(ckpt_path)
}

/// The model pair driving a chain: a denoiser plus an optional residual
/// corrector (trained or ideal).
pub enum DotSource<'a> {
    Trained(&'a SharedDot),
    Oracle,
    None,
}

/// Run `chains` independent chains; chain c draws its noise from
/// (seed, Chains, c), so results are reproducible and order-independent.
pub fn run_chains(
    dash: &MlpDenoiser,
    dot: &DotSource<'_>,
    grid: &TimeGrid,
    dash_count: usize,
    kind: SamplerKind,
    chain: ChainSource,
    sched: &morse_core::NoiseSchedule,
    speed_ratio: f64,
    seed: u64,
    chains: usize,
) -> Result<(Vec<Vector>, f64)> {
    use rayon::prelude::*;
    let all_dash = dash_count == grid.transitions();
    let schedule = build_morse_schedule(grid, dash_count, speed_ratio)?;
    let cost = morse_core::lsd_cost(&schedule);

    let samples: Vec<Vector> = (0..chains)
        .into_par_iter()
        .map(|c| -> Result<Vector> {
            let mut stream = NoiseStream::derive(seed, StreamPurpose::Chains, c as u64);
            if all_dash {
                let (out, _) = run_sampler(dash, grid, kind, sched, &mut stream)?;
                return Ok(out);
            }
            let run: MorseRun = match dot {
                DotSource::Trained(d) => {
                    morse_sample(dash, *d, &schedule, kind, chain, sched, &mut stream)?
                }
                DotSource::Oracle => {
                    let oracle = morse_core::make_oracle_dot(dash);
                    morse_sample(dash, &oracle, &schedule, kind, chain, sched, &mut stream)?
                }
                DotSource::None => {
                    return Err(CliError::Config(
                        "this configuration has Dot steps but no Dot model was supplied".into(),
                    ))
                }
            };
            Ok(run.sample)
        })
        .collect::<Result<_>>()?;
    Ok((samples, cost))
}

/// Generate chains with the configured models and write them as CSV.
pub fn cmd_sample(
    ctx: &RunContext,
    dash_ckpt: &Path,
    dot_ckpt: Option<&Path>,
    oracle_dot: bool,
    chain_source: ChainSource,
) -> Result<PathBuf> {
    ctx.prepare_out_dir()?;
    let sample_cfg = ctx
        .config
        .sample
        .as_ref()
        .ok_or_else(|| CliError::Config("config has no [sample] section".into()))?;
    let sched = ctx.config.noise_schedule()?;
    let dash = load_dash(dash_ckpt, sched.fingerprint())?;
    let loaded_dot = match dot_ckpt {
        Some(p) => Some(load_shared_dot(p, sched.fingerprint())?),
        None => None,
    };
    let dot = match (&loaded_dot, oracle_dot) {
        (Some(_), true) => {
            return Err(CliError::Config("--dot-ckpt and --oracle-dot are mutually exclusive".into()))
        }
        (Some(d), false) => DotSource::Trained(d),
        (None, true) => DotSource::Oracle,
        (None, false) => DotSource::None,
    };

    let grid = select_time_grid(sched.total_steps(), sample_cfg.grid_size, GridStrategy::Uniform)?;
    let dash_count = sample_cfg.dash_count.unwrap_or(sample_cfg.grid_size);
    let (samples, cost) = run_chains(
        &dash,
        &dot,
        &grid,
        dash_count,
        ctx.config.sampler.kind.into(),
        chain_source,
        &sched,
        ctx.config.morse.speed_ratio,
        ctx.seed,
        sample_cfg.chains,
    )?;

    let dim = dash.data_dim();
    let header = {
        let mut h = String::from("chain");
        for i in 0..dim {
            h.push_str(&format!(",x{i}"));
        }
        h
    };
    let mut w = CsvWriter::new(&header);
    for (c, s) in samples.iter().enumerate() {
        let mut row = vec![c.to_string()];
        row.extend(s.iter().map(|v| v.to_string()));
        w.row(&row);
    }
    let path = ctx.out_path("samples.csv");
    w.finish(&path)?;
    println!(
        "wrote {} chains ({} steps, {} dash) at {cost} LSD to {}",
        sample_cfg.chains,
        sample_cfg.grid_size,
        dash_count,
        path.display()
    );
    Ok(path)
}
