//! Checkpoint container: a self-describing binary file holding a model's
//! architecture descriptor and flat f64 parameters.
//!
//! Layout (all integers little-endian):
//!   magic "MORSECK1" | u32 version | u8 kind | u64 schedule fingerprint |
//!   u64 seed | u64 iterations | u32 descriptor length | descriptor JSON |
//!   u64 param count | params as f64 LE | u64 FNV-1a checksum of everything
//!   before it.
//!
//! Loading validates magic, version, length, checksum, and the kind tag;
//! the schedule fingerprint is checked by the caller against the schedule
//! it intends to use.

use std::path::Path;

use serde::{Deserialize, Serialize};

use morse_core::{
    Activation, InputMask, MlpConfig, MlpDenoiser, NoiseStream, SharedDot, StreamPurpose,
};

use crate::config::ActivationArg;
use crate::error::{CliError, Result};

const MAGIC: &[u8; 8] = b"MORSECK1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    DashMlp,
    SharedDot,
}

impl ModelKind {
    fn tag(self) -> u8 {
        match self {
            ModelKind::DashMlp => 1,
            ModelKind::SharedDot => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(ModelKind::DashMlp),
            2 => Ok(ModelKind::SharedDot),
            other => Err(CliError::Integrity(format!("unknown model kind tag {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::DashMlp => "dash-mlp",
            ModelKind::SharedDot => "shared-dot",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MlpArch {
    pub data_dim: usize,
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: ActivationArg,
    pub total_steps: usize,
}

impl MlpArch {
    pub fn of(net: &MlpDenoiser) -> Self {
        let c = net.config();
        let activation = match c.activation {
            Activation::SiLU => ActivationArg::Silu,
            Activation::ReLU => ActivationArg::Relu,
            Activation::Tanh => ActivationArg::Tanh,
        };
        Self {
            data_dim: c.data_dim,
            embed_dim: c.embed_dim,
            hidden: c.hidden.clone(),
            activation,
            total_steps: c.total_steps,
        }
    }

    pub fn build(&self, params: &[f64]) -> Result<MlpDenoiser> {
        let config = MlpConfig {
            data_dim: self.data_dim,
            embed_dim: self.embed_dim,
            extra_cond_dim: 0,
            hidden: self.hidden.clone(),
            activation: self.activation.into(),
            total_steps: self.total_steps,
        };
        // parameters are overwritten immediately; the init stream is inert
        let mut scratch = NoiseStream::derive(0, StreamPurpose::ParamInit, u32::MAX as u64);
        let mut net = MlpDenoiser::new(config, &mut scratch)
            .map_err(|e| CliError::Integrity(format!("descriptor rejected: {e}")))?;
        net.set_params_flat(params)
            .map_err(|e| CliError::Integrity(format!("parameter payload mismatch: {e}")))?;
        Ok(net)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SharedDotArch {
    pub base: MlpArch,
    pub mask_x_ts: bool,
    pub mask_z_ts: bool,
    pub mask_t_s: bool,
    pub rank: usize,
    pub lora_scale: f64,
}

impl SharedDotArch {
    pub fn of(dot: &SharedDot) -> Self {
        Self {
            base: MlpArch::of(dot.base()),
            mask_x_ts: dot.mask().use_x_ts,
            mask_z_ts: dot.mask().use_z_ts,
            mask_t_s: dot.mask().use_t_s,
            rank: dot.rank(),
            lora_scale: dot.lora_scale(),
        }
    }

    /// Payload layout: base params then trainable params.
    pub fn build(&self, params: &[f64]) -> Result<SharedDot> {
        let base_count: usize = {
            let mut widths = vec![self.base.data_dim + self.base.embed_dim];
            widths.extend_from_slice(&self.base.hidden);
            widths.push(self.base.data_dim);
            widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
        };
        if params.len() < base_count {
            return Err(CliError::Integrity(format!(
                "payload holds {} params, body alone needs {base_count}",
                params.len()
            )));
        }
        let base = self.base.build(&params[..base_count])?;
        let mask =
            InputMask { use_x_ts: self.mask_x_ts, use_z_ts: self.mask_z_ts, use_t_s: self.mask_t_s };
        let mut scratch = NoiseStream::derive(0, StreamPurpose::ParamInit, u32::MAX as u64);
        let mut dot = SharedDot::build(&base, mask, self.rank, self.lora_scale, &mut scratch)
            .map_err(|e| CliError::Integrity(format!("descriptor rejected: {e}")))?;
        dot.set_trainable_params_flat(&params[base_count..])
            .map_err(|e| CliError::Integrity(format!("parameter payload mismatch: {e}")))?;
        Ok(dot)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ArchDescriptor {
    SharedDot(SharedDotArch),
    DashMlp(MlpArch),
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub schedule_fingerprint: u64,
    pub seed: u64,
    pub iterations: u64,
    pub descriptor: ArchDescriptor,
    pub params: Vec<f64>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let descriptor = serde_json::to_vec(&self.descriptor)
            .map_err(|e| CliError::Other(format!("descriptor serialization failed: {e}")))?;
        let mut out = Vec::with_capacity(45 + descriptor.len() + self.params.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind.tag());
        out.extend_from_slice(&self.schedule_fingerprint.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.iterations.to_le_bytes());
        out.extend_from_slice(&(descriptor.len() as u32).to_le_bytes());
        out.extend_from_slice(&descriptor);
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        let checksum = fnv1a(&out);
        out.extend_from_slice(&checksum.to_le_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        fn take<'a>(bytes: &'a [u8], off: &mut usize, n: usize) -> Result<&'a [u8]> {
            if *off + n > bytes.len() {
                return Err(CliError::Integrity("checkpoint truncated".into()));
            }
            let s = &bytes[*off..*off + n];
            *off += n;
            Ok(s)
        }
        let fail = |msg: &str| CliError::Integrity(msg.to_string());
        if bytes.len() < 8 + 4 + 1 + 24 + 4 + 8 + 8 {
            return Err(fail("checkpoint truncated: header incomplete"));
        }
        if &bytes[..8] != MAGIC {
            return Err(fail("not a checkpoint file (bad magic)"));
        }
        let mut off = 8;
        let version = u32::from_le_bytes(take(bytes, &mut off, 4)?.try_into().unwrap());
        if version != VERSION {
            return Err(CliError::Integrity(format!(
                "checkpoint version {version} not supported (expected {VERSION})"
            )));
        }
        let kind = ModelKind::from_tag(take(bytes, &mut off, 1)?[0])?;
        let schedule_fingerprint = u64::from_le_bytes(take(bytes, &mut off, 8)?.try_into().unwrap());
        let seed = u64::from_le_bytes(take(bytes, &mut off, 8)?.try_into().unwrap());
        let iterations = u64::from_le_bytes(take(bytes, &mut off, 8)?.try_into().unwrap());
        let desc_len = u32::from_le_bytes(take(bytes, &mut off, 4)?.try_into().unwrap()) as usize;
        let descriptor_bytes = take(bytes, &mut off, desc_len)?.to_vec();
        let param_count = u64::from_le_bytes(take(bytes, &mut off, 8)?.try_into().unwrap()) as usize;
        if param_count > (bytes.len() - off) / 8 {
            return Err(fail("checkpoint truncated: parameter payload incomplete"));
        }
        let mut params = Vec::with_capacity(param_count);
        for _ in 0..param_count {
            params.push(f64::from_le_bytes(take(bytes, &mut off, 8)?.try_into().unwrap()));
        }
        let body_end = off;
        let stored = u64::from_le_bytes(take(bytes, &mut off, 8)?.try_into().unwrap());
        if off != bytes.len() {
            return Err(fail("trailing bytes after checksum"));
        }
        let computed = fnv1a(&bytes[..body_end]);
        if stored != computed {
            return Err(CliError::Integrity(format!(
                "checksum mismatch: stored {stored:#018x}, computed {computed:#018x}"
            )));
        }
        let descriptor: ArchDescriptor = serde_json::from_slice(&descriptor_bytes)
            .map_err(|e| CliError::Integrity(format!("descriptor unreadable: {e}")))?;
        // the untagged decode must agree with the kind byte
        match (&descriptor, kind) {
            (ArchDescriptor::DashMlp(_), ModelKind::DashMlp)
            | (ArchDescriptor::SharedDot(_), ModelKind::SharedDot) => {}
            _ => return Err(fail("descriptor does not match the kind tag")),
        }
        Ok(Self { kind, schedule_fingerprint, seed, iterations, descriptor, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Integrity(format!("cannot read {}: {e}", path.display())))?;
        Self::decode(&bytes)
    }

    /// Load and require a specific model kind.
    pub fn load_kind(path: &Path, want: ModelKind) -> Result<Self> {
        let ckpt = Self::load(path)?;
        if ckpt.kind != want {
            return Err(CliError::Integrity(format!(
                "{} holds a {} checkpoint, expected {}",
                path.display(),
                ckpt.kind.name(),
                want.name()
            )));
        }
        Ok(ckpt)
    }

    pub fn for_dash(net: &MlpDenoiser, fingerprint: u64, seed: u64, iterations: u64) -> Self {
        Self {
            kind: ModelKind::DashMlp,
            schedule_fingerprint: fingerprint,
            seed,
            iterations,
            descriptor: ArchDescriptor::DashMlp(MlpArch::of(net)),
            params: net.params_flat(),
        }
    }

    pub fn for_shared_dot(dot: &SharedDot, fingerprint: u64, seed: u64, iterations: u64) -> Self {
        let mut params = dot.base().params_flat();
        params.extend(dot.trainable_params_flat());
        Self {
            kind: ModelKind::SharedDot,
            schedule_fingerprint: fingerprint,
            seed,
            iterations,
            descriptor: ArchDescriptor::SharedDot(SharedDotArch::of(dot)),
            params,
        }
    }

    pub fn into_dash(self) -> Result<MlpDenoiser> {
        match self.descriptor {
            ArchDescriptor::DashMlp(arch) => arch.build(&self.params),
            _ => Err(CliError::Integrity("not a dash-mlp checkpoint".into())),
        }
    }

    pub fn into_shared_dot(self) -> Result<SharedDot> {
        match self.descriptor {
            ArchDescriptor::SharedDot(arch) => arch.build(&self.params),
            _ => Err(CliError::Integrity("not a shared-dot checkpoint".into())),
        }
    }

    /// Refuse a checkpoint trained under a different schedule, printing both
    /// fingerprints.
    pub fn require_fingerprint(&self, expected: u64, what: &str) -> Result<()> {
        if self.schedule_fingerprint != expected {
            return Err(CliError::Config(format!(
                "{what} was trained under schedule fingerprint {:#018x}, but the configured \
                 schedule has fingerprint {expected:#018x}",
                self.schedule_fingerprint
            )));
        }
        Ok(())
    }
}
