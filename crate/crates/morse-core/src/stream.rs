//! Seeded noise streams and the per-purpose seed-splitting scheme.
//!
//! Every random quantity in an experiment derives from one root seed. A
//! substream is addressed by (root seed, purpose, index): the root seed keys
//! a ChaCha8 generator and the (purpose, index) pair selects its stream id,
//! so substreams never overlap and are independent of evaluation order or
//! worker count. `index` is the chain / example number inside a purpose.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::Vector;

/// What a substream is used for. The discriminant occupies the top byte of
/// the ChaCha stream id; the low 56 bits carry the index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum StreamPurpose {
    Dataset = 1,
    ParamInit = 2,
    Chains = 3,
    TrainingPairs = 4,
    Validation = 5,
    MetricTarget = 6,
}

/// A deterministic noise stream (ChaCha8 + ziggurat normals).
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn from_seed(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Substream for (root, purpose, index). Panics if index needs more than
    /// 56 bits.
    pub fn derive(root_seed: u64, purpose: StreamPurpose, index: u64) -> Self {
        assert!(index < (1u64 << 56), "substream index too large");
        let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
        rng.set_stream(((purpose as u64) << 56) | index);
        Self { rng }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn standard_normal_vector(&mut self, dim: usize) -> Vector {
        let mut v = Vec::with_capacity(dim);
        for _ in 0..dim {
            v.push(self.standard_normal());
        }
        Vector::new(v).expect("normal draws are finite")
    }

    /// Uniform integer in `lo..=hi`.
    pub fn uniform_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        self.rng.random_range(lo..=hi)
    }

    pub fn uniform_f64(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}
