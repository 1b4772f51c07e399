//! Sinusoidal timestep embedding.

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Embed an integer timestep as interleaved [sin(t w_j), cos(t w_j)] pairs.
///
/// Frequencies are log-spaced from 1 down to 1/T over j = 0..dim/2-1, so the
/// slowest component has period ~ T. With a single pair (dim = 2) the one
/// frequency is 1/T.
pub fn sinusoidal_time_embed(t: usize, dim: usize, total_steps: usize) -> Result<Vector> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::Config(format!("embedding dim must be positive even, got {dim}")));
    }
    if total_steps == 0 {
        return Err(Error::Config("total_steps must be >= 1".into()));
    }
    let half = dim / 2;
    let tf = t as f64;
    let big_t = total_steps as f64;
    let mut out = Vec::with_capacity(dim);
    for j in 0..half {
        let omega = if half == 1 {
            1.0 / big_t
        } else {
            big_t.powf(-(j as f64) / (half as f64 - 1.0))
        };
        out.push((tf * omega).sin());
        out.push((tf * omega).cos());
    }
    Vector::new(out)
}
