//! CSV emission with fixed schemas.
//!
//! All files are UTF-8, comma-separated, '.' decimal, locale-independent.
//! Floats print in Rust's shortest round-trip form, so reruns with the same
//! seed produce byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

pub const CURVES_HEADER: &str =
    "label,latency_lsd,n_steps,dash_steps,dot_steps,metric,metric_stderr";
pub const SPEEDUP_HEADER: &str = "latency_lsd,speedup_or_NA";
pub const SWEEP_HEADER: &str = "ratio,latency_lsd,metric";
pub const LOSS_HEADER: &str = "iteration,loss";

pub struct CsvWriter {
    buffer: String,
    columns: usize,
}

impl CsvWriter {
    pub fn new(header: &str) -> Self {
        let mut buffer = String::new();
        buffer.push_str(header);
        buffer.push('\n');
        Self { buffer, columns: header.split(',').count() }
    }

    pub fn row(&mut self, fields: &[String]) {
        assert_eq!(fields.len(), self.columns, "row width does not match the header");
        let mut first = true;
        for f in fields {
            debug_assert!(!f.contains(','), "field must not contain a comma: {f}");
            if !first {
                self.buffer.push(',');
            }
            let _ = write!(self.buffer, "{f}");
            first = false;
        }
        self.buffer.push('\n');
    }

    pub fn finish(self, path: &Path) -> Result<()> {
        std::fs::write(path, self.buffer.as_bytes())?;
        Ok(())
    }
}

pub fn write_loss_csv(path: &Path, losses: &[f64]) -> Result<()> {
    let mut w = CsvWriter::new(LOSS_HEADER);
    for (i, loss) in losses.iter().enumerate() {
        w.row(&[i.to_string(), loss.to_string()]);
    }
    w.finish(path)
}
