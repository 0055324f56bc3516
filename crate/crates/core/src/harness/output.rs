//! CSV emission. Floats are written in scientific notation with 17
//! significant digits, so every value survives a text round trip bit-exactly.

use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::harness::recall::TrialReport;
use crate::harness::sweeps::{ConvergenceRow, StabilityRow};

/// A record with a fixed column layout.
pub trait CsvRecord {
    fn header() -> &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

impl CsvRecord for TrialReport {
    fn header() -> &'static [&'static str] {
        &[
            "seed",
            "method",
            "scheme",
            "perturbation",
            "param",
            "mse",
            "cosine",
            "max_state_norm",
            "divergence_index",
        ]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.seed.to_string(),
            self.method.to_string(),
            self.scheme.to_string(),
            match self.perturbation {
                crate::harness::Perturbation::Scale {
                    scale_values: true, ..
                } => "scale-kv".into(),
                p => p.name().into(),
            },
            format_float(self.perturbation.param()),
            format_float(self.mse),
            format_float(self.cosine),
            format_float(self.max_state_norm),
            self.divergence_index.map(|t| t.to_string()).unwrap_or_default(),
        ]
    }
}

impl CsvRecord for StabilityRow {
    fn header() -> &'static [&'static str] {
        &["x", "method", "measured_factor", "predicted_factor", "abs_error"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            format_float(self.x),
            self.method.to_string(),
            format_float(self.measured_factor),
            format_float(self.predicted_factor),
            format_float(self.abs_error),
        ]
    }
}

impl CsvRecord for ConvergenceRow {
    fn header() -> &'static [&'static str] {
        &["order", "beta", "lambda", "x", "coefficient", "exact", "abs_error", "bound", "bound_ratio"]
    }

    fn fields(&self) -> Vec<String> {
        let mut out = vec![self.order.to_string()];
        out.extend(
            [
                self.beta,
                self.lambda,
                self.x,
                self.coefficient,
                self.exact,
                self.abs_error,
                self.bound,
                self.bound_ratio,
            ]
            .map(format_float),
        );
        out
    }
}

/// Header plus one row per record.
pub fn write_csv<R: CsvRecord, W: Write>(records: &[R], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(R::header())?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv<R: CsvRecord>(records: &[R], path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_csv(records, std::io::BufWriter::new(file))
}
