//! Result rows and CSV output.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::SimError;

/// One result row. The CSV columns follow the field order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub scenario: String,
    pub algorithm: String,
    pub trial: usize,
    pub snr_db: f64,
    /// `sum_rate`, `mutual_info` or `per_stream_mse`.
    pub metric_name: String,
    pub value: f64,
    pub wall_time_ms: f64,
    pub converged: bool,
}

impl RunRecord {
    pub(crate) fn sort(records: &mut [RunRecord]) {
        records.sort_by(|a, b| {
            (&a.scenario, &a.algorithm, a.trial)
                .cmp(&(&b.scenario, &b.algorithm, b.trial))
                .then(a.snr_db.total_cmp(&b.snr_db))
        });
    }
}

pub fn to_csv_bytes(records: &[RunRecord]) -> Result<Vec<u8>, SimError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    if records.is_empty() {
        w.write_record([
            "scenario",
            "algorithm",
            "trial",
            "snr_db",
            "metric_name",
            "value",
            "wall_time_ms",
            "converged",
        ])?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| SimError::Io(e.into_error()))
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_csv(path: &Path, records: &[RunRecord]) -> Result<(), SimError> {
    let bytes = to_csv_bytes(records)?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(&bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| SimError::Io(e.error))?;
    Ok(())
}
