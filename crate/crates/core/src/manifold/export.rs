use std::path::Path;

use serde::Serialize;

use super::{Diagnostics, EmbeddingConfig, EmbeddingResult, Method};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::numerics::Matrix;

/// CSV with header `dim_0,…,dim_{d-1}`, one line per row, `\n` endings and
/// shortest round-trip float formatting.
pub fn write_embedding_csv(path: &Path, coords: &Matrix) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = (0..coords.cols()).map(|c| format!("dim_{c}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..coords.rows() {
        let line: Vec<String> = coords.row(i).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_embedding_csv(path: &Path) -> Result<Matrix> {
    let mut reader = csv::Reader::from_path(path)?;
    let cols = reader.headers()?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record?;
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Format(format!("{}: bad number {field:?}", path.display())))?;
            data.push(v);
        }
        rows += 1;
    }
    Matrix::from_vec(rows, cols, data)
}

#[derive(Serialize)]
struct Sidecar<'a> {
    method: Method,
    hyperparameters: &'a EmbeddingConfig,
    rows: usize,
    #[serde(flatten)]
    diagnostics: &'a Diagnostics,
}

/// JSON sidecar: method, hyperparameters, stress/KL/spectrum, seconds.
pub fn write_diagnostics_json(
    path: &Path,
    cfg: &EmbeddingConfig,
    result: &EmbeddingResult,
) -> Result<()> {
    let sidecar = Sidecar {
        method: cfg.method,
        hyperparameters: cfg,
        rows: result.coords.rows(),
        diagnostics: &result.diagnostics,
    };
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
