//! Per-subject recording CSVs, the ingestion manifest, and the three-file
//! dataset archive.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, LabeledDataset, Modality, RawRecording, LANDMARK_POINTS};
use crate::error::{Error, Result};
use crate::io::{read_to_string, write_atomic};
use crate::numerics::Matrix;

pub const BIO_FEATURES_FILE: &str = "bio_features.csv";
pub const LANDMARK_FEATURES_FILE: &str = "landmark_features.csv";
pub const LABELS_FILE: &str = "labels.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSubject {
    pub id: String,
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub bio_channels: Vec<String>,
    pub subjects: Vec<ManifestSubject>,
}

/// `lm_x_0..lm_x_67`, then `lm_y_0..lm_y_67`.
pub fn landmark_column_names() -> Vec<String> {
    ["x", "y"]
        .iter()
        .flat_map(|axis| (0..LANDMARK_POINTS).map(move |i| format!("lm_{axis}_{i}")))
        .collect()
}

fn fmt_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        write!(out, "{v:?}").expect("string write");
    }
    out.push('\n');
}

/// Reads one subject CSV: `t`, the bio channels, landmark columns, `stress`.
pub fn read_recording_csv(path: &Path, subject_id: &str, bio_channels: &[String]) -> Result<RawRecording> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    })?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::InvalidInput(format!("{}: missing column {name:?}", path.display()))
        })
    };
    let t_col = col("t")?;
    let bio_cols: Vec<usize> = bio_channels.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let lm_cols: Vec<usize> = landmark_column_names().iter().map(|c| col(c)).collect::<Result<_>>()?;
    let stress_col = col("stress")?;

    let mut times = Vec::new();
    let mut bio: Vec<Vec<f64>> = vec![Vec::new(); bio_cols.len()];
    let mut frames = Vec::new();
    let mut stress = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let line = r + 2;
        let field = |c: usize| -> Result<f64> {
            let raw = record.get(c).unwrap_or("");
            let v: f64 = raw.trim().parse().map_err(|_| {
                Error::InvalidInput(format!(
                    "{}: line {line}, column {:?}: not a number: {raw:?}",
                    path.display(),
                    &headers[c]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{}: line {line}, column {:?}: non-finite value",
                    path.display(),
                    &headers[c]
                )));
            }
            Ok(v)
        };
        times.push(field(t_col)?);
        for (series, &c) in bio.iter_mut().zip(&bio_cols) {
            series.push(field(c)?);
        }
        frames.push(lm_cols.iter().map(|&c| field(c)).collect::<Result<Vec<_>>>()?);
        stress.push(field(stress_col)?);
    }
    let sample_rate = if times.len() >= 2 {
        (times.len() - 1) as f64 / (times[times.len() - 1] - times[0])
    } else {
        1.0
    };
    if times.windows(2).any(|w| (w[1] - w[0] - 1.0).abs() > 1e-6) {
        return Err(Error::InvalidInput(format!(
            "{}: samples must be 1 s apart",
            path.display()
        )));
    }
    let rec = RawRecording {
        subject_id: subject_id.to_string(),
        sample_rate: if (sample_rate - 1.0).abs() < 1e-9 { 1.0 } else { sample_rate },
        bio_channels: bio_channels.iter().cloned().zip(bio).collect(),
        landmark_frames: frames,
        stress,
    };
    rec.validate()?;
    Ok(rec)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = read_to_string(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let m: Manifest = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
        pointer: e.path().to_string(),
        reason: e.inner().to_string(),
    })?;
    if m.subjects.is_empty() {
        return Err(Error::EmptyDataset(format!("{}: no subjects", path.display())));
    }
    Ok(m)
}

/// Loads every recording listed in a manifest, in manifest order.
pub fn read_recordings(manifest_path: &Path) -> Result<Vec<RawRecording>> {
    let m = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    m.subjects
        .iter()
        .map(|s| read_recording_csv(&base.join(&s.path), &s.id, &m.bio_channels))
        .collect()
}

/// Writes one CSV per subject plus `manifest.json` into `dir`. Returns the
/// manifest path.
pub fn write_recordings(dir: &Path, recordings: &[RawRecording]) -> Result<PathBuf> {
    let first = recordings
        .first()
        .ok_or_else(|| Error::EmptyDataset("no recordings to write".into()))?;
    let bio_channels: Vec<String> = first.bio_channels.iter().map(|(n, _)| n.clone()).collect();
    let mut subjects = Vec::with_capacity(recordings.len());
    for rec in recordings {
        let mut out = String::from("t");
        for (name, _) in &rec.bio_channels {
            out.push(',');
            out.push_str(name);
        }
        for c in landmark_column_names() {
            out.push(',');
            out.push_str(&c);
        }
        out.push_str(",stress\n");
        for t in 0..rec.len() {
            let row = std::iter::once(t as f64 / rec.sample_rate)
                .chain(rec.bio_channels.iter().map(|(_, s)| s[t]))
                .chain(rec.landmark_frames[t].iter().copied())
                .chain(std::iter::once(rec.stress[t]));
            fmt_row(&mut out, row);
        }
        let file = PathBuf::from(format!("{}.csv", rec.subject_id));
        write_atomic(&dir.join(&file), out.as_bytes())?;
        subjects.push(ManifestSubject {
            id: rec.subject_id.clone(),
            path: file,
        });
    }
    let manifest = Manifest {
        bio_channels,
        subjects,
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

fn matrix_csv(m: &FeatureMatrix) -> String {
    let mut out = m.names.join(",");
    out.push('\n');
    for i in 0..m.values.rows() {
        fmt_row(&mut out, m.values.row(i).iter().copied());
    }
    out
}

/// Writes `bio_features.csv`, `landmark_features.csv` and `labels.csv`
/// (`label,subject_id,window_start`) with aligned rows.
pub fn write_dataset(dir: &Path, ds: &LabeledDataset) -> Result<()> {
    ds.validate()?;
    write_atomic(&dir.join(BIO_FEATURES_FILE), matrix_csv(&ds.bio).as_bytes())?;
    write_atomic(&dir.join(LANDMARK_FEATURES_FILE), matrix_csv(&ds.landmarks).as_bytes())?;
    let mut out = String::from("label,subject_id,window_start\n");
    for i in 0..ds.len() {
        writeln!(out, "{},{},{:?}", ds.labels[i], ds.subject_ids[i], ds.window_start[i])
            .expect("string write");
    }
    write_atomic(&dir.join(LABELS_FILE), out.as_bytes())
}

fn read_matrix_csv(path: &Path, modality: Modality) -> Result<FeatureMatrix> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    })?;
    let names: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        for (c, field) in record?.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Format(format!(
                    "{}: line {}, column {}: bad number {field:?}",
                    path.display(),
                    r + 2,
                    c + 1
                ))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    Ok(FeatureMatrix {
        values: Matrix::from_vec(rows, names.len(), data)?,
        names,
        modality,
    })
}

pub fn read_dataset(dir: &Path) -> Result<LabeledDataset> {
    let bio = read_matrix_csv(&dir.join(BIO_FEATURES_FILE), Modality::Bio)?;
    let landmarks = read_matrix_csv(&dir.join(LANDMARK_FEATURES_FILE), Modality::Landmarks)?;
    let path = dir.join(LABELS_FILE);
    let mut reader = csv::Reader::from_path(&path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(&path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    })?;
    let mut labels = Vec::new();
    let mut subject_ids = Vec::new();
    let mut window_start = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let bad = || Error::Format(format!("{}: malformed line {}", path.display(), r + 2));
        labels.push(record.get(0).and_then(|s| s.parse().ok()).ok_or_else(bad)?);
        subject_ids.push(record.get(1).ok_or_else(bad)?.to_string());
        window_start.push(record.get(2).and_then(|s| s.parse().ok()).ok_or_else(bad)?);
    }
    let ds = LabeledDataset {
        bio,
        landmarks,
        labels,
        subject_ids,
        window_start,
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{WindowSpec, window_and_normalize, LANDMARK_COORDS};

    fn recording(id: &str, n: usize) -> RawRecording {
        RawRecording {
            subject_id: id.into(),
            sample_rate: 1.0,
            bio_channels: vec![
                ("hr".into(), (0..n).map(|t| 60.0 + (t % 7) as f64).collect()),
                ("eda".into(), (0..n).map(|t| 0.1 * t as f64).collect()),
            ],
            landmark_frames: (0..n)
                .map(|t| (0..LANDMARK_COORDS).map(|c| (c + t % 3) as f64).collect())
                .collect(),
            stress: (0..n).map(|t| (t % 20) as f64 * 0.95).collect(),
        }
    }

    #[test]
    fn recordings_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![recording("s01", 45), recording("s02", 30)];
        let manifest = write_recordings(dir.path(), &recs).unwrap();
        assert_eq!(read_recordings(&manifest).unwrap(), recs);
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![recording("a", 60), recording("b", 50)];
        let ds = window_and_normalize(&recs, WindowSpec::default()).unwrap();
        assert_eq!(ds.bio.values.cols(), 50);
        assert_eq!(ds.landmarks.values.cols(), LANDMARK_COORDS * 14);
        write_dataset(dir.path(), &ds).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), ds);
    }

    #[test]
    fn non_finite_cell_is_located() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_recordings(dir.path(), &[recording("s01", 25)]).unwrap();
        let csv_path = dir.path().join("s01.csv");
        let text = std::fs::read_to_string(&csv_path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut cells: Vec<&str> = lines[3].split(',').collect();
        cells[2] = "NaN";
        lines[3] = cells.join(",");
        std::fs::write(&csv_path, lines.join("\n") + "\n").unwrap();
        let err = read_recordings(&manifest).unwrap_err().to_string();
        assert!(err.contains("line 4") && err.contains("eda"), "{err}");
    }

    #[test]
    fn missing_column_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_recordings(dir.path(), &[recording("s01", 25)]).unwrap();
        let m = Manifest {
            bio_channels: vec!["hr".into(), "spo2".into()],
            subjects: read_manifest(&manifest).unwrap().subjects,
        };
        std::fs::write(&manifest, serde_json::to_string(&m).unwrap()).unwrap();
        assert!(matches!(read_recordings(&manifest), Err(Error::InvalidInput(_))));
    }
}
