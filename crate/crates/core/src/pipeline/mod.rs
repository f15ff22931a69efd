//! Windowing, feature extraction, stress-label binning, per-subject
//! normalization and class balancing.

mod features;
mod io;

use std::collections::BTreeMap;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

pub use features::{
    compute_channel_features, named_channel_features, Catalog, FREQUENCY_FEATURES, TIME_FEATURES,
};
pub use io::{
    landmark_column_names, read_dataset, read_manifest, read_recording_csv, read_recordings,
    write_dataset, write_recordings, Manifest, ManifestSubject, BIO_FEATURES_FILE, LABELS_FILE,
    LANDMARK_FEATURES_FILE,
};

pub const LANDMARK_POINTS: usize = 68;
pub const LANDMARK_COORDS: usize = 2 * LANDMARK_POINTS;
pub const STRESS_MAX: f64 = 19.0;

/// Default biometric channels (heart rate, electrodermal activity, skin
/// temperature, blood volume pulse, 3-axis accelerometer).
pub const DEFAULT_BIO_CHANNELS: [&str; 7] = [
    "heart_rate",
    "eda",
    "skin_temp",
    "bvp",
    "acc_x",
    "acc_y",
    "acc_z",
];

/// One subject's 1 Hz recording.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRecording {
    pub subject_id: String,
    pub sample_rate: f64,
    pub bio_channels: Vec<(String, Vec<f64>)>,
    /// Per frame: `x_0..x_67` then `y_0..y_67`, in pixels.
    pub landmark_frames: Vec<Vec<f64>>,
    pub stress: Vec<f64>,
}

impl RawRecording {
    pub fn len(&self) -> usize {
        self.stress.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stress.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let who = &self.subject_id;
        if self.sample_rate != 1.0 {
            return Err(Error::InvalidInput(format!(
                "{who}: sample rate must be 1 Hz, got {}",
                self.sample_rate
            )));
        }
        let n = self.stress.len();
        for (name, series) in &self.bio_channels {
            if series.len() != n {
                return Err(Error::InvalidInput(format!(
                    "{who}: channel {name} has {} samples, stress has {n}",
                    series.len()
                )));
            }
            if let Some(t) = series.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{who}: non-finite {name} at sample {t}"
                )));
            }
        }
        if self.landmark_frames.len() != n {
            return Err(Error::InvalidInput(format!(
                "{who}: {} landmark frames, stress has {n}",
                self.landmark_frames.len()
            )));
        }
        for (t, frame) in self.landmark_frames.iter().enumerate() {
            if frame.len() != LANDMARK_COORDS {
                return Err(Error::InvalidInput(format!(
                    "{who}: landmark frame {t} has {} values, expected {LANDMARK_COORDS}",
                    frame.len()
                )));
            }
            if let Some(c) = frame.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{who}: non-finite landmark at sample {t}, coordinate {c}"
                )));
            }
        }
        if let Some(t) = self
            .stress
            .iter()
            .position(|v| !(0.0..=STRESS_MAX).contains(v))
        {
            return Err(Error::InvalidInput(format!(
                "{who}: stress {} at sample {t} outside [0, 19]",
                self.stress[t]
            )));
        }
        Ok(())
    }
}

/// Rolling window in samples (seconds at 1 Hz).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowSpec {
    pub length: usize,
    pub step: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            length: 20,
            step: 10,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.step == 0 || self.step > self.length {
            return Err(Error::InvalidArgument(format!(
                "window step {} must be in 1..={}",
                self.step, self.length
            )));
        }
        if self.length < 2 {
            return Err(Error::InvalidArgument("window length must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Bio,
    Landmarks,
}

impl Modality {
    pub fn catalog(self) -> Catalog {
        match self {
            Modality::Bio => Catalog::Bio,
            Modality::Landmarks => Catalog::Landmarks,
        }
    }
}

/// Windows × named features for one modality.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub values: Matrix,
    pub modality: Modality,
}

impl FeatureMatrix {
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            names: self.names.clone(),
            values: self.values.select_rows(rows),
            modality: self.modality,
        }
    }
}

/// Index-aligned bio features, landmark features, labels and subjects.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub bio: FeatureMatrix,
    pub landmarks: FeatureMatrix,
    pub labels: Vec<u8>,
    pub subject_ids: Vec<String>,
    pub window_start: Vec<f64>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select_rows(&self, rows: &[usize]) -> LabeledDataset {
        LabeledDataset {
            bio: self.bio.select_rows(rows),
            landmarks: self.landmarks.select_rows(rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            subject_ids: rows.iter().map(|&i| self.subject_ids[i].clone()).collect(),
            window_start: rows.iter().map(|&i| self.window_start[i]).collect(),
        }
    }

    pub fn class_counts(&self) -> [usize; 3] {
        class_counts(&self.labels)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if self.bio.values.rows() != n
            || self.landmarks.values.rows() != n
            || self.subject_ids.len() != n
            || self.window_start.len() != n
        {
            return Err(Error::InvalidInput("dataset parts are not row-aligned".into()));
        }
        if let Some(i) = self.labels.iter().position(|&l| l > 2) {
            return Err(Error::InvalidInput(format!("label {} at row {i}", self.labels[i])));
        }
        Ok(())
    }
}

pub fn class_counts(labels: &[u8]) -> [usize; 3] {
    let mut c = [0; 3];
    for &l in labels {
        c[l as usize] += 1;
    }
    c
}

/// Half-open sample ranges of every full window.
pub fn extract_windows(series_length: usize, spec: WindowSpec) -> Vec<Range<usize>> {
    if series_length < spec.length || spec.step == 0 {
        return Vec::new();
    }
    let count = (series_length - spec.length) / spec.step + 1;
    (0..count)
        .map(|w| {
            let start = w * spec.step;
            start..start + spec.length
        })
        .collect()
}

/// Mean stress of a window, binned: `≤ 6.5 → 0`, `≤ 13 → 1`, otherwise 2.
pub fn bin_stress_label(window_stress: &[f64]) -> Result<u8> {
    if window_stress.is_empty() {
        return Err(Error::InvalidInput("empty stress window".into()));
    }
    if let Some(v) = window_stress
        .iter()
        .find(|v| !(0.0..=STRESS_MAX).contains(*v))
    {
        return Err(Error::InvalidInput(format!("stress value {v} outside [0, 19]")));
    }
    let mean = window_stress.iter().sum::<f64>() / window_stress.len() as f64;
    Ok(if mean <= 6.5 {
        0
    } else if mean <= 13.0 {
        1
    } else {
        2
    })
}

/// Per subject and column: `(x − min) / (max − min)`, or 0 for a constant
/// column.
pub fn normalize_per_subject(dataset: &LabeledDataset) -> LabeledDataset {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.subject_ids.iter().enumerate() {
        groups.entry(s.as_str()).or_default().push(i);
    }
    let normalize = |m: &Matrix| {
        let mut out = m.clone();
        for rows in groups.values() {
            for c in 0..m.cols() {
                let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                    (lo.min(m[(r, c)]), hi.max(m[(r, c)]))
                });
                let span = hi - lo;
                for &r in rows {
                    out[(r, c)] = if span > 0.0 {
                        ((m[(r, c)] - lo) / span).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                }
            }
        }
        out
    };
    let mut out = dataset.clone();
    out.bio.values = normalize(&dataset.bio.values);
    out.landmarks.values = normalize(&dataset.landmarks.values);
    out
}

/// Rows kept when down-sampling every class to the minority count.
/// Survivors keep their original relative order.
pub fn balance_indices(labels: &[u8], seed: u64) -> Result<Vec<usize>> {
    let counts = class_counts(labels);
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::InvalidInput(format!(
            "class {c} is absent; cannot balance"
        )));
    }
    let minority = *counts.iter().min().expect("three classes");
    let mut rng = RngStream::new(seed, 0);
    let mut keep = Vec::with_capacity(3 * minority);
    for class in 0..3u8 {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if rows.len() == minority {
            keep.extend(rows);
        } else {
            keep.extend(rng.sample_indices(rows.len(), minority).into_iter().map(|k| rows[k]));
        }
    }
    keep.sort_unstable();
    Ok(keep)
}

/// Random down-sampling of every class to the minority count.
pub fn balance_classes(dataset: &LabeledDataset, seed: u64) -> Result<LabeledDataset> {
    Ok(dataset.select_rows(&balance_indices(&dataset.labels, seed)?))
}

/// Where class balancing happens.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BalanceMode {
    /// On the pooled dataset before any fold split.
    #[default]
    Pooled,
    /// Only on each fold's training rows (no test rows are dropped).
    TrainFold,
}

struct SubjectWindows {
    bio: Vec<f64>,
    landmarks: Vec<f64>,
    labels: Vec<u8>,
    starts: Vec<f64>,
}

fn bio_names(channels: &[(String, Vec<f64>)]) -> Vec<String> {
    channels
        .iter()
        .flat_map(|(name, _)| {
            Catalog::Bio
                .feature_names()
                .into_iter()
                .map(move |f| format!("{name}.{f}"))
        })
        .collect()
}

fn landmark_names() -> Vec<String> {
    landmark_column_names()
        .into_iter()
        .flat_map(|c| {
            TIME_FEATURES
                .iter()
                .map(move |f| format!("{c}.{f}"))
        })
        .collect()
}

fn window_subject(rec: &RawRecording, spec: WindowSpec) -> Result<SubjectWindows> {
    rec.validate()?;
    let windows = extract_windows(rec.len(), spec);
    let mut out = SubjectWindows {
        bio: Vec::new(),
        landmarks: Vec::new(),
        labels: Vec::with_capacity(windows.len()),
        starts: Vec::with_capacity(windows.len()),
    };
    let mut coord = vec![0.0; spec.length];
    for w in windows {
        for (_, series) in &rec.bio_channels {
            out.bio
                .extend(compute_channel_features(&series[w.clone()], Catalog::Bio)?);
        }
        for c in 0..LANDMARK_COORDS {
            for (slot, frame) in coord.iter_mut().zip(&rec.landmark_frames[w.clone()]) {
                *slot = frame[c];
            }
            out.landmarks
                .extend(compute_channel_features(&coord, Catalog::Landmarks)?);
        }
        out.labels.push(bin_stress_label(&rec.stress[w.clone()])?);
        out.starts.push(w.start as f64 / rec.sample_rate);
    }
    Ok(out)
}

/// Windows → features → labels → per-subject normalization, without
/// balancing.
pub fn window_and_normalize(recordings: &[RawRecording], spec: WindowSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let first = recordings
        .first()
        .ok_or_else(|| Error::EmptyDataset("no recordings".into()))?;
    let channel_names: Vec<&str> = first.bio_channels.iter().map(|(n, _)| n.as_str()).collect();
    for rec in recordings {
        let names: Vec<&str> = rec.bio_channels.iter().map(|(n, _)| n.as_str()).collect();
        if names != channel_names {
            return Err(Error::InvalidInput(format!(
                "{}: bio channels {names:?} differ from {channel_names:?}",
                rec.subject_id
            )));
        }
    }
    let per_subject: Vec<SubjectWindows> = recordings
        .par_iter()
        .map(|r| window_subject(r, spec))
        .collect::<Result<_>>()?;

    let bio_cols = channel_names.len() * Catalog::Bio.len();
    let lm_cols = LANDMARK_COORDS * Catalog::Landmarks.len();
    let total: usize = per_subject.iter().map(|s| s.labels.len()).sum();
    if total == 0 {
        return Err(Error::EmptyDataset(format!(
            "no {}-sample windows in any recording",
            spec.length
        )));
    }
    let mut bio = Vec::with_capacity(total * bio_cols);
    let mut lm = Vec::with_capacity(total * lm_cols);
    let mut labels = Vec::with_capacity(total);
    let mut subject_ids = Vec::with_capacity(total);
    let mut window_start = Vec::with_capacity(total);
    for (rec, s) in recordings.iter().zip(per_subject) {
        bio.extend(s.bio);
        lm.extend(s.landmarks);
        subject_ids.extend(std::iter::repeat_n(rec.subject_id.clone(), s.labels.len()));
        labels.extend(s.labels);
        window_start.extend(s.starts);
    }
    let raw = LabeledDataset {
        bio: FeatureMatrix {
            names: bio_names(&first.bio_channels),
            values: Matrix::from_vec(total, bio_cols, bio)?,
            modality: Modality::Bio,
        },
        landmarks: FeatureMatrix {
            names: landmark_names(),
            values: Matrix::from_vec(total, lm_cols, lm)?,
            modality: Modality::Landmarks,
        },
        labels,
        subject_ids,
        window_start,
    };
    Ok(normalize_per_subject(&raw))
}

/// Full preprocessing with pooled balancing.
pub fn assemble_dataset(
    recordings: &[RawRecording],
    spec: WindowSpec,
    seed: u64,
) -> Result<LabeledDataset> {
    assemble_dataset_with(recordings, spec, seed, BalanceMode::Pooled)
}

pub fn assemble_dataset_with(
    recordings: &[RawRecording],
    spec: WindowSpec,
    seed: u64,
    mode: BalanceMode,
) -> Result<LabeledDataset> {
    let ds = window_and_normalize(recordings, spec)?;
    match mode {
        BalanceMode::Pooled => balance_classes(&ds, seed),
        BalanceMode::TrainFold => Ok(ds),
    }
}
