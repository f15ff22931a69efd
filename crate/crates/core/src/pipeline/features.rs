//! Per-channel window features.
//!
//! The time catalog has 14 entries and applies to every channel. Biometric
//! channels also get 11 spectral features from the one-sided power spectrum
//! of the mean-removed window, so a bio channel yields 25 columns and a
//! landmark coordinate yields 14.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TIME_FEATURES: [&str; 14] = [
    "mean",
    "std",
    "min",
    "max",
    "median",
    "range",
    "iqr",
    "skewness",
    "kurtosis",
    "rms",
    "mean_abs_diff",
    "zero_crossings",
    "energy",
    "line_length",
];

pub const FREQUENCY_FEATURES: [&str; 11] = [
    "spectral_power",
    "spectral_entropy",
    "dominant_freq_index",
    "dominant_power_share",
    "spectral_centroid",
    "spectral_spread",
    "band_power_0",
    "band_power_1",
    "band_power_2",
    "band_power_3",
    "band_power_4",
];

const BANDS: usize = 5;
const NYQUIST_HZ: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Catalog {
    Bio,
    Landmarks,
}

impl Catalog {
    pub fn feature_names(self) -> Vec<&'static str> {
        match self {
            Catalog::Bio => TIME_FEATURES.iter().chain(&FREQUENCY_FEATURES).copied().collect(),
            Catalog::Landmarks => TIME_FEATURES.to_vec(),
        }
    }

    pub fn len(self) -> usize {
        match self {
            Catalog::Bio => TIME_FEATURES.len() + FREQUENCY_FEATURES.len(),
            Catalog::Landmarks => TIME_FEATURES.len(),
        }
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn time_features(x: &[f64], out: &mut Vec<f64>) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let std = m2.sqrt();
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    // Constant windows have no shape: skewness and kurtosis are 0.
    let (skew, kurt) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let energy = x.iter().map(|v| v * v).sum::<f64>() / n;
    let line_length: f64 = x.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let zero_crossings = x
        .windows(2)
        .filter(|w| (w[0] - mean) * (w[1] - mean) < 0.0)
        .count() as f64;
    out.extend_from_slice(&[
        mean,
        std,
        min,
        max,
        quantile(&sorted, 0.5),
        max - min,
        quantile(&sorted, 0.75) - quantile(&sorted, 0.25),
        skew,
        kurt,
        energy.sqrt(),
        line_length / (n - 1.0),
        zero_crossings,
        energy,
        line_length,
    ]);
}

fn frequency_features(x: &[f64], out: &mut Vec<f64>) {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let bins = n / 2 + 1;
    let power: Vec<f64> = buf[..bins].iter().map(|c| c.norm_sqr() / n as f64).collect();
    let freq: Vec<f64> = (0..bins).map(|k| k as f64 / n as f64).collect();
    let total: f64 = power.iter().sum();

    let mut entropy = 0.0;
    let mut dominant = 0;
    let mut share = 0.0;
    let mut centroid = 0.0;
    let mut spread = 0.0;
    if total > 0.0 {
        let p: Vec<f64> = power.iter().map(|v| v / total).collect();
        if bins > 1 {
            let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|v| -v * v.log2()).sum();
            entropy = h / (bins as f64).log2();
        }
        dominant = (1..bins).fold(1.min(bins - 1), |best, k| {
            if power[k] > power[best] {
                k
            } else {
                best
            }
        });
        share = power[dominant] / total;
        centroid = p.iter().zip(&freq).map(|(w, f)| w * f).sum();
        spread = p
            .iter()
            .zip(&freq)
            .map(|(w, f)| w * (f - centroid).powi(2))
            .sum::<f64>()
            .sqrt();
    }
    let mut bands = [0.0; BANDS];
    let width = NYQUIST_HZ / BANDS as f64;
    for (p, f) in power.iter().zip(&freq) {
        let b = ((f / width).floor() as usize).min(BANDS - 1);
        bands[b] += p;
    }
    out.extend_from_slice(&[
        total,
        entropy,
        dominant as f64,
        share,
        centroid,
        spread,
    ]);
    out.extend_from_slice(&bands);
}

/// Features of one channel window, in catalog order.
pub fn compute_channel_features(window: &[f64], catalog: Catalog) -> Result<Vec<f64>> {
    if window.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "feature window needs at least 2 samples, got {}",
            window.len()
        )));
    }
    if window.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite sample in window".into()));
    }
    let mut out = Vec::with_capacity(catalog.len());
    time_features(window, &mut out);
    if catalog == Catalog::Bio {
        frequency_features(window, &mut out);
    }
    Ok(out)
}

/// Named variant of [`compute_channel_features`].
pub fn named_channel_features(window: &[f64], catalog: Catalog) -> Result<Vec<(&'static str, f64)>> {
    Ok(catalog
        .feature_names()
        .into_iter()
        .zip(compute_channel_features(window, catalog)?)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn get(f: &[(&str, f64)], name: &str) -> f64 {
        f.iter().find(|(n, _)| *n == name).unwrap().1
    }

    #[test]
    fn constant_window() {
        let f = named_channel_features(&[5.0; 20], Catalog::Bio).unwrap();
        assert_eq!(get(&f, "mean"), 5.0);
        assert_eq!(get(&f, "std"), 0.0);
        assert_eq!(get(&f, "range"), 0.0);
        assert_eq!(get(&f, "skewness"), 0.0);
        assert_eq!(get(&f, "kurtosis"), 0.0);
        assert_eq!(get(&f, "zero_crossings"), 0.0);
        assert_eq!(get(&f, "spectral_power"), 0.0);
        assert!(f.iter().all(|(_, v)| v.is_finite()));
    }

    #[test]
    fn alternating_window() {
        let x: Vec<f64> = (0..20).map(|i| (i % 2) as f64).collect();
        let f = named_channel_features(&x, Catalog::Bio).unwrap();
        assert_eq!(get(&f, "mean"), 0.5);
        assert!((get(&f, "rms") - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(get(&f, "line_length"), 19.0);
        assert_eq!(get(&f, "zero_crossings"), 19.0);
        // All power sits at the Nyquist bin (index 10, 0.5 Hz, last band).
        assert_eq!(get(&f, "dominant_freq_index"), 10.0);
        assert!((get(&f, "dominant_power_share") - 1.0).abs() < 1e-12);
        assert!((get(&f, "band_power_4") - get(&f, "spectral_power")).abs() < 1e-12);
        assert!((get(&f, "spectral_centroid") - 0.5).abs() < 1e-12);
    }

    #[test]
    fn catalog_sizes() {
        assert_eq!(Catalog::Bio.len(), 25);
        assert_eq!(Catalog::Landmarks.len(), 14);
        assert_eq!(Catalog::Bio.feature_names().len(), 25);
        assert_eq!(
            compute_channel_features(&[1.0, 2.0, 4.0], Catalog::Landmarks).unwrap().len(),
            14
        );
    }

    #[test]
    fn parseval_total_power() {
        let x: Vec<f64> = (0..20).map(|i| ((i * 7) % 5) as f64 - 1.3).collect();
        let f = named_channel_features(&x, Catalog::Bio).unwrap();
        let mean = x.iter().sum::<f64>() / 20.0;
        // One-sided sum: bin 0 plus bins 1..=10, where interior bins are half
        // of the two-sided energy.
        let two_sided: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        let total = get(&f, "spectral_power");
        assert!(total > 0.0 && total <= two_sided + 1e-9);
        let bands: f64 = (0..5).map(|b| get(&f, &format!("band_power_{b}"))).sum();
        assert!((bands - total).abs() < 1e-9);
    }

    #[test]
    fn rejects_short_window() {
        assert!(compute_channel_features(&[1.0], Catalog::Bio).is_err());
    }
}
