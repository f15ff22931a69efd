//! Seeded generators: the Swiss roll and a synthetic multimodal stress
//! dataset with the same shape as real recordings.
//!
//! Stress dataset layout:
//!
//! * Latent state per second from a 3-state semi-Markov chain. Segment
//!   durations are uniform in 40..=120 s and transitions only move between
//!   adjacent levels (low ↔ medium ↔ high). The first segment is low or
//!   high, the second medium, the third the remaining extreme, so every
//!   level appears within 360 s.
//! * Stress = level center (3, 10, 16.5) + N(0, noise), clamped to [0, 19].
//! * Bio channel c = base_c + separation·scale_c·sign_c·[level ≠ low]
//!   + subject offset + N(0, noise·scale_c). Bio therefore tells low apart
//!   from the rest.
//! * Landmarks = 68-point unit-square template mapped to pixels
//!   (x·200 + 220, y·200 + 140) + per-subject head shift. At the high level
//!   brows rise, eyes narrow and mouth corners pull outward by
//!   separation·4 px; noise adds N(0, noise) px per coordinate. Landmarks
//!   therefore tell high apart from the rest.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};
use crate::pipeline::{RawRecording, DEFAULT_BIO_CHANNELS, LANDMARK_COORDS, LANDMARK_POINTS, STRESS_MAX};

pub const LEVEL_CENTERS: [f64; 3] = [3.0, 10.0, 16.5];
pub const MIN_SEGMENT: usize = 40;
pub const MAX_SEGMENT: usize = 120;

const BIO_BASE: [f64; 7] = [72.0, 2.0, 33.0, 0.0, 0.0, 0.0, 1.0];
const BIO_SCALE: [f64; 7] = [8.0, 0.6, 0.4, 1.0, 0.05, 0.05, 0.05];
const BIO_SIGN: [f64; 7] = [1.0, 1.0, -1.0, 1.0, 1.0, -1.0, 1.0];
const PIXEL_SCALE: f64 = 200.0;
const PIXEL_ORIGIN: (f64, f64) = (220.0, 140.0);
const EXPRESSION_PX: f64 = 4.0;
const HEAD_SHIFT_PX: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SwissRollSample {
    pub points: Matrix,
    /// Unrolled coordinates: arc length along the spiral, height.
    pub intrinsic: Matrix,
}

/// Arc length of the spiral `r = t` from 0 to `t`.
fn spiral_arc_length(t: f64) -> f64 {
    0.5 * (t * (1.0 + t * t).sqrt() + t.asinh())
}

/// Spiral parameter with the given arc length (Newton on a monotone map).
fn spiral_parameter(s: f64) -> f64 {
    let mut t = (2.0 * s).sqrt();
    for _ in 0..50 {
        let step = (spiral_arc_length(t) - s) / (1.0 + t * t).sqrt();
        t -= step;
        if step.abs() < 1e-14 * t {
            break;
        }
    }
    t
}

/// `(t cos t, h, t sin t)` for `t ∈ [1.5π, 4.5π]`, `h ∈ [0, 21]`, plus
/// isotropic Gaussian noise.
///
/// Points are stratified over the unrolled surface: a grid of near-square
/// cells in (arc length, h), `n` cells picked at random, one uniform point
/// per cell. The outer turns are as dense as the inner ones and there are no
/// large holes, so k-NN graphs do not jump between turns.
pub fn gen_swiss_roll(n: usize, noise: f64, seed: u64) -> Result<SwissRollSample> {
    if n < 10 {
        return Err(Error::InvalidArgument(format!("swiss roll needs n >= 10, got {n}")));
    }
    if !(noise >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise {noise} must be >= 0")));
    }
    let mut rng = RngStream::new(seed, 0);
    let (s_lo, s_hi) = (spiral_arc_length(1.5 * PI), spiral_arc_length(4.5 * PI));
    let span = s_hi - s_lo;
    let rows = ((n as f64 * 21.0 / span).sqrt().round() as usize).max(1);
    let cols = n.div_ceil(rows);
    let mut cells: Vec<usize> = (0..rows * cols).collect();
    rng.shuffle(&mut cells);
    let mut points = Vec::with_capacity(3 * n);
    let mut intrinsic = Vec::with_capacity(2 * n);
    for &cell in &cells[..n] {
        let (r, c) = (cell / cols, cell % cols);
        let t = spiral_parameter(s_lo + span * (c as f64 + rng.unit()) / cols as f64);
        let h = 21.0 * (r as f64 + rng.unit()) / rows as f64;
        for v in [t * t.cos(), h, t * t.sin()] {
            points.push(if noise > 0.0 { v + rng.gaussian(0.0, noise) } else { v });
        }
        intrinsic.push(spiral_arc_length(t));
        intrinsic.push(h);
    }
    Ok(SwissRollSample {
        points: Matrix::from_vec(n, 3, points)?,
        intrinsic: Matrix::from_vec(n, 2, intrinsic)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthStressSpec {
    pub subjects: usize,
    pub samples_per_subject: usize,
    pub separation: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthStressSpec {
    /// 8 subjects × 600 s, high separation, low noise, seed 42.
    fn default() -> Self {
        SynthStressSpec {
            subjects: 8,
            samples_per_subject: 600,
            separation: 2.0,
            noise: 0.2,
            seed: 42,
        }
    }
}

impl SynthStressSpec {
    pub fn validate(&self, window_length: usize) -> Result<()> {
        if self.subjects == 0 {
            return Err(Error::InvalidArgument("subjects must be >= 1".into()));
        }
        if self.samples_per_subject < window_length {
            return Err(Error::InvalidArgument(format!(
                "samples_per_subject {} is below the window length {window_length}",
                self.samples_per_subject
            )));
        }
        if !(self.separation >= 0.0) || !(self.noise >= 0.0) {
            return Err(Error::InvalidArgument(
                "separation and noise must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

fn push_arc(pts: &mut Vec<(f64, f64)>, count: usize, center: (f64, f64), radii: (f64, f64), from: f64, to: f64) {
    for k in 0..count {
        let a = from + (to - from) * k as f64 / (count - 1).max(1) as f64;
        pts.push((center.0 + radii.0 * a.cos(), center.1 + radii.1 * a.sin()));
    }
}

fn push_ring(pts: &mut Vec<(f64, f64)>, count: usize, center: (f64, f64), radii: (f64, f64)) {
    for k in 0..count {
        let a = PI + 2.0 * PI * k as f64 / count as f64;
        pts.push((center.0 + radii.0 * a.cos(), center.1 + radii.1 * a.sin()));
    }
}

/// Neutral 68-point face in the unit square (image axes: y grows down),
/// in the usual jaw/brows/nose/eyes/mouth ordering.
pub fn face_template() -> Vec<(f64, f64)> {
    let mut p = Vec::with_capacity(LANDMARK_POINTS);
    // jaw 0..=16, ear to ear through the chin
    push_arc(&mut p, 17, (0.5, 0.45), (0.42, 0.5), PI, 0.0);
    // brows 17..=21, 22..=26
    push_arc(&mut p, 5, (0.3, 0.33), (0.13, 0.06), PI, 2.0 * PI);
    push_arc(&mut p, 5, (0.7, 0.33), (0.13, 0.06), PI, 2.0 * PI);
    // nose bridge 27..=30, nostrils 31..=35
    for k in 0..4 {
        p.push((0.5, 0.38 + 0.06 * k as f64));
    }
    for k in 0..5 {
        p.push((0.42 + 0.04 * k as f64, 0.64 + 0.015 * (2.0 - (k as f64 - 2.0).abs())));
    }
    // eyes 36..=41, 42..=47
    push_ring(&mut p, 6, (0.3, 0.42), (0.08, 0.035));
    push_ring(&mut p, 6, (0.7, 0.42), (0.08, 0.035));
    // outer lip 48..=59, inner lip 60..=67
    push_ring(&mut p, 12, (0.5, 0.8), (0.16, 0.06));
    push_ring(&mut p, 8, (0.5, 0.8), (0.1, 0.025));
    debug_assert_eq!(p.len(), LANDMARK_POINTS);
    p
}

/// Pixel displacement of point `i` at the high level, per unit separation.
fn expression(i: usize, template: &[(f64, f64)]) -> (f64, f64) {
    match i {
        17..=26 => (0.0, -1.0),
        36..=47 => {
            let center_y = if i < 42 { template[36].1 } else { template[42].1 };
            // eyelids close toward the eye's horizontal axis
            (0.0, if template[i].1 < center_y - 1e-9 { 0.5 } else if template[i].1 > center_y + 1e-9 { -0.5 } else { 0.0 })
        }
        48 | 60 => (-1.0, -0.5),
        54 | 64 => (1.0, -0.5),
        49..=59 | 61..=67 => (0.0, 0.3),
        _ => (0.0, 0.0),
    }
}

/// Latent level per second from the adjacent-move semi-Markov chain.
pub fn latent_levels(samples: usize, rng: &mut RngStream) -> Vec<usize> {
    let first = if rng.bernoulli(0.5) { 0 } else { 2 };
    let mut sequence = vec![first, 1, 2 - first];
    let mut levels = Vec::with_capacity(samples);
    let mut k = 0;
    while levels.len() < samples {
        if k == sequence.len() {
            let last = sequence[k - 1];
            let next = if last == 1 {
                if rng.bernoulli(0.5) { 0 } else { 2 }
            } else {
                1
            };
            sequence.push(next);
        }
        let dur = rng.int_inclusive(MIN_SEGMENT, MAX_SEGMENT);
        let take = dur.min(samples - levels.len());
        levels.extend(std::iter::repeat_n(sequence[k], take));
        k += 1;
    }
    levels
}

fn subject(spec: &SynthStressSpec, index: usize, template: &[(f64, f64)]) -> RawRecording {
    let mut rng = RngStream::new(spec.seed, index as u64);
    let n = spec.samples_per_subject;
    let levels = latent_levels(n, &mut rng);

    let offsets: Vec<f64> = BIO_SCALE.iter().map(|s| rng.uniform(-0.25, 0.25) * s).collect();
    let shift = (
        rng.uniform(-HEAD_SHIFT_PX, HEAD_SHIFT_PX),
        rng.uniform(-HEAD_SHIFT_PX, HEAD_SHIFT_PX),
    );
    let noisy = |rng: &mut RngStream, v: f64, std: f64| if std > 0.0 { v + rng.gaussian(0.0, std) } else { v };

    let stress: Vec<f64> = levels
        .iter()
        .map(|&l| noisy(&mut rng, LEVEL_CENTERS[l], spec.noise).clamp(0.0, STRESS_MAX))
        .collect();

    let bio_channels = DEFAULT_BIO_CHANNELS
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let series = levels
                .iter()
                .map(|&l| {
                    let active = if l == 0 { 0.0 } else { 1.0 };
                    let mean = BIO_BASE[c] + spec.separation * BIO_SCALE[c] * BIO_SIGN[c] * active + offsets[c];
                    noisy(&mut rng, mean, spec.noise * BIO_SCALE[c])
                })
                .collect();
            (name.to_string(), series)
        })
        .collect();

    let displacement: Vec<(f64, f64)> = (0..LANDMARK_POINTS).map(|i| expression(i, template)).collect();
    let landmark_frames = levels
        .iter()
        .map(|&l| {
            let amount = if l == 2 { spec.separation * EXPRESSION_PX } else { 0.0 };
            let mut frame = vec![0.0; LANDMARK_COORDS];
            for (i, &(x, y)) in template.iter().enumerate() {
                let px = PIXEL_ORIGIN.0 + PIXEL_SCALE * x + shift.0 + amount * displacement[i].0;
                let py = PIXEL_ORIGIN.1 + PIXEL_SCALE * y + shift.1 + amount * displacement[i].1;
                frame[i] = noisy(&mut rng, px, spec.noise);
                frame[LANDMARK_POINTS + i] = noisy(&mut rng, py, spec.noise);
            }
            frame
        })
        .collect();

    RawRecording {
        subject_id: format!("s{:02}", index + 1),
        sample_rate: 1.0,
        bio_channels,
        landmark_frames,
        stress,
    }
}

/// One recording per subject (`s01`, `s02`, …), each from its own stream.
pub fn gen_multimodal_stress(spec: &SynthStressSpec) -> Result<Vec<RawRecording>> {
    spec.validate(1)?;
    let template = face_template();
    Ok((0..spec.subjects).map(|i| subject(spec, i, &template)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{bin_stress_label, extract_windows, window_and_normalize, WindowSpec};

    #[test]
    fn arc_length_inverts() {
        for t in [1.5 * PI, 2.0, 7.3, 4.5 * PI] {
            assert!((spiral_parameter(spiral_arc_length(t)) - t).abs() < 1e-10);
        }
    }

    #[test]
    fn roll_without_noise_is_on_the_spiral() {
        let s = gen_swiss_roll(200, 0.0, 3).unwrap();
        for i in 0..200 {
            let p = s.points.row(i);
            let r2 = p[0] * p[0] + p[2] * p[2];
            let t = p[0].hypot(p[2]);
            assert!((r2 - t * t).abs() < 1e-9);
            assert!((1.5 * PI - 1e-9..=4.5 * PI + 1e-9).contains(&t));
            assert!((spiral_arc_length(t) - s.intrinsic[(i, 0)]).abs() < 1e-9);
            assert_eq!(p[1], s.intrinsic[(i, 1)]);
        }
        assert_eq!(s, gen_swiss_roll(200, 0.0, 3).unwrap());
        assert!(gen_swiss_roll(9, 0.0, 3).is_err());
    }

    #[test]
    fn arc_length_matches_quadrature() {
        let (a, b) = (1.5 * PI, 4.5 * PI);
        let steps = 100_000;
        let h = (b - a) / steps as f64;
        let integral: f64 = (0..steps)
            .map(|k| {
                let t = a + (k as f64 + 0.5) * h;
                (1.0 + t * t).sqrt() * h
            })
            .sum();
        assert!((integral - (spiral_arc_length(b) - spiral_arc_length(a))).abs() < 1e-6);
    }

    #[test]
    fn template_fits_unit_square() {
        let t = face_template();
        assert_eq!(t.len(), 68);
        assert!(t.iter().all(|&(x, y)| (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y)));
    }

    #[test]
    fn recordings_are_valid_and_deterministic() {
        let spec = SynthStressSpec {
            noise: 3.0,
            ..SynthStressSpec::default()
        };
        let recs = gen_multimodal_stress(&spec).unwrap();
        assert_eq!(recs.len(), 8);
        for r in &recs {
            r.validate().unwrap();
            assert_eq!(r.bio_channels.len(), 7);
            assert!(r.stress.iter().all(|s| (0.0..=19.0).contains(s)));
        }
        assert_eq!(recs, gen_multimodal_stress(&spec).unwrap());
    }

    #[test]
    fn every_subject_sees_every_class() {
        for seed in 0..20 {
            let spec = SynthStressSpec {
                seed,
                samples_per_subject: 600,
                ..SynthStressSpec::default()
            };
            for r in gen_multimodal_stress(&spec).unwrap() {
                let mut seen = [false; 3];
                for w in extract_windows(r.len(), WindowSpec::default()) {
                    seen[bin_stress_label(&r.stress[w]).unwrap() as usize] = true;
                }
                assert_eq!(seen, [true; 3], "seed {seed}, {}", r.subject_id);
            }
        }
    }

    #[test]
    fn transitions_are_adjacent() {
        let mut rng = RngStream::new(9, 0);
        let levels = latent_levels(5000, &mut rng);
        assert!(levels.windows(2).all(|w| w[0].abs_diff(w[1]) <= 1));
    }

    #[test]
    fn noiseless_pure_windows_separate_per_subject() {
        let spec = SynthStressSpec {
            subjects: 3,
            noise: 0.0,
            separation: 0.5,
            ..SynthStressSpec::default()
        };
        let recs = gen_multimodal_stress(&spec).unwrap();
        let ds = window_and_normalize(&recs, WindowSpec::default()).unwrap();
        // Column 0 is the heart-rate mean, the landmark column of a brow
        // point's y mean drops at the high level.
        let brow_y = ds
            .landmarks
            .names
            .iter()
            .position(|n| n == "lm_y_19.mean")
            .unwrap();
        for r in &recs {
            let rows: Vec<usize> = (0..ds.len()).filter(|&i| ds.subject_ids[i] == r.subject_id).collect();
            for &i in &rows {
                let start = ds.window_start[i] as usize;
                let pure = r.stress[start..start + 20].windows(2).all(|w| w[0] == w[1]);
                if !pure {
                    continue;
                }
                let hr = ds.bio.values[(i, 0)];
                let brow = ds.landmarks.values[(i, brow_y)];
                match ds.labels[i] {
                    0 => assert_eq!(hr, 0.0),
                    _ => assert_eq!(hr, 1.0),
                }
                match ds.labels[i] {
                    2 => assert_eq!(brow, 0.0),
                    _ => assert_eq!(brow, 1.0),
                }
            }
        }
    }
}
