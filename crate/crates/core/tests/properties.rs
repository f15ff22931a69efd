use proptest::prelude::*;

use sfl::cli::{parse_config, ExperimentConfig};
use sfl::evaluation::{check_no_leakage, compute_metrics, loso_folds};
use sfl::manifold::lle_weights;
use sfl::numerics::{knn, pairwise_distances, Matrix};
use sfl::pipeline::{
    balance_indices, bin_stress_label, class_counts, extract_windows, normalize_per_subject,
    FeatureMatrix, LabeledDataset, Modality, WindowSpec,
};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-50.0..50.0f64, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

fn sized_matrix(rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> impl Strategy<Value = Matrix> {
    (rows, cols).prop_flat_map(|(r, c)| matrix(r, c))
}

fn labels_with_all_classes() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..3, 0..60).prop_map(|mut v| {
        v.extend([0, 1, 2]);
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn window_count_formula(n in 0usize..500, length in 1usize..60, step_frac in 0.01..=1.0f64) {
        let step = ((length as f64 * step_frac).ceil() as usize).clamp(1, length);
        let w = extract_windows(n, WindowSpec { length, step });
        let want = if n < length { 0 } else { (n - length) / step + 1 };
        prop_assert_eq!(w.len(), want);
        for (k, r) in w.iter().enumerate() {
            prop_assert_eq!(r.start, k * step);
            prop_assert_eq!(r.len(), length);
            prop_assert!(r.end <= n);
        }
    }

    #[test]
    fn stress_bins_are_monotone(a in 0.0..=19.0f64, b in 0.0..=19.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(bin_stress_label(&[lo]).unwrap() <= bin_stress_label(&[hi]).unwrap());
        prop_assert!(bin_stress_label(&[hi + 19.5]).is_err());
    }

    #[test]
    fn normalization_stays_in_unit_range(bio in matrix(24, 3), land in matrix(24, 5), split in 1usize..23) {
        let ds = LabeledDataset {
            bio: FeatureMatrix { names: (0..3).map(|i| format!("b{i}")).collect(), values: bio, modality: Modality::Bio },
            landmarks: FeatureMatrix { names: (0..5).map(|i| format!("l{i}")).collect(), values: land, modality: Modality::Landmarks },
            labels: vec![0; 24],
            subject_ids: (0..24).map(|i| if i < split { "S1".to_string() } else { "S2".to_string() }).collect(),
            window_start: (0..24).map(|i| i as f64).collect(),
        };
        let out = normalize_per_subject(&ds);
        for m in [&out.bio.values, &out.landmarks.values] {
            prop_assert!(m.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
            for c in 0..m.cols() {
                for rows in [0..split, split..24] {
                    let col: Vec<f64> = rows.map(|r| m[(r, c)]).collect();
                    let hi = col.iter().cloned().fold(f64::MIN, f64::max);
                    let lo = col.iter().cloned().fold(f64::MAX, f64::min);
                    prop_assert!(lo == 0.0 && (hi == 1.0 || hi == 0.0));
                }
            }
        }
    }

    #[test]
    fn balancing_keeps_the_minority_count(labels in labels_with_all_classes(), seed in any::<u64>()) {
        let keep = balance_indices(&labels, seed).unwrap();
        let minority = *class_counts(&labels).iter().min().unwrap();
        let kept: Vec<u8> = keep.iter().map(|&i| labels[i]).collect();
        prop_assert_eq!(class_counts(&kept), [minority; 3]);
        prop_assert!(keep.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(keep, balance_indices(&labels, seed).unwrap());
    }

    #[test]
    fn metrics_lie_in_unit_interval(pairs in prop::collection::vec((0u8..3, 0u8..3), 1..80)) {
        let (t, p): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let m = compute_metrics(&t, &p).unwrap();
        for v in [m.accuracy, m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v), "{v}");
        }
        let perfect = compute_metrics(&t, &t).unwrap();
        prop_assert_eq!(perfect.accuracy, 1.0);
    }

    #[test]
    fn folds_partition_rows_without_leakage(subjects in prop::collection::vec(0u8..5, 2..60)) {
        let mut ids: Vec<String> = subjects.iter().map(|s| format!("S{s}")).collect();
        ids.extend(["S8".into(), "S9".into()]);
        let folds = loso_folds(&ids).unwrap();
        let distinct: std::collections::BTreeSet<&String> = ids.iter().collect();
        prop_assert_eq!(folds.len(), distinct.len());
        let mut tested = vec![0usize; ids.len()];
        for f in &folds {
            check_no_leakage(f, &ids).unwrap();
            prop_assert_eq!(f.train_rows.len() + f.test_rows.len(), ids.len());
            for &r in &f.test_rows {
                tested[r] += 1;
            }
        }
        prop_assert!(tested.iter().all(|&c| c == 1));
    }

    #[test]
    fn pairwise_distances_form_a_metric(x in sized_matrix(2..15, 1..5)) {
        let d = pairwise_distances(&x).unwrap();
        let n = d.len();
        for i in 0..n {
            prop_assert_eq!(d.row(i)[i], 0.0);
            for j in 0..n {
                prop_assert_eq!(d.row(i)[j], d.row(j)[i]);
                prop_assert!(d.row(i)[j] >= 0.0);
                for k in 0..n {
                    prop_assert!(d.row(i)[j] <= d.row(i)[k] + d.row(k)[j] + 1e-9);
                }
            }
        }
    }

    #[test]
    fn symmetrized_graph_is_undirected(x in sized_matrix(6..20, 2..4), k in 1usize..5) {
        let g = knn(&pairwise_distances(&x).unwrap(), k).unwrap().symmetrize();
        for i in 0..g.len() {
            prop_assert!(g.neighbors(i).len() >= k);
            for &(j, w) in g.neighbors(i) {
                prop_assert!(g.has_edge(j, i));
                prop_assert!(w >= 0.0);
            }
        }
    }

    #[test]
    fn lle_weights_sum_to_one(x in sized_matrix(8..25, 2..6), k in 2usize..6) {
        let w = lle_weights(&x, k, 1e-3).unwrap();
        prop_assert_eq!(w.len(), x.rows());
        for (i, row) in w.iter().enumerate() {
            prop_assert_eq!(row.len(), k);
            prop_assert!(row.iter().all(|&(j, _)| j != i));
            let s: f64 = row.iter().map(|&(_, v)| v).sum();
            prop_assert!((s - 1.0).abs() < 1e-9, "row {i} sums to {s}");
        }
    }

    #[test]
    fn config_emits_and_reparses(seed in any::<u64>(), epochs in 1usize..500, lr in 1e-6..1.0f64, batch in 1usize..512) {
        let mut cfg = ExperimentConfig::synthetic(seed);
        cfg.train.epochs = epochs;
        cfg.train.learning_rate = lr;
        cfg.train.batch_size = batch;
        let text = cfg.to_json().unwrap();
        let back = parse_config(&text).unwrap();
        prop_assert_eq!(back.to_json().unwrap(), text);
        prop_assert_eq!(back.train.learning_rate, lr);
    }
}
