//! Leave-one-subject-out evaluation, classification metrics and benchmark
//! assembly.

mod report;

use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{reduce, EmbeddingConfig};
use crate::neuralnet::{build, count_params, predict, train, NetData, NetworkSpec, Topology, TrainConfig};
use crate::numerics::{Matrix, RngStream};
use crate::pipeline::{balance_indices, BalanceMode, LabeledDataset};

pub use report::{emit_report, parse_report_csv, report_rows, ReportFormat, ReportRow, CSV_HEADER};

/// Train/test split holding out one subject.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub test_subject: String,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// One fold per distinct subject, ordered by subject id.
pub fn loso_folds(subject_ids: &[String]) -> Result<Vec<FoldPlan>> {
    let subjects: BTreeSet<&str> = subject_ids.iter().map(String::as_str).collect();
    if subjects.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "leave-one-subject-out needs at least 2 subjects, found {}",
            subjects.len()
        )));
    }
    Ok(subjects
        .into_iter()
        .map(|s| {
            let (test_rows, train_rows) = (0..subject_ids.len()).partition(|&i| subject_ids[i] == s);
            FoldPlan {
                test_subject: s.to_string(),
                train_rows,
                test_rows,
            }
        })
        .collect())
}

/// Fails if any training row belongs to the held-out subject.
pub fn check_no_leakage(plan: &FoldPlan, subject_ids: &[String]) -> Result<()> {
    if let Some(&i) = plan
        .train_rows
        .iter()
        .find(|&&i| subject_ids[i] == plan.test_subject)
    {
        return Err(Error::InvalidInput(format!(
            "leakage: training row {i} belongs to test subject {}",
            plan.test_subject
        )));
    }
    if let Some(&i) = plan
        .test_rows
        .iter()
        .find(|&&i| subject_ids[i] != plan.test_subject)
    {
        return Err(Error::InvalidInput(format!(
            "test row {i} does not belong to test subject {}",
            plan.test_subject
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Accuracy and macro-averaged precision, recall and F1 over three classes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: [ClassScores; 3],
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics(y_true: &[u8], y_pred: &[u8]) -> Result<Metrics> {
    if y_true.is_empty() {
        return Err(Error::InvalidInput("no predictions to score".into()));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if let Some(l) = y_true.iter().chain(y_pred).find(|&&l| l > 2) {
        return Err(Error::InvalidInput(format!("label {l} outside {{0,1,2}}")));
    }
    let mut confusion = [[0usize; 3]; 3];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        confusion[t as usize][p as usize] += 1;
    }
    let mut per_class = [ClassScores::default(); 3];
    for (k, scores) in per_class.iter_mut().enumerate() {
        let tp = confusion[k][k];
        let predicted: usize = (0..3).map(|t| confusion[t][k]).sum();
        let actual: usize = confusion[k].iter().sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, actual);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        *scores = ClassScores { precision, recall, f1 };
    }
    let macro_avg = |f: fn(&ClassScores) -> f64| per_class.iter().map(f).sum::<f64>() / 3.0;
    let correct = (0..3).map(|k| confusion[k][k]).sum();
    Ok(Metrics {
        accuracy: ratio(correct, y_true.len()),
        precision: macro_avg(|c| c.precision),
        recall: macro_avg(|c| c.recall),
        f1: macro_avg(|c| c.f1),
        per_class,
    })
}

/// Unweighted mean of fold metrics.
pub fn mean_metrics(folds: &[Metrics]) -> Metrics {
    if folds.is_empty() {
        return Metrics::default();
    }
    let n = folds.len() as f64;
    let avg = |f: &dyn Fn(&Metrics) -> f64| folds.iter().map(f).sum::<f64>() / n;
    let mut per_class = [ClassScores::default(); 3];
    for (k, c) in per_class.iter_mut().enumerate() {
        *c = ClassScores {
            precision: avg(&|m| m.per_class[k].precision),
            recall: avg(&|m| m.per_class[k].recall),
            f1: avg(&|m| m.per_class[k].f1),
        };
    }
    Metrics {
        accuracy: avg(&|m| m.accuracy),
        precision: avg(&|m| m.precision),
        recall: avg(&|m| m.recall),
        f1: avg(&|m| m.f1),
        per_class,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub plan: FoldPlan,
    /// Training rows actually used (after per-fold balancing, if any).
    pub train_rows_used: usize,
    pub y_true: Vec<u8>,
    pub y_pred: Vec<u8>,
    pub metrics: Metrics,
    pub final_loss: Option<f64>,
    pub train_seconds: f64,
    pub test_seconds: f64,
}

/// One (reduction method, topology) row of the benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub method: String,
    pub topology: Topology,
    pub params: usize,
    pub folds: Vec<FoldReport>,
    /// Mean over folds.
    pub mean: Metrics,
    /// Metrics of all test predictions pooled together.
    pub pooled: Metrics,
    pub dr_bio_seconds: f64,
    pub dr_land_seconds: f64,
    pub train_seconds: f64,
    pub test_seconds: f64,
}

impl ExperimentReport {
    pub fn total_seconds(&self) -> f64 {
        self.dr_bio_seconds + self.dr_land_seconds + self.train_seconds + self.test_seconds
    }

    /// Zeroes every wall-clock field, leaving only deterministic content.
    pub fn strip_times(&mut self) {
        self.dr_bio_seconds = 0.0;
        self.dr_land_seconds = 0.0;
        self.train_seconds = 0.0;
        self.test_seconds = 0.0;
        for f in &mut self.folds {
            f.train_seconds = 0.0;
            f.test_seconds = 0.0;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    /// Averaging over classes.
    pub averaging: String,
    /// Aggregation over folds for the headline metrics.
    pub aggregation: String,
    pub experiments: Vec<ExperimentReport>,
}

impl BenchmarkReport {
    pub fn new(experiments: Vec<ExperimentReport>) -> Self {
        BenchmarkReport {
            averaging: "macro".into(),
            aggregation: "fold-mean".into(),
            experiments,
        }
    }

    pub fn strip_times(&mut self) {
        self.experiments.iter_mut().for_each(ExperimentReport::strip_times);
    }
}

/// Reduced network inputs for the whole dataset. A modality that was not
/// reduced has zero columns.
#[derive(Clone, Debug)]
pub struct ReducedInputs {
    pub label: String,
    pub bio: Matrix,
    pub landmarks: Matrix,
    pub dr_bio_seconds: f64,
    pub dr_land_seconds: f64,
}

/// Reduces each requested modality once over the pooled rows, timing each.
pub fn reduce_modalities(
    ds: &LabeledDataset,
    bio: Option<&EmbeddingConfig>,
    landmarks: Option<&EmbeddingConfig>,
) -> Result<ReducedInputs> {
    let n = ds.len();
    let run = |m: &Matrix, cfg: Option<&EmbeddingConfig>| -> Result<(Matrix, f64)> {
        match cfg {
            Some(cfg) => {
                let start = Instant::now();
                let r = reduce(m, cfg)?;
                Ok((r.coords, start.elapsed().as_secs_f64()))
            }
            None => Ok((Matrix::zeros(n, 0), 0.0)),
        }
    };
    let (b, tb) = run(&ds.bio.values, bio)?;
    let (l, tl) = run(&ds.landmarks.values, landmarks)?;
    let label = match (bio, landmarks) {
        (Some(a), Some(b)) if a.method == b.method => a.method.label().to_string(),
        (Some(a), Some(b)) => format!("{}/{}", a.method.label(), b.method.label()),
        (Some(a), None) | (None, Some(a)) => a.method.label().to_string(),
        (None, None) => "raw".to_string(),
    };
    Ok(ReducedInputs {
        label,
        bio: b,
        landmarks: l,
        dr_bio_seconds: tb,
        dr_land_seconds: tl,
    })
}

/// Seed owned by fold `fold`.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    RngStream::new(seed, fold as u64).next_u64()
}

fn run_fold(
    fold: usize,
    plan: FoldPlan,
    ds: &LabeledDataset,
    inputs: &ReducedInputs,
    spec: &NetworkSpec,
    train_cfg: &TrainConfig,
    balance: BalanceMode,
) -> Result<FoldReport> {
    check_no_leakage(&plan, &ds.subject_ids)?;
    let seed = fold_seed(train_cfg.seed, fold);
    let mut rows = plan.train_rows.clone();
    if balance == BalanceMode::TrainFold {
        let labels: Vec<u8> = rows.iter().map(|&i| ds.labels[i]).collect();
        rows = balance_indices(&labels, seed)?.into_iter().map(|k| rows[k]).collect();
    }
    let data = NetData::new(
        inputs.bio.select_rows(&rows),
        inputs.landmarks.select_rows(&rows),
        rows.iter().map(|&i| ds.labels[i]).collect(),
    )?;
    let cfg = TrainConfig {
        seed,
        ..train_cfg.clone()
    };
    let start = Instant::now();
    let model = train(&build(spec, seed)?, &data, &cfg)?;
    let train_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let y_pred = predict(
        &model,
        &inputs.bio.select_rows(&plan.test_rows),
        &inputs.landmarks.select_rows(&plan.test_rows),
    )?;
    let test_seconds = start.elapsed().as_secs_f64();
    let y_true: Vec<u8> = plan.test_rows.iter().map(|&i| ds.labels[i]).collect();
    Ok(FoldReport {
        fold,
        train_rows_used: rows.len(),
        metrics: compute_metrics(&y_true, &y_pred)?,
        y_true,
        y_pred,
        final_loss: model.history.last().copied(),
        train_seconds,
        test_seconds,
        plan,
    })
}

/// Runs every LOSO fold on already reduced inputs. Folds run in parallel;
/// results are joined in subject order.
pub fn run_folds(
    ds: &LabeledDataset,
    inputs: &ReducedInputs,
    spec: &NetworkSpec,
    train_cfg: &TrainConfig,
    balance: BalanceMode,
) -> Result<ExperimentReport> {
    ds.validate()?;
    train_cfg.validate()?;
    let params = count_params(spec)?;
    let plans = loso_folds(&ds.subject_ids)?;
    let folds: Vec<FoldReport> = plans
        .into_par_iter()
        .enumerate()
        .map(|(k, plan)| {
            let subject = plan.test_subject.clone();
            run_fold(k, plan, ds, inputs, spec, train_cfg, balance).map_err(|e| Error::Fold {
                fold: subject,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let all_true: Vec<u8> = folds.iter().flat_map(|f| f.y_true.iter().copied()).collect();
    let all_pred: Vec<u8> = folds.iter().flat_map(|f| f.y_pred.iter().copied()).collect();
    let fold_metrics: Vec<Metrics> = folds.iter().map(|f| f.metrics).collect();
    Ok(ExperimentReport {
        method: inputs.label.clone(),
        topology: spec.topology,
        params,
        mean: mean_metrics(&fold_metrics),
        pooled: compute_metrics(&all_true, &all_pred)?,
        dr_bio_seconds: inputs.dr_bio_seconds,
        dr_land_seconds: inputs.dr_land_seconds,
        train_seconds: folds.iter().map(|f| f.train_seconds).sum(),
        test_seconds: folds.iter().map(|f| f.test_seconds).sum(),
        folds,
    })
}

/// Everything one LOSO experiment needs besides the data.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub bio: EmbeddingConfig,
    pub landmarks: EmbeddingConfig,
    pub network: NetworkSpec,
    pub train: TrainConfig,
    pub balance: BalanceMode,
}

/// Reduce the modalities the network reads, then run every fold.
pub fn run_experiment(ds: &LabeledDataset, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let t = cfg.network.topology;
    let inputs = reduce_modalities(
        ds,
        t.uses_bio().then_some(&cfg.bio),
        t.uses_landmarks().then_some(&cfg.landmarks),
    )?;
    run_folds(ds, &inputs, &cfg.network, &cfg.train, cfg.balance)
}

/// Builds the network for a topology given the reduced input widths.
pub type NetworkFactory<'a> = dyn Fn(Topology, usize, usize) -> Result<NetworkSpec> + Sync + 'a;

/// Cross product of reduction settings and topologies. Each reduction runs
/// once and is shared by all topologies.
pub fn run_benchmark(
    ds: &LabeledDataset,
    embeddings: &[(EmbeddingConfig, EmbeddingConfig)],
    topologies: &[Topology],
    network: &NetworkFactory<'_>,
    train_cfg: &TrainConfig,
    balance: BalanceMode,
) -> Result<BenchmarkReport> {
    let mut experiments = Vec::new();
    for (bio, land) in embeddings {
        let inputs = reduce_modalities(ds, Some(bio), Some(land))?;
        for &t in topologies {
            let spec = network(t, inputs.bio.cols(), inputs.landmarks.cols())?;
            let mut view = inputs.clone();
            if !t.uses_bio() {
                view.bio = Matrix::zeros(ds.len(), 0);
                view.dr_bio_seconds = 0.0;
            }
            if !t.uses_landmarks() {
                view.landmarks = Matrix::zeros(ds.len(), 0);
                view.dr_land_seconds = 0.0;
            }
            experiments.push(run_folds(ds, &view, &spec, train_cfg, balance)?);
        }
    }
    Ok(BenchmarkReport::new(experiments))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn folds_per_subject() {
        let s = ids(&["b", "a", "a", "b", "a"]);
        let folds = loso_folds(&s).unwrap();
        assert_eq!(folds.len(), 2);
        assert_eq!(folds[0].test_subject, "a");
        assert_eq!(folds[0].test_rows, vec![1, 2, 4]);
        assert_eq!(folds[0].train_rows, vec![0, 3]);
        assert_eq!(folds[1].test_rows.len(), 2);
        for f in &folds {
            check_no_leakage(f, &s).unwrap();
        }
    }

    #[test]
    fn single_subject_rejected() {
        assert!(matches!(loso_folds(&ids(&["a", "a"])), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn leakage_detected() {
        let s = ids(&["a", "b", "a"]);
        let plan = FoldPlan {
            test_subject: "a".into(),
            train_rows: vec![1, 2],
            test_rows: vec![0],
        };
        assert!(check_no_leakage(&plan, &s).is_err());
    }

    #[test]
    fn hand_confusion_matrix() {
        let m = compute_metrics(&[0, 0, 1, 2], &[0, 1, 1, 2]).unwrap();
        assert_eq!(m.accuracy, 0.75);
        assert!((m.precision - 5.0 / 6.0).abs() < 1e-12);
        assert!((m.recall - 5.0 / 6.0).abs() < 1e-12);
        assert!((m.f1 - 7.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_predictor() {
        let m = compute_metrics(&[0, 1, 2, 0, 1, 2], &[0; 6]).unwrap();
        assert!((m.accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.per_class[1].precision, 0.0);
        assert_eq!(m.per_class[2].precision, 0.0);
        let perfect = compute_metrics(&[0, 1, 2], &[0, 1, 2]).unwrap();
        assert_eq!((perfect.accuracy, perfect.precision, perfect.recall, perfect.f1), (1.0, 1.0, 1.0, 1.0));
        assert!(compute_metrics(&[], &[]).is_err());
    }
}
