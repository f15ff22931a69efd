//! The `sfl` command line: each subcommand composes library operations and
//! writes its artifacts under the output directory.
//!
//! | subcommand | artifacts |
//! |---|---|
//! | `synth` | `recordings/manifest.json`, `recordings/<id>.csv` |
//! | `features` | `features/{bio_features,landmark_features,labels}.csv` |
//! | `reduce` | `embedding_<modality>.csv`, `.json` sidecar, `.svg` when 2-D |
//! | `train` | `model.sfl`, `train_history.json` |
//! | `eval-loso` | `report.<ext>`, `metrics.json`, `embedding_<modality>.csv` |
//! | `bench` | `bench.<ext>`, `bench_metrics.json` |
//! | `plot` | `plot.svg` |
//!
//! `metrics.json` and `bench_metrics.json` carry no timings, so reruns with
//! the same config hash identically.

mod config;
mod plot;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use config::{
    parse_config, BenchSection, DatasetSection, EmbeddingSection, ExperimentConfig,
    ModalityEmbedding, NetworkSection, OutputSection, SynthSection, TrainSection,
};
pub use plot::{plot_embedding, CLASS_COLORS, CLASS_NAMES};

use crate::error::{Error, Result};
use crate::evaluation::{
    emit_report, reduce_modalities, run_benchmark, run_folds, BenchmarkReport, ReportFormat,
};
use crate::io::{read_to_string, write_atomic};
use crate::manifold::{reduce, write_diagnostics_json, write_embedding_csv, read_embedding_csv, EmbeddingConfig};
use crate::neuralnet::{build, predict, save_model, train, NetData};
use crate::pipeline::{
    assemble_dataset_with, balance_indices, read_dataset, read_recordings, write_dataset,
    write_recordings, LabeledDataset,
};
use crate::synthdata::gen_multimodal_stress;

#[derive(Debug, Parser)]
#[command(name = "sfl", version, about = "Manifold-learning reduction and CNN fusion for stress detection")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Experiment config (JSON). Without it, `--seed` selects default synthetic data.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed, overriding `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "SFL_JOBS")]
    pub jobs: Option<usize>,
    /// Report format, overriding `output.format`.
    #[arg(long, global = true, value_parser = parse_format)]
    pub format: Option<ReportFormat>,
}

fn parse_format(s: &str) -> std::result::Result<ReportFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModalityArg {
    Bio,
    Landmarks,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic recordings.
    Synth,
    /// Ingest recordings and write the windowed, normalized, balanced dataset.
    Features,
    /// Run the configured reduction on one or both modalities.
    Reduce {
        #[arg(long, value_enum, default_value = "both")]
        modality: ModalityArg,
    },
    /// Train the configured topology on all rows.
    Train,
    /// Leave-one-subject-out evaluation of the configured experiment.
    EvalLoso,
    /// Every configured method against every configured topology.
    Bench,
    /// Scatter an embedding CSV colored by class.
    Plot {
        /// Embedding CSV with exactly 2 columns.
        #[arg(long)]
        embedding: PathBuf,
        /// CSV with a `label` column, one row per embedding row.
        #[arg(long)]
        labels: PathBuf,
        /// SVG path (default `<out>/plot.svg`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Loads the config and applies flag overrides.
pub fn load_config(args: &GlobalArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let mut cfg = parse_config(&read_to_string(path)?)?;
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.resolve_paths(base);
            cfg
        }
        None => match args.seed {
            Some(seed) => ExperimentConfig::synthetic(seed),
            None => {
                return Err(Error::InvalidArgument(
                    "either --config or --seed is required".into(),
                ))
            }
        },
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    if let Some(f) = args.format {
        cfg.output.format = f;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<LabeledDataset> {
    if let Some(s) = &cfg.synth {
        let recs = gen_multimodal_stress(&s.spec(cfg.seed))?;
        return assemble_dataset_with(&recs, cfg.window, cfg.seed, cfg.balance);
    }
    let d = cfg.dataset.as_ref().expect("validated source");
    if let Some(m) = &d.manifest {
        let recs = read_recordings(m)?;
        return assemble_dataset_with(&recs, cfg.window, cfg.seed, cfg.balance);
    }
    read_dataset(d.features.as_ref().expect("validated source"))
}

fn extension(f: ReportFormat) -> &'static str {
    match f {
        ReportFormat::Csv => "csv",
        ReportFormat::Text => "txt",
        ReportFormat::Json => "json",
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

struct Run {
    cfg: ExperimentConfig,
    written: Vec<PathBuf>,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.cfg.output.dir.join(name)
    }

    fn wrote(&mut self, p: PathBuf) {
        self.written.push(p);
    }

    fn embedding_configs(&self) -> (EmbeddingConfig, EmbeddingConfig) {
        let e = &self.cfg.embedding;
        (e.bio_config(self.cfg.seed), e.landmark_config(self.cfg.seed))
    }
}

fn cmd_synth(run: &mut Run) -> Result<()> {
    let spec = match &run.cfg.synth {
        Some(s) => s.spec(run.cfg.seed),
        None => return Err(Error::InvalidArgument("synth needs a `synth` section in the config".into())),
    };
    let recs = gen_multimodal_stress(&spec)?;
    let manifest = write_recordings(&run.path("recordings"), &recs)?;
    run.wrote(manifest);
    Ok(())
}

fn cmd_features(run: &mut Run) -> Result<()> {
    let ds = load_dataset(&run.cfg)?;
    let dir = run.path("features");
    write_dataset(&dir, &ds)?;
    run.wrote(dir);
    Ok(())
}

fn emit_embedding(run: &mut Run, name: &str, x: &crate::numerics::Matrix, cfg: &EmbeddingConfig, labels: &[u8]) -> Result<()> {
    let r = reduce(x, cfg)?;
    let csv = run.path(&format!("embedding_{name}.csv"));
    write_embedding_csv(&csv, &r.coords)?;
    let json = run.path(&format!("embedding_{name}.json"));
    write_diagnostics_json(&json, cfg, &r)?;
    run.wrote(csv);
    run.wrote(json);
    if run.cfg.output.plot && r.coords.cols() == 2 {
        let svg = run.path(&format!("embedding_{name}.svg"));
        write_atomic(&svg, plot_embedding(&r.coords, labels)?.as_bytes())?;
        run.wrote(svg);
    }
    Ok(())
}

fn cmd_reduce(run: &mut Run, modality: ModalityArg) -> Result<()> {
    let ds = load_dataset(&run.cfg)?;
    let (bio, land) = run.embedding_configs();
    if modality != ModalityArg::Landmarks {
        emit_embedding(run, "bio", &ds.bio.values, &bio, &ds.labels)?;
    }
    if modality != ModalityArg::Bio {
        emit_embedding(run, "landmarks", &ds.landmarks.values, &land, &ds.labels)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    topology: String,
    method: String,
    params: usize,
    rows: usize,
    history: Vec<f64>,
    train_accuracy: f64,
}

fn cmd_train(run: &mut Run) -> Result<()> {
    let cfg = &run.cfg;
    let ds = load_dataset(cfg)?;
    let topology = cfg.network.topology;
    let (bio, land) = run.embedding_configs();
    let inputs = reduce_modalities(
        &ds,
        topology.uses_bio().then_some(&bio),
        topology.uses_landmarks().then_some(&land),
    )?;
    let spec = cfg.network.spec(topology, inputs.bio.cols(), inputs.landmarks.cols())?;
    let mut rows: Vec<usize> = (0..ds.len()).collect();
    if cfg.balance == crate::pipeline::BalanceMode::TrainFold {
        rows = balance_indices(&ds.labels, cfg.seed)?;
    }
    let labels: Vec<u8> = rows.iter().map(|&i| ds.labels[i]).collect();
    let data = NetData::new(
        inputs.bio.select_rows(&rows),
        inputs.landmarks.select_rows(&rows),
        labels.clone(),
    )?;
    let model = train(&build(&spec, cfg.seed)?, &data, &cfg.train.config(cfg.seed))?;
    let pred = predict(&model, &data.bio, &data.landmarks)?;
    let correct = pred.iter().zip(&labels).filter(|(a, b)| a == b).count();
    let summary = TrainSummary {
        topology: topology.name().to_string(),
        method: inputs.label.clone(),
        params: model.n_params(),
        rows: rows.len(),
        history: model.history.clone(),
        train_accuracy: correct as f64 / rows.len() as f64,
    };
    let model_path = run.path("model.sfl");
    save_model(&model_path, &model)?;
    let hist = run.path("train_history.json");
    write_json(&hist, &summary)?;
    run.wrote(model_path);
    run.wrote(hist);
    Ok(())
}

fn write_report(run: &mut Run, stem: &str, report: &BenchmarkReport) -> Result<String> {
    let format = run.cfg.output.format;
    let text = emit_report(report, format)?;
    let path = run.path(&format!("{stem}.{}", extension(format)));
    write_atomic(&path, text.as_bytes())?;
    run.wrote(path);
    let mut stripped = report.clone();
    stripped.strip_times();
    let metrics = run.path(&format!("{}metrics.json", if stem == "report" { "" } else { "bench_" }));
    write_json(&metrics, &stripped)?;
    run.wrote(metrics);
    Ok(text)
}

fn cmd_eval_loso(run: &mut Run) -> Result<String> {
    let cfg = &run.cfg;
    let ds = load_dataset(cfg)?;
    let topology = cfg.network.topology;
    let (bio, land) = run.embedding_configs();
    let inputs = reduce_modalities(
        &ds,
        topology.uses_bio().then_some(&bio),
        topology.uses_landmarks().then_some(&land),
    )?;
    let spec = cfg.network.spec(topology, inputs.bio.cols(), inputs.landmarks.cols())?;
    let report = run_folds(&ds, &inputs, &spec, &cfg.train.config(cfg.seed), cfg.balance)?;
    for (name, m) in [("bio", &inputs.bio), ("landmarks", &inputs.landmarks)] {
        if m.cols() > 0 {
            let p = run.path(&format!("embedding_{name}.csv"));
            write_embedding_csv(&p, m)?;
            run.wrote(p);
        }
    }
    write_report(run, "report", &BenchmarkReport::new(vec![report]))
}

fn cmd_bench(run: &mut Run) -> Result<String> {
    let cfg = &run.cfg;
    let ds = load_dataset(cfg)?;
    let e = &cfg.embedding;
    let embeddings: Vec<(EmbeddingConfig, EmbeddingConfig)> = cfg
        .bench
        .methods
        .iter()
        .map(|&m| {
            (
                e.config(m, e.bio.n_components, cfg.seed),
                e.config(m, e.landmarks.n_components, cfg.seed),
            )
        })
        .collect();
    let network = cfg.network.clone();
    let factory = move |t, b, l| network.spec(t, b, l);
    let report = run_benchmark(
        &ds,
        &embeddings,
        &cfg.bench.topologies,
        &factory,
        &cfg.train.config(cfg.seed),
        cfg.balance,
    )?;
    write_report(run, "bench", &report)
}

fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let mut reader = csv::Reader::from_path(path)?;
    let col = reader
        .headers()?
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| Error::Format(format!("{}: no `label` column", path.display())))?;
    reader
        .records()
        .map(|r| {
            let r = r?;
            r[col]
                .parse()
                .map_err(|_| Error::Format(format!("{}: bad label {:?}", path.display(), &r[col])))
        })
        .collect()
}

fn cmd_plot(out_dir: &Path, embedding: &Path, labels: &Path, output: Option<&Path>) -> Result<PathBuf> {
    let coords = read_embedding_csv(embedding)?;
    let svg = plot_embedding(&coords, &read_labels(labels)?)?;
    let path = output.map_or_else(|| out_dir.join("plot.svg"), Path::to_path_buf);
    write_atomic(&path, svg.as_bytes())?;
    Ok(path)
}

fn configure_threads(jobs: Option<usize>) -> Result<()> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Error::InvalidArgument("--jobs must be at least 1".into()));
        }
        // a pool already built in this process is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs one parsed invocation, returning the text for stdout.
pub fn execute(cli: &Cli) -> Result<String> {
    configure_threads(cli.global.jobs)?;
    if let Command::Plot { embedding, labels, output } = &cli.command {
        let out_dir = cli.global.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        let path = cmd_plot(&out_dir, embedding, labels, output.as_deref())?;
        return Ok(format!("wrote {}\n", path.display()));
    }
    let cfg = load_config(&cli.global)?;
    let mut run = Run { cfg, written: Vec::new() };
    let report = match &cli.command {
        Command::Synth => cmd_synth(&mut run).map(|_| None),
        Command::Features => cmd_features(&mut run).map(|_| None),
        Command::Reduce { modality } => cmd_reduce(&mut run, *modality).map(|_| None),
        Command::Train => cmd_train(&mut run).map(|_| None),
        Command::EvalLoso => cmd_eval_loso(&mut run).map(Some),
        Command::Bench => cmd_bench(&mut run).map(Some),
        Command::Plot { .. } => unreachable!(),
    }?;
    let effective = run.path("config.json");
    write_atomic(&effective, run.cfg.to_json()?.as_bytes())?;
    let mut out = report.unwrap_or_default();
    for p in &run.written {
        out.push_str(&format!("wrote {}\n", p.display()));
    }
    Ok(out)
}

/// `error[<code>]: <message>` on one line.
pub fn error_line(e: &Error) -> String {
    let msg = e.to_string().replace(['\n', '\r'], " ");
    format!("error[{}]: {msg}", e.code())
}
