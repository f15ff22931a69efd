//! Experiment configuration: JSON with unknown keys rejected and every
//! omitted value defaulted. Only `seed` is mandatory.
//!
//! ```json
//! {
//!   "seed": 42,
//!   "synth": {"subjects": 8, "samples_per_subject": 600, "separation": 2.0, "noise": 0.2},
//!   "dataset": {"manifest": "data/manifest.json"},
//!   "window": {"length": 20, "step": 10},
//!   "balance": "pooled",
//!   "embedding": {
//!     "bio": {"method": "mds", "n_components": 20},
//!     "landmarks": {"method": "mds", "n_components": 49},
//!     "lle_neighbors": 10, "se_neighbors": 5, "iso_neighbors": 10,
//!     "perplexity": 30.0, "mds_n_init": 4, "tolerance": 1e-6,
//!     "lle_regularization": 1e-3, "max_iter": null
//!   },
//!   "network": {"topology": "intermediate-fusion", "post_fusion_conv": true, "filters": {}},
//!   "train": {"optimizer": "adam", "learning_rate": 0.001, "batch_size": 32, "epochs": 100},
//!   "bench": {"methods": ["lle", "se", "mds", "iso", "tsne", "pca"], "topologies": ["unimodal-bio"]},
//!   "output": {"dir": "out", "format": "csv", "plot": true}
//! }
//! ```
//!
//! Exactly one data source is given: `synth`, `dataset.manifest` (raw
//! recordings) or `dataset.features` (an assembled dataset archive).
//! Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::ReportFormat;
use crate::manifold::{EmbeddingConfig, Method};
use crate::neuralnet::{FilterConfig, NetworkSpec, Optimizer, Topology, TrainConfig};
use crate::pipeline::{BalanceMode, WindowSpec};
use crate::synthdata::SynthStressSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub subjects: usize,
    pub samples_per_subject: usize,
    pub separation: f64,
    pub noise: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthStressSpec::default();
        SynthSection {
            subjects: d.subjects,
            samples_per_subject: d.samples_per_subject,
            separation: d.separation,
            noise: d.noise,
        }
    }
}

impl SynthSection {
    pub fn spec(&self, seed: u64) -> SynthStressSpec {
        SynthStressSpec {
            subjects: self.subjects,
            samples_per_subject: self.samples_per_subject,
            separation: self.separation,
            noise: self.noise,
            seed,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityEmbedding {
    pub method: Method,
    pub n_components: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingSection {
    pub bio: ModalityEmbedding,
    pub landmarks: ModalityEmbedding,
    pub lle_neighbors: usize,
    pub se_neighbors: usize,
    pub iso_neighbors: usize,
    pub perplexity: f64,
    pub mds_n_init: usize,
    pub tolerance: f64,
    pub lle_regularization: f64,
    /// Per-method default (t-SNE 1000, otherwise 300) when absent.
    pub max_iter: Option<usize>,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            bio: ModalityEmbedding {
                method: Method::Mds,
                n_components: 20,
            },
            landmarks: ModalityEmbedding {
                method: Method::Mds,
                n_components: 49,
            },
            lle_neighbors: 10,
            se_neighbors: 5,
            iso_neighbors: 10,
            perplexity: 30.0,
            mds_n_init: 4,
            tolerance: 1e-6,
            lle_regularization: 1e-3,
            max_iter: None,
        }
    }
}

impl EmbeddingSection {
    pub fn config(&self, method: Method, n_components: usize, seed: u64) -> EmbeddingConfig {
        let mut cfg = EmbeddingConfig::new(method, n_components).with_seed(seed);
        cfg.n_neighbors = match method {
            Method::Lle => self.lle_neighbors,
            Method::Se => self.se_neighbors,
            Method::Iso => self.iso_neighbors,
            _ => cfg.n_neighbors,
        };
        cfg.perplexity = self.perplexity;
        cfg.n_init = self.mds_n_init;
        cfg.tolerance = self.tolerance;
        cfg.lle_regularization = self.lle_regularization;
        if let Some(m) = self.max_iter {
            cfg.max_iter = m;
        }
        cfg
    }

    pub fn bio_config(&self, seed: u64) -> EmbeddingConfig {
        self.config(self.bio.method, self.bio.n_components, seed)
    }

    pub fn landmark_config(&self, seed: u64) -> EmbeddingConfig {
        self.config(self.landmarks.method, self.landmarks.n_components, seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub topology: Topology,
    pub post_fusion_conv: bool,
    pub filters: FilterConfig,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            topology: Topology::IntermediateFusion,
            post_fusion_conv: true,
            filters: FilterConfig::default(),
        }
    }
}

impl NetworkSection {
    pub fn spec(&self, topology: Topology, bio_dim: usize, landmark_dim: usize) -> Result<NetworkSpec> {
        NetworkSpec::standard(topology, &self.filters, self.post_fusion_conv, bio_dim, landmark_dim)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            optimizer: d.optimizer,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            epochs: d.epochs,
        }
    }
}

impl TrainSection {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            optimizer: self.optimizer,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub methods: Vec<Method>,
    pub topologies: Vec<Topology>,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            methods: Method::ALL.to_vec(),
            topologies: Topology::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub format: ReportFormat,
    /// Write an SVG scatter for every 2-D embedding.
    pub plot: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            format: ReportFormat::Csv,
            plot: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetSection>,
    #[serde(default)]
    pub window: WindowSpec,
    #[serde(default)]
    pub balance: BalanceMode,
    #[serde(default)]
    pub embedding: EmbeddingSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub bench: BenchSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn config_error(pointer: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        pointer: pointer.to_string(),
        reason: reason.into(),
    }
}

/// Rewrites serde_path_to_error's dotted path (`a.b[0]`) as a JSON pointer.
fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } | Segment::Enum { variant: key } => {
                out.push_str(&key.replace('~', "~0").replace('/', "~1"))
            }
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

/// Parses and validates a config. Relative paths stay relative; see
/// [`ExperimentConfig::resolve_paths`].
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = json_pointer(e.path());
        config_error(&pointer, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    /// Config with `seed` and default synthetic data.
    pub fn synthetic(seed: u64) -> Self {
        ExperimentConfig {
            seed,
            synth: Some(SynthSection::default()),
            dataset: None,
            window: WindowSpec::default(),
            balance: BalanceMode::default(),
            embedding: EmbeddingSection::default(),
            network: NetworkSection::default(),
            train: TrainSection::default(),
            bench: BenchSection::default(),
            output: OutputSection::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sources = self.synth.is_some() as usize
            + self
                .dataset
                .as_ref()
                .map_or(0, |d| d.manifest.is_some() as usize + d.features.is_some() as usize);
        if sources != 1 {
            return Err(config_error(
                "/",
                "exactly one of synth, dataset.manifest or dataset.features is required",
            ));
        }
        if let Some(s) = &self.synth {
            s.spec(self.seed)
                .validate(self.window.length)
                .map_err(|e| config_error("/synth", e.to_string()))?;
        }
        self.window
            .validate()
            .map_err(|e| config_error("/window", e.to_string()))?;
        self.train
            .config(self.seed)
            .validate()
            .map_err(|e| config_error("/train", e.to_string()))?;
        let e = &self.embedding;
        for (name, v) in [
            ("bio", e.bio.n_components),
            ("landmarks", e.landmarks.n_components),
        ] {
            if v == 0 {
                return Err(config_error(
                    &format!("/embedding/{name}/n_components"),
                    "must be >= 1",
                ));
            }
        }
        for (name, v) in [
            ("lle_neighbors", e.lle_neighbors),
            ("se_neighbors", e.se_neighbors),
            ("iso_neighbors", e.iso_neighbors),
            ("mds_n_init", e.mds_n_init),
        ] {
            if v == 0 {
                return Err(config_error(&format!("/embedding/{name}"), "must be >= 1"));
            }
        }
        if !(e.perplexity > 0.0) {
            return Err(config_error("/embedding/perplexity", "must be > 0"));
        }
        if self.bench.methods.is_empty() || self.bench.topologies.is_empty() {
            return Err(config_error("/bench", "methods and topologies must be non-empty"));
        }
        Ok(())
    }

    /// Makes dataset and output paths absolute against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(d) = &mut self.dataset {
            if let Some(m) = &mut d.manifest {
                fix(m);
            }
            if let Some(f) = &mut d.features {
                fix(f);
            }
        }
        fix(&mut self.output.dir);
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}
