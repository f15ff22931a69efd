//! Dimensionality reduction: LLE, spectral embedding, SMACOF MDS, Isomap,
//! exact t-SNE and PCA.
//!
//! Every method is a fit-transform over the full feature matrix and is
//! deterministic given the matrix and the [`EmbeddingConfig`].

mod export;
mod isomap;
mod lle;
mod mds;
mod pca;
mod spectral;
mod tsne;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{duplicate_representatives, Matrix};

pub use export::{read_embedding_csv, write_diagnostics_json, write_embedding_csv};
pub use isomap::fit_isomap;
pub use lle::{fit_lle, lle_cost_matrix, lle_weights, LleWeights};
pub use mds::{fit_mds_smacof, smacof, stress, SmacofOutcome};
pub use pca::{fit_pca, PcaProjection};
pub use spectral::{fit_spectral, normalized_laplacian};
pub use tsne::{
    conditional_probabilities, fit_tsne, joint_probabilities, kl_divergence, kl_gradient,
    fit_tsne_traced, Conditional, TsneTrace, P_FLOOR,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lle,
    Se,
    Mds,
    Iso,
    Tsne,
    Pca,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Lle,
        Method::Se,
        Method::Mds,
        Method::Iso,
        Method::Tsne,
        Method::Pca,
    ];

    /// Table label.
    pub fn label(self) -> &'static str {
        match self {
            Method::Lle => "LLE",
            Method::Se => "SE",
            Method::Mds => "MDS",
            Method::Iso => "ISO",
            Method::Tsne => "t-SNE",
            Method::Pca => "PCA",
        }
    }

    pub fn default_neighbors(self) -> usize {
        match self {
            Method::Se => 5,
            _ => 10,
        }
    }

    pub fn default_max_iter(self) -> usize {
        match self {
            Method::Tsne => 1000,
            _ => 300,
        }
    }

    fn uses_neighbors(self) -> bool {
        matches!(self, Method::Lle | Method::Se | Method::Iso)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Lle => "lle",
            Method::Se => "se",
            Method::Mds => "mds",
            Method::Iso => "iso",
            Method::Tsne => "tsne",
            Method::Pca => "pca",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lle" => Ok(Method::Lle),
            "se" | "spectral" => Ok(Method::Se),
            "mds" => Ok(Method::Mds),
            "iso" | "isomap" => Ok(Method::Iso),
            "tsne" | "t-sne" => Ok(Method::Tsne),
            "pca" => Ok(Method::Pca),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

/// Method choice plus every hyperparameter any method reads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub method: Method,
    pub n_components: usize,
    pub n_neighbors: usize,
    pub perplexity: f64,
    pub seed: u64,
    pub max_iter: usize,
    pub n_init: usize,
    pub tolerance: f64,
    pub lle_regularization: f64,
}

impl EmbeddingConfig {
    /// Defaults: LLE k=10, SE k=5, ISO k=10, perplexity 30, seed 42,
    /// 4 MDS restarts, tolerance 1e-6, LLE regularization 1e-3.
    pub fn new(method: Method, n_components: usize) -> Self {
        EmbeddingConfig {
            method,
            n_components,
            n_neighbors: method.default_neighbors(),
            perplexity: 30.0,
            seed: 42,
            max_iter: method.default_max_iter(),
            n_init: 4,
            tolerance: 1e-6,
            lle_regularization: 1e-3,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_neighbors(mut self, k: usize) -> Self {
        self.n_neighbors = k;
        self
    }

    /// Checks the config against an `n × cols` input.
    pub fn validate(&self, n: usize, cols: usize) -> Result<()> {
        let d = self.n_components;
        if d == 0 || d >= cols {
            return Err(Error::InvalidArgument(format!(
                "n_components = {d} must be in 1..{cols} (input has {cols} columns)"
            )));
        }
        if n < 3 {
            return Err(Error::InvalidInput(format!("need at least 3 rows, got {n}")));
        }
        if self.method != Method::Pca && self.method != Method::Tsne && d >= n {
            return Err(Error::InvalidArgument(format!(
                "n_components = {d} must be below the row count {n}"
            )));
        }
        if self.method.uses_neighbors() && (self.n_neighbors == 0 || self.n_neighbors >= n) {
            return Err(Error::InvalidArgument(format!(
                "n_neighbors = {} must be in 1..{n}",
                self.n_neighbors
            )));
        }
        if self.method == Method::Tsne {
            let limit = (n as f64 - 1.0) / 3.0;
            if !(self.perplexity > 0.0) || self.perplexity >= limit {
                return Err(Error::InvalidArgument(format!(
                    "perplexity {} must be in (0, {limit:.3}) for {n} rows",
                    self.perplexity
                )));
            }
        }
        if self.method == Method::Mds && self.n_init == 0 {
            return Err(Error::InvalidArgument("n_init must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) || !(self.lle_regularization > 0.0) {
            return Err(Error::InvalidArgument(
                "tolerance and lle_regularization must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Method-specific fit record.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stress: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kl_divergence: Option<f64>,
    /// Eigenvalues of the method's eigenproblem: descending for PCA and
    /// Isomap, the smallest `d + 1` ascending for LLE and SE.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spectrum: Option<Vec<f64>>,
    pub iterations: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct EmbeddingResult {
    pub coords: Matrix,
    pub diagnostics: Diagnostics,
}

/// Dispatches to the configured method, timing the fit.
pub fn reduce(x: &Matrix, cfg: &EmbeddingConfig) -> Result<EmbeddingResult> {
    if !x.is_finite() {
        return Err(Error::InvalidInput("reduce: non-finite input".into()));
    }
    cfg.validate(x.rows(), x.cols())?;
    let start = Instant::now();
    let d = cfg.n_components;
    let mut result = match cfg.method {
        Method::Pca => fit_pca(x, d),
        Method::Lle => fit_lle(x, d, cfg.n_neighbors, cfg.lle_regularization),
        Method::Se => fit_spectral(x, d, cfg.n_neighbors),
        Method::Mds => fit_mds_smacof(x, d, cfg.n_init, cfg.max_iter, cfg.tolerance, cfg.seed),
        Method::Iso => fit_isomap(x, d, cfg.n_neighbors),
        Method::Tsne => fit_tsne(x, d, cfg.perplexity, cfg.seed, cfg.max_iter),
    }?;
    result.diagnostics.seconds = start.elapsed().as_secs_f64();
    debug_assert!(result.coords.is_finite());
    Ok(result)
}

/// Collapses bit-identical rows. Returns the unique rows and, per input
/// row, the index of its unique row.
pub(crate) fn dedup_rows(x: &Matrix) -> (Matrix, Vec<usize>) {
    let reps = duplicate_representatives(x);
    let mut slot = vec![usize::MAX; x.rows()];
    let mut keep = Vec::new();
    for (i, &r) in reps.iter().enumerate() {
        if r == i {
            slot[i] = keep.len();
            keep.push(i);
        }
    }
    let map = reps.iter().map(|&r| slot[r]).collect();
    (x.select_rows(&keep), map)
}

pub(crate) fn expand_rows(unique: &Matrix, map: &[usize]) -> Matrix {
    unique.select_rows(map)
}
