//! Model file: `SFLMODEL`, header length (u64 LE), JSON header, then the
//! parameters as little-endian f64.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NetworkSpec, TrainedModel};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const MODEL_MAGIC: &[u8; 8] = b"SFLMODEL";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    spec: NetworkSpec,
    seed: u64,
    n_params: usize,
    history: Vec<f64>,
}

pub fn model_bytes(model: &TrainedModel) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        format_version: FORMAT_VERSION,
        spec: model.spec.clone(),
        seed: model.seed,
        n_params: model.params.len(),
        history: model.history.clone(),
    })?;
    let mut out = Vec::with_capacity(16 + header.len() + 8 * model.params.len());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for p in &model.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<TrainedModel> {
    let bad = |why: &str| Error::Format(format!("model file: {why}"));
    if bytes.len() < 16 || &bytes[..8] != MODEL_MAGIC {
        return Err(bad("missing SFLMODEL magic"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..).ok_or_else(|| bad("truncated"))?;
    if body.len() < len {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&body[..len])?;
    if header.format_version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported format version {}", header.format_version)));
    }
    let block = &body[len..];
    if block.len() != 8 * header.n_params {
        return Err(bad(&format!(
            "expected {} parameter bytes, found {}",
            8 * header.n_params,
            block.len()
        )));
    }
    let params = block
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    TrainedModel::from_parts(header.spec, header.seed, params, header.history)
}

pub fn save_model(path: &Path, model: &TrainedModel) -> Result<()> {
    write_atomic(path, &model_bytes(model)?)
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::{build, FilterConfig, Topology};

    #[test]
    fn exact_round_trip() {
        let spec = NetworkSpec::standard(Topology::IntermediateFusion, &FilterConfig::default(), true, 20, 49).unwrap();
        let mut model = build(&spec, 17).unwrap();
        model.history = vec![1.0986, 0.5, 1.0 / 3.0];
        model.params[5] = -0.0;
        model.params[6] = f64::MIN_POSITIVE / 3.0;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.sfl");
        save_model(&path, &model).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn corrupt_files_rejected() {
        let spec = NetworkSpec::standard(Topology::UnimodalBio, &FilterConfig::default(), true, 20, 49).unwrap();
        let bytes = model_bytes(&build(&spec, 1).unwrap()).unwrap();
        assert!(model_from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(model_from_bytes(&wrong).is_err());
    }
}
