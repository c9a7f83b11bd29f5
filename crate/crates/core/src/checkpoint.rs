//! Binary model checkpoints.
//!
//! Layout: the 8-byte magic `LATADCKP`, a u32 format version, a u64 header
//! length, a JSON header, then every tensor as little-endian f64 in row-major
//! order, in the order the header lists them. Round trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extractor::ExtractorConfig;
use crate::training::LatadModel;

const MAGIC: &[u8; 8] = b"LATADCKP";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub extractor: ExtractorConfig,
    pub generators: usize,
    pub margins: Vec<f64>,
    pub config_hash: String,
    pub epochs_completed: usize,
    pub disabled_modules: Vec<String>,
    pub tensors: Vec<TensorEntry>,
}

/// Writes to a temporary sibling and renames it into place.
pub fn save_checkpoint(
    path: &Path,
    model: &LatadModel,
    margins: &[f64],
    config_hash: &str,
    epochs_completed: usize,
) -> Result<()> {
    let header = CheckpointHeader {
        extractor: model.config().clone(),
        generators: model.generators.len(),
        margins: margins.to_vec(),
        config_hash: config_hash.to_string(),
        epochs_completed,
        disabled_modules: model
            .config()
            .disabled_modules()
            .into_iter()
            .map(String::from)
            .collect(),
        tensors: model
            .store
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.to_string(),
                rows: t.nrows(),
                cols: t.ncols(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(VERSION)?;
        w.write_u64::<LE>(json.len() as u64)?;
        w.write_all(&json)?;
        for (_, t) in model.store.iter() {
            for v in t.iter() {
                w.write_f64::<LE>(*v)?;
            }
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Rebuilds the model described by the header and fills in the stored weights.
pub fn load_checkpoint(path: &Path) -> Result<(LatadModel, CheckpointHeader)> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput {
            path: path.into(),
            hint: "run `train` first".into(),
        },
        _ => e.into(),
    })?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("{}: not a checkpoint", path.display())));
    }
    let version = r.read_u32::<LE>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let len = r.read_u64::<LE>()? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: CheckpointHeader = serde_json::from_slice(&json)?;
    let mut model = LatadModel::new(&header.extractor, header.generators)?;
    if model.store.len() != header.tensors.len() {
        return Err(Error::Format(format!(
            "checkpoint lists {} tensors, model has {}",
            header.tensors.len(),
            model.store.len()
        )));
    }
    for entry in &header.tensors {
        let id = model
            .store
            .id(&entry.name)
            .ok_or_else(|| Error::Format(format!("unknown tensor `{}`", entry.name)))?;
        let t = model.store.get_mut(id);
        if t.dim() != (entry.rows, entry.cols) {
            return Err(Error::Format(format!(
                "tensor `{}` is {}x{}, expected {:?}",
                entry.name,
                entry.rows,
                entry.cols,
                t.dim()
            )));
        }
        for v in t.iter_mut() {
            *v = r.read_f64::<LE>()?;
        }
    }
    Ok((model, header))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_exact_round_trip() {
        let cfg = ExtractorConfig {
            window: 8,
            features: 2,
            d_model: 4,
            transformer_heads: 1,
            use_gat: false,
            ..Default::default()
        };
        let model = LatadModel::new(&cfg, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&p, &model, &[0.6, 0.7], "abc", 3).unwrap();
        let (back, header) = load_checkpoint(&p).unwrap();
        assert_eq!(header.disabled_modules, vec!["gat"]);
        assert_eq!(header.epochs_completed, 3);
        for ((n1, a), (n2, b)) in model.store.iter().zip(back.store.iter()) {
            assert_eq!(n1, n2);
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
