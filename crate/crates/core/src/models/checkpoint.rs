//! Binary checkpoint container.
//!
//! Layout: magic `EGNN`, version u32, a config block of UTF-8 `key=value`
//! entries, then per tensor: name length + UTF-8 name + rank + dims +
//! little-endian 64-bit floats. Round-trips are bit-exact; a failed load
//! returns an error and no partial state.

use std::fs;
use std::path::Path;

use super::{Architecture, EgnnModel, ModelConfig, ModelError};
use crate::linalg::DenseMatrix;
use crate::params::ParameterSet;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"EGNN";
pub const CHECKPOINT_VERSION: u32 = 1;

/// In-memory image of a checkpoint file.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: Vec<(String, String)>,
    /// (name, tensor, trainable flag); flags travel in the config block.
    pub tensors: Vec<(String, DenseMatrix, bool)>,
}

impl Checkpoint {
    pub fn config_value(&self, key: &str) -> Result<&str, ModelError> {
        self.config
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| ModelError::Checkpoint(format!("missing config key {key:?}")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, ModelError> {
        self.config_value(key)?
            .parse()
            .map_err(|_| ModelError::Checkpoint(format!("config key {key:?} failed to parse")))
    }
}

fn err(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), ModelError> {
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());

    let trainable: Vec<&str> = ckpt
        .tensors
        .iter()
        .filter(|(_, _, t)| *t)
        .map(|(n, _, _)| n.as_str())
        .collect();
    let mut config = ckpt.config.clone();
    config.push(("dtype".into(), "f64".into()));
    config.push(("trainable".into(), trainable.join(",")));

    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    for (k, v) in &config {
        let entry = format!("{k}={v}");
        out.extend_from_slice(&(entry.len() as u32).to_le_bytes());
        out.extend_from_slice(entry.as_bytes());
    }

    out.extend_from_slice(&(ckpt.tensors.len() as u32).to_le_bytes());
    for (name, tensor, _) in &ckpt.tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        out.extend_from_slice(&(tensor.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(tensor.cols() as u64).to_le_bytes());
        out.extend_from_slice(&tensor.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| err(format!("write {}: {e}", path.display())))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.pos + n > self.buf.len() {
            return Err(err("truncated checkpoint"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, ModelError> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| err("invalid utf-8 string"))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let buf = fs::read(path).map_err(|e| err(format!("read {}: {e}", path.display())))?;
    let mut r = Reader { buf: &buf, pos: 0 };

    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(err("bad magic bytes"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(err(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }

    let config_count = r.u32()? as usize;
    let mut config = Vec::with_capacity(config_count);
    for _ in 0..config_count {
        let entry = r.string()?;
        let (k, v) = entry
            .split_once('=')
            .ok_or_else(|| err(format!("config entry {entry:?} lacks '='")))?;
        config.push((k.to_string(), v.to_string()));
    }
    let dtype = config
        .iter()
        .find(|(k, _)| k == "dtype")
        .map(|(_, v)| v.as_str())
        .unwrap_or("f64");
    if dtype != "f64" {
        return Err(err(format!("unsupported dtype {dtype:?}")));
    }
    let trainable: Vec<String> = config
        .iter()
        .find(|(k, _)| k == "trainable")
        .map(|(_, v)| v.split(',').filter(|s| !s.is_empty()).map(String::from).collect())
        .unwrap_or_default();

    let tensor_count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        let name = r.string()?;
        let rank = r.u32()?;
        if rank != 2 {
            return Err(err(format!("tensor {name:?} has unsupported rank {rank}")));
        }
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| err("tensor dims overflow"))?;
        let bytes = r.take(count * 8)?;
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if tensors.iter().any(|(n, _, _)| *n == name) {
            return Err(err(format!("duplicate tensor {name:?}")));
        }
        let is_trainable = trainable.iter().any(|t| *t == name);
        tensors.push((name, DenseMatrix::from_vec(rows, cols, data), is_trainable));
    }
    if r.pos != buf.len() {
        return Err(err("trailing bytes after last tensor"));
    }
    Ok(Checkpoint {
        config: config
            .into_iter()
            .filter(|(k, _)| k != "dtype" && k != "trainable")
            .collect(),
        tensors,
    })
}

fn model_config_kv(prefix: &str, config: &ModelConfig) -> Vec<(String, String)> {
    vec![
        (format!("{prefix}arch"), config.arch.to_string()),
        (format!("{prefix}layers"), config.layers.to_string()),
        (format!("{prefix}hidden"), config.hidden.to_string()),
        (format!("{prefix}dropout"), config.dropout.to_string()),
        (format!("{prefix}seed"), config.seed.to_string()),
    ]
}

fn model_config_from(ckpt: &Checkpoint, prefix: &str) -> Result<ModelConfig, ModelError> {
    let arch: Architecture = ckpt.parse(&format!("{prefix}arch"))?;
    Ok(ModelConfig {
        arch,
        layers: ckpt.parse(&format!("{prefix}layers"))?,
        hidden: ckpt.parse(&format!("{prefix}hidden"))?,
        dropout: ckpt.parse(&format!("{prefix}dropout"))?,
        seed: ckpt.parse(&format!("{prefix}seed"))?,
    })
}

pub fn save_model(
    path: &Path,
    config: &ModelConfig,
    params: &ParameterSet,
) -> Result<(), ModelError> {
    let mut kv = vec![("kind".to_string(), "model".to_string())];
    kv.extend(model_config_kv("", config));
    let tensors = params
        .iter()
        .map(|p| (p.name.clone(), p.tensor.clone(), p.trainable))
        .collect();
    save_checkpoint(
        path,
        &Checkpoint {
            config: kv,
            tensors,
        },
    )
}

pub fn load_model(path: &Path) -> Result<(ModelConfig, ParameterSet), ModelError> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.config_value("kind")? != "model" {
        return Err(err("checkpoint does not hold a plain model"));
    }
    let config = model_config_from(&ckpt, "")?;
    let mut params = ParameterSet::new();
    for (name, tensor, trainable) in ckpt.tensors {
        params.push(name, tensor, trainable);
    }
    Ok((config, params))
}

const FROZEN_LOGITS_TENSOR: &str = "__frozen_logits__";

pub fn save_egnn(path: &Path, model: &EgnnModel) -> Result<(), ModelError> {
    let mut kv = vec![
        ("kind".to_string(), "egnn".to_string()),
        ("alpha".to_string(), model.alpha.to_string()),
    ];
    kv.extend(model_config_kv("gnn.", &model.gnn_config));
    kv.extend(model_config_kv("mlp.", &model.mlp_config));
    let mut tensors = vec![(
        FROZEN_LOGITS_TENSOR.to_string(),
        model.frozen_logits.clone(),
        false,
    )];
    for p in model.gnn_params.iter() {
        tensors.push((format!("gnn.{}", p.name), p.tensor.clone(), p.trainable));
    }
    for p in model.mlp_params.iter() {
        tensors.push((format!("mlp.{}", p.name), p.tensor.clone(), p.trainable));
    }
    save_checkpoint(
        path,
        &Checkpoint {
            config: kv,
            tensors,
        },
    )
}

pub fn load_egnn(path: &Path) -> Result<EgnnModel, ModelError> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.config_value("kind")? != "egnn" {
        return Err(err("checkpoint does not hold a stitched model"));
    }
    let alpha: f64 = ckpt.parse("alpha")?;
    let gnn_config = model_config_from(&ckpt, "gnn.")?;
    let mlp_config = model_config_from(&ckpt, "mlp.")?;
    let mut frozen_logits = None;
    let mut gnn_params = ParameterSet::new();
    let mut mlp_params = ParameterSet::new();
    for (name, tensor, trainable) in ckpt.tensors {
        if name == FROZEN_LOGITS_TENSOR {
            frozen_logits = Some(tensor);
        } else if let Some(rest) = name.strip_prefix("gnn.") {
            gnn_params.push(rest.to_string(), tensor, trainable);
        } else if let Some(rest) = name.strip_prefix("mlp.") {
            mlp_params.push(rest.to_string(), tensor, trainable);
        } else {
            return Err(err(format!("unexpected tensor {name:?}")));
        }
    }
    Ok(EgnnModel {
        gnn_config,
        gnn_params,
        frozen_logits: frozen_logits.ok_or_else(|| err("missing frozen logits tensor"))?,
        mlp_config,
        mlp_params,
        alpha,
    })
}
