//! Single-file checkpoints: safetensors with the model config, format
//! version, step counter and optimizer hyperparameters in the header
//! metadata, model weights under their parameter names and Adam moments
//! under `adam.m.<name>` / `adam.v.<name>`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use safetensors::tensor::TensorView;
use safetensors::{Dtype, SafeTensors};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Recnet};
use crate::tensor::Tensor;
use crate::training::adam::Adam;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Recnet<f32>,
    pub optimizer: Option<Adam<f32>>,
    /// Training steps completed.
    pub step: u64,
}

fn to_bytes(t: &Tensor<f32>) -> Vec<u8> {
    t.data().iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Writes the checkpoint through a temporary file and a rename, so a
/// crash never leaves a partial file under `path`.
pub fn save_checkpoint(path: &Path, model: &Recnet<f32>, optimizer: Option<&Adam<f32>>, step: u64) -> Result<()> {
    let cfg = model.config();
    let mut meta = HashMap::from([
        ("format_version".to_string(), FORMAT_VERSION.to_string()),
        ("num_blocks".to_string(), cfg.num_blocks.to_string()),
        ("base_channels".to_string(), cfg.base_channels.to_string()),
        ("attn_heads".to_string(), cfg.attn_heads.to_string()),
        ("dtype".to_string(), "f32".to_string()),
        ("step".to_string(), step.to_string()),
    ]);
    let mut owned: Vec<(String, Vec<usize>, Vec<u8>)> = model
        .params()
        .iter()
        .map(|(name, t)| (name.to_string(), t.shape().to_vec(), to_bytes(t)))
        .collect();
    if let Some(adam) = optimizer {
        meta.insert("adam_step".into(), adam.step_count().to_string());
        meta.insert("adam_lr".into(), adam.lr.to_string());
        meta.insert("adam_beta1".into(), adam.beta1.to_string());
        meta.insert("adam_beta2".into(), adam.beta2.to_string());
        meta.insert("adam_eps".into(), adam.eps.to_string());
        let (m, v) = adam.moments();
        for ((name, _), (m, v)) in model.params().iter().zip(m.iter().zip(v)) {
            owned.push((format!("adam.m.{name}"), m.shape().to_vec(), to_bytes(m)));
            owned.push((format!("adam.v.{name}"), v.shape().to_vec(), to_bytes(v)));
        }
    }
    let views = owned
        .iter()
        .map(|(name, shape, bytes)| {
            TensorView::new(Dtype::F32, shape.clone(), bytes)
                .map(|v| (name.clone(), v))
                .map_err(|e| Error::Checkpoint(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let bytes = safetensors::serialize(views, Some(meta)).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming to {}", path.display()), e))
}

fn meta_value<V: std::str::FromStr>(meta: &HashMap<String, String>, key: &str) -> Result<V> {
    meta.get(key)
        .ok_or_else(|| Error::Checkpoint(format!("missing metadata {key:?}")))?
        .parse()
        .map_err(|_| Error::Checkpoint(format!("malformed metadata {key:?}")))
}

fn read_f32(st: &SafeTensors<'_>, name: &str, shape: &[usize]) -> Result<Tensor<f32>> {
    let view = st
        .tensor(name)
        .map_err(|_| Error::Checkpoint(format!("missing tensor {name:?}")))?;
    if view.dtype() != Dtype::F32 || view.shape() != shape {
        return Err(Error::Checkpoint(format!(
            "tensor {name:?} is {:?} {:?}, expected F32 {shape:?}",
            view.dtype(),
            view.shape()
        )));
    }
    let data = view
        .data()
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    Tensor::new(shape, data)
}

/// Reads a checkpoint. When `expected` is given the stored config must be
/// identical to it.
pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let fail = |m: String| Error::Checkpoint(format!("{}: {m}", path.display()));
    let (_, header) = SafeTensors::read_metadata(&bytes).map_err(|e| fail(e.to_string()))?;
    let st = SafeTensors::deserialize(&bytes).map_err(|e| fail(e.to_string()))?;
    let meta = header
        .metadata()
        .clone()
        .ok_or_else(|| fail("no metadata header".into()))?;
    let version: u32 = meta_value(&meta, "format_version")?;
    if version != FORMAT_VERSION {
        return Err(fail(format!(
            "format version {version} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    let cfg = ModelConfig::new(
        meta_value(&meta, "num_blocks")?,
        meta_value(&meta, "base_channels")?,
        meta_value(&meta, "attn_heads")?,
    )?;
    if let Some(exp) = expected {
        if *exp != cfg {
            return Err(fail(format!(
                "checkpoint config (blocks={}, channels={}, heads={}) does not match the requested \
                 (blocks={}, channels={}, heads={})",
                cfg.num_blocks, cfg.base_channels, cfg.attn_heads, exp.num_blocks, exp.base_channels, exp.attn_heads
            )));
        }
    }
    let step: u64 = meta_value(&meta, "step")?;
    let mut model = Recnet::<f32>::new(cfg, 0)?;
    let ids: Vec<_> = model.params().ids().collect();
    for id in &ids {
        let name = model.params().name(*id).to_string();
        let shape = model.params().get(*id).shape().to_vec();
        let t = read_f32(&st, &name, &shape).map_err(|e| fail(e.to_string()))?;
        model.params_mut().set(*id, t)?;
    }
    let weight_count = st.names().iter().filter(|n| !n.starts_with("adam.")).count();
    if weight_count != ids.len() {
        return Err(fail(format!(
            "{weight_count} weight tensors for a model with {} parameters",
            ids.len()
        )));
    }
    let optimizer = if meta.contains_key("adam_step") {
        let mut adam = Adam::new(
            model.params(),
            meta_value(&meta, "adam_lr")?,
            meta_value(&meta, "adam_beta1")?,
            meta_value(&meta, "adam_beta2")?,
            meta_value(&meta, "adam_eps")?,
        );
        let mut m = Vec::with_capacity(ids.len());
        let mut v = Vec::with_capacity(ids.len());
        for (name, t) in model.params().iter() {
            m.push(read_f32(&st, &format!("adam.m.{name}"), t.shape()).map_err(|e| fail(e.to_string()))?);
            v.push(read_f32(&st, &format!("adam.v.{name}"), t.shape()).map_err(|e| fail(e.to_string()))?);
        }
        adam.restore(meta_value(&meta, "adam_step")?, m, v)?;
        Some(adam)
    } else {
        None
    };
    Ok(Checkpoint { model, optimizer, step })
}
