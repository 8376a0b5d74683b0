//! Checkpoint file format: magic `ACNP`, a version byte, a key=value
//! hyperparameter block, then named f64 tensors. A human-readable `key=value`
//! sidecar carries training provenance (target dimension, corpora, seed).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::numeric::{AdamConfig, Tensor2};

use super::{HyperParams, ModelError, ModelParams};

const MAGIC: &[u8; 4] = b"ACNP";
const VERSION: u8 = 1;

fn bad(path: &Path, detail: impl std::fmt::Display) -> ModelError {
    ModelError::Checkpoint {
        detail: format!("{}: {detail}", path.display()),
    }
}

fn hp_to_block(hp: &HyperParams) -> String {
    format!(
        "n_kernels={}\nkernel_width={}\npool_size={}\npool_stride={}\nbatch_size={}\n\
         dropout_keep={}\nepochs={}\nft_epochs={}\nseed={}\nlearning_rate={}\nbeta1={}\n\
         beta2={}\nepsilon={}\n",
        hp.n_kernels,
        hp.kernel_width,
        hp.pool_size,
        hp.pool_stride,
        hp.batch_size,
        hp.dropout_keep,
        hp.epochs,
        hp.ft_epochs,
        hp.seed,
        hp.adam.learning_rate,
        hp.adam.beta1,
        hp.adam.beta2,
        hp.adam.epsilon,
    )
}

fn hp_from_block(path: &Path, block: &str) -> Result<HyperParams, ModelError> {
    let mut map = BTreeMap::new();
    for line in block.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(path, format!("malformed hyperparameter line {line:?}")))?;
        map.insert(k.to_string(), v.to_string());
    }
    fn field<T: std::str::FromStr>(
        path: &Path,
        map: &BTreeMap<String, String>,
        key: &str,
    ) -> Result<T, ModelError> {
        map.get(key)
            .ok_or_else(|| bad(path, format!("missing hyperparameter {key}")))?
            .parse()
            .map_err(|_| bad(path, format!("unparseable hyperparameter {key}")))
    }
    Ok(HyperParams {
        n_kernels: field(path, &map, "n_kernels")?,
        kernel_width: field(path, &map, "kernel_width")?,
        pool_size: field(path, &map, "pool_size")?,
        pool_stride: field(path, &map, "pool_stride")?,
        batch_size: field(path, &map, "batch_size")?,
        dropout_keep: field(path, &map, "dropout_keep")?,
        epochs: field(path, &map, "epochs")?,
        ft_epochs: field(path, &map, "ft_epochs")?,
        seed: field(path, &map, "seed")?,
        adam: AdamConfig {
            learning_rate: field(path, &map, "learning_rate")?,
            beta1: field(path, &map, "beta1")?,
            beta2: field(path, &map, "beta2")?,
            epsilon: field(path, &map, "epsilon")?,
        },
    })
}

fn write_tensor<W: Write>(w: &mut W, name: &str, rows: usize, cols: usize, data: &[f64]) -> std::io::Result<()> {
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&(rows as u32).to_le_bytes())?;
    w.write_all(&(cols as u32).to_le_bytes())?;
    for &v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn save_checkpoint(
    path: &Path,
    params: &ModelParams,
    hp: &HyperParams,
) -> Result<(), ModelError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    let block = hp_to_block(hp);
    w.write_all(&(block.len() as u32).to_le_bytes())?;
    w.write_all(block.as_bytes())?;

    let count = params.kernels.len() + 4;
    w.write_all(&(count as u32).to_le_bytes())?;
    for (i, k) in params.kernels.iter().enumerate() {
        write_tensor(&mut w, &format!("kernel_{i:04}"), k.rows(), k.cols(), k.as_slice())?;
    }
    write_tensor(&mut w, "conv_bias", 1, params.conv_biases.len(), &params.conv_biases)?;
    write_tensor(&mut w, "attention_w", 1, params.attention_w.len(), &params.attention_w)?;
    write_tensor(
        &mut w,
        "dense_w",
        params.dense_w.rows(),
        params.dense_w.cols(),
        params.dense_w.as_slice(),
    )?;
    write_tensor(&mut w, "dense_b", 1, 2, &params.dense_b)?;
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.pos + n > self.bytes.len() {
            return Err(bad(self.path, "truncated file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Reads back a checkpoint, validating shapes against its own hyperparameters.
pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, HyperParams), ModelError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if cur.take(4)? != MAGIC {
        return Err(bad(path, "bad magic"));
    }
    let version = cur.take(1)?[0];
    if version != VERSION {
        return Err(bad(path, format!("unsupported version {version}")));
    }
    let block_len = cur.u32()? as usize;
    let block = std::str::from_utf8(cur.take(block_len)?)
        .map_err(|_| bad(path, "hyperparameter block is not UTF-8"))?;
    let hp = hp_from_block(path, block)?;

    let count = cur.u32()? as usize;
    let mut tensors: BTreeMap<String, Tensor2> = BTreeMap::new();
    for _ in 0..count {
        let name_len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| bad(path, "tensor name is not UTF-8"))?
            .to_string();
        let rows = cur.u32()? as usize;
        let cols = cur.u32()? as usize;
        let data: Vec<f64> = cur
            .take(rows * cols * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor2::from_vec(rows, cols, data).map_err(|e| bad(path, e))?;
        if tensors.insert(name.clone(), t).is_some() {
            return Err(bad(path, format!("duplicate tensor {name}")));
        }
    }
    if cur.pos != bytes.len() {
        return Err(bad(path, "trailing bytes after last tensor"));
    }

    let mut take = |name: &str| -> Result<Tensor2, ModelError> {
        tensors
            .remove(name)
            .ok_or_else(|| bad(path, format!("missing tensor {name}")))
    };
    let k = hp.n_kernels;
    let mut kernels = Vec::with_capacity(k);
    for i in 0..k {
        kernels.push(take(&format!("kernel_{i:04}"))?);
    }
    let conv_bias = take("conv_bias")?;
    let attention_w = take("attention_w")?;
    let dense_w = take("dense_w")?;
    let dense_b = take("dense_b")?;

    let (kr, kc) = (kernels[0].rows(), kernels[0].cols());
    if kernels.iter().any(|t| t.rows() != kr || t.cols() != kc) {
        return Err(bad(path, "kernel shapes are not uniform"));
    }
    if kc != hp.kernel_width {
        return Err(bad(path, "kernel width disagrees with hyperparameters"));
    }
    if conv_bias.cols() != k || attention_w.cols() != k {
        return Err(bad(path, "bias or attention width disagrees with kernel count"));
    }
    if dense_w.rows() != 2
        || dense_w.cols() <= k
        || (dense_w.cols() - k) % k != 0
        || dense_b.cols() != 2
    {
        return Err(bad(path, "dense layer shapes inconsistent"));
    }

    let params = ModelParams {
        kernels,
        conv_biases: conv_bias.as_slice().to_vec(),
        attention_w: attention_w.as_slice().to_vec(),
        dense_w,
        dense_b: [dense_b.get(0, 0), dense_b.get(0, 1)],
    };
    if !params.is_finite() {
        return Err(bad(path, "non-finite parameter values"));
    }
    Ok((params, hp))
}

/// Writes a sidecar metadata file: sorted `key=value` lines.
pub fn write_meta(path: &Path, entries: &BTreeMap<String, String>) -> Result<(), ModelError> {
    let mut out = String::new();
    for (k, v) in entries {
        if k.contains('=') || k.contains('\n') || v.contains('\n') {
            return Err(ModelError::Checkpoint {
                detail: format!("metadata key/value {k:?} contains a delimiter"),
            });
        }
        out.push_str(k);
        out.push('=');
        out.push_str(v);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_meta(path: &Path) -> Result<BTreeMap<String, String>, ModelError> {
    let text = std::fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(path, format!("malformed metadata line {line:?}")))?;
        map.insert(k.to_string(), v.to_string());
    }
    Ok(map)
}
