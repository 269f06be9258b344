//! The `.dstg` model container.
//!
//! Fixed little-endian layout, portable across platforms:
//!
//! ```text
//! "DSTG"                      magic, 4 bytes
//! u32 version                 currently 1
//! u32 decoders  u32 bits  u32 image_size
//! f64 x5                      loss weights (image, message, adversarial,
//!                             per_message, balance)
//! u32 tensor_count
//! per tensor:
//!   u32 name_len, UTF-8 name
//!   u32 rank, u64 dims[rank]
//!   f32 values[product(dims)]
//! ```
//!
//! `save_model` writes every learnable tensor and the batch-norm running
//! statistics. Checkpoints append the Adam state under an `opt.` prefix;
//! `load_model` skips those, so a checkpoint doubles as a model file.

use crate::autodiff::{AdamState, Tensor};
use crate::losses::LossWeights;
use crate::networks::{ModelConfig, ModelParams};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"DSTG";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad magic: not a model file")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("file is truncated")]
    Truncated,
    #[error("tensor dimensions overflow")]
    DimOverflow,
    #[error("tensor name is not valid UTF-8")]
    BadName,
    #[error("unknown tensor {0:?} in model file")]
    UnknownTensor(String),
    #[error("model file is missing tensor {0:?}")]
    MissingTensor(String),
    #[error("tensor {name:?} has shape {got:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        got: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("invalid model metadata: {0}")]
    BadMetadata(String),
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Self { buf: Vec::new() }
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn tensor(&mut self, name: &str, t: &Tensor<f32>) {
        self.u32(name.len() as u32);
        self.buf.extend_from_slice(name.as_bytes());
        self.u32(t.shape().len() as u32);
        for &d in t.shape() {
            self.u64(d as u64);
        }
        for &v in t.data() {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelIoError> {
        if self.pos + n > self.buf.len() {
            return Err(ModelIoError::Truncated);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelIoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelIoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ModelIoError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tensor(&mut self) -> Result<(String, Tensor<f32>), ModelIoError> {
        let name_len = self.u32()? as usize;
        if name_len > 4096 {
            return Err(ModelIoError::DimOverflow);
        }
        let name = std::str::from_utf8(self.take(name_len)?)
            .map_err(|_| ModelIoError::BadName)?
            .to_string();
        let rank = self.u32()? as usize;
        if rank > 8 {
            return Err(ModelIoError::DimOverflow);
        }
        let mut shape = Vec::with_capacity(rank);
        let mut numel: u64 = 1;
        for _ in 0..rank {
            let d = self.u64()?;
            numel = numel.checked_mul(d).ok_or(ModelIoError::DimOverflow)?;
            if numel > (1 << 31) {
                return Err(ModelIoError::DimOverflow);
            }
            shape.push(d as usize);
        }
        let n = numel as usize;
        let raw = self.take(n * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((name, Tensor::from_vec(&shape, data)))
    }
}

fn visit_named<'a>(
    params: &'a ModelParams,
    mut f: impl FnMut(String, &'a Tensor<f32>),
) {
    let block = |prefix: String,
                 b: &'a crate::networks::ConvBlock,
                 f: &mut dyn FnMut(String, &'a Tensor<f32>)| {
        f(format!("{prefix}.conv.weight"), &b.conv.weight);
        f(format!("{prefix}.conv.bias"), &b.conv.bias);
        f(format!("{prefix}.bn.gamma"), &b.bn.gamma);
        f(format!("{prefix}.bn.beta"), &b.bn.beta);
        f(format!("{prefix}.bn.running_mean"), &b.bn.running_mean);
        f(format!("{prefix}.bn.running_var"), &b.bn.running_var);
    };
    for (i, b) in params.encoder.features.iter().enumerate() {
        block(format!("encoder.feature{i}"), b, &mut f);
    }
    block("encoder.fuse".to_string(), &params.encoder.fuse, &mut f);
    f("encoder.output.weight".into(), &params.encoder.output.weight);
    f("encoder.output.bias".into(), &params.encoder.output.bias);
    for (d, dec) in params.decoders.iter().enumerate() {
        for (i, b) in dec.blocks.iter().enumerate() {
            block(format!("decoder{d}.block{i}"), b, &mut f);
        }
        f(format!("decoder{d}.head.weight"), &dec.head.weight);
        f(format!("decoder{d}.head.bias"), &dec.head.bias);
    }
    for (i, b) in params.adversary.blocks.iter().enumerate() {
        block(format!("adversary.block{i}"), b, &mut f);
    }
    f("adversary.head.weight".into(), &params.adversary.head.weight);
    f("adversary.head.bias".into(), &params.adversary.head.bias);
}

fn visit_named_mut(
    params: &mut ModelParams,
    mut f: impl FnMut(String, &mut Tensor<f32>) -> Result<(), ModelIoError>,
) -> Result<(), ModelIoError> {
    fn block<F: FnMut(String, &mut Tensor<f32>) -> Result<(), ModelIoError>>(
        prefix: String,
        b: &mut crate::networks::ConvBlock,
        f: &mut F,
    ) -> Result<(), ModelIoError> {
        f(format!("{prefix}.conv.weight"), &mut b.conv.weight)?;
        f(format!("{prefix}.conv.bias"), &mut b.conv.bias)?;
        f(format!("{prefix}.bn.gamma"), &mut b.bn.gamma)?;
        f(format!("{prefix}.bn.beta"), &mut b.bn.beta)?;
        f(format!("{prefix}.bn.running_mean"), &mut b.bn.running_mean)?;
        f(format!("{prefix}.bn.running_var"), &mut b.bn.running_var)?;
        Ok(())
    }
    for i in 0..params.encoder.features.len() {
        block(
            format!("encoder.feature{i}"),
            &mut params.encoder.features[i],
            &mut f,
        )?;
    }
    block("encoder.fuse".to_string(), &mut params.encoder.fuse, &mut f)?;
    f(
        "encoder.output.weight".into(),
        &mut params.encoder.output.weight,
    )?;
    f("encoder.output.bias".into(), &mut params.encoder.output.bias)?;
    for d in 0..params.decoders.len() {
        for i in 0..params.decoders[d].blocks.len() {
            block(
                format!("decoder{d}.block{i}"),
                &mut params.decoders[d].blocks[i],
                &mut f,
            )?;
        }
        f(
            format!("decoder{d}.head.weight"),
            &mut params.decoders[d].head.weight,
        )?;
        f(
            format!("decoder{d}.head.bias"),
            &mut params.decoders[d].head.bias,
        )?;
    }
    for i in 0..params.adversary.blocks.len() {
        block(
            format!("adversary.block{i}"),
            &mut params.adversary.blocks[i],
            &mut f,
        )?;
    }
    f(
        "adversary.head.weight".into(),
        &mut params.adversary.head.weight,
    )?;
    f("adversary.head.bias".into(), &mut params.adversary.head.bias)?;
    Ok(())
}

fn encode_file(
    params: &ModelParams,
    weights: &LossWeights,
    opt: Option<(&AdamState<f32>, &AdamState<f32>)>,
) -> Vec<u8> {
    let mut named: Vec<(String, &Tensor<f32>)> = Vec::new();
    visit_named(params, |name, t| named.push((name, t)));

    let mut w = Writer::new();
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u32(params.cfg.decoders as u32);
    w.u32(params.cfg.bits as u32);
    w.u32(params.cfg.image_size as u32);
    w.f64(weights.image);
    w.f64(weights.message);
    w.f64(weights.adversarial);
    w.f64(weights.per_message);
    w.f64(weights.balance);

    let mut opt_tensors: Vec<(String, Tensor<f32>)> = Vec::new();
    if let Some((ed, adv)) = opt {
        for (group, state) in [("ed", ed), ("adv", adv)] {
            for (i, t) in state.m.iter().enumerate() {
                opt_tensors.push((format!("opt.{group}.m{i}"), t.clone()));
            }
            for (i, t) in state.v.iter().enumerate() {
                opt_tensors.push((format!("opt.{group}.v{i}"), t.clone()));
            }
            opt_tensors.push((
                format!("opt.{group}.step"),
                Tensor::scalar(state.step as f32),
            ));
        }
    }

    w.u32((named.len() + opt_tensors.len()) as u32);
    for (name, t) in &named {
        w.tensor(name, t);
    }
    for (name, t) in &opt_tensors {
        w.tensor(name, t);
    }
    w.buf
}

fn decode_file(
    buf: &[u8],
) -> Result<
    (
        ModelParams,
        LossWeights,
        BTreeMap<String, Tensor<f32>>,
    ),
    ModelIoError,
> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(ModelIoError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(ModelIoError::UnsupportedVersion(version));
    }
    let decoders = r.u32()? as usize;
    let bits = r.u32()? as usize;
    let image_size = r.u32()? as usize;
    let weights = LossWeights {
        image: r.f64()?,
        message: r.f64()?,
        adversarial: r.f64()?,
        per_message: r.f64()?,
        balance: r.f64()?,
    };
    let cfg = ModelConfig::new(bits, decoders, image_size)
        .map_err(|e| ModelIoError::BadMetadata(e.to_string()))?;

    let count = r.u32()? as usize;
    let mut map: BTreeMap<String, Tensor<f32>> = BTreeMap::new();
    for _ in 0..count {
        let (name, t) = r.tensor()?;
        map.insert(name, t);
    }

    // start from the structural template and fill every tensor from the file
    let mut params = ModelParams::init(cfg, 0);
    visit_named_mut(&mut params, |name, slot| {
        let t = map
            .remove(&name)
            .ok_or_else(|| ModelIoError::MissingTensor(name.clone()))?;
        if t.shape() != slot.shape() {
            return Err(ModelIoError::ShapeMismatch {
                name,
                got: t.shape().to_vec(),
                expected: slot.shape().to_vec(),
            });
        }
        *slot = t;
        Ok(())
    })?;
    // whatever remains must be optimizer state
    if let Some(name) = map.keys().find(|n| !n.starts_with("opt.")) {
        return Err(ModelIoError::UnknownTensor(name.clone()));
    }
    Ok((params, weights, map))
}

fn read_file(path: &Path) -> Result<Vec<u8>, ModelIoError> {
    std::fs::read(path).map_err(|source| ModelIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_file(path: &Path, buf: &[u8]) -> Result<(), ModelIoError> {
    std::fs::write(path, buf).map_err(|source| ModelIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Write the model (weights, running statistics, metadata).
pub fn save_model(
    path: &Path,
    params: &ModelParams,
    weights: &LossWeights,
) -> Result<(), ModelIoError> {
    write_file(path, &encode_file(params, weights, None))
}

/// Read a model, ignoring any optimizer state the file may carry.
pub fn load_model(path: &Path) -> Result<(ModelParams, LossWeights), ModelIoError> {
    let buf = read_file(path)?;
    let (params, weights, _) = decode_file(&buf)?;
    Ok((params, weights))
}

/// Write model plus both Adam states (a resumable checkpoint).
pub fn save_checkpoint(
    path: &Path,
    params: &ModelParams,
    weights: &LossWeights,
    opt_ed: &AdamState<f32>,
    opt_adv: &AdamState<f32>,
) -> Result<(), ModelIoError> {
    write_file(path, &encode_file(params, weights, Some((opt_ed, opt_adv))))
}

/// Read a checkpoint back, reconstructing the Adam states.
pub fn load_checkpoint(
    path: &Path,
) -> Result<(ModelParams, LossWeights, AdamState<f32>, AdamState<f32>), ModelIoError> {
    let buf = read_file(path)?;
    let (params, weights, mut opt) = decode_file(&buf)?;
    let mut load_state = |group: &str, shapes: Vec<&[usize]>| -> Result<AdamState<f32>, ModelIoError> {
        let mut state = AdamState::new(&shapes);
        for i in 0..shapes.len() {
            for (kind, dest) in [("m", &mut state.m), ("v", &mut state.v)] {
                let name = format!("opt.{group}.{kind}{i}");
                let t = opt
                    .remove(&name)
                    .ok_or_else(|| ModelIoError::MissingTensor(name.clone()))?;
                if t.shape() != shapes[i] {
                    return Err(ModelIoError::ShapeMismatch {
                        name,
                        got: t.shape().to_vec(),
                        expected: shapes[i].to_vec(),
                    });
                }
                dest[i] = t;
            }
        }
        let name = format!("opt.{group}.step");
        let step = opt
            .remove(&name)
            .ok_or_else(|| ModelIoError::MissingTensor(name))?;
        state.step = step.item() as u64;
        Ok(state)
    };
    let ed_shapes: Vec<&[usize]> = params.ed_tensors().iter().map(|t| t.shape()).collect();
    let adv_shapes: Vec<&[usize]> = params.adv_tensors().iter().map(|t| t.shape()).collect();
    // shapes borrow params immutably; state construction only reads them
    let opt_ed = load_state("ed", ed_shapes)?;
    let opt_adv = load_state("adv", adv_shapes)?;
    if let Some(name) = opt.keys().next() {
        return Err(ModelIoError::UnknownTensor(name.clone()));
    }
    Ok((params, weights, opt_ed, opt_adv))
}
