//! `RMDL` model checkpoints.
//!
//! Layout (little-endian): magic, u32 version, u64 seed, u32 layer count,
//! then per layer `u8 kind, u32 input, u32 output, f64 dropout, u8 merge,
//! u8 return_sequences, u8 frozen`; then u32 block count and per block a
//! name, u32 rank, u32 dims and f32 values.

use std::path::Path;

use super::model::{build_model, RecurrentModel};
use super::spec::{LayerKind, LayerSpec, MergeMode};
use crate::error::Result;
use crate::io::{read_file, write_file, Reader, Writer};

const MAGIC: &[u8; 4] = b"RMDL";
const VERSION: u32 = 1;

pub fn model_to_bytes(model: &RecurrentModel<f32>) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u64(model.seed());
    w.u32(model.specs().len() as u32);
    for (spec, &frozen) in model.specs().iter().zip(model.frozen()) {
        w.u8(spec.kind.code());
        w.u32(spec.input_size as u32);
        w.u32(spec.output_size as u32);
        w.f64(spec.dropout_rate);
        w.u8(match spec.merge_mode {
            MergeMode::Concat => 0,
            MergeMode::Sum => 1,
        });
        w.u8(spec.return_sequences as u8);
        w.u8(frozen as u8);
    }
    let blocks = model.parameters();
    w.u32(blocks.len() as u32);
    for b in blocks {
        w.str(&b.name);
        w.u32(b.shape.len() as u32);
        for d in &b.shape {
            w.u32(*d as u32);
        }
        for v in b.values {
            w.f32(*v);
        }
    }
    w.buf
}

pub fn model_from_bytes(bytes: &[u8], path: &Path) -> Result<RecurrentModel<f32>> {
    let mut r = Reader::new(bytes, path);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.err(format!("unsupported checkpoint version {version}")));
    }
    let seed = r.u64()?;
    let n_layers = r.u32()? as usize;
    if n_layers > 1024 {
        return Err(r.err(format!("implausible layer count {n_layers}")));
    }
    let mut specs = Vec::with_capacity(n_layers);
    let mut frozen = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let code = r.u8()?;
        let kind = LayerKind::from_code(code).ok_or_else(|| r.err(format!("unknown layer kind {code}")))?;
        let input_size = r.u32()? as usize;
        let output_size = r.u32()? as usize;
        let dropout_rate = r.f64()?;
        let merge_mode = match r.u8()? {
            0 => MergeMode::Concat,
            1 => MergeMode::Sum,
            m => return Err(r.err(format!("unknown merge mode {m}"))),
        };
        let return_sequences = r.u8()? != 0;
        frozen.push(r.u8()? != 0);
        specs.push(LayerSpec {
            kind,
            input_size,
            output_size,
            dropout_rate,
            merge_mode,
            return_sequences,
        });
    }
    // Shapes come from the specs; the stored ones must agree.
    let mut model = build_model::<f32>(&specs, seed).map_err(|e| r.err(e.to_string()))?;
    let expected: Vec<(String, Vec<usize>)> = model.parameters().into_iter().map(|b| (b.name, b.shape)).collect();
    let n_blocks = r.u32()? as usize;
    if n_blocks != expected.len() {
        return Err(r.err(format!("{n_blocks} parameter blocks, layers need {}", expected.len())));
    }
    let mut values = Vec::with_capacity(n_blocks);
    for (name, shape) in &expected {
        let got_name = r.str()?;
        let rank = r.u32()? as usize;
        if rank > 2 {
            return Err(r.err(format!("block {got_name} has rank {rank}")));
        }
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if &got_name != name || &dims != shape {
            return Err(r.err(format!("block {got_name} {dims:?} where {name} {shape:?} was expected")));
        }
        values.push(r.f32_vec(shape.iter().product())?);
    }
    r.finish()?;
    for (block, vals) in model.parameters_mut().into_iter().zip(values) {
        block.values.copy_from_slice(&vals);
    }
    for (i, f) in frozen.into_iter().enumerate() {
        model.set_frozen(i, f)?;
    }
    Ok(model)
}

pub fn save_model(model: &RecurrentModel<f32>, path: &Path) -> Result<()> {
    write_file(path, &model_to_bytes(model))
}

pub fn load_model(path: &Path) -> Result<RecurrentModel<f32>> {
    model_from_bytes(&read_file(path)?, path)
}
