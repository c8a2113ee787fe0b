//! Binary model checkpoints.
//!
//! Layout: an ASCII header line `ITERE-CKPT v1 d n_s n_b |E| |R|`, then
//! little-endian f64 arrays: entity vectors (row-major), relation parameters
//! (per relation: scalars, then rotation pairs), first moments in the same
//! order, second moments in the same order. A trailer of two little-endian u64
//! values holds the Adam step counter and the completed loop iteration.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::block::Layout;
use crate::embedding::EmbeddingModel;
use crate::error::{Error, Result};

const MAGIC: &str = "ITERE-CKPT v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub layout: Layout,
    pub num_entities: usize,
    pub num_relations: usize,
}

pub fn encode(model: &EmbeddingModel, iteration: u64) -> Vec<u8> {
    let l = model.layout();
    let header = format!(
        "{MAGIC} {} {} {} {} {}\n",
        l.dim(),
        l.scalars,
        l.blocks,
        model.num_entities(),
        model.num_relations()
    );
    let floats = 3 * (model.entity_params().len() + model.relation_params().len());
    let mut buf = Vec::with_capacity(header.len() + 8 * floats + 16);
    buf.extend_from_slice(header.as_bytes());
    for arr in [
        model.entity_params(),
        model.relation_params(),
        &model.adam.entity_m,
        &model.adam.relation_m,
        &model.adam.entity_v,
        &model.adam.relation_v,
    ] {
        for x in arr {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    buf.extend_from_slice(&model.adam.step.to_le_bytes());
    buf.extend_from_slice(&iteration.to_le_bytes());
    buf
}

fn parse_header(line: &str) -> Result<Header> {
    let rest = line
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::Checkpoint("missing ITERE-CKPT v1 header".into()))?;
    let nums: Vec<usize> = rest
        .split_whitespace()
        .map(|f| f.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Checkpoint(format!("bad header field: {e}")))?;
    let [d, n_s, n_b, n_e, n_r] = nums[..] else {
        return Err(Error::Checkpoint(format!(
            "expected 5 header fields, found {}",
            nums.len()
        )));
    };
    if n_s + 2 * n_b != d {
        return Err(Error::Checkpoint(format!(
            "inconsistent layout d={d} n_s={n_s} n_b={n_b}"
        )));
    }
    Ok(Header {
        layout: Layout::new(n_s, n_b),
        num_entities: n_e,
        num_relations: n_r,
    })
}

/// Decodes a checkpoint, returning the model and the stored iteration. When
/// `expected` is given the header must match it exactly.
pub fn decode(bytes: &[u8], expected: Option<Header>) -> Result<(EmbeddingModel, u64)> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    let line = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
    let header = parse_header(line)?;
    if let Some(exp) = expected {
        if exp != header {
            return Err(Error::Checkpoint(format!(
                "dimension mismatch: file has d={} (n_s={}, n_b={}), |E|={}, |R|={}; expected d={} (n_s={}, n_b={}), |E|={}, |R|={}",
                header.layout.dim(),
                header.layout.scalars,
                header.layout.blocks,
                header.num_entities,
                header.num_relations,
                exp.layout.dim(),
                exp.layout.scalars,
                exp.layout.blocks,
                exp.num_entities,
                exp.num_relations,
            )));
        }
    }
    let d = header.layout.dim();
    let ent = header.num_entities * d;
    let rel = header.num_relations * d;
    let body = &bytes[nl + 1..];
    let want = 8 * 3 * (ent + rel) + 16;
    if body.len() != want {
        return Err(Error::Checkpoint(format!(
            "expected {want} payload bytes, found {}",
            body.len()
        )));
    }
    let mut chunks = body.chunks_exact(8);
    let mut take = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| f64::from_le_bytes(chunks.next().expect("length checked").try_into().unwrap()))
            .collect()
    };
    let entity = take(ent);
    let relation = take(rel);
    let entity_m = take(ent);
    let relation_m = take(rel);
    let entity_v = take(ent);
    let relation_v = take(rel);
    let tail = &body[body.len() - 16..];
    let step = u64::from_le_bytes(tail[..8].try_into().unwrap());
    let iteration = u64::from_le_bytes(tail[8..].try_into().unwrap());

    let mut model = EmbeddingModel::from_parts(
        header.layout,
        header.num_entities,
        header.num_relations,
        entity,
        relation,
    )?;
    model.adam.entity_m = entity_m;
    model.adam.relation_m = relation_m;
    model.adam.entity_v = entity_v;
    model.adam.relation_v = relation_v;
    model.adam.step = step;
    Ok((model, iteration))
}

pub fn save(model: &EmbeddingModel, iteration: u64, path: &Path) -> Result<()> {
    let bytes = encode(model, iteration);
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.flush()?;
    Ok(())
}

pub fn load(path: &Path, expected: Option<Header>) -> Result<(EmbeddingModel, u64)> {
    decode(&fs::read(path)?, expected)
}
