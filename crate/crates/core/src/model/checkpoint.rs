//! Binary checkpoint format.
//!
//! ```text
//! "MN2C" | version u32 | C T z N u32 | margin β1 β2 β3 f64 | seed u64 | record count u32
//! per record: name len u32 | name utf-8 | rank u32 | dims u32... | f32 values
//! CRC32 (IEEE) of every preceding byte, u32
//! ```
//! All integers and floats are little-endian. Records hold the trainable parameters
//! followed by the normalization running statistics.

use std::fs;
use std::path::Path;

use crate::binio::{self, Writer};
use crate::error::{Error, Result};
use crate::model::{Min2Net, Min2NetConfig};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"MN2C";
pub const VERSION: u32 = 1;

struct Record {
    name: String,
    dims: Vec<usize>,
    values: Vec<f32>,
}

fn records<S: Scalar>(net: &Min2Net<S>) -> Vec<Record> {
    let mut out: Vec<Record> = net
        .params()
        .into_iter()
        .map(|p| Record {
            name: p.name.clone(),
            dims: p.shape().to_vec(),
            values: p.value().data().iter().map(|v| v.as_f64() as f32).collect(),
        })
        .collect();
    for (i, bn) in net.norm_layers().into_iter().enumerate() {
        for (kind, v) in [("running_mean", &bn.state.running_mean), ("running_var", &bn.state.running_var)] {
            out.push(Record {
                name: format!("bn{}.{kind}", i + 1),
                dims: vec![v.len()],
                values: v.iter().map(|x| x.as_f64() as f32).collect(),
            });
        }
    }
    out
}

pub fn encode_checkpoint<S: Scalar>(net: &Min2Net<S>) -> Vec<u8> {
    let cfg = net.config();
    let mut w = Writer::new(MAGIC, VERSION);
    for v in [cfg.channels, cfg.samples, cfg.latent, cfg.classes] {
        w.u32(v as u32);
    }
    for v in [cfg.margin, cfg.beta_mse, cfg.beta_triplet, cfg.beta_ce] {
        w.f64(v);
    }
    w.u64(net.seed());
    let recs = records(net);
    w.u32(recs.len() as u32);
    for r in &recs {
        w.u32(r.name.len() as u32);
        w.bytes(r.name.as_bytes());
        w.u32(r.dims.len() as u32);
        for &d in &r.dims {
            w.u32(d as u32);
        }
        w.f32s(&r.values);
    }
    w.finish()
}

pub fn checkpoint_save<S: Scalar>(net: &Min2Net<S>, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(net)).map_err(|e| Error::io(path, e))
}

/// Parses and verifies a checkpoint image. Nothing is returned unless the whole image checks out.
pub fn decode_checkpoint<S: Scalar>(bytes: &[u8], path: &Path) -> Result<Min2Net<S>> {
    let integrity = |reason: &str| binio::integrity(path, reason);
    let mut r = binio::open(bytes, path, MAGIC, VERSION)?;
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let mut cfg = Min2NetConfig::new(dims[0], dims[1], dims[3]);
    cfg.latent = dims[2];
    cfg.margin = r.f64()?;
    cfg.beta_mse = r.f64()?;
    cfg.beta_triplet = r.f64()?;
    cfg.beta_ce = r.f64()?;
    let seed = r.u64()?;
    let mut net = Min2Net::<S>::build(&cfg, seed)?;
    let expected = records(&net);
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(integrity(&format!("{count} records, architecture needs {}", expected.len())));
    }
    let mut loaded = Vec::with_capacity(count);
    for want in &expected {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| integrity("record name is not UTF-8"))?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        if name != want.name || shape != want.dims {
            return Err(Error::CheckpointMismatch(format!(
                "record `{name}` {shape:?} where `{}` {:?} was expected",
                want.name, want.dims
            )));
        }
        let values = r.f32s(want.values.len())?;
        loaded.push(values.into_iter().map(|v| S::of(v as f64)).collect::<Vec<S>>());
    }
    r.expect_end()?;
    let n_params = net.params().len();
    let mut it = loaded.into_iter();
    for p in net.params_mut() {
        p.value_mut().copy_from_slice(&it.next().unwrap());
    }
    for bn in net.norm_layers_mut() {
        bn.state.running_mean = it.next().unwrap();
        bn.state.running_var = it.next().unwrap();
    }
    debug_assert_eq!(n_params + 4, count);
    Ok(net)
}

pub fn checkpoint_load<S: Scalar>(path: &Path) -> Result<Min2Net<S>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

/// Loads a checkpoint and checks its architecture against `expected` (C, T, z, N).
pub fn checkpoint_load_for<S: Scalar>(path: &Path, expected: &Min2NetConfig) -> Result<Min2Net<S>> {
    let net = checkpoint_load::<S>(path)?;
    let got = net.config();
    for (what, have, want) in [
        ("channels", got.channels, expected.channels),
        ("samples", got.samples, expected.samples),
        ("latent", got.latent, expected.latent),
        ("classes", got.classes, expected.classes),
    ] {
        if have != want {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint has {what} = {have}, data needs {what} = {want}"
            )));
        }
    }
    Ok(net)
}
