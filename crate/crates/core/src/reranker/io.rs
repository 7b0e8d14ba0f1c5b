//! Weights file: magic `SFRW`, version (u16), L, d, d_k, provider dim (u32 each),
//! relation names, input-projection flag (u8), then every tensor as little-endian f32 in
//! row-major order (input projection, per layer W_self then W_r, Q_r, K_r per relation,
//! head w, bias b), then a CRC-32 of all preceding bytes.

use std::path::Path;

use ndarray::{Array1, Array2};

use super::params::{LayerParams, RerankerParams, RerankerShape};
use super::RerankerError;
use crate::codec::{verify_checksum, ByteReader, ByteWriter, CodecError};
use crate::graph::EdgeKind;
use crate::scalar::Scalar;

const MAGIC: [u8; 4] = *b"SFRW";
const VERSION: u16 = 1;

pub fn serialize_params<T: Scalar>(params: &RerankerParams<T>) -> Vec<u8> {
    let s = params.shape;
    let mut w = ByteWriter::new();
    w.bytes(&MAGIC);
    w.u16(VERSION);
    for v in [s.layers, s.hidden, s.key_dim, s.input_dim] {
        w.u32(v as u32);
    }
    w.u32(EdgeKind::COUNT as u32);
    for k in EdgeKind::ALL {
        w.str(k.name());
    }
    w.u8(params.input_proj.is_some() as u8);
    for t in params.tensors() {
        for x in t {
            w.f32(x.to_f32().unwrap_or(f32::NAN));
        }
    }
    w.finish()
}

pub fn deserialize_params<T: Scalar>(bytes: &[u8]) -> Result<RerankerParams<T>, RerankerError> {
    if bytes.len() < 4 {
        return Err(CodecError::Truncated.into());
    }
    if bytes[..4] != MAGIC {
        return Err(CodecError::BadMagic.into());
    }
    let body = verify_checksum(bytes)?;
    let mut r = ByteReader::new(&body[4..]);
    let version = r.u16()?;
    if version != VERSION {
        return Err(CodecError::VersionMismatch { found: version.into(), expected: VERSION.into() }.into());
    }
    let layers = r.u32()? as usize;
    let hidden = r.u32()? as usize;
    let key_dim = r.u32()? as usize;
    let input_dim = r.u32()? as usize;
    let nrel = r.u32()? as usize;
    let names: Vec<String> = (0..nrel).map(|_| r.str()).collect::<Result<_, _>>()?;
    let expected: Vec<&str> = EdgeKind::ALL.iter().map(|k| k.name()).collect();
    if names != expected {
        return Err(RerankerError::Shape(format!("relation list {names:?} does not match {expected:?}")));
    }
    let shape = RerankerShape { layers, hidden, key_dim, input_dim };
    let has_proj = r.u8()? != 0;
    if has_proj != shape.has_input_proj() {
        return Err(RerankerError::Shape("input projection flag disagrees with dimensions".into()));
    }
    let expected_len = (has_proj as usize * hidden * input_dim
        + layers * (hidden * hidden + EdgeKind::COUNT * (hidden * hidden + 2 * key_dim * hidden))
        + hidden
        + 1)
        * 4;
    if r.remaining() != expected_len {
        return Err(RerankerError::Shape(format!(
            "{} tensor bytes for a shape needing {expected_len}",
            r.remaining()
        )));
    }
    let mut mat = |rows: usize, cols: usize| -> Result<Array2<T>, CodecError> {
        let v: Vec<T> = (0..rows * cols).map(|_| r.f32().map(|x| T::lit(x as f64))).collect::<Result<_, _>>()?;
        Ok(Array2::from_shape_vec((rows, cols), v).expect("length matches shape"))
    };
    let input_proj = if has_proj { Some(mat(hidden, input_dim)?) } else { None };
    let mut layer_params = Vec::with_capacity(layers);
    for _ in 0..layers {
        let w_self = mat(hidden, hidden)?;
        let (mut w_rel, mut q, mut k) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..EdgeKind::COUNT {
            w_rel.push(mat(hidden, hidden)?);
            q.push(mat(key_dim, hidden)?);
            k.push(mat(key_dim, hidden)?);
        }
        layer_params.push(LayerParams { w_self, w_rel, q, k });
    }
    let head = mat(1, hidden)?;
    let b = mat(1, 1)?[[0, 0]];
    let w = Array1::from_iter(head.into_iter());
    Ok(RerankerParams { shape, input_proj, layers: layer_params, w, b })
}

pub fn save_params<T: Scalar>(params: &RerankerParams<T>, path: &Path) -> Result<(), RerankerError> {
    std::fs::write(path, serialize_params(params)).map_err(|e| RerankerError::Io(path.display().to_string(), e))
}

pub fn load_params<T: Scalar>(path: &Path) -> Result<RerankerParams<T>, RerankerError> {
    let bytes = std::fs::read(path).map_err(|e| RerankerError::Io(path.display().to_string(), e))?;
    deserialize_params(&bytes)
}
