//! Weight files.
//!
//! Binary layout, all integers u32 little-endian:
//!
//! ```text
//! "B4MW" version
//! d_model self_layers cross_layers heads d_v t_his road_points
//! n_channels { len bytes }*
//! n_tensors  { name_len name ndim dims* f32-data }*
//! ```
//!
//! Tensor values are stored as little-endian f32, so a round trip through the
//! binary form rounds weights to single precision. The JSON twin keeps full
//! precision and is meant for debugging.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_to_string, write_atomic};
use crate::policy::model::{ModelConfig, ModelWeights};

pub const MAGIC: &[u8; 4] = b"B4MW";
pub const VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len());
    buf.extend_from_slice(s.as_bytes());
}

pub fn encode_weights(w: &ModelWeights) -> Vec<u8> {
    let c = &w.config;
    let mut buf = Vec::with_capacity(16 + 4 * w.parameter_count());
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, VERSION as usize);
    for v in [c.d_model, c.self_layers, c.cross_layers, c.heads, c.d_v, c.t_his, c.road_points] {
        put_u32(&mut buf, v);
    }
    put_u32(&mut buf, c.channels.len());
    for ch in &c.channels {
        put_str(&mut buf, ch);
    }
    let tensors = w.tensors();
    put_u32(&mut buf, tensors.len());
    for (name, shape, data) in tensors {
        put_str(&mut buf, &name);
        put_u32(&mut buf, shape.len());
        for d in &shape {
            put_u32(&mut buf, *d);
        }
        for v in data {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    context: &'a str,
}

impl<'a> Reader<'a> {
    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            context: format!("{} @ byte {}", self.context, self.pos),
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail("unexpected end of file"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| self.fail("string is not UTF-8"))
    }
}

pub fn decode_weights(bytes: &[u8], context: &str) -> Result<ModelWeights> {
    let mut r = Reader { bytes, pos: 0, context };
    if r.take(4)? != MAGIC {
        return Err(r.fail("bad magic, not a weights file"));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(r.fail(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 7];
    for d in dims.iter_mut() {
        *d = r.u32()?;
    }
    let n_channels = r.u32()?;
    let channels = (0..n_channels).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    let config = ModelConfig {
        d_model: dims[0],
        self_layers: dims[1],
        cross_layers: dims[2],
        heads: dims[3],
        d_v: dims[4],
        t_his: dims[5],
        road_points: dims[6],
        channels,
    };
    let mut w = ModelWeights::zeros(config).map_err(|e| r.fail(e.to_string()))?;
    let expected: Vec<(String, Vec<usize>)> = w.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
    let count = r.u32()?;
    if count != expected.len() {
        return Err(r.fail(format!("expected {} tensors, found {count}", expected.len())));
    }
    let mut views = w.tensors_mut();
    for ((name, shape), view) in expected.iter().zip(views.iter_mut()) {
        let got = r.string()?;
        if &got != name {
            return Err(r.fail(format!("expected tensor {name}, found {got}")));
        }
        let ndim = r.u32()?;
        let got_shape = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        if &got_shape != shape {
            return Err(r.fail(format!("tensor {name}: expected shape {shape:?}, found {got_shape:?}")));
        }
        for v in view.iter_mut() {
            let b = r.take(4)?;
            *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
        }
    }
    if r.pos != bytes.len() {
        return Err(r.fail("trailing bytes"));
    }
    Ok(w)
}

/// Writes the binary form, or the JSON twin when `path` ends in `.json`.
pub fn save_weights(path: &Path, w: &ModelWeights) -> Result<()> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = serde_json::to_string(w).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
        write_atomic(path, text.as_bytes())
    } else {
        write_atomic(path, &encode_weights(w))
    }
}

/// Reads either form, telling them apart by the magic bytes.
pub fn load_weights(path: &Path) -> Result<ModelWeights> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let context = path.display().to_string();
    if bytes.starts_with(MAGIC) {
        return decode_weights(&bytes, &context);
    }
    let text = read_to_string(path)?;
    let w: ModelWeights = serde_json::from_str(&text).map_err(|e| Error::Parse {
        context: context.clone(),
        message: e.to_string(),
    })?;
    w.config.validate()?;
    let fresh = ModelWeights::zeros(w.config.clone())?;
    let shapes = |m: &ModelWeights| m.tensors().into_iter().map(|(n, s, d)| (n, s, d.len())).collect::<Vec<_>>();
    if shapes(&w) != shapes(&fresh) {
        return Err(Error::Parse {
            context,
            message: "tensor shapes do not match the header".into(),
        });
    }
    Ok(w)
}
