//! Binary model checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! b"SPCK" | version u32 | arch u32 | input_dim, hidden, heads, ffn, layers,
//! context_layers, context_len: u32 | positional u8 | dropout f64 | tensors u32
//! per tensor: name_len u32 | name | rank u32 | dims u32* | offset u64
//! payload: f32 values, offsets counted in values
//! crc32 of everything above: u32
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Architecture, Model, ModelConfig};
use crate::nn::{ParamSet, Tensor};

const MAGIC: &[u8; 4] = b"SPCK";
const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode(model: &Model) -> Vec<u8> {
    let c = model.config();
    let ps = model.params();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&c.arch.tag().to_le_bytes());
    for v in [c.input_dim, c.hidden, c.heads, c.ffn, c.layers, c.context_layers, c.context_len] {
        put_u32(&mut out, v);
    }
    out.push(c.positional as u8);
    out.extend_from_slice(&c.dropout.to_le_bytes());
    put_u32(&mut out, ps.tensors.len());
    let mut offset = 0u64;
    for t in &ps.tensors {
        put_u32(&mut out, t.name.len());
        out.extend_from_slice(t.name.as_bytes());
        put_u32(&mut out, t.shape.len());
        for &d in &t.shape {
            put_u32(&mut out, d);
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += t.data.len() as u64;
    }
    for v in ps.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format("checkpoint", "truncated"))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < 8 {
        return Err(Error::format("checkpoint", "truncated"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if &body[..4] != MAGIC {
        return Err(Error::format("checkpoint", "bad magic"));
    }
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
        return Err(Error::format("checkpoint", "checksum mismatch"));
    }
    let mut r = Reader { bytes: body, at: 4 };
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::format("checkpoint", format!("unsupported version {version}")));
    }
    let arch = Architecture::from_tag(r.u32()? as u32)?;
    let mut config = ModelConfig::new(arch, r.u32()?, 0);
    config.hidden = r.u32()?;
    config.heads = r.u32()?;
    config.ffn = r.u32()?;
    config.layers = r.u32()?;
    config.context_layers = r.u32()?;
    config.context_len = r.u32()?;
    config.positional = match r.take(1)?[0] {
        0 => false,
        1 => true,
        b => return Err(Error::format("checkpoint", format!("positional flag {b}"))),
    };
    config.dropout = f64::from_le_bytes(r.take(8)?.try_into().unwrap());

    let count = r.u32()?;
    let mut entries = Vec::with_capacity(count.min(1024));
    let mut expected_offset = 0u64;
    for _ in 0..count {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::format("checkpoint", "tensor name is not UTF-8"))?
            .to_string();
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let offset = r.u64()?;
        if offset != expected_offset {
            return Err(Error::format("checkpoint", format!("tensor {name} at offset {offset}")));
        }
        expected_offset += shape.iter().product::<usize>() as u64;
        entries.push((name, shape));
    }
    let mut params = ParamSet::default();
    for (name, shape) in entries {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| r.f32().map(f64::from)).collect::<Result<Vec<_>>>()?;
        params.tensors.push(Tensor { name, shape, data });
    }
    if r.at != body.len() {
        return Err(Error::format("checkpoint", "trailing bytes"));
    }
    Model::from_params(config, params)
}

pub fn save(path: &Path, model: &Model) -> Result<()> {
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
