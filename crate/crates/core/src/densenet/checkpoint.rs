//! Binary parameter checkpoint, all integers and floats little-endian:
//!
//! ```text
//! magic "LDNCKPT\0" | u32 version
//! config: 9 × u32 (input h, w, c, blocks, layers, growth, initial, classes, stem pool) | f64 compression
//! u64 stats_updates | str model_version
//! trainable layout | running layout      (u32 count, then per tensor: str name, u32 rank, u32 dims…, u64 offset)
//! u64 n | n × f64 trainable | u64 m | m × f64 running
//! u32 crc32 of every preceding byte
//! ```
//! `str` is a u32 byte length followed by UTF-8.

use super::params::{Layout, TensorSpec};
use super::{ModelConfig, ModelError, Params};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LDNCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

fn put_layout(out: &mut Vec<u8>, layout: &Layout) {
    put_u32(out, layout.tensors().len());
    for t in layout.tensors() {
        put_str(out, &t.name);
        put_u32(out, t.shape.len());
        t.shape.iter().for_each(|&d| put_u32(out, d));
        out.extend_from_slice(&(t.offset as u64).to_le_bytes());
    }
}

fn put_floats(out: &mut Vec<u8>, values: &[f64]) {
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn write_checkpoint(params: &Params) -> Result<Vec<u8>, ModelError> {
    params.check()?;
    let c = &params.config;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [
        c.input_height,
        c.input_width,
        c.input_channels,
        c.n_blocks,
        c.layers_per_block,
        c.growth_rate,
        c.initial_channels,
        c.n_classes,
        c.stem_pool,
    ] {
        put_u32(&mut out, v);
    }
    out.extend_from_slice(&c.compression.to_le_bytes());
    out.extend_from_slice(&params.stats_updates.to_le_bytes());
    put_str(&mut out, &params.model_version);
    put_layout(&mut out, &params.layout);
    put_layout(&mut out, &params.running_layout);
    put_floats(&mut out, &params.values);
    put_floats(&mut out, &params.running);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                ModelError::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn string(&mut self) -> Result<String, ModelError> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| ModelError::Checkpoint("string is not UTF-8".into()))
    }

    fn layout(&mut self) -> Result<Layout, ModelError> {
        let count = self.u32()?;
        let mut specs = Vec::new();
        for _ in 0..count {
            let name = self.string()?;
            let rank = self.u32()?;
            let shape = (0..rank)
                .map(|_| self.u32())
                .collect::<Result<Vec<_>, _>>()?;
            let offset = self.u64()? as usize;
            specs.push(TensorSpec {
                name,
                shape,
                offset,
            });
        }
        Layout::from_specs(specs)
    }

    fn floats(&mut self) -> Result<Vec<f64>, ModelError> {
        let n = self.u64()? as usize;
        if n > self.bytes.len() / 8 {
            return Err(ModelError::Checkpoint(format!("payload claims {n} values")));
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Params, ModelError> {
    if bytes.len() < CHECKPOINT_MAGIC.len() + 8 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(ModelError::Checkpoint(
            "not a checkpoint (bad magic)".into(),
        ));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(ModelError::Checkpoint(format!(
            "checksum mismatch: stored {stored:08x}, computed {actual:08x}"
        )));
    }
    let mut r = Reader {
        bytes: body,
        pos: 8,
    };
    let version = r.u32()? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let mut dims = [0usize; 9];
    for d in &mut dims {
        *d = r.u32()?;
    }
    let config = ModelConfig {
        input_height: dims[0],
        input_width: dims[1],
        input_channels: dims[2],
        n_blocks: dims[3],
        layers_per_block: dims[4],
        growth_rate: dims[5],
        initial_channels: dims[6],
        n_classes: dims[7],
        stem_pool: dims[8],
        compression: r.f64()?,
    };
    let stats_updates = r.u64()?;
    let model_version = r.string()?;
    let layout = r.layout()?;
    let running_layout = r.layout()?;
    let values = r.floats()?;
    let running = r.floats()?;
    if r.pos != body.len() {
        return Err(ModelError::Checkpoint(format!(
            "{} trailing bytes",
            body.len() - r.pos
        )));
    }
    let params = Params {
        config,
        layout,
        values,
        running_layout,
        running,
        stats_updates,
        model_version,
    };
    params.check()?;
    Ok(params)
}
