//! Model checkpoint files ("ADCK").
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "ADCK" | version u32 = 1
//! config_len u32 | config JSON (ModelConfig)
//! tensor_count u32
//! per tensor, in declaration order:
//!   name_len u32 | name bytes | rank u32 | dims u64 * rank | data f32
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{Model, ModelConfig};

pub const MAGIC: &[u8; 4] = b"ADCK";
pub const VERSION: u32 = 1;

pub fn save(model: &Model, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let config_json = serde_json::to_vec(&model.config)
        .map_err(|e| Error::format(format!("checkpoint config serialize: {e}")))?;
    w.write_all(&(config_json.len() as u32).to_le_bytes())?;
    w.write_all(&config_json)?;

    let tensors = model.params.visit();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, tensor) in tensors {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        let dims = tensor.dims();
        w.write_all(&(dims.len() as u32).to_le_bytes())?;
        for d in &dims {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in tensor.as_slice() {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Model> {
    let mut r = BufReader::new(File::open(path)?);
    let name = path.display();

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format(format!("{name}: file too short for magic")))?;
    if &magic != MAGIC {
        return Err(Error::format(format!("{name}: bad magic {magic:?}, expected \"ADCK\"")));
    }
    let version = read_u32(&mut r, &format!("{name}: version"))?;
    if version != VERSION {
        return Err(Error::format(format!("{name}: unsupported version {version}")));
    }
    let config_len = read_u32(&mut r, &format!("{name}: config length"))? as usize;
    let mut config_bytes = vec![0u8; config_len];
    r.read_exact(&mut config_bytes)
        .map_err(|_| Error::corrupt(format!("{name}: truncated config")))?;
    let config: ModelConfig = serde_json::from_slice(&config_bytes)
        .map_err(|e| Error::format(format!("{name}: bad config: {e}")))?;

    let mut model = Model::zeros(config)?;
    let tensor_count = read_u32(&mut r, &format!("{name}: tensor count"))? as usize;
    let mut slots = model.params.visit_mut();
    if tensor_count != slots.len() {
        return Err(Error::corrupt(format!(
            "{name}: {tensor_count} tensors in file, model expects {}",
            slots.len()
        )));
    }
    for (expected_name, slot) in slots.iter_mut() {
        let ctx = format!("{name}: tensor {expected_name}");
        let name_len = read_u32(&mut r, &ctx)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes).map_err(|_| Error::corrupt(format!("{ctx}: truncated")))?;
        let got_name = String::from_utf8(name_bytes)
            .map_err(|_| Error::corrupt(format!("{ctx}: non-utf8 name")))?;
        if got_name != *expected_name {
            return Err(Error::corrupt(format!(
                "{ctx}: found tensor {got_name:?} out of order"
            )));
        }
        let rank = read_u32(&mut r, &ctx)? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u64(&mut r, &ctx)? as usize);
        }
        if dims != slot.dims() {
            return Err(Error::corrupt(format!(
                "{ctx}: dims {dims:?} do not match expected {:?}",
                slot.dims()
            )));
        }
        let count: usize = dims.iter().product();
        let mut payload = vec![0u8; count * 4];
        r.read_exact(&mut payload)
            .map_err(|_| Error::corrupt(format!("{ctx}: truncated payload")))?;
        let out = slot.as_slice_mut();
        for (i, chunk) in payload.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::validation(format!("{ctx}: non-finite value at {i}")));
            }
            out[i] = v as f64;
        }
    }
    Ok(model)
}

fn read_u32(r: &mut impl Read, ctx: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|_| Error::corrupt(format!("{ctx}: truncated")))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read, ctx: &str) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(|_| Error::corrupt(format!("{ctx}: truncated")))?;
    Ok(u64::from_le_bytes(buf))
}

/// Round every parameter through f32, in place. After this, saving and
/// reloading a checkpoint reproduces the in-memory parameters exactly.
pub fn quantize_params_to_f32(model: &mut Model) {
    for (_, mut tensor) in model.params.visit_mut() {
        for v in tensor.as_slice_mut() {
            *v = *v as f32 as f64;
        }
    }
}
