//! Binary sample file ("ADTS") reader and writer.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "ADTS" | version u32 = 1 | sample count u64
//! per sample:
//!   length u32 | channels u32 | label i32 (-1 = unlabeled)
//!   length * channels f32, time-major (all channels of t=0, then t=1, ...)
//! ```
//!
//! Values are widened to f64 in memory and narrowed back to f32 on write, so
//! a read/write round trip is byte-identical.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::data::RawSample;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ADTS";
pub const VERSION: u32 = 1;

pub fn write_samples(path: &Path, samples: &[RawSample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(samples.len() as u64).to_le_bytes())?;
    for sample in samples {
        let (len, channels) = sample.values.dim();
        w.write_all(&(len as u32).to_le_bytes())?;
        w.write_all(&(channels as u32).to_le_bytes())?;
        let label: i32 = match sample.label {
            Some(l) => l as i32,
            None => -1,
        };
        w.write_all(&label.to_le_bytes())?;
        for t in 0..len {
            for c in 0..channels {
                w.write_all(&(sample.values[(t, c)] as f32).to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples(path: &Path, dataset_id: &str) -> Result<Vec<RawSample>> {
    let mut r = BufReader::new(File::open(path)?);
    let name = path.display();

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format(format!("{name}: file too short for magic")))?;
    if &magic != MAGIC {
        return Err(Error::format(format!("{name}: bad magic {magic:?}, expected \"ADTS\"")));
    }
    let version = read_u32(&mut r, &format!("{name}: version"))?;
    if version != VERSION {
        return Err(Error::format(format!("{name}: unsupported version {version}")));
    }
    let count = read_u64(&mut r, &format!("{name}: sample count"))?;

    let mut samples = Vec::with_capacity(count as usize);
    for idx in 0..count {
        let ctx = format!("{name}: sample {idx}");
        let len = read_u32(&mut r, &ctx)? as usize;
        let channels = read_u32(&mut r, &ctx)? as usize;
        let label_raw = read_i32(&mut r, &ctx)?;
        if len == 0 || channels == 0 {
            return Err(Error::validation(format!("{ctx}: empty shape {len}x{channels}")));
        }
        let label = match label_raw {
            -1 => None,
            l if l >= 0 => Some(l as u32),
            l => {
                return Err(Error::validation(format!("{ctx}: negative label {l}")));
            }
        };
        let mut payload = vec![0u8; len * channels * 4];
        r.read_exact(&mut payload)
            .map_err(|_| Error::corrupt(format!("{ctx}: truncated payload")))?;
        let mut values = Array2::zeros((len, channels));
        for t in 0..len {
            for c in 0..channels {
                let off = (t * channels + c) * 4;
                let v = f32::from_le_bytes(payload[off..off + 4].try_into().unwrap());
                if !v.is_finite() {
                    return Err(Error::validation(format!("{ctx}: non-finite value at t={t} c={c}")));
                }
                values[(t, c)] = v as f64;
            }
        }
        samples.push(RawSample { values, label, dataset_id: dataset_id.to_string() });
    }

    // Trailing bytes mean the header lied about the count.
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(samples),
        _ => Err(Error::corrupt(format!("{name}: trailing bytes after {count} samples"))),
    }
}

fn read_u32(r: &mut impl Read, ctx: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|_| Error::corrupt(format!("{ctx}: truncated")))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_i32(r: &mut impl Read, ctx: &str) -> Result<i32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|_| Error::corrupt(format!("{ctx}: truncated")))?;
    Ok(i32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read, ctx: &str) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(|_| Error::corrupt(format!("{ctx}: truncated")))?;
    Ok(u64::from_le_bytes(buf))
}
