//! Binary model container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   u32  = "BFCK"
//! version u32  = 1
//! entries u32
//! per entry:
//!   name_len u16, utf-8 name
//!   n_dims   u16, dims as u32 each
//!   values   product(dims) f64
//! scalars u32
//! per scalar:
//!   name_len u16, utf-8 name
//!   value    f64
//! ```
//!
//! Decoding is strict: unknown magic, truncation, malformed names, shape
//! overflow, or trailing bytes all fail instead of guessing.

use super::{NnError, Parameters};

const MAGIC: u32 = u32::from_le_bytes(*b"BFCK");
pub const CHECKPOINT_VERSION: u32 = 1;

/// Maximum dimensions per entry; anything deeper is corrupt.
const MAX_DIMS: usize = 8;

/// Serializes the full parameter store plus named training-state scalars.
pub fn encode_checkpoint(params: &Parameters, scalars: &[(String, f64)]) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + params.value_count() * 8);
    out.extend_from_slice(&MAGIC.to_le_bytes());
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for entry in params.iter() {
        out.extend_from_slice(&(entry.name.len() as u16).to_le_bytes());
        out.extend_from_slice(entry.name.as_bytes());
        out.extend_from_slice(&(entry.shape.len() as u16).to_le_bytes());
        for &dim in &entry.shape {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for v in &entry.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&(scalars.len() as u32).to_le_bytes());
    for (name, value) in scalars {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&value.to_le_bytes());
    }
    out
}

/// Parses a checkpoint produced by [`encode_checkpoint`].
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Parameters, Vec<(String, f64)>), NnError> {
    let mut cursor = Cursor { bytes, at: 0 };
    if cursor.u32()? != MAGIC {
        return Err(NnError::BadCheckpoint("bad magic".into()));
    }
    let version = cursor.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(NnError::BadCheckpoint(format!(
            "unsupported version {version}"
        )));
    }
    let n_entries = cursor.u32()? as usize;
    let mut params = Parameters::new();
    for _ in 0..n_entries {
        let name = cursor.name()?;
        let n_dims = cursor.u16()? as usize;
        if n_dims > MAX_DIMS {
            return Err(NnError::BadCheckpoint(format!("{n_dims} dimensions")));
        }
        let mut shape = Vec::with_capacity(n_dims);
        let mut count: usize = 1;
        for _ in 0..n_dims {
            let dim = cursor.u32()? as usize;
            count = count
                .checked_mul(dim)
                .ok_or_else(|| NnError::BadCheckpoint("shape overflow".into()))?;
            shape.push(dim);
        }
        if count > cursor.remaining() / 8 {
            return Err(NnError::BadCheckpoint(format!(
                "entry {name} claims {count} values past the end"
            )));
        }
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(cursor.f64()?);
        }
        params.push(name, &shape, values)?;
    }
    let n_scalars = cursor.u32()? as usize;
    if n_scalars > cursor.remaining() / 10 {
        return Err(NnError::BadCheckpoint(format!(
            "{n_scalars} scalars past the end"
        )));
    }
    let mut scalars = Vec::with_capacity(n_scalars);
    for _ in 0..n_scalars {
        let name = cursor.name()?;
        scalars.push((name, cursor.f64()?));
    }
    if cursor.remaining() != 0 {
        return Err(NnError::BadCheckpoint(format!(
            "{} trailing bytes",
            cursor.remaining()
        )));
    }
    Ok((params, scalars))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.at
    }

    fn take(&mut self, n: usize) -> Result<&[u8], NnError> {
        if self.remaining() < n {
            return Err(NnError::BadCheckpoint("truncated".into()));
        }
        let slice = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16, NnError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, NnError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn name(&mut self) -> Result<String, NnError> {
        let len = self.u16()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| NnError::BadCheckpoint("name is not utf-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (Parameters, Vec<(String, f64)>) {
        let mut params = Parameters::new();
        params
            .push("conv1.weight", &[2, 3, 5], (0..30).map(|i| i as f64 * 0.1).collect())
            .unwrap();
        params.push("conv1.bias", &[2], vec![0.5, -0.5]).unwrap();
        params.push("norm.mean", &[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let scalars = vec![
            ("epoch".to_string(), 7.0),
            ("best_val_accuracy".to_string(), 0.9375),
        ];
        (params, scalars)
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let (params, scalars) = sample();
        let bytes = encode_checkpoint(&params, &scalars);
        let (back, back_scalars) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(params, back);
        assert_eq!(scalars, back_scalars);
        // Deterministic layout.
        assert_eq!(bytes, encode_checkpoint(&back, &back_scalars));
    }

    #[test]
    fn corruption_is_detected_not_panicked() {
        let (params, scalars) = sample();
        let bytes = encode_checkpoint(&params, &scalars);

        assert!(decode_checkpoint(&[]).is_err());
        assert!(decode_checkpoint(&bytes[..bytes.len() / 2]).is_err());

        let mut wrong_magic = bytes.clone();
        wrong_magic[0] ^= 0xff;
        assert!(decode_checkpoint(&wrong_magic).is_err());

        let mut wrong_version = bytes.clone();
        wrong_version[4] = 99;
        assert!(decode_checkpoint(&wrong_version).is_err());

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(matches!(
            decode_checkpoint(&trailing),
            Err(NnError::BadCheckpoint(msg)) if msg.contains("trailing")
        ));

        // A huge claimed entry count must not allocate.
        let mut huge = bytes.clone();
        huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_checkpoint(&huge).is_err());
    }

    #[test]
    fn empty_store_roundtrips() {
        let params = Parameters::new();
        let bytes = encode_checkpoint(&params, &[]);
        let (back, scalars) = decode_checkpoint(&bytes).unwrap();
        assert!(back.is_empty());
        assert!(scalars.is_empty());
    }
}
