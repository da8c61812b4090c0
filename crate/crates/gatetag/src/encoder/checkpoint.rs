//! Parameter checkpoints.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! magic  8 bytes  "TAGCKPT1"
//! count  u32      number of entries
//! table  count ×  [ u32 name length | name bytes (UTF-8) | u32 rows | u32 cols ]
//! data   count ×  rows·cols f64, entry order matching the table
//! ```
//!
//! Entries are written in the order given; loading checks names, shapes,
//! and that every value is finite. Byte-for-byte comparison of two
//! checkpoints is therefore a complete equality test of two models.

use super::matrix::Matrix;
use std::fs;
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TAGCKPT1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint holds a non-finite value in `{name}`")]
    NonFinite { name: String },
    #[error("parameter `{name}` missing from checkpoint")]
    Missing { name: String },
    #[error("parameter `{name}`: checkpoint shape {got:?} != expected {want:?}")]
    Shape { name: String, want: (usize, usize), got: (usize, usize) },
}

pub fn checkpoint_bytes(entries: &[(&str, &Matrix)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, m) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(m.rows as u32).to_le_bytes());
        out.extend_from_slice(&(m.cols as u32).to_le_bytes());
    }
    for (_, m) in entries {
        for x in &m.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(path: &Path, entries: &[(&str, &Matrix)]) -> std::io::Result<()> {
    fs::write(path, checkpoint_bytes(entries))
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.at + n > self.bytes.len() {
            return Err(CheckpointError::Truncated);
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<Vec<(String, Matrix)>, CheckpointError> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let count = r.u32()? as usize;
    let mut table = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| CheckpointError::BadMagic)?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        table.push((name, rows, cols));
    }
    let mut out = Vec::with_capacity(count);
    for (name, rows, cols) in table {
        let raw = r.take(rows * cols * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if data.iter().any(|x| !x.is_finite()) {
            return Err(CheckpointError::NonFinite { name });
        }
        out.push((name, Matrix { rows, cols, data }));
    }
    Ok(out)
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<(String, Matrix)>, CheckpointError> {
    parse_checkpoint(&fs::read(path)?)
}

/// Copy loaded entries into an existing parameter set, insisting on exact
/// name and shape agreement for every target parameter.
pub fn restore(
    targets: Vec<(&'static str, &mut Matrix)>,
    loaded: &[(String, Matrix)],
) -> Result<(), CheckpointError> {
    for (name, param) in targets {
        let found = loaded
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| CheckpointError::Missing { name: name.to_string() })?;
        if found.1.shape() != param.shape() {
            return Err(CheckpointError::Shape {
                name: name.to_string(),
                want: param.shape(),
                got: found.1.shape(),
            });
        }
        param.data.copy_from_slice(&found.1.data);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::model::{EncoderCfg, TextEncoderParams};

    #[test]
    fn round_trips_a_model() {
        let cfg = EncoderCfg {
            vocab: 32,
            text_width: 8,
            embed_dim: 4,
            graph_width: 8,
            max_tokens: 8,
            classes: 3,
        };
        let p = TextEncoderParams::init(cfg, 7);
        let bytes = checkpoint_bytes(&p.named());
        let loaded = parse_checkpoint(&bytes).unwrap();
        let mut q = TextEncoderParams::init(cfg, 8);
        restore(q.named_mut(), &loaded).unwrap();
        for ((_, a), (_, b)) in p.named().iter().zip(q.named().iter()) {
            assert_eq!(a, b);
        }
        // identical params → identical bytes
        assert_eq!(bytes, checkpoint_bytes(&q.named()));
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let m = Matrix::filled(2, 2, 1.0);
        let bytes = checkpoint_bytes(&[("w", &m)]);
        assert!(matches!(
            parse_checkpoint(&bytes[..bytes.len() - 3]).unwrap_err(),
            CheckpointError::Truncated
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(parse_checkpoint(&bad).unwrap_err(), CheckpointError::BadMagic));

        let nan = Matrix::filled(1, 1, f64::NAN);
        let bytes = checkpoint_bytes(&[("w", &nan)]);
        assert!(matches!(
            parse_checkpoint(&bytes).unwrap_err(),
            CheckpointError::NonFinite { .. }
        ));

        let mut target = Matrix::zeros(3, 3);
        let loaded = parse_checkpoint(&checkpoint_bytes(&[("w", &m)])).unwrap();
        assert!(matches!(
            restore(vec![("w", &mut target)], &loaded).unwrap_err(),
            CheckpointError::Shape { .. }
        ));
        assert!(matches!(
            restore(vec![("other", &mut target)], &loaded).unwrap_err(),
            CheckpointError::Missing { .. }
        ));
    }
}
