//! Binary tensor container.
//!
//! All integers are little-endian. Strings are a `u32` byte length followed by
//! UTF-8 bytes.
//!
//! | field        | encoding                                         |
//! |--------------|--------------------------------------------------|
//! | magic        | 10 bytes, ASCII `STABPROBE1` (the `1` is the version) |
//! | kind         | `u8`: 0 = standard, 1 = analysis                 |
//! | dataset name | string                                           |
//! | run count S  | `u32`, then S run-id strings                     |
//! | ckpt count T | `u32`, then T `u64` checkpoint values            |
//! | example N    | `u32`, then N example-id strings                 |
//! | scores       | S·T·N `f64` bit patterns, `[run][checkpoint][example]` |
//! | checksum     | 32-byte SHA-256 of every preceding byte          |
//!
//! Scores are stored as raw IEEE-754 bits, so a round trip is exact.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{CheckpointIndex, DatasetKind, DatasetMeta, PredictionTensor, RunId};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 10] = b"STABPROBE1";
const MAGIC_STEM: &[u8] = b"STABPROBE";
const CHECKSUM_LEN: usize = 32;

pub fn encode_tensor(t: &PredictionTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + t.scores().len() * 8);
    out.extend_from_slice(MAGIC);
    out.push(match t.meta().kind {
        DatasetKind::Standard => 0,
        DatasetKind::Analysis => 1,
    });
    put_str(&mut out, t.name());
    put_u32(&mut out, t.n_runs());
    for r in t.runs() {
        put_str(&mut out, &r.0);
    }
    put_u32(&mut out, t.n_checkpoints());
    for c in t.checkpoints() {
        out.extend_from_slice(&c.0.to_le_bytes());
    }
    put_u32(&mut out, t.n_examples());
    for e in t.example_ids() {
        put_str(&mut out, e);
    }
    for v in t.scores() {
        out.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("axis length fits in u32");
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Format(format!("invalid UTF-8 before byte {}", self.pos)))
    }

    /// Guards `count * width` against the remaining length before allocating.
    fn check_room(&self, count: usize, width: usize) -> Result<()> {
        match count.checked_mul(width) {
            Some(bytes) if bytes <= self.buf.len() - self.pos => Ok(()),
            _ => Err(Error::Format(format!("truncated at byte {}", self.pos))),
        }
    }
}

pub fn decode_tensor(bytes: &[u8]) -> Result<PredictionTensor> {
    if bytes.len() < MAGIC.len() || !bytes.starts_with(MAGIC_STEM) {
        return Err(Error::Format("not a stabprobe tensor file".into()));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format(format!(
            "unsupported format version {:?}",
            String::from_utf8_lossy(&bytes[MAGIC_STEM.len()..MAGIC.len()])
        )));
    }
    if bytes.len() < MAGIC.len() + CHECKSUM_LEN {
        return Err(Error::Format("truncated file".into()));
    }
    let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    let mut r = Reader {
        buf: body,
        pos: MAGIC.len(),
    };
    let kind = match r.u8()? {
        0 => DatasetKind::Standard,
        1 => DatasetKind::Analysis,
        k => return Err(Error::Format(format!("unknown dataset kind tag {k}"))),
    };
    let name = r.string()?;
    let s = r.u32()?;
    r.check_room(s, 4)?;
    let runs = (0..s)
        .map(|_| r.string().map(RunId))
        .collect::<Result<Vec<_>>>()?;
    let t = r.u32()?;
    r.check_room(t, 8)?;
    let checkpoints = (0..t)
        .map(|_| r.u64().map(CheckpointIndex))
        .collect::<Result<Vec<_>>>()?;
    let n = r.u32()?;
    r.check_room(n, 4)?;
    let example_ids = (0..n).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    let cells = s
        .checked_mul(t)
        .and_then(|st| st.checked_mul(n))
        .ok_or_else(|| Error::Format("axis lengths overflow".into()))?;
    r.check_room(cells, 8)?;
    let scores = (0..cells)
        .map(|_| r.u64().map(f64::from_bits))
        .collect::<Result<Vec<_>>>()?;
    if r.pos != body.len() {
        return Err(Error::Format(format!(
            "{} unexpected bytes after score block",
            body.len() - r.pos
        )));
    }
    if Sha256::digest(body).as_slice() != checksum {
        return Err(Error::Format("checksum mismatch".into()));
    }
    PredictionTensor::new(
        DatasetMeta {
            name,
            size: n,
            kind,
        },
        runs,
        checkpoints,
        example_ids,
        scores,
    )
    .map_err(|e| Error::Format(format!("invalid tensor contents: {e}")))
}

pub fn save_tensor(t: &PredictionTensor, path: &Path) -> Result<()> {
    fs::write(path, encode_tensor(t)).map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: &Path) -> Result<PredictionTensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes)
}
