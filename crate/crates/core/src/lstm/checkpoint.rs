//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! | field                       | type                |
//! |-----------------------------|---------------------|
//! | magic `CLKLSTM1`            | 8 bytes             |
//! | format version              | u32                 |
//! | input size, hidden size     | u32, u32            |
//! | sequence length             | u32                 |
//! | time encoding (0 lin, 1 cyc)| u32                 |
//! | normalization fitted        | u8                  |
//! | feature means, stds         | f64 × input, × input|
//! | target mean, std            | f64, f64            |
//! | parameter count `P`         | u64                 |
//! | parameters                  | f64 × P             |
//! | Adam first moments          | f64 × P             |
//! | Adam second moments         | f64 × P             |
//! | Adam step                   | u64                 |
//! | shuffle counter             | u64                 |
//!
//! Parameters follow [`Layout`](super::Layout).

use std::path::Path;

use super::adam::Adam;
use super::model::{Layout, LstmModel, ModelConfig, Normalization, TimeEncoding};
use crate::dataset::write_atomic;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CLKLSTM1";
pub const CHECKPOINT_VERSION: u32 = 1;

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
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

impl LstmModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.params.len();
        let mut out = Vec::with_capacity(64 + 24 * n);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for v in [
            self.layout.input as u32,
            self.layout.hidden as u32,
            self.config.seq_len as u32,
            self.config.time_encoding.code(),
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(self.fitted as u8);
        let norm = &self.norm;
        let floats = norm.feat_mean.iter().chain(&norm.feat_std).chain([&norm.target_mean, &norm.target_std]);
        for v in floats {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(n as u64).to_le_bytes());
        for v in self.params.iter().chain(&self.adam.m).chain(&self.adam.v) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.adam.step.to_le_bytes());
        out.extend_from_slice(&self.shuffle_counter.to_le_bytes());
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a model checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let input = r.u32()? as usize;
        let hidden = r.u32()? as usize;
        let seq_len = r.u32()? as usize;
        let enc = r.u32()?;
        let time_encoding =
            TimeEncoding::from_code(enc).ok_or_else(|| Error::Checkpoint(format!("unknown time encoding {enc}")))?;
        if input != time_encoding.input_size() || hidden == 0 || seq_len == 0 {
            return Err(Error::Checkpoint(format!(
                "inconsistent shape: input {input}, hidden {hidden}, lag {seq_len}"
            )));
        }
        let fitted = match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(Error::Checkpoint(format!("bad fitted flag {b}"))),
        };
        let feat_mean = r.f64s(input)?;
        let feat_std = r.f64s(input)?;
        let target_mean = r.f64()?;
        let target_std = r.f64()?;
        let layout = Layout { input, hidden };
        let n = r.u64()? as usize;
        if n != layout.len() {
            return Err(Error::Checkpoint(format!("{n} parameters, shape needs {}", layout.len())));
        }
        let params = r.f64s(n)?;
        let m = r.f64s(n)?;
        let v = r.f64s(n)?;
        let step = r.u64()?;
        let shuffle_counter = r.u64()?;
        if r.pos != buf.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        Ok(Self {
            config: ModelConfig { hidden_size: hidden, seq_len, time_encoding },
            layout,
            params,
            norm: Normalization { feat_mean, feat_std, target_mean, target_std },
            fitted,
            adam: Adam { m, v, step },
            shuffle_counter,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}
