//! Binary model format.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! magic          8 bytes   "TOPIQLDA"
//! version        u32       1
//! num_topics     u64
//! vocab_size     u64
//! updates_seen   u64
//! docs_seen      u64
//! hyperparams    10 × f64  num_topics, chunksize, passes, decay, eval_every,
//!                          iterations, offset, alpha, eta, gamma_threshold
//! lambda         K·V × f64 row-major
//! ```
//!
//! A JSON sidecar (`<path>.json`) repeats the header for tooling.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{LdaHyperParams, TopicModel};
use crate::error::{Error, Result};
use crate::io::{write_atomic, write_json};

pub const MAGIC: &[u8; 8] = b"TOPIQLDA";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub format: String,
    pub version: u32,
    pub num_topics: usize,
    pub vocab_size: usize,
    pub updates_seen: u64,
    pub docs_seen: u64,
    pub hyper: LdaHyperParams,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".json");
    path.with_file_name(name)
}

impl TopicModel {
    pub fn sidecar(&self) -> ModelSidecar {
        ModelSidecar {
            format: String::from_utf8_lossy(MAGIC).into_owned(),
            version: VERSION,
            num_topics: self.num_topics(),
            vocab_size: self.vocab_size(),
            updates_seen: self.updates_seen(),
            docs_seen: self.docs_seen(),
            hyper: self.hyper().clone(),
        }
    }

    /// Writes the binary model and its JSON sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_atomic(path, |w| self.write_binary(w))?;
        write_json(sidecar_path(path), &self.sidecar())
    }

    pub fn write_binary(&self, w: &mut dyn Write) -> std::io::Result<()> {
        let h = self.hyper();
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        for v in [self.num_topics() as u64, self.vocab_size() as u64, self.updates_seen(), self.docs_seen()] {
            w.write_u64::<LittleEndian>(v)?;
        }
        for v in [
            h.num_topics as f64,
            h.chunksize as f64,
            h.passes as f64,
            h.decay,
            h.eval_every as f64,
            h.iterations as f64,
            h.offset,
            h.alpha(),
            h.eta(),
            h.gamma_threshold,
        ] {
            w.write_f64::<LittleEndian>(v)?;
        }
        for &v in self.lambda().iter() {
            w.write_f64::<LittleEndian>(v)?;
        }
        Ok(())
    }

    /// Reads a binary model; the sidecar is not consulted.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_binary(&mut BufReader::new(file))
    }

    pub fn read_binary(r: &mut dyn Read) -> Result<Self> {
        let bad = |what: &str| Error::MalformedModel(what.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.read_u32::<LittleEndian>().map_err(|_| bad("truncated header"))?;
        if version != VERSION {
            return Err(Error::MalformedModel(format!("unsupported version {version}")));
        }
        let mut header = [0u64; 4];
        for v in header.iter_mut() {
            *v = r.read_u64::<LittleEndian>().map_err(|_| bad("truncated header"))?;
        }
        let [k, vocab, updates_seen, docs_seen] = header;
        let mut hp = [0f64; 10];
        for v in hp.iter_mut() {
            *v = r.read_f64::<LittleEndian>().map_err(|_| bad("truncated hyperparameters"))?;
        }
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::MalformedModel(format!("non-integral count {v}")))
            }
        };
        let hyper = LdaHyperParams {
            num_topics: as_count(hp[0])?,
            chunksize: as_count(hp[1])?,
            passes: as_count(hp[2])?,
            decay: hp[3],
            eval_every: as_count(hp[4])?,
            iterations: as_count(hp[5])?,
            offset: hp[6],
            alpha: Some(hp[7]),
            eta: Some(hp[8]),
            gamma_threshold: hp[9],
        };
        if hyper.num_topics as u64 != k {
            return Err(bad("topic count disagrees with hyperparameters"));
        }
        let len = (k as usize)
            .checked_mul(vocab as usize)
            .filter(|&n| n <= (1 << 34))
            .ok_or_else(|| bad("implausible matrix size"))?;
        let mut data = vec![0f64; len];
        r.read_f64_into::<LittleEndian>(&mut data).map_err(|_| bad("truncated lambda"))?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|_| bad("read error"))? != 0 {
            return Err(bad("trailing bytes"));
        }
        let lambda = Array2::from_shape_vec((k as usize, vocab as usize), data).map_err(|e| Error::MalformedModel(e.to_string()))?;
        TopicModel::from_parts(&hyper, lambda, updates_seen, docs_seen)
            .map_err(|e| Error::MalformedModel(e.to_string()))
    }
}
