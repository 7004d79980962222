//! Flat binary weight files.
//!
//! Layout, all integers and floats little-endian:
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 4    | magic `ALCW`                           |
//! | 4      | 4    | format version (`u32`, currently 1)    |
//! | 8      | 4    | architecture tag (`u32`: 0 linear, 1 mlp) |
//! | 12     | 8    | feature count `d` (`u64`)              |
//! | 20     | 8    | class count `C` (`u64`)                |
//! | 28     | 8    | hidden units `h` (`u64`, 0 for linear) |
//! | 36     | 8    | init seed (`u64`)                      |
//! | 44     | 8·k  | parameters (`f64`)                     |
//!
//! Parameters are written layer by layer from the input side: the `outputs × inputs`
//! weight matrix in row-major order, then the bias vector.

use std::io::Cursor;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{Architecture, Classifier, ModelConfig, ModelError, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"ALCW";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 44;

pub fn encode_weights(model: &Classifier) -> Vec<u8> {
    let cfg = model.config();
    let (tag, hidden) = match cfg.architecture {
        Architecture::Linear => (0u32, 0u64),
        Architecture::Mlp { hidden_units } => (1, hidden_units as u64),
    };
    let params = model.params();
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * params.len());
    buf.extend_from_slice(WEIGHTS_MAGIC);
    // Writes into a Vec cannot fail.
    buf.write_u32::<LittleEndian>(VERSION).unwrap();
    buf.write_u32::<LittleEndian>(tag).unwrap();
    buf.write_u64::<LittleEndian>(cfg.feature_count as u64)
        .unwrap();
    buf.write_u64::<LittleEndian>(cfg.class_count as u64)
        .unwrap();
    buf.write_u64::<LittleEndian>(hidden).unwrap();
    buf.write_u64::<LittleEndian>(cfg.seed).unwrap();
    for p in params {
        buf.write_f64::<LittleEndian>(p).unwrap();
    }
    buf
}

pub fn decode_weights(bytes: &[u8]) -> Result<Classifier> {
    let bad = |msg: &str| ModelError::MalformedWeights(msg.to_string());
    if bytes.len() < HEADER_LEN {
        return Err(bad("file shorter than header"));
    }
    if &bytes[..4] != WEIGHTS_MAGIC {
        return Err(bad("bad magic"));
    }
    let mut cur = Cursor::new(&bytes[4..]);
    let short = |_| bad("truncated header");
    let version = cur.read_u32::<LittleEndian>().map_err(short)?;
    if version != VERSION {
        return Err(ModelError::MalformedWeights(format!(
            "unsupported version {version}"
        )));
    }
    let tag = cur.read_u32::<LittleEndian>().map_err(short)?;
    let d = cur.read_u64::<LittleEndian>().map_err(short)? as usize;
    let c = cur.read_u64::<LittleEndian>().map_err(short)? as usize;
    let h = cur.read_u64::<LittleEndian>().map_err(short)? as usize;
    let seed = cur.read_u64::<LittleEndian>().map_err(short)?;
    let architecture = match tag {
        0 => Architecture::Linear,
        1 => Architecture::Mlp { hidden_units: h },
        other => {
            return Err(ModelError::MalformedWeights(format!(
                "unknown architecture tag {other}"
            )))
        }
    };
    let mut model = Classifier::zeros(ModelConfig {
        architecture,
        class_count: c,
        feature_count: d,
        seed,
    })
    .map_err(|e| ModelError::MalformedWeights(e.to_string()))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * model.param_count() {
        return Err(ModelError::MalformedWeights(format!(
            "expected {} parameter bytes, found {}",
            8 * model.param_count(),
            body.len()
        )));
    }
    let params: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    if params.iter().any(|p| !p.is_finite()) {
        return Err(bad("non-finite parameter"));
    }
    model.set_params(&params)?;
    Ok(model)
}

pub fn save_weights(model: &Classifier, path: &Path) -> Result<()> {
    crate::util::atomic_write(path, &encode_weights(model)).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_weights(path: &Path) -> Result<Classifier> {
    let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_weights(&bytes)
}
