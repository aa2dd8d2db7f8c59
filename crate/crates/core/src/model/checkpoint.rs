//! Binary model checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 8     | magic `DLRLMDL\0` |
//! | 4     | format version (u32) |
//! | 8 x 5 | vocab_size, embed_dim, hidden_size, num_layers, max_decode_len (u64) |
//! | 8     | mmi_lambda (f64) |
//! | 1     | conditional flag |
//! | 8     | parameter count (u64) |
//! | 8 x n | parameters (f64) in layout order |

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::config::ModelConfig;
use super::network::Seq2SeqModel;

pub(crate) const MAGIC: &[u8; 8] = b"DLRLMDL\0";
pub(crate) const VERSION: u32 = 1;

pub(crate) fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Checkpoint("truncated file".into()),
        _ => Error::Checkpoint(e.to_string()),
    })?;
    Ok(buf)
}

pub(crate) fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_exact::<8>(r)?))
}

pub(crate) fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(read_exact::<8>(r)?))
}

pub(crate) fn read_count(r: &mut impl Read) -> Result<usize> {
    usize::try_from(read_u64(r)?).map_err(|_| Error::Checkpoint("count overflows usize".into()))
}

fn io_err(e: std::io::Error) -> Error {
    Error::Checkpoint(e.to_string())
}

pub fn write_checkpoint(model: &Seq2SeqModel, w: &mut impl Write) -> Result<()> {
    let cfg = model.config();
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    for v in [
        cfg.vocab_size,
        cfg.embed_dim,
        cfg.hidden_size,
        cfg.num_layers,
        cfg.max_decode_len,
    ] {
        w.write_all(&(v as u64).to_le_bytes()).map_err(io_err)?;
    }
    w.write_all(&cfg.mmi_lambda.to_le_bytes()).map_err(io_err)?;
    w.write_all(&[u8::from(cfg.conditional)]).map_err(io_err)?;
    w.write_all(&(model.num_params() as u64).to_le_bytes())
        .map_err(io_err)?;
    for p in model.params() {
        w.write_all(&p.to_le_bytes()).map_err(io_err)?;
    }
    Ok(())
}

fn compare(field: &'static str, expected: impl ToString, found: impl ToString) -> Result<()> {
    let (expected, found) = (expected.to_string(), found.to_string());
    if expected == found {
        Ok(())
    } else {
        Err(Error::ConfigMismatch {
            field,
            expected,
            found,
        })
    }
}

/// Reads a checkpoint; when `expected` is given every config field must match.
pub fn read_checkpoint(r: &mut impl Read, expected: Option<&ModelConfig>) -> Result<Seq2SeqModel> {
    if &read_exact::<8>(r)? != MAGIC {
        return Err(Error::Checkpoint("bad magic string".into()));
    }
    let version = u32::from_le_bytes(read_exact::<4>(r)?);
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (expected {VERSION})"
        )));
    }
    let vocab_size = read_count(r)?;
    let embed_dim = read_count(r)?;
    let hidden_size = read_count(r)?;
    let num_layers = read_count(r)?;
    let max_decode_len = read_count(r)?;
    let mmi_lambda = read_f64(r)?;
    let conditional = match read_exact::<1>(r)?[0] {
        0 => false,
        1 => true,
        other => return Err(Error::Checkpoint(format!("bad conditional flag {other}"))),
    };
    let config = ModelConfig {
        vocab_size,
        embed_dim,
        hidden_size,
        num_layers,
        max_decode_len,
        mmi_lambda,
        conditional,
    };
    if let Some(exp) = expected {
        compare("vocab_size", exp.vocab_size, config.vocab_size)?;
        compare("embed_dim", exp.embed_dim, config.embed_dim)?;
        compare("hidden_size", exp.hidden_size, config.hidden_size)?;
        compare("num_layers", exp.num_layers, config.num_layers)?;
        compare("max_decode_len", exp.max_decode_len, config.max_decode_len)?;
        compare("mmi_lambda", exp.mmi_lambda, config.mmi_lambda)?;
        compare("conditional", exp.conditional, config.conditional)?;
    }
    config
        .validate()
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let count = read_count(r)?;
    let expected_count = super::params::Layout::new(&config).total;
    if count != expected_count {
        return Err(Error::Checkpoint(format!(
            "parameter count {count} does not match configuration ({expected_count})"
        )));
    }
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Checkpoint("truncated file".into()),
        _ => Error::Checkpoint(e.to_string()),
    })?;
    let params = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(io_err)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after parameters".into()));
    }
    Seq2SeqModel::from_params(config, params)
}

pub fn save_checkpoint(model: &Seq2SeqModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(model, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(
    path: impl AsRef<Path>,
    expected: Option<&ModelConfig>,
) -> Result<Seq2SeqModel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut std::io::BufReader::new(file), expected)
}
