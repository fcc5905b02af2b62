//! Versioned binary parameter files.
//!
//! Layout: magic `EGRM`, format version (u32), the config header, then every
//! tensor in declaration order as little-endian f64. All integers are
//! little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::config::{AttentionKind, CellType, ModelConfig};
use super::params::Parameters;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"EGRM";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_params(params: &Parameters, mut out: impl Write) -> Result<()> {
    let c = params.config();
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&[match c.cell_type {
        CellType::Gru => 0,
        CellType::Lstm => 1,
    }])?;
    out.write_all(&(c.encoder_layers as u32).to_le_bytes())?;
    out.write_all(&(c.decoder_layers as u32).to_le_bytes())?;
    out.write_all(&[c.residual as u8])?;
    out.write_all(&(c.embed_dim as u32).to_le_bytes())?;
    out.write_all(&(c.hidden_dim as u32).to_le_bytes())?;
    out.write_all(&[match c.attention {
        AttentionKind::Additive => 0,
        AttentionKind::Dot => 1,
    }])?;
    out.write_all(&(c.vocab_size as u32).to_le_bytes())?;
    for tensor in params.tensors() {
        for x in tensor {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_params(mut input: impl Read) -> Result<Parameters> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut r = Cursor { bytes: &bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::format("parameter file", "bad magic bytes"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let cell_type = match r.u8()? {
        0 => CellType::Gru,
        1 => CellType::Lstm,
        other => return Err(Error::format("parameter file", format!("unknown cell type {other}"))),
    };
    let encoder_layers = r.u32()? as usize;
    let decoder_layers = r.u32()? as usize;
    let residual = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(Error::format("parameter file", format!("bad residual flag {other}"))),
    };
    let embed_dim = r.u32()? as usize;
    let hidden_dim = r.u32()? as usize;
    let attention = match r.u8()? {
        0 => AttentionKind::Additive,
        1 => AttentionKind::Dot,
        other => {
            return Err(Error::format(
                "parameter file",
                format!("unknown attention kind {other}"),
            ))
        }
    };
    let vocab_size = r.u32()? as usize;
    let config = ModelConfig {
        cell_type,
        encoder_layers,
        decoder_layers,
        residual,
        embed_dim,
        hidden_dim,
        attention,
        vocab_size,
    };
    let mut params = Parameters::zeros(config)?;
    let expected: usize = params.parameter_count() * 8;
    let remaining = bytes.len() - r.pos;
    if remaining != expected {
        return Err(Error::format(
            "parameter file",
            format!("header implies {expected} payload bytes, found {remaining}"),
        ));
    }
    for tensor in params.tensors_mut() {
        for x in tensor {
            *x = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        }
    }
    Ok(params)
}

pub fn save_params(params: &Parameters, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_params(params, BufWriter::new(file)).map_err(|e| match e {
        Error::Stream(e) => Error::io(path, e),
        other => other,
    })
}

pub fn load_params(path: impl AsRef<Path>) -> Result<Parameters> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_params(BufReader::new(file)).map_err(|e| match e {
        Error::Stream(e) => Error::io(path, e),
        other => other,
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::format("parameter file", "truncated"));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
