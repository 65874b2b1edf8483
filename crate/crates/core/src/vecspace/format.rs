//! Text file format for parameter vectors.
//!
//! ```text
//! paramvec v1 dim=<p> meta=<n>
//! <n lines of TOML metadata>
//! <p lines, one IEEE-754 double each as 16 lowercase hex digits>
//! ```
//!
//! The hex payload is the raw bit pattern, so a round trip is bit-exact
//! (signed zeros and NaN payloads included).

use std::io::{BufRead, Write};

use super::ParamVector;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "paramvec";

#[derive(Debug, Clone, PartialEq)]
pub struct ParamFile {
    pub vector: ParamVector,
    pub meta: toml::Table,
}

pub fn write_param_vector<W: Write>(
    mut w: W,
    vector: &ParamVector,
    meta: &toml::Table,
) -> Result<()> {
    let meta_text = if meta.is_empty() {
        String::new()
    } else {
        toml::to_string(meta).map_err(|e| Error::Parse(e.to_string()))?
    };
    let meta_lines: Vec<&str> = meta_text.lines().collect();
    writeln!(
        w,
        "{MAGIC} v{FORMAT_VERSION} dim={} meta={}",
        vector.dim(),
        meta_lines.len()
    )?;
    for line in &meta_lines {
        writeln!(w, "{line}")?;
    }
    for x in vector.as_slice() {
        writeln!(w, "{:016x}", x.to_bits())?;
    }
    Ok(())
}

pub fn read_param_vector<R: BufRead>(r: R) -> Result<ParamFile> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty parameter file".into()))??;
    let (dim, n_meta) = parse_header(&header)?;

    let mut meta_text = String::new();
    for _ in 0..n_meta {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse("truncated metadata block".into()))??;
        meta_text.push_str(&line);
        meta_text.push('\n');
    }
    let meta: toml::Table = if meta_text.is_empty() {
        toml::Table::new()
    } else {
        meta_text
            .parse()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?
    };

    let mut data = Vec::with_capacity(dim);
    for line in lines {
        let line = line?;
        let s = line.trim();
        if s.is_empty() {
            continue;
        }
        if s.len() != 16 {
            return Err(Error::Parse(format!("bad hex word {s:?}")));
        }
        let bits = u64::from_str_radix(s, 16).map_err(|e| Error::Parse(e.to_string()))?;
        data.push(f64::from_bits(bits));
    }
    if data.len() != dim {
        return Err(Error::Parse(format!(
            "header declares {dim} values, found {}",
            data.len()
        )));
    }
    Ok(ParamFile {
        vector: ParamVector::new(data),
        meta,
    })
}

fn parse_header(header: &str) -> Result<(usize, usize)> {
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(Error::Parse(format!("not a parameter file: {header:?}")));
    }
    let version = parts.next().unwrap_or_default();
    if version != format!("v{FORMAT_VERSION}") {
        return Err(Error::Parse(format!("unsupported format version {version:?}")));
    }
    let mut dim = None;
    let mut meta = 0;
    for kv in parts {
        match kv.split_once('=') {
            Some(("dim", v)) => dim = Some(v.parse().map_err(|_| Error::Parse(kv.into()))?),
            Some(("meta", v)) => meta = v.parse().map_err(|_| Error::Parse(kv.into()))?,
            _ => return Err(Error::Parse(format!("unknown header field {kv:?}"))),
        }
    }
    let dim = dim.ok_or_else(|| Error::Parse("header lacks dim".into()))?;
    Ok((dim, meta))
}
