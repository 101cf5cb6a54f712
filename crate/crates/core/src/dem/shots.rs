//! Shot files.
//!
//! `b8`: one row per shot, `ceil((D+O)/8)` bytes, bit `k` of the row stored in
//! byte `k/8` at position `k%8`; detectors first, then observables, zero padded.
//! There is no header; the row shape is supplied by the caller.
//!
//! `01`: one ASCII line of `0`/`1` characters per shot, same bit order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::ShotBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShotFormat {
    #[serde(rename = "b8")]
    B8,
    #[serde(rename = "01")]
    Ascii01,
}

impl FromStr for ShotFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "b8" => Ok(ShotFormat::B8),
            "01" => Ok(ShotFormat::Ascii01),
            other => Err(Error::invalid(format!("unknown shot format `{other}`"))),
        }
    }
}

impl ShotFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            ShotFormat::B8 => "b8",
            ShotFormat::Ascii01 => "01",
        }
    }

    /// Guesses the format from a file extension, defaulting to `b8`.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("01") | Some("txt") => ShotFormat::Ascii01,
            _ => ShotFormat::B8,
        }
    }
}

pub fn write_shots_to<W: Write>(batch: &ShotBatch, mut out: W, format: ShotFormat) -> Result<()> {
    match format {
        ShotFormat::B8 => out.write_all(batch.raw())?,
        ShotFormat::Ascii01 => {
            let width = batch.row_width();
            let mut line = Vec::with_capacity(width + 1);
            for s in 0..batch.n_shots {
                line.clear();
                line.extend((0..width).map(|k| if batch.bit(s, k) { b'1' } else { b'0' }));
                line.push(b'\n');
                out.write_all(&line)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_shots(batch: &ShotBatch, path: impl AsRef<Path>, format: ShotFormat) -> Result<()> {
    let file = File::create(path)?;
    write_shots_to(batch, BufWriter::new(file), format)
}

pub fn read_shots_from<R: Read>(
    input: R,
    format: ShotFormat,
    n_detectors: usize,
    n_observables: usize,
) -> Result<ShotBatch> {
    let mut batch = ShotBatch::new(n_detectors, n_observables, 0);
    let width = batch.row_width();
    match format {
        ShotFormat::B8 => {
            let mut bytes = Vec::new();
            BufReader::new(input).read_to_end(&mut bytes)?;
            let rb = batch.row_bytes();
            if rb == 0 {
                if !bytes.is_empty() {
                    return Err(Error::Shape("non-empty b8 payload for zero-width rows".into()));
                }
                return Ok(batch);
            }
            if bytes.len() % rb != 0 {
                return Err(Error::Shape(format!(
                    "truncated b8 file: {} bytes is not a multiple of the {rb}-byte row",
                    bytes.len()
                )));
            }
            let pad_mask: u8 = if width % 8 == 0 { 0 } else { !((1u8 << (width % 8)) - 1) };
            for (s, row) in bytes.chunks_exact(rb).enumerate() {
                if row[rb - 1] & pad_mask != 0 {
                    return Err(Error::Shape(format!(
                        "row {s} has bits set beyond the declared {width} columns"
                    )));
                }
            }
            batch.push_packed_rows(&bytes);
        }
        ShotFormat::Ascii01 => {
            let mut row = vec![false; width];
            for (idx, line) in BufReader::new(input).lines().enumerate() {
                let line = line?;
                let line = line.trim_end_matches('\r');
                if line.len() != width {
                    return Err(Error::parse(
                        idx + 1,
                        format!("row has {} columns, expected {width}", line.len()),
                    ));
                }
                for (k, ch) in line.bytes().enumerate() {
                    row[k] = match ch {
                        b'0' => false,
                        b'1' => true,
                        other => {
                            return Err(Error::parse(
                                idx + 1,
                                format!("unexpected character `{}`", other as char),
                            ))
                        }
                    };
                }
                batch.push_bits(&row);
            }
        }
    }
    Ok(batch)
}

pub fn read_shots(
    path: impl AsRef<Path>,
    format: ShotFormat,
    n_detectors: usize,
    n_observables: usize,
) -> Result<ShotBatch> {
    read_shots_from(File::open(path)?, format, n_detectors, n_observables)
}
