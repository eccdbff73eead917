//! File formats: a plain matrix-text format and 8-bit PGM previews.
//!
//! Matrix text is a header line `rows cols` followed by `rows` lines of
//! whitespace-separated decimals in row-major order. Values are written with
//! 17 significant digits, so a write/read round trip is exact.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Dense row-major matrix as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        crate::error::check_len("matrix data", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    /// Parses matrix text.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut header = |what: &str| -> Result<usize> {
            let tok = tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("missing {what} in header")))?;
            tok.parse()
                .map_err(|_| Error::Parse(format!("bad {what} '{tok}' in header")))
        };
        let rows = header("row count")?;
        let cols = header("column count")?;
        let mut data = Vec::with_capacity(rows * cols);
        for (i, tok) in tokens.enumerate() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Parse(format!("bad number '{tok}' at entry {i}")))?;
            data.push(v);
        }
        if data.len() != rows * cols {
            return Err(Error::Parse(format!(
                "header says {rows}x{cols} = {} values, found {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.rows, self.cols);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        w.write_all(self.to_text().as_bytes())?;
        w.flush()?;
        Ok(())
    }
}

/// Gray-level scaling used for a PGM export: pixel = 255 (v − min)/(max − min).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgmScale {
    pub min: f64,
    pub max: f64,
}

/// Maps values to 8-bit gray levels with per-image min-max scaling. A
/// constant image maps to 0.
pub fn to_gray(data: &[f64]) -> (Vec<u8>, PgmScale) {
    let finite = data.iter().cloned().filter(|v| v.is_finite());
    let min = finite.clone().fold(f64::INFINITY, f64::min);
    let max = finite.fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        let m = if min.is_finite() { min } else { 0.0 };
        return (vec![0; data.len()], PgmScale { min: m, max: m });
    }
    let gray = data
        .iter()
        .map(|&v| {
            let t = if v.is_finite() { (v - min) / (max - min) } else { 0.0 };
            (255.0 * t).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    (gray, PgmScale { min, max })
}

/// Writes a binary (P5) 8-bit PGM and returns the scaling applied.
pub fn write_pgm(path: impl AsRef<Path>, rows: usize, cols: usize, data: &[f64]) -> Result<PgmScale> {
    crate::error::check_len("pgm image", rows * cols, data.len())?;
    let (gray, scale) = to_gray(data);
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(w, "P5\n{cols} {rows}\n255\n")?;
    w.write_all(&gray)?;
    w.flush()?;
    Ok(scale)
}
