//! Minimal PGM (portable graymap) reader: P2 (ASCII) and P5 (binary),
//! 8- or 16-bit samples, `#` comments in the header. Values come back
//! normalized to [0, 1] by the stated maximum.

use anyhow::{bail, Context, Result};
use std::path::Path;

pub struct Raster {
    pub width: usize,
    pub height: usize,
    /// Row-major, top row first, normalized to [0, 1].
    pub values: Vec<f64>,
}

impl Raster {
    /// Bilinear sample at pixel-space coordinates (column, row), clamped to
    /// the image edge.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let cx = x.clamp(0.0, (self.width - 1) as f64);
        let cy = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = cx.floor() as usize;
        let y0 = cy.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = cx - x0 as f64;
        let fy = cy - y0 as f64;
        let at = |i: usize, j: usize| self.values[j * self.width + i];
        (1.0 - fx) * (1.0 - fy) * at(x0, y0)
            + fx * (1.0 - fy) * at(x1, y0)
            + (1.0 - fx) * fy * at(x0, y1)
            + fx * fy * at(x1, y1)
    }
}

/// Pull the next whitespace-delimited header token, skipping `#` comments.
fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        bail!("unexpected end of PGM header");
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<Raster> {
    let bytes = std::fs::read(&path)
        .with_context(|| format!("reading {}", path.as_ref().display()))?;
    let mut pos = 0usize;
    let magic = next_token(&bytes, &mut pos)?;
    if magic != "P2" && magic != "P5" {
        bail!("not a PGM file (magic '{magic}', expected P2 or P5)");
    }
    let width: usize = next_token(&bytes, &mut pos)?.parse().context("PGM width")?;
    let height: usize = next_token(&bytes, &mut pos)?.parse().context("PGM height")?;
    let maxval: u32 = next_token(&bytes, &mut pos)?.parse().context("PGM maxval")?;
    if maxval == 0 || maxval > 65535 {
        bail!("PGM maxval {maxval} out of range 1..=65535");
    }
    let n = width
        .checked_mul(height)
        .context("PGM dimensions overflow")?;
    let mut values = Vec::with_capacity(n);
    if magic == "P2" {
        for _ in 0..n {
            let v: u32 = next_token(&bytes, &mut pos)?.parse().context("PGM sample")?;
            values.push(v.min(maxval) as f64 / maxval as f64);
        }
    } else {
        // single whitespace byte after maxval, then raw samples
        pos += 1;
        let wide = maxval > 255;
        let needed = n * if wide { 2 } else { 1 };
        if bytes.len() < pos + needed {
            bail!("PGM truncated: need {needed} sample bytes, found {}", bytes.len() - pos);
        }
        for i in 0..n {
            let v = if wide {
                u16::from_be_bytes([bytes[pos + 2 * i], bytes[pos + 2 * i + 1]]) as u32
            } else {
                bytes[pos + i] as u32
            };
            values.push(v.min(maxval) as f64 / maxval as f64);
        }
    }
    Ok(Raster { width, height, values })
}
