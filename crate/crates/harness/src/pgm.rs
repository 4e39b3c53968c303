//! Portable graymap frames and masks.
//!
//! Frames are written as 16-bit binary PGM with a `# scale <s>` comment so
//! that `pixel = value * s` recovers the power within quantisation.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use glmb_core::models::SceneMask;
use glmb_core::Image;

pub fn write_frame(path: &Path, image: &Image) -> Result<()> {
    let max = image.data().iter().cloned().fold(0.0, f64::max);
    let scale = if max > 0.0 { max / 65535.0 } else { 1.0 };
    let mut out = Vec::with_capacity(64 + 2 * image.data().len());
    write!(out, "P5\n# scale {scale:e}\n{} {}\n65535\n", image.width(), image.height())?;
    for &v in image.data() {
        let q = (v / scale).round().clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Reads a binary (P5) or ASCII (P2) graymap. Values are multiplied by the
/// `# scale` comment when present, otherwise returned raw.
pub fn read_frame(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let (w, h, _, scale, values) = parse(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    let data = values.into_iter().map(|v| v as f64 * scale.unwrap_or(1.0)).collect();
    Image::from_vec(w, h, data).context("pixel count mismatch")
}

/// Loads a scene mask: each pixel divided by the maximum grey value.
pub fn read_mask(path: &Path) -> Result<SceneMask> {
    let bytes = fs::read(path).with_context(|| format!("reading mask {}", path.display()))?;
    let (w, h, maxval, _, values) = parse(&bytes).with_context(|| format!("parsing mask {}", path.display()))?;
    let values = values.into_iter().map(|v| v as f64 / maxval as f64).collect();
    SceneMask::from_values(w, h, values).map_err(|e| anyhow::anyhow!("{e}"))
}

type Parsed = (usize, usize, u32, Option<f64>, Vec<u32>);

fn parse(bytes: &[u8]) -> Result<Parsed> {
    let mut pos = 0;
    let mut scale = None;
    let mut fields = Vec::new();
    // Header: magic, width, height, maxval, with comments anywhere.
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos >= bytes.len() {
            bail!("truncated header");
        }
        if bytes[pos] == b'#' {
            let end = bytes[pos..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |e| pos + e);
            let comment = std::str::from_utf8(&bytes[pos + 1..end]).unwrap_or("").trim();
            if let Some(s) = comment.strip_prefix("scale") {
                scale = Some(s.trim().parse::<f64>().context("bad scale comment")?);
            }
            pos = end;
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos])?.to_string());
    }
    let magic = fields[0].as_str();
    let w: usize = fields[1].parse().context("bad width")?;
    let h: usize = fields[2].parse().context("bad height")?;
    let maxval: u32 = fields[3].parse().context("bad maxval")?;
    if maxval == 0 || maxval > 65535 {
        bail!("maxval out of range");
    }
    let n = w * h;
    let values = match magic {
        "P5" => {
            pos += 1; // single whitespace after maxval
            let wide = maxval > 255;
            let need = if wide { 2 * n } else { n };
            let body = bytes.get(pos..pos + need).context("truncated raster")?;
            if wide {
                body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as u32).collect()
            } else {
                body.iter().map(|&b| b as u32).collect()
            }
        }
        "P2" => {
            let text = std::str::from_utf8(&bytes[pos..])?;
            let v: Vec<u32> = text
                .split_whitespace()
                .take(n)
                .map(|t| t.parse::<u32>())
                .collect::<Result<_, _>>()
                .context("bad ASCII raster")?;
            if v.len() != n {
                bail!("truncated raster");
            }
            v
        }
        other => bail!("unsupported magic {other:?}"),
    };
    Ok((w, h, maxval, scale, values))
}
