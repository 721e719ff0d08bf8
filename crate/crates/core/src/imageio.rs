//! Minimal image formats: 8-bit PPM (P6) color with gamma 2.2 encoding,
//! little-endian grayscale PFM for depth and 8-bit PGM (P5) for masks.
//! Images are row-major from the top row; PFM stores rows bottom-up on disk.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::Rgb;

pub const GAMMA: f64 = 2.2;

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn encode_channel(linear: f64) -> u8 {
    (linear.clamp(0.0, 1.0).powf(1.0 / GAMMA) * 255.0).round() as u8
}

pub fn decode_channel(byte: u8) -> f64 {
    (byte as f64 / 255.0).powf(GAMMA)
}

pub fn encode_ppm(width: usize, height: usize, pixels: &[Rgb]) -> Result<Vec<u8>> {
    check_len(width, height, pixels.len())?;
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.reserve(3 * pixels.len());
    for p in pixels {
        out.extend(p.iter().map(|c| encode_channel(*c)));
    }
    Ok(out)
}

/// Decoded pixels are the gamma-expanded byte values.
pub fn decode_ppm(bytes: &[u8]) -> Result<(usize, usize, Vec<Rgb>)> {
    let (header, body) = parse_header::<3>(bytes, b"P6")?;
    let [width, height, maxval] = header;
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported PPM maxval {maxval}")));
    }
    let data = body_exact(body, 3 * width * height)?;
    let pixels = data
        .chunks_exact(3)
        .map(|c| [decode_channel(c[0]), decode_channel(c[1]), decode_channel(c[2])])
        .collect();
    Ok((width, height, pixels))
}

pub fn encode_pgm(width: usize, height: usize, values: &[u32]) -> Result<Vec<u8>> {
    check_len(width, height, values.len())?;
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    for v in values {
        out.push(u8::try_from(*v).map_err(|_| Error::Format(format!("PGM value {v} exceeds 255")))?);
    }
    Ok(out)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u32>)> {
    let (header, body) = parse_header::<3>(bytes, b"P5")?;
    let [width, height, maxval] = header;
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    let data = body_exact(body, width * height)?;
    Ok((width, height, data.iter().map(|b| *b as u32).collect()))
}

pub fn encode_pfm(width: usize, height: usize, values: &[f64]) -> Result<Vec<u8>> {
    check_len(width, height, values.len())?;
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(4 * values.len());
    for row in (0..height).rev() {
        for v in &values[row * width..(row + 1) * width] {
            out.extend((*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_pfm(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    if magic != b"Pf" {
        return Err(Error::Format("expected grayscale PFM (Pf)".into()));
    }
    let width = parse_usize(next_token(bytes, &mut pos)?)?;
    let height = parse_usize(next_token(bytes, &mut pos)?)?;
    let scale: f64 = std::str::from_utf8(next_token(bytes, &mut pos)?)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format("bad PFM scale".into()))?;
    pos += 1;
    let data = body_exact(bytes.get(pos..).unwrap_or(&[]), 4 * width * height)?;
    let little = scale < 0.0;
    let mut values = vec![0.0; width * height];
    for (i, chunk) in data.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let row = height - 1 - i / width;
        values[row * width + i % width] = v as f64;
    }
    Ok((width, height, values))
}

fn check_len(width: usize, height: usize, len: usize) -> Result<()> {
    if width * height != len {
        return Err(Error::Dimension(format!("{len} pixels for a {width}x{height} image")));
    }
    Ok(())
}

fn body_exact(body: &[u8], len: usize) -> Result<&[u8]> {
    if body.len() < len {
        return Err(Error::Format(format!("expected {len} data bytes, found {}", body.len())));
    }
    Ok(&body[..len])
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
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
        return Err(Error::Format("truncated header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn parse_usize(tok: &[u8]) -> Result<usize> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("bad header number {:?}", String::from_utf8_lossy(tok))))
}

/// Magic plus `N` numbers, followed by exactly one whitespace byte.
fn parse_header<'a, const N: usize>(bytes: &'a [u8], magic: &[u8]) -> Result<([usize; N], &'a [u8])> {
    let mut pos = 0;
    if next_token(bytes, &mut pos)? != magic {
        return Err(Error::Format(format!("expected {}", String::from_utf8_lossy(magic))));
    }
    let mut out = [0usize; N];
    for v in out.iter_mut() {
        *v = parse_usize(next_token(bytes, &mut pos)?)?;
    }
    Ok((out, bytes.get(pos + 1..).unwrap_or(&[])))
}
