//! Image, flow and color-map files.
//!
//! Grayscale images are read from PGM (P2/P5) or PNG and scaled into
//! `[0, 1]` by their maximum value. Flows use the Middlebury `.flo` layout.
//! Every write goes to a temporary file in the target directory that is
//! renamed into place once complete.

use std::f64::consts::PI;
use std::fs;
use std::io::{Cursor, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{FlowField, Image};
use crate::metrics::UNKNOWN_FLOW_THRESHOLD;

pub const FLO_TAG: f32 = 202021.25;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    fn max_value(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

fn quantize(v: f64, maxval: u32) -> u32 {
    (v.clamp(0.0, 1.0) * maxval as f64).round() as u32
}

// ---------------------------------------------------------------- PGM

struct PgmHeader {
    ascii: bool,
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

fn parse_pgm_header(bytes: &[u8]) -> Result<PgmHeader> {
    let bad = |r: &str| Error::format("PGM", r.to_string());
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(bad("missing magic number"));
    }
    let ascii = match bytes[1] {
        b'2' => true,
        b'5' => false,
        _ => return Err(bad("only P2 and P5 are supported")),
    };
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("expected a number in the header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("header number out of range"))?;
    }
    // Exactly one whitespace byte separates the header from binary data.
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err(bad("truncated header")),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(bad("zero-sized image"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(bad(&format!("unsupported maxval {maxval}")));
    }
    Ok(PgmHeader { ascii, width: width as usize, height: height as usize, maxval: maxval as u32, data_start: pos })
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let hdr = parse_pgm_header(bytes)?;
    let n = hdr
        .width
        .checked_mul(hdr.height)
        .ok_or_else(|| Error::format("PGM", "image too large"))?;
    let scale = hdr.maxval as f64;
    let body = &bytes[hdr.data_start..];
    let data: Vec<f64> = if hdr.ascii {
        let text = std::str::from_utf8(body).map_err(|_| Error::format("PGM", "non-ASCII sample data"))?;
        let values: Vec<u32> = text
            .split_ascii_whitespace()
            .take(n)
            .map(|t| t.parse().map_err(|_| Error::format("PGM", format!("bad sample '{t}'"))))
            .collect::<Result<_>>()?;
        if values.len() < n {
            return Err(Error::format("PGM", format!("expected {n} samples, found {}", values.len())));
        }
        values.into_iter().map(|v| v.min(hdr.maxval) as f64 / scale).collect()
    } else {
        let bps = if hdr.maxval > 255 { 2 } else { 1 };
        if body.len() < n * bps {
            return Err(Error::format("PGM", format!("expected {} data bytes, found {}", n * bps, body.len())));
        }
        if bps == 1 {
            body[..n].iter().map(|&b| (b as u32).min(hdr.maxval) as f64 / scale).collect()
        } else {
            body[..2 * n]
                .chunks_exact(2)
                .map(|c| (u16::from_be_bytes([c[0], c[1]]) as u32).min(hdr.maxval) as f64 / scale)
                .collect()
        }
    };
    Image::new(hdr.width, hdr.height, data)
}

pub fn encode_pgm(u: &Image, depth: BitDepth, ascii: bool) -> Vec<u8> {
    let maxval = depth.max_value();
    let (w, h) = u.dims();
    let mut out = format!("{}\n{w} {h}\n{maxval}\n", if ascii { "P2" } else { "P5" }).into_bytes();
    if ascii {
        for row in u.data().chunks(w) {
            let line: Vec<String> = row.iter().map(|&v| quantize(v, maxval).to_string()).collect();
            out.extend_from_slice(line.join(" ").as_bytes());
            out.push(b'\n');
        }
    } else {
        for &v in u.data() {
            let q = quantize(v, maxval);
            match depth {
                BitDepth::Eight => out.push(q as u8),
                BitDepth::Sixteen => out.extend_from_slice(&(q as u16).to_be_bytes()),
            }
        }
    }
    out
}

// ---------------------------------------------------------------- PNG

pub fn decode_png(bytes: &[u8]) -> Result<Image> {
    let err = |e: png::DecodingError| Error::format("PNG", e.to_string());
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(err)?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::format("PNG", "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(err)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let sixteen = info.bit_depth == png::BitDepth::Sixteen;
    let channels = info.color_type.samples();
    let maxval = if sixteen { 65535.0 } else { 255.0 };
    let sample = |row: &[u8], k: usize| -> f64 {
        if sixteen {
            u16::from_be_bytes([row[2 * k], row[2 * k + 1]]) as f64 / maxval
        } else {
            row[k] as f64 / maxval
        }
    };
    let mut data = Vec::with_capacity(w * h);
    for row in buf.chunks(info.line_size).take(h) {
        for i in 0..w {
            let base = i * channels;
            let v = match info.color_type {
                png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha => sample(row, base),
                png::ColorType::Rgb | png::ColorType::Rgba => {
                    0.299 * sample(row, base) + 0.587 * sample(row, base + 1) + 0.114 * sample(row, base + 2)
                }
                png::ColorType::Indexed => return Err(Error::format("PNG", "unexpanded palette image")),
            };
            data.push(v);
        }
    }
    Image::new(w, h, data)
}

pub fn encode_png(u: &Image, depth: BitDepth) -> Result<Vec<u8>> {
    let (w, h) = u.dims();
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(png::ColorType::Grayscale);
        let maxval = depth.max_value();
        let mut data = Vec::with_capacity(w * h * 2);
        match depth {
            BitDepth::Eight => {
                enc.set_depth(png::BitDepth::Eight);
                data.extend(u.data().iter().map(|&v| quantize(v, maxval) as u8));
            }
            BitDepth::Sixteen => {
                enc.set_depth(png::BitDepth::Sixteen);
                for &v in u.data() {
                    data.extend_from_slice(&(quantize(v, maxval) as u16).to_be_bytes());
                }
            }
        }
        let err = |e: png::EncodingError| Error::format("PNG", e.to_string());
        let mut writer = enc.write_header().map_err(err)?;
        writer.write_image_data(&data).map_err(err)?;
        writer.finish().map_err(err)?;
    }
    Ok(out)
}

// ---------------------------------------------------------------- dispatch

/// Reads a grayscale PGM or PNG file (detected from its content).
pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.starts_with(b"\x89PNG") {
        decode_png(&bytes)
    } else {
        decode_pgm(&bytes)
    }
}

/// Writes PNG for a `.png` extension and binary PGM otherwise.
pub fn write_image(path: &Path, u: &Image, depth: BitDepth) -> Result<()> {
    let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let bytes = if is_png { encode_png(u, depth)? } else { encode_pgm(u, depth, false) };
    write_atomic(path, &bytes)
}

// ---------------------------------------------------------------- .flo

pub fn encode_flo(v: &FlowField) -> Vec<u8> {
    let (w, h) = v.dims();
    let mut out = Vec::with_capacity(12 + 8 * w * h);
    out.extend_from_slice(&FLO_TAG.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for (a, b) in v.v1.data().iter().zip(v.v2.data()) {
        out.extend_from_slice(&(*a as f32).to_le_bytes());
        out.extend_from_slice(&(*b as f32).to_le_bytes());
    }
    out
}

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    let bad = |r: String| Error::format("flo", r);
    if bytes.len() < 12 {
        return Err(bad("file shorter than its header".into()));
    }
    let word = |k: usize| [bytes[4 * k], bytes[4 * k + 1], bytes[4 * k + 2], bytes[4 * k + 3]];
    let tag = f32::from_le_bytes(word(0));
    if tag != FLO_TAG {
        return Err(bad(format!("bad sanity tag {tag}")));
    }
    let (w, h) = (i32::from_le_bytes(word(1)), i32::from_le_bytes(word(2)));
    if w <= 0 || h <= 0 {
        return Err(bad(format!("invalid size {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(12))
        .ok_or_else(|| bad("size overflow".into()))?;
    if bytes.len() != expected {
        return Err(bad(format!("expected {expected} bytes for {w}x{h}, found {}", bytes.len())));
    }
    let mut v1 = Vec::with_capacity(w * h);
    let mut v2 = Vec::with_capacity(w * h);
    for p in 0..w * h {
        let a = f32::from_le_bytes(word(3 + 2 * p)) as f64;
        let b = f32::from_le_bytes(word(4 + 2 * p)) as f64;
        if !a.is_finite() || !b.is_finite() {
            return Err(bad(format!("non-finite value at pixel {p}")));
        }
        v1.push(a);
        v2.push(b);
    }
    FlowField::new(Image::new(w, h, v1)?, Image::new(w, h, v2)?)
}

pub fn read_flo(path: &Path) -> Result<FlowField> {
    decode_flo(&fs::read(path).map_err(io_err(path))?)
}

pub fn write_flo(path: &Path, v: &FlowField) -> Result<()> {
    write_atomic(path, &encode_flo(v))
}

// ---------------------------------------------------------------- color maps

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn pixel(&self, i: usize, j: usize) -> [u8; 3] {
        let k = 3 * (j * self.width + i);
        [self.data[k], self.data[k + 1], self.data[k + 2]]
    }

    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }
}

fn hsv_to_rgb(hue: f64, sat: f64) -> [u8; 3] {
    // Value is fixed at 1.
    let h = hue.rem_euclid(2.0 * PI) / (PI / 3.0);
    let sector = (h.floor() as usize).min(5);
    let f = h - sector as f64;
    let (p, q, t) = (1.0 - sat, 1.0 - sat * f, 1.0 - sat * (1.0 - f));
    let (r, g, b) = match sector {
        0 => (1.0, t, p),
        1 => (q, 1.0, p),
        2 => (p, 1.0, t),
        3 => (p, q, 1.0),
        4 => (t, p, 1.0),
        _ => (1.0, p, q),
    };
    let c = |x: f64| (x * 255.0).round() as u8;
    [c(r), c(g), c(b)]
}

fn known(a: f64, b: f64) -> bool {
    a.abs() <= UNKNOWN_FLOW_THRESHOLD && b.abs() <= UNKNOWN_FLOW_THRESHOLD
}

/// 99th percentile of the known flow magnitudes.
pub fn auto_max_magnitude(v: &FlowField) -> f64 {
    let mut mags: Vec<f64> = v
        .v1
        .data()
        .iter()
        .zip(v.v2.data())
        .filter(|(a, b)| known(**a, **b))
        .map(|(a, b)| a.hypot(*b))
        .collect();
    if mags.is_empty() {
        return 0.0;
    }
    mags.sort_by(f64::total_cmp);
    let k = ((mags.len() - 1) as f64 * 0.99).round() as usize;
    mags[k]
}

/// Hue from the flow direction, saturation from its magnitude relative to
/// `max_mag` (auto: 99th percentile). Unknown flow is drawn black.
pub fn flow_to_color(v: &FlowField, max_mag: Option<f64>) -> RgbImage {
    let (w, h) = v.dims();
    let m = max_mag.unwrap_or_else(|| auto_max_magnitude(v));
    let mut data = Vec::with_capacity(3 * w * h);
    for (&a, &b) in v.v1.data().iter().zip(v.v2.data()) {
        let px = if !known(a, b) {
            [0, 0, 0]
        } else {
            let mag = a.hypot(b);
            let sat = if m > 0.0 { (mag / m).min(1.0) } else if mag > 0.0 { 1.0 } else { 0.0 };
            hsv_to_rgb(b.atan2(a), sat)
        };
        data.extend_from_slice(&px);
    }
    RgbImage { width: w, height: h, data }
}

pub fn write_flow_color(path: &Path, v: &FlowField, max_mag: Option<f64>) -> Result<()> {
    write_atomic(path, &flow_to_color(v, max_mag).encode_ppm())
}
