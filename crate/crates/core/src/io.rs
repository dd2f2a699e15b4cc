//! Grayscale image files (PGM P2/P5, PNG) and the binary displacement-field
//! format. Intensities are mapped linearly to `[0, 1]`.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{ColorType, ExtendedColorType, ImageFormat};

use crate::error::{Error, Result};
use crate::image::{ScalarImage, VectorField};

/// Magic bytes opening a displacement-field file.
pub const FLOW_MAGIC: &[u8; 4] = b"PIEH";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Pgm,
    Png,
}

fn format_for(path: &Path) -> Result<Format> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("pgm") => Ok(Format::Pgm),
        Some("png") => Ok(Format::Png),
        other => Err(Error::UnsupportedFormat(format!(
            "extension {:?} of {}",
            other.unwrap_or(""),
            path.display()
        ))),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

/// Loads an 8- or 16-bit grayscale PGM or PNG.
pub fn load_image(path: impl AsRef<Path>) -> Result<ScalarImage> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        return decode_pgm(&bytes);
    }
    if bytes.starts_with(b"\x89PNG") {
        return decode_png(&bytes);
    }
    match format_for(path) {
        Ok(Format::Pgm) => Err(Error::CorruptHeader(format!("{}: missing P2/P5 magic", path.display()))),
        Ok(Format::Png) => Err(Error::CorruptHeader(format!("{}: missing PNG signature", path.display()))),
        Err(e) => Err(e),
    }
}

struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::CorruptHeader(format!("bad or missing {what}")))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<ScalarImage> {
    let binary = bytes[1] == b'5';
    let mut t = Tokens { bytes, pos: 2 };
    let width = t.number("width")? as usize;
    let height = t.number("height")? as usize;
    let maxval = t.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::CorruptHeader(format!("zero size {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::CorruptHeader(format!("maxval {maxval}")));
    }
    let n = width * height;
    let scale = 1.0 / maxval as f64;
    let mut data = Vec::with_capacity(n);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = t.pos + 1;
        let bpp = if maxval > 255 { 2 } else { 1 };
        let raster = bytes
            .get(start..start + n * bpp)
            .ok_or_else(|| Error::CorruptHeader("raster shorter than header size".into()))?;
        if bpp == 1 {
            data.extend(raster.iter().map(|&b| b as f64 * scale));
        } else {
            data.extend(
                raster
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale),
            );
        }
    } else {
        for _ in 0..n {
            let v = t.number("pixel")?;
            if v > maxval {
                return Err(Error::CorruptHeader(format!("pixel {v} exceeds maxval {maxval}")));
            }
            data.push(v as f64 * scale);
        }
    }
    ScalarImage::new(width, height, data)
}

fn decode_png(bytes: &[u8]) -> Result<ScalarImage> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::CorruptHeader(format!("png: {e}")))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img.color() {
        ColorType::L8 => img.into_luma8().into_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        ColorType::L16 => img
            .into_luma16()
            .into_raw()
            .iter()
            .map(|&v| v as f64 / 65535.0)
            .collect(),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "png color type {other:?}; only grayscale is accepted"
            )))
        }
    };
    ScalarImage::new(w, h, data)
}

fn quantize8(img: &ScalarImage) -> Vec<u8> {
    img.data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

fn quantize16(img: &ScalarImage) -> Vec<u16> {
    img.data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect()
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidConfig(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn encode_pgm8(img: &ScalarImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(quantize8(img));
    out
}

fn encode_pgm16(img: &ScalarImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
    for v in quantize16(img) {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

fn encode_png(img: &ScalarImage, sixteen_bit: bool) -> Result<Vec<u8>> {
    let mut out = std::io::Cursor::new(Vec::new());
    let (w, h) = (img.width() as u32, img.height() as u32);
    let result = if sixteen_bit {
        let raw: Vec<u8> = quantize16(img).iter().flat_map(|v| v.to_be_bytes()).collect();
        image::write_buffer_with_format(&mut out, &raw, w, h, ExtendedColorType::L16, ImageFormat::Png)
    } else {
        image::write_buffer_with_format(&mut out, &quantize8(img), w, h, ExtendedColorType::L8, ImageFormat::Png)
    };
    result.map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(out.into_inner())
}

/// Clamps to `[0, 1]`, quantizes to 8 bits and writes PGM or PNG by extension.
pub fn save_image(img: &ScalarImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format_for(path)? {
        Format::Pgm => encode_pgm8(img),
        Format::Png => encode_png(img, false)?,
    };
    write_atomic(path, &bytes)
}

/// Same as [`save_image`] with 16-bit quantization.
pub fn save_image16(img: &ScalarImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format_for(path)? {
        Format::Pgm => encode_pgm16(img),
        Format::Png => encode_png(img, true)?,
    };
    write_atomic(path, &bytes)
}

/// Writes a displacement field: magic, width and height as little-endian
/// `i32`, then interleaved little-endian `f32` pairs `(u, v)` row-major.
pub fn save_flow(field: &VectorField, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::with_capacity(12 + 8 * field.len());
    out.extend_from_slice(FLOW_MAGIC);
    out.extend_from_slice(&(field.width() as i32).to_le_bytes());
    out.extend_from_slice(&(field.height() as i32).to_le_bytes());
    for (u, v) in field.u.iter().zip(&field.v) {
        out.extend_from_slice(&(*u as f32).to_le_bytes());
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    write_atomic(path.as_ref(), &out)
}

pub fn load_flow(path: impl AsRef<Path>) -> Result<VectorField> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    if bytes.len() < 12 || &bytes[..4] != FLOW_MAGIC {
        return Err(Error::CorruptHeader(format!("{}: missing flow magic", path.display())));
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width <= 0 || height <= 0 {
        return Err(Error::CorruptHeader(format!("flow size {width}x{height}")));
    }
    let (w, h) = (width as usize, height as usize);
    let body = &bytes[12..];
    if body.len() != 8 * w * h {
        return Err(Error::CorruptHeader(format!(
            "flow body has {} bytes, expected {}",
            body.len(),
            8 * w * h
        )));
    }
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    for pair in body.chunks_exact(8) {
        u.push(f32::from_le_bytes(pair[..4].try_into().unwrap()) as f64);
        v.push(f32::from_le_bytes(pair[4..].try_into().unwrap()) as f64);
    }
    VectorField::new(w, h, u, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_pgm_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        fs::write(&p, "P2\n# comment\n2 2\n255\n0 255\n128 64\n").unwrap();
        let img = load_image(&p).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn binary_pgm_16bit() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.pgm");
        let mut bytes = b"P5 2 1 65535\n".to_vec();
        bytes.extend_from_slice(&65535u16.to_be_bytes());
        bytes.extend_from_slice(&0u16.to_be_bytes());
        fs::write(&p, bytes).unwrap();
        assert_eq!(load_image(&p).unwrap().data(), &[1.0, 0.0]);
    }

    #[test]
    fn rgb_png_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        image::save_buffer(&p, &[1, 2, 3, 4, 5, 6], 2, 1, ExtendedColorType::Rgb8).unwrap();
        assert!(matches!(load_image(&p), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_image(dir.path().join("missing.png")), Err(Error::FileNotFound(_))));
        let p = dir.path().join("bad.pgm");
        fs::write(&p, "P5\nx y\n255\n").unwrap();
        assert!(matches!(load_image(&p), Err(Error::CorruptHeader(_))));
        let p = dir.path().join("short.pgm");
        fs::write(&p, "P5\n4 4\n255\n\x01\x02").unwrap();
        assert!(matches!(load_image(&p), Err(Error::CorruptHeader(_))));
        let img = ScalarImage::zeros(2, 2);
        assert!(matches!(save_image(&img, dir.path().join("x.tif")), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn save_clamps() {
        let dir = tempfile::tempdir().unwrap();
        let img = ScalarImage::new(3, 1, vec![1.7, -0.2, 0.5]).unwrap();
        for ext in ["pgm", "png"] {
            let p = dir.path().join(format!("clamp.{ext}"));
            save_image(&img, &p).unwrap();
            let back = load_image(&p).unwrap();
            assert_eq!(back.get(0, 0), 1.0);
            assert_eq!(back.get(1, 0), 0.0);
            assert!((back.get(2, 0) - 0.5).abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn flow_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.flo");
        let f = VectorField::from_fn(3, 2, |x, y| (x as f64 * 0.5, -(y as f64) * 0.25));
        save_flow(&f, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"PIEH");
        assert_eq!(bytes.len(), 12 + 3 * 2 * 8);
        assert_eq!(load_flow(&p).unwrap(), f);
    }
}
