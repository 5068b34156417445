//! Float images and their on-disk encodings (PFM, 8-bit PNG previews).

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Interleaved `height x width x channels` float image, rows top to bottom.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Image::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::InvalidArgument(format!(
                "image {width}x{height}x{channels} needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    /// Copies the `w x h` window whose top-left pixel is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::InvalidArgument(format!(
                "crop {w}x{h}+{x0}+{y0} exceeds {}x{} image",
                self.width, self.height
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(w * h * c);
        for y in y0..y0 + h {
            let i = (y * self.width + x0) * c;
            data.extend_from_slice(&self.data[i..i + w * c]);
        }
        Image::from_vec(w, h, c, data)
    }

    /// Channel-planar copy (`channels x height x width`).
    pub fn to_planar(&self) -> Vec<f32> {
        let plane = self.width * self.height;
        let mut out = vec![0.0; self.data.len()];
        for p in 0..plane {
            for c in 0..self.channels {
                out[c * plane + p] = self.data[p * self.channels + c];
            }
        }
        out
    }

    pub fn from_planar(width: usize, height: usize, channels: usize, planar: &[f32]) -> Result<Self> {
        let mut img = Image::new(width, height, channels);
        if planar.len() != img.data.len() {
            return Err(Error::InvalidArgument(format!(
                "planar buffer of {} values for a {width}x{height}x{channels} image",
                planar.len()
            )));
        }
        let plane = width * height;
        for p in 0..plane {
            for c in 0..channels {
                img.data[p * channels + c] = planar[c * plane + p];
            }
        }
        Ok(img)
    }
}

fn pfm_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        what: "PFM",
        detail: detail.into(),
    }
}

/// Encodes as little-endian PFM (scale -1, rows bottom to top).
pub fn encode_pfm(img: &Image) -> Result<Vec<u8>> {
    let tag = match img.channels {
        1 => "Pf",
        3 => "PF",
        c => {
            return Err(Error::InvalidArgument(format!(
                "PFM holds 1 or 3 channels, image has {c}"
            )))
        }
    };
    let mut out = format!("{tag}\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    out.reserve(img.data.len() * 4);
    let row = img.width * img.channels;
    for y in (0..img.height).rev() {
        for v in &img.data[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Decodes PFM; both byte orders are accepted (sign of the scale field).
pub fn decode_pfm(path: &Path, bytes: &[u8]) -> Result<Image> {
    // The scale token is followed by exactly one whitespace byte.
    let mut pos = 0;
    let mut token = || -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(pfm_err(path, "truncated header"));
        }
        let t = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        Ok(t)
    };
    let tag = token()?;
    let channels = match tag.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(pfm_err(path, format!("bad magic {other:?}"))),
    };
    let width: usize = token()?
        .parse()
        .map_err(|_| pfm_err(path, "bad width"))?;
    let height: usize = token()?
        .parse()
        .map_err(|_| pfm_err(path, "bad height"))?;
    let scale: f64 = token()?
        .parse()
        .map_err(|_| pfm_err(path, "bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(pfm_err(path, "scale must be nonzero"));
    }
    let little = scale < 0.0;
    let raster = bytes.get(pos + 1..).unwrap_or(&[]);
    let n = width * height * channels;
    if raster.len() != n * 4 {
        return Err(pfm_err(
            path,
            format!("expected {} raster bytes, found {}", n * 4, raster.len()),
        ));
    }
    let mut data = vec![0f32; n];
    let row = width * channels;
    for (r, chunk) in raster.chunks_exact(row * 4).enumerate() {
        let y = height - 1 - r;
        for (i, b) in chunk.chunks_exact(4).enumerate() {
            let b = [b[0], b[1], b[2], b[3]];
            data[y * row + i] = if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
        }
    }
    Image::from_vec(width, height, channels, data)
}

pub fn write_pfm(path: &Path, img: &Image) -> Result<()> {
    let bytes = encode_pfm(img)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_pfm(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(path, &bytes)
}

/// 8-bit preview; values are clamped to [0, 1] and rounded.
pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    let color = match img.channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => {
            return Err(Error::InvalidArgument(format!(
                "PNG preview needs 1 or 3 channels, image has {c}"
            )))
        }
    };
    let bytes: Vec<u8> = img
        .data
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    {
        let mut enc = png::Encoder::new(&mut w, img.width as u32, img.height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| png_err(path, e))?;
        writer
            .write_image_data(&bytes)
            .map_err(|e| png_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn png_err(path: &Path, e: png::EncodingError) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        what: "PNG",
        detail: e.to_string(),
    }
}
