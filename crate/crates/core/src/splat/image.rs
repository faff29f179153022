//! Planar-interleaved float images and their file formats.
//!
//! PPM: `P6\n{w} {h}\n255\n` followed by `w*h*3` bytes, rows top to bottom,
//! each value `round(clamp(v, 0, 1) * 255)`. Single-channel images are
//! written as grey (the value repeated in R, G and B).
//!
//! PFM: `PF\n{w} {h}\n-1.0\n` (or `Pf` for one channel) followed by
//! little-endian `f32` samples, rows bottom to top.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, v: f64) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![v; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} samples for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        (self.width, self.height, self.channels) == (other.width, other.height, other.channels)
    }

    pub fn check_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    /// One channel as its own image.
    pub fn channel(&self, c: usize) -> Image {
        Image::from_fn(self.width, self.height, 1, |x, y, _| self.get(x, y, c))
    }

    /// Round every sample through `f32`, as stored in PFM files.
    pub fn quantized_f32(&self) -> Image {
        Image {
            data: self.data.iter().map(|&v| v as f32 as f64).collect(),
            ..self.clone()
        }
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for px in self.data.chunks(self.channels) {
            for c in 0..3 {
                let v = if self.channels == 1 { px[0] } else { px[c.min(self.channels - 1)] };
                out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Self> {
        let (fields, body) = header(bytes, 4, "PPM")?;
        if fields[0] != "P6" || fields[3] != "255" {
            return Err(Error::format("PPM", format!("unsupported header {fields:?}")));
        }
        let (w, h) = dims(&fields, "PPM")?;
        if body.len() != w * h * 3 {
            return Err(Error::format("PPM", format!("expected {} bytes, got {}", w * h * 3, body.len())));
        }
        Ok(Image {
            width: w,
            height: h,
            channels: 3,
            data: body.iter().map(|&b| b as f64 / 255.0).collect(),
        })
    }

    pub fn to_pfm(&self) -> Result<Vec<u8>> {
        let tag = match self.channels {
            1 => "Pf",
            3 => "PF",
            c => return Err(Error::format("PFM", format!("{c} channels"))),
        };
        let mut out = format!("{tag}\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        let row = self.width * self.channels;
        for y in (0..self.height).rev() {
            for &v in &self.data[y * row..(y + 1) * row] {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_pfm(bytes: &[u8]) -> Result<Self> {
        let (fields, body) = header(bytes, 4, "PFM")?;
        let channels = match fields[0].as_str() {
            "PF" => 3,
            "Pf" => 1,
            other => return Err(Error::format("PFM", format!("unknown tag `{other}`"))),
        };
        let (w, h) = dims(&fields, "PFM")?;
        let scale: f64 = fields[3]
            .parse()
            .map_err(|_| Error::format("PFM", format!("bad scale `{}`", fields[3])))?;
        if scale >= 0.0 {
            return Err(Error::format("PFM", "big-endian data is not supported"));
        }
        let row = w * channels;
        if body.len() != 4 * row * h {
            return Err(Error::format("PFM", format!("expected {} bytes, got {}", 4 * row * h, body.len())));
        }
        let mut data = vec![0.0; row * h];
        for (k, chunk) in body.chunks_exact(4).enumerate() {
            let (fy, i) = (k / row, k % row);
            let y = h - 1 - fy;
            data[y * row + i] = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64;
        }
        Ok(Image {
            width: w,
            height: h,
            channels,
            data,
        })
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_ppm())
    }

    pub fn write_pfm(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_pfm()?)
    }

    pub fn read_pfm(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pfm(&bytes)
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

// Splits `n` whitespace-separated header tokens off the front; exactly one
// whitespace byte separates the last token from the payload.
fn header<'a>(bytes: &'a [u8], n: usize, what: &'static str) -> Result<(Vec<String>, &'a [u8])> {
    let mut fields = Vec::with_capacity(n);
    let mut i = 0;
    while fields.len() < n {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(Error::format(what, "truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if i >= bytes.len() {
        return Err(Error::format(what, "missing payload"));
    }
    Ok((fields, &bytes[i + 1..]))
}

fn dims(fields: &[String], what: &'static str) -> Result<(usize, usize)> {
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::format(what, format!("bad dimension `{s}`")))
    };
    Ok((parse(&fields[1])?, parse(&fields[2])?))
}
