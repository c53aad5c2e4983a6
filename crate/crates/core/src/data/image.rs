use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit RGB image, row-major, channels interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

/// Crop rectangle in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(Error::Image {
                path: "<memory>".into(),
                message: format!("{}x{} RGB needs {} bytes, got {}", width, height, 3 * width * height, data.len()),
            });
        }
        Ok(Image { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(3 * width * height).collect();
        Image { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Binary PPM (P6, maxval 255).
    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn decode_ppm(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err("truncated PPM header".into());
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if fields[0] != "P6" {
            return Err(format!("unsupported magic {:?} (expected P6)", fields[0]));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad header value {s:?}"));
        let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if maxval != 255 {
            return Err(format!("unsupported maxval {maxval} (expected 255)"));
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let need = 3 * w * h;
        let raster = bytes.get(pos..pos + need).ok_or_else(|| {
            format!("raster truncated: need {need} bytes, have {}", bytes.len().saturating_sub(pos))
        })?;
        Ok(Image {
            width: w,
            height: h,
            data: raster.to_vec(),
        })
    }

    pub fn read_ppm(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_ppm(&bytes).map_err(|message| Error::Image {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.encode_ppm()).map_err(|e| Error::io(path, e))
    }

    /// Sub-image; the box must lie inside the frame.
    pub fn crop(&self, b: BBox) -> Result<Image> {
        if b.w == 0 || b.h == 0 || b.x + b.w > self.width || b.y + b.h > self.height {
            return Err(Error::Geometry(format!(
                "crop box {b:?} outside {}x{} image",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(3 * b.w * b.h);
        for y in b.y..b.y + b.h {
            let start = 3 * (y * self.width + b.x);
            data.extend_from_slice(&self.data[start..start + 3 * b.w]);
        }
        Ok(Image {
            width: b.w,
            height: b.h,
            data,
        })
    }

    /// Bilinear resampling with half-pixel centers and edge clamping.
    pub fn resize(&self, out_w: usize, out_h: usize) -> Image {
        if out_w == self.width && out_h == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / out_w as f64;
        let sy = self.height as f64 / out_h as f64;
        let coord = |o: usize, scale: f64, limit: usize| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (limit - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(limit - 1);
            (lo, hi, src - lo as f64)
        };
        let mut data = Vec::with_capacity(3 * out_w * out_h);
        for oy in 0..out_h {
            let (y0, y1, fy) = coord(oy, sy, self.height);
            for ox in 0..out_w {
                let (x0, x1, fx) = coord(ox, sx, self.width);
                for c in 0..3 {
                    let at = |x: usize, y: usize| self.data[3 * (y * self.width + x) + c] as f64;
                    let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
                    let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
                    data.push((top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        Image {
            width: out_w,
            height: out_h,
            data,
        }
    }

    pub fn flip_horizontal(&self) -> Image {
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in (0..self.width).rev() {
                data.extend_from_slice(&self.pixel(x, y));
            }
        }
        Image {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// Crop to `bbox` (whole frame when absent), then resize to `out_size` square.
pub fn crop_and_resize(image: &Image, bbox: Option<BBox>, out_size: usize) -> Result<Image> {
    let cropped = match bbox {
        Some(b) => image.crop(b)?,
        None => image.clone(),
    };
    Ok(cropped.resize(out_size, out_size))
}
