//! Image decoding and the fixed preprocessing pipeline feeding feature
//! extraction: bilinear resize to 128x128, BT.601 luma/chroma conversion,
//! and a 5x5 Gaussian low-pass (sigma = 1) per plane.
//!
//! All operations are pure functions on immutable inputs and are safe to
//! call concurrently.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Side length of the preprocessed planes.
pub const PLANE_DIM: usize = 128;

/// An 8-bit RGB image, row-major, no padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RasterImage {
    /// Builds an image from raw RGB samples. Panics if `data` does not hold
    /// exactly `width * height * 3` bytes or a dimension is zero.
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Self {
        assert!(width >= 1 && height >= 1, "empty image");
        assert_eq!(
            data.len(),
            width as usize * height as usize * 3,
            "data length must be width * height * 3"
        );
        Self {
            width,
            height,
            data,
        }
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub(crate) fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// One 128x128 plane of real-valued samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    data: Vec<f64>,
}

impl Plane {
    pub fn from_vec(data: Vec<f64>) -> Self {
        assert_eq!(data.len(), PLANE_DIM * PLANE_DIM, "plane must be 128x128");
        Self { data }
    }

    pub fn filled(value: f64) -> Self {
        Self {
            data: vec![value; PLANE_DIM * PLANE_DIM],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * PLANE_DIM + x]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Luminance plus two chrominance planes, each 128x128, nominal range [0, 255].
#[derive(Debug, Clone)]
pub struct PlanarYCbCr {
    pub y: Plane,
    pub cb: Plane,
    pub cr: Plane,
}

/// Input formats accepted by [`decode_image`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    Jpeg,
}

/// Identifies PNG or JPEG from the stream's magic bytes.
pub fn sniff_format(bytes: &[u8]) -> Result<ImageFormat> {
    if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        Ok(ImageFormat::Png)
    } else if bytes.starts_with(&[0xFF, 0xD8]) {
        Ok(ImageFormat::Jpeg)
    } else {
        Err(Error::Decode("not a PNG or JPEG stream".into()))
    }
}

/// Decodes a PNG or JPEG stream to 8-bit RGB. Grayscale and paletted inputs
/// are expanded to RGB; alpha is discarded. 16-bit and float color modes are
/// rejected.
pub fn decode_image(bytes: &[u8], format: ImageFormat) -> Result<RasterImage> {
    let fmt = match format {
        ImageFormat::Png => image::ImageFormat::Png,
        ImageFormat::Jpeg => image::ImageFormat::Jpeg,
    };
    let dynimg = image::load_from_memory_with_format(bytes, fmt)
        .map_err(|e| Error::Decode(e.to_string()))?;
    use image::DynamicImage::*;
    let rgb = match dynimg {
        ImageLuma8(_) | ImageLumaA8(_) | ImageRgb8(_) | ImageRgba8(_) => dynimg.to_rgb8(),
        other => {
            return Err(Error::Decode(format!(
                "unsupported color mode {:?}",
                other.color()
            )))
        }
    };
    let (w, h) = (rgb.width(), rgb.height());
    if w == 0 || h == 0 {
        return Err(Error::Decode("empty image".into()));
    }
    Ok(RasterImage::new(w, h, rgb.into_raw()))
}

/// Reads and decodes a PNG or JPEG file, sniffing the format from content.
pub fn decode_file(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
    let format = sniff_format(&bytes)?;
    decode_image(&bytes, format)
}

/// Bilinear resample with half-pixel-centered sampling and edge clamping.
/// Output samples are rounded to nearest, ties away from zero.
pub fn resize_bilinear(img: &RasterImage, target_w: u32, target_h: u32) -> RasterImage {
    assert!(target_w >= 1 && target_h >= 1, "empty target");
    let (w, h) = (img.width() as usize, img.height() as usize);
    let scale_x = w as f64 / target_w as f64;
    let scale_y = h as f64 / target_h as f64;
    let src = img.data();

    let mut out = Vec::with_capacity(target_w as usize * target_h as usize * 3);
    for ty in 0..target_h as usize {
        let sy = ((ty as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for tx in 0..target_w as usize {
            let sx = ((tx as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            let i00 = (y0 * w + x0) * 3;
            let i10 = (y0 * w + x1) * 3;
            let i01 = (y1 * w + x0) * 3;
            let i11 = (y1 * w + x1) * 3;
            for c in 0..3 {
                let top = src[i00 + c] as f64 + fx * (src[i10 + c] as f64 - src[i00 + c] as f64);
                let bot = src[i01 + c] as f64 + fx * (src[i11 + c] as f64 - src[i01 + c] as f64);
                let v = top + fy * (bot - top);
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RasterImage::new(target_w, target_h, out)
}

/// BT.601 full-range conversion of a 128x128 RGB image to real-valued planes.
pub fn to_ycbcr(img: &RasterImage) -> PlanarYCbCr {
    assert_eq!(img.width() as usize, PLANE_DIM, "input must be 128x128");
    assert_eq!(img.height() as usize, PLANE_DIM, "input must be 128x128");
    let n = PLANE_DIM * PLANE_DIM;
    let mut y = Vec::with_capacity(n);
    let mut cb = Vec::with_capacity(n);
    let mut cr = Vec::with_capacity(n);
    for px in img.data().chunks_exact(3) {
        let (r, g, b) = (px[0] as f64, px[1] as f64, px[2] as f64);
        let luma = 0.299 * r + 0.587 * g + 0.114 * b;
        y.push(luma);
        cb.push(128.0 + (b - luma) * 0.564);
        cr.push(128.0 + (r - luma) * 0.713);
    }
    PlanarYCbCr {
        y: Plane::from_vec(y),
        cb: Plane::from_vec(cb),
        cr: Plane::from_vec(cr),
    }
}

/// The 1-D kernel: sampled Gaussian (sigma = 1) at offsets -2..2, normalized
/// to sum to exactly 1.
pub(crate) fn gaussian_kernel() -> [f64; 5] {
    let g1 = (-0.5f64).exp();
    let g2 = (-2.0f64).exp();
    let total = 1.0 + 2.0 * g1 + 2.0 * g2;
    let w1 = g1 / total;
    let w2 = g2 / total;
    [w2, w1, 1.0 - 2.0 * w1 - 2.0 * w2, w1, w2]
}

// One separable pass in moment form: out = p + w1*(dl1 + dr1) + w2*(dl2 + dr2)
// where d* are differences against the center sample. Constant inputs pass
// through bit-exactly. `stride`/`step` select row or column direction.
fn gaussian_pass(src: &[f64], dst: &mut [f64], along_rows: bool) {
    let [w2, w1, ..] = gaussian_kernel();
    let n = PLANE_DIM;
    let idx = |major: usize, minor: usize| -> usize {
        if along_rows {
            major * n + minor
        } else {
            minor * n + major
        }
    };
    for major in 0..n {
        for minor in 0..n {
            let at = |m: isize| -> f64 {
                let m = m.clamp(0, n as isize - 1) as usize;
                src[idx(major, m)]
            };
            let c = at(minor as isize);
            let d1 = (at(minor as isize - 1) - c) + (at(minor as isize + 1) - c);
            let d2 = (at(minor as isize - 2) - c) + (at(minor as isize + 2) - c);
            dst[idx(major, minor)] = c + w1 * d1 + w2 * d2;
        }
    }
}

/// Separable 5x5 Gaussian low-pass (sigma = 1) with edge replication.
pub fn gaussian5x5(plane: &Plane) -> Plane {
    let mut tmp = vec![0.0; PLANE_DIM * PLANE_DIM];
    let mut out = vec![0.0; PLANE_DIM * PLANE_DIM];
    gaussian_pass(plane.data(), &mut tmp, true);
    gaussian_pass(&tmp, &mut out, false);
    Plane::from_vec(out)
}

/// Full preprocessing: resize to 128x128, convert to YCbCr, Gaussian-filter
/// each plane.
pub fn preprocess(img: &RasterImage) -> PlanarYCbCr {
    let resized = if img.width() as usize == PLANE_DIM && img.height() as usize == PLANE_DIM {
        img.clone()
    } else {
        resize_bilinear(img, PLANE_DIM as u32, PLANE_DIM as u32)
    };
    let planes = to_ycbcr(&resized);
    PlanarYCbCr {
        y: gaussian5x5(&planes.y),
        cb: gaussian5x5(&planes.cb),
        cr: gaussian5x5(&planes.cr),
    }
}
