//! Image I/O, float conversion, dataset listing, and quality metrics.
//!
//! Images live in two forms: [`ImageBuffer`] is the 8-bit RGB artifact that
//! gets stored and transmitted, [`ImageTensor`] is its channel-major float
//! form in `[0, 1]` that the networks consume. Metrics (PSNR, SSIM) are
//! always computed on 8-bit buffers because that is what actually crosses
//! the channel.

use crate::rng::SplitMix64;
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to decode {path}: {source}")]
    Decode {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("failed to encode {path}: {source}")]
    Encode {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("target size must be nonzero")]
    ZeroTarget,
    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("image {0}x{1} is smaller than the {2}x{2} SSIM window")]
    SmallerThanWindow(usize, usize, usize),
    #[error("tensor contains a non-finite value")]
    NonFinite,
    #[error("no decodable images in {0}")]
    EmptyDirectory(PathBuf),
    #[error("tensor data length {0} does not match shape 3x{1}x{2}")]
    BadTensorLength(usize, usize, usize),
}

/// 8-bit RGB image, row-major interleaved: `data[(y*width + x)*3 + c]`.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl fmt::Debug for ImageBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ImageBuffer({}x{})", self.width, self.height)
    }
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width * height * 3);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn constant(width: usize, height: usize, value: u8) -> Self {
        Self::new(width, height, vec![value; width * height * 3])
    }
}

/// Channel-major float image, shape `(3, height, width)`, nominal `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self, ImagingError> {
        if data.len() != 3 * height * width {
            return Err(ImagingError::BadTensorLength(data.len(), height, width));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }
}

/// `v/255` per channel value, interleaved bytes to channel-major floats.
pub fn to_tensor(img: &ImageBuffer) -> ImageTensor {
    let (w, h) = (img.width, img.height);
    let mut data = vec![0.0f32; 3 * h * w];
    for c in 0..3 {
        let plane = &mut data[c * h * w..(c + 1) * h * w];
        for (i, px) in plane.iter_mut().enumerate() {
            *px = img.data[i * 3 + c] as f32 / 255.0;
        }
    }
    ImageTensor {
        height: h,
        width: w,
        data,
    }
}

/// Clamp to `[0, 1]`, then quantize with round-half-up to `v*255`.
pub fn from_tensor(t: &ImageTensor) -> Result<ImageBuffer, ImagingError> {
    if t.data.iter().any(|v| !v.is_finite()) {
        return Err(ImagingError::NonFinite);
    }
    let (w, h) = (t.width, t.height);
    let mut data = vec![0u8; w * h * 3];
    for c in 0..3 {
        let plane = &t.data[c * h * w..(c + 1) * h * w];
        for (i, &v) in plane.iter().enumerate() {
            data[i * 3 + c] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    Ok(ImageBuffer::new(w, h, data))
}

/// Load an image file as 8-bit RGB (grayscale is promoted by channel copy)
/// and bilinearly resize it to `target` = (height, width).
pub fn load_image(path: &Path, target: (usize, usize)) -> Result<ImageBuffer, ImagingError> {
    let img = load_image_native(path)?;
    resize_bilinear(&img, target)
}

/// Load at native size, no resampling.
pub fn load_image_native(path: &Path) -> Result<ImageBuffer, ImagingError> {
    let bytes = std::fs::read(path).map_err(|source| ImagingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let decoded = image::load_from_memory(&bytes).map_err(|source| ImagingError::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    let rgb = decoded.into_rgb8();
    Ok(ImageBuffer::new(
        rgb.width() as usize,
        rgb.height() as usize,
        rgb.into_raw(),
    ))
}

pub fn save_image(path: &Path, img: &ImageBuffer) -> Result<(), ImagingError> {
    let buf: image::RgbImage =
        image::ImageBuffer::from_raw(img.width as u32, img.height as u32, img.data.clone())
            .expect("buffer length matches dimensions");
    buf.save(path).map_err(|source| ImagingError::Encode {
        path: path.to_path_buf(),
        source,
    })
}

/// Bilinear resample with the pixel-center convention
/// `src = (dst + 0.5) * scale - 0.5`. Same-size input is returned unchanged.
pub fn resize_bilinear(
    img: &ImageBuffer,
    target: (usize, usize),
) -> Result<ImageBuffer, ImagingError> {
    let (th, tw) = target;
    if th == 0 || tw == 0 {
        return Err(ImagingError::ZeroTarget);
    }
    if th == img.height && tw == img.width {
        return Ok(img.clone());
    }
    let sx = img.width as f64 / tw as f64;
    let sy = img.height as f64 / th as f64;
    let mut data = vec![0u8; tw * th * 3];
    for y in 0..th {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (img.height - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let wy = fy - y0 as f64;
        for x in 0..tw {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (img.width - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            let wx = fx - x0 as f64;
            for c in 0..3 {
                let p = |xx: usize, yy: usize| img.data[(yy * img.width + xx) * 3 + c] as f64;
                let top = p(x0, y0) * (1.0 - wx) + p(x1, y0) * wx;
                let bot = p(x0, y1) * (1.0 - wx) + p(x1, y1) * wx;
                let v = top * (1.0 - wy) + bot * wy;
                data[(y * tw + x) * 3 + c] = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(ImageBuffer::new(tw, th, data))
}

/// `10*log10(255^2 / MSE)` over all channel values; infinite when equal.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, ImagingError> {
    if a.width != b.width || a.height != b.height {
        return Err(ImagingError::DimensionMismatch(
            a.width, a.height, b.width, b.height,
        ));
    }
    let sq_sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    let mse = sq_sum / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

pub const SSIM_WINDOW: usize = 11;

/// Standard SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
/// L=255, valid-window map averaged per channel, channels averaged.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, ImagingError> {
    if a.width != b.width || a.height != b.height {
        return Err(ImagingError::DimensionMismatch(
            a.width, a.height, b.width, b.height,
        ));
    }
    let (w, h) = (a.width, a.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(ImagingError::SmallerThanWindow(w, h, SSIM_WINDOW));
    }

    let kernel = gaussian_kernel(SSIM_WINDOW, 1.5);
    const L: f64 = 255.0;
    let c1 = (0.01 * L) * (0.01 * L);
    let c2 = (0.03 * L) * (0.03 * L);

    let mut channel_means = [0.0f64; 3];
    for (c, mean_slot) in channel_means.iter_mut().enumerate() {
        let mut acc = 0.0f64;
        let mut count = 0usize;
        for wy in 0..=(h - SSIM_WINDOW) {
            for wx in 0..=(w - SSIM_WINDOW) {
                let (mut mx, mut my) = (0.0f64, 0.0f64);
                let (mut sxx, mut syy, mut sxy) = (0.0f64, 0.0f64, 0.0f64);
                for ky in 0..SSIM_WINDOW {
                    for kx in 0..SSIM_WINDOW {
                        let g = kernel[ky * SSIM_WINDOW + kx];
                        let idx = ((wy + ky) * w + (wx + kx)) * 3 + c;
                        let x = a.data[idx] as f64;
                        let y = b.data[idx] as f64;
                        mx += g * x;
                        my += g * y;
                        sxx += g * x * x;
                        syy += g * y * y;
                        sxy += g * x * y;
                    }
                }
                let vx = sxx - mx * mx;
                let vy = syy - my * my;
                let cov = sxy - mx * my;
                let s = ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                acc += s;
                count += 1;
            }
        }
        *mean_slot = acc / count as f64;
    }
    Ok((channel_means[0] + channel_means[1] + channel_means[2]) / 3.0)
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let mut k = vec![0.0f64; size * size];
    let mut sum = 0.0;
    for y in 0..size {
        for x in 0..size {
            let dx = x as f64 - half;
            let dy = y as f64 - half;
            let v = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            k[y * size + x] = v;
            sum += v;
        }
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Ordered view of a directory of images, resized on load.
#[derive(Clone, Debug)]
pub struct DatasetHandle {
    pub root: PathBuf,
    pub files: Vec<String>,
    pub target: (usize, usize),
}

impl DatasetHandle {
    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn path(&self, index: usize) -> PathBuf {
        self.root.join(&self.files[index])
    }

    pub fn load(&self, index: usize) -> Result<ImageBuffer, ImagingError> {
        load_image(&self.path(index), self.target)
    }

    /// Eagerly load every image in listing order.
    pub fn load_all(&self) -> Result<Vec<ImageBuffer>, ImagingError> {
        (0..self.len()).map(|i| self.load(i)).collect()
    }
}

/// List the PNG files of `dir` in lexicographic file-name order.
pub fn list_dataset(dir: &Path, target: (usize, usize)) -> Result<DatasetHandle, ImagingError> {
    if target.0 == 0 || target.1 == 0 {
        return Err(ImagingError::ZeroTarget);
    }
    let entries = std::fs::read_dir(dir).map_err(|source| ImagingError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|name| {
            let lower = name.to_ascii_lowercase();
            lower.ends_with(".png")
        })
        .collect();
    files.sort_unstable();
    if files.is_empty() {
        return Err(ImagingError::EmptyDirectory(dir.to_path_buf()));
    }
    Ok(DatasetHandle {
        root: dir.to_path_buf(),
        files,
        target,
    })
}

/// A quick procedural cover for demos and tests.
pub fn procedural_cover(size: usize, seed: u64) -> ImageBuffer {
    crate::corpus::generate_image(&mut SplitMix64::new(seed), size)
}
