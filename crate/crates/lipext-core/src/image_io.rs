//! Image and mask I/O for the inpainting pipeline.
//!
//! Images are held as row-major, channel-interleaved `f64` samples in
//! [0, 1]; files are 8- or 16-bit PNG, or binary PPM/PGM. Masks are
//! grayscale images where zero marks an unknown pixel and anything
//! nonzero marks a known one.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("unsupported image format or color type: {0}")]
    UnsupportedFormat(String),
    #[error("could not read {path}: {detail}")]
    CorruptFile { path: String, detail: String },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An image as flat floating-point samples in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    pub height: usize,
    pub width: usize,
    /// 1 (grayscale) or 3 (RGB).
    pub channels: usize,
    /// Row-major, channel-interleaved; length `height * width * channels`.
    pub data: Vec<f64>,
}

impl RawImage {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), height * width * channels);
        RawImage {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let base = (row * self.width + col) * self.channels;
        &self.data[base..base + self.channels]
    }
}

fn open(path: &Path) -> Result<DynamicImage, ImageIoError> {
    image::open(path).map_err(|e| match e {
        image::ImageError::Unsupported(u) => ImageIoError::UnsupportedFormat(u.to_string()),
        other => ImageIoError::CorruptFile {
            path: path.display().to_string(),
            detail: other.to_string(),
        },
    })
}

/// Loads a grayscale or RGB image and scales the samples to [0, 1].
pub fn load_image<P: AsRef<Path>>(path: P) -> Result<RawImage, ImageIoError> {
    let path = path.as_ref();
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, data): (usize, Vec<f64>) = match img {
        DynamicImage::ImageLuma8(buf) => {
            (1, buf.into_raw().iter().map(|&v| v as f64 / 255.0).collect())
        }
        DynamicImage::ImageLuma16(buf) => (
            1,
            buf.into_raw().iter().map(|&v| v as f64 / 65535.0).collect(),
        ),
        DynamicImage::ImageRgb8(buf) => {
            (3, buf.into_raw().iter().map(|&v| v as f64 / 255.0).collect())
        }
        DynamicImage::ImageRgb16(buf) => (
            3,
            buf.into_raw().iter().map(|&v| v as f64 / 65535.0).collect(),
        ),
        other => {
            return Err(ImageIoError::UnsupportedFormat(format!(
                "color type {:?} (use 8/16-bit grayscale or RGB)",
                other.color()
            )))
        }
    };
    Ok(RawImage::new(h, w, channels, data))
}

fn quantize(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round_ties_even() as u8
}

/// Saves to PNG or binary PPM/PGM (by extension), clamping to [0, 1] and
/// rounding samples half-to-even; 0.5 maps to 128.
pub fn save_image<P: AsRef<Path>>(path: P, img: &RawImage) -> Result<(), ImageIoError> {
    let path = path.as_ref();
    let w = img.width as u32;
    let h = img.height as u32;
    let bytes: Vec<u8> = img.data.iter().map(|&x| quantize(x)).collect();
    let result = match img.channels {
        1 => ImageBuffer::<Luma<u8>, _>::from_raw(w, h, bytes)
            .expect("buffer length checked by construction")
            .save(path),
        3 => ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, bytes)
            .expect("buffer length checked by construction")
            .save(path),
        c => return Err(ImageIoError::UnsupportedFormat(format!("{c} channels"))),
    };
    result.map_err(|e| match e {
        image::ImageError::Unsupported(u) => ImageIoError::UnsupportedFormat(u.to_string()),
        image::ImageError::IoError(io) => ImageIoError::Io(io),
        other => ImageIoError::CorruptFile {
            path: path.display().to_string(),
            detail: other.to_string(),
        },
    })
}

/// Loads a mask image: zero-valued pixels are unknown, anything nonzero is
/// known. The mask must match the given image dimensions.
pub fn load_mask<P: AsRef<Path>>(
    path: P,
    height: usize,
    width: usize,
) -> Result<Vec<bool>, ImageIoError> {
    let path = path.as_ref();
    let gray = open(path)?.into_luma16();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    if (h, w) != (height, width) {
        return Err(ImageIoError::ShapeMismatch {
            expected: format!("{height}x{width}"),
            got: format!("{h}x{w}"),
        });
    }
    Ok(gray.into_raw().iter().map(|&v| v != 0).collect())
}

/// Saves a boolean mask as a PGM/PNG grayscale image (255 = known).
pub fn save_mask<P: AsRef<Path>>(
    path: P,
    mask: &[bool],
    height: usize,
    width: usize,
) -> Result<(), ImageIoError> {
    let data: Vec<f64> = mask.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect();
    save_image(path, &RawImage::new(height, width, 1, data))
}

/// Peak signal-to-noise ratio in dB with peak 1.0; infinite for identical
/// images.
pub fn psnr(a: &RawImage, b: &RawImage) -> Result<f64, ImageIoError> {
    if (a.height, a.width, a.channels) != (b.height, b.width, b.channels) {
        return Err(ImageIoError::ShapeMismatch {
            expected: format!("{}x{}x{}", a.height, a.width, a.channels),
            got: format!("{}x{}x{}", b.height, b.width, b.channels),
        });
    }
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data.len() as f64;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (1.0 / mse).log10())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("lipext-image-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn checker(h: usize, w: usize, c: usize) -> RawImage {
        let mut data = Vec::with_capacity(h * w * c);
        for i in 0..h {
            for j in 0..w {
                for k in 0..c {
                    let v = ((i + j + k) % 5) as f64 / 4.0;
                    data.push(v);
                }
            }
        }
        RawImage::new(h, w, c, data)
    }

    #[test]
    fn png_round_trip_rgb() {
        let img = checker(7, 9, 3);
        let path = tmp("rt.png");
        save_image(&path, &img).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!((back.height, back.width, back.channels), (7, 9, 3));
        for (a, b) in img.data.iter().zip(&back.data) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn pnm_round_trip_gray_and_rgb() {
        let gray = checker(5, 4, 1);
        let p = tmp("rt.pgm");
        save_image(&p, &gray).unwrap();
        let back = load_image(&p).unwrap();
        assert_eq!(back.channels, 1);
        assert_eq!((back.height, back.width), (5, 4));

        let rgb = checker(4, 6, 3);
        let p = tmp("rt.ppm");
        save_image(&p, &rgb).unwrap();
        let back = load_image(&p).unwrap();
        assert_eq!(back.channels, 3);
    }

    #[test]
    fn quantization_is_half_to_even() {
        assert_eq!(quantize(0.5), 128); // 127.5 rounds to the even side
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(1.5), 255); // clamped
        assert_eq!(quantize(-0.25), 0);
    }

    #[test]
    fn psnr_reference_values() {
        let a = RawImage::new(2, 2, 1, vec![0.5; 4]);
        let mut b = a.clone();
        assert_eq!(psnr(&a, &b).unwrap(), f64::INFINITY);

        for v in &mut b.data {
            *v += 0.1;
        }
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);

        let zero = RawImage::new(2, 2, 1, vec![0.0; 4]);
        let one = RawImage::new(2, 2, 1, vec![1.0; 4]);
        assert!((psnr(&zero, &one).unwrap() - 0.0).abs() < 1e-12);

        let other = RawImage::new(2, 2, 3, vec![0.0; 12]);
        assert!(matches!(
            psnr(&a, &other),
            Err(ImageIoError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn mask_round_trip_and_shape_check() {
        let mask = vec![true, false, true, false, false, true];
        let p = tmp("mask.pgm");
        save_mask(&p, &mask, 2, 3).unwrap();
        let back = load_mask(&p, 2, 3).unwrap();
        assert_eq!(back, mask);
        assert!(matches!(
            load_mask(&p, 3, 2),
            Err(ImageIoError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn missing_file_is_reported() {
        let err = load_image(tmp("nope-does-not-exist.png")).unwrap_err();
        assert!(matches!(err, ImageIoError::CorruptFile { .. }));
    }
}
