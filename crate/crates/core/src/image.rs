//! Float image buffers and 8-bit image I/O.

use std::path::Path;

use ::image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use crate::{Error, Result};

/// A decoded image with pixels normalized to `[0, 1]`.
///
/// Pixels are stored row-major with channels interleaved, i.e. index
/// `(row * width + col) * channels + channel`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    channels: usize,
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(channels: usize, height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!(
                "empty image {width}x{height}"
            )));
        }
        if pixels.len() != channels * height * width {
            return Err(Error::InvalidImage(format!(
                "expected {} pixel values, got {}",
                channels * height * width,
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidImage(format!(
                "pixel value {p} outside [0, 1]"
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            pixels,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(
            channels,
            height,
            width,
            vec![value; channels * height * width],
        )
    }

    /// Builds a buffer from already-clamped data produced inside this crate.
    pub(crate) fn from_parts(channels: usize, height: usize, width: usize, pixels: Vec<f32>) -> Self {
        debug_assert_eq!(pixels.len(), channels * height * width);
        debug_assert!(pixels.iter().all(|p| (0.0..=1.0).contains(p)));
        Self {
            channels,
            height,
            width,
            pixels,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.pixels
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.pixels[(row * self.width + col) * self.channels + channel]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.pixels
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &p| {
                (lo.min(p), hi.max(p))
            })
    }

    pub fn from_dynamic(img: &DynamicImage) -> Self {
        let has_color = img.color().has_color();
        if has_color {
            let rgb = img.to_rgb8();
            let (w, h) = rgb.dimensions();
            let pixels = rgb.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
            Self::from_parts(3, h as usize, w as usize, pixels)
        } else {
            let gray = img.to_luma8();
            let (w, h) = gray.dimensions();
            let pixels = gray.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
            Self::from_parts(1, h as usize, w as usize, pixels)
        }
    }

    /// Decodes an 8-bit PNG or JPEG. Grayscale files stay single-channel; any
    /// alpha channel is dropped.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = ::image::open(path).map_err(|source| Error::Codec {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_dynamic(&img))
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let img = ::image::load_from_memory(bytes).map_err(|source| Error::Codec {
            path: "<memory>".into(),
            source,
        })?;
        Ok(Self::from_dynamic(&img))
    }

    /// Quantizes to 8 bits with `round(p * 255)`.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&p| quantize(p)).collect()
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        let (w, h) = (self.width as u32, self.height as u32);
        let raw = self.to_u8();
        if self.channels == 1 {
            DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, raw).expect("buffer size"))
        } else {
            DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, raw).expect("buffer size"))
        }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_dynamic()
            .save_with_format(path, ImageFormat::Png)
            .map_err(|source| Error::Codec {
                path: path.to_path_buf(),
                source,
            })
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = std::io::Cursor::new(Vec::new());
        self.to_dynamic()
            .write_to(&mut out, ImageFormat::Png)
            .expect("png encoding into memory");
        out.into_inner()
    }

    /// Converts between grayscale and RGB. Gray to RGB replicates the channel;
    /// RGB to gray uses the 0.299/0.587/0.114 luma weights.
    pub fn with_channels(&self, channels: usize) -> Result<Self> {
        match (self.channels, channels) {
            (a, b) if a == b => Ok(self.clone()),
            (1, 3) => Ok(Self::from_parts(
                3,
                self.height,
                self.width,
                self.pixels.iter().flat_map(|&p| [p, p, p]).collect(),
            )),
            (3, 1) => Ok(Self::from_parts(
                1,
                self.height,
                self.width,
                self.pixels
                    .chunks_exact(3)
                    .map(|px| luma(px[0], px[1], px[2]).clamp(0.0, 1.0))
                    .collect(),
            )),
            (_, c) => Err(Error::InvalidImage(format!("unsupported channel count {c}"))),
        }
    }

    /// Bilinear resize with half-pixel centers and edge clamping. Returns a
    /// clone when the size already matches.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!(
                "cannot resize to {width}x{height}"
            )));
        }
        if height == self.height && width == self.width {
            return Ok(self.clone());
        }
        let c = self.channels;
        let sy = self.height as f32 / height as f32;
        let sx = self.width as f32 / width as f32;
        let mut out = Vec::with_capacity(c * height * width);
        for r in 0..height {
            let fy = ((r as f32 + 0.5) * sy - 0.5).max(0.0);
            let y0 = (fy.floor() as usize).min(self.height - 1);
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f32;
            for col in 0..width {
                let fx = ((col as f32 + 0.5) * sx - 0.5).max(0.0);
                let x0 = (fx.floor() as usize).min(self.width - 1);
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f32;
                for ch in 0..c {
                    let top = self.get(y0, x0, ch) * (1.0 - wx) + self.get(y0, x1, ch) * wx;
                    let bottom = self.get(y1, x0, ch) * (1.0 - wx) + self.get(y1, x1, ch) * wx;
                    out.push((top * (1.0 - wy) + bottom * wy).clamp(0.0, 1.0));
                }
            }
        }
        Ok(Self::from_parts(c, height, width, out))
    }

    /// Planar (CHW) copy of the pixel data.
    pub fn to_chw(&self) -> Vec<f32> {
        let plane = self.height * self.width;
        let mut out = vec![0.0; self.pixels.len()];
        for (i, px) in self.pixels.chunks_exact(self.channels).enumerate() {
            for (ch, &v) in px.iter().enumerate() {
                out[ch * plane + i] = v;
            }
        }
        out
    }

    pub fn from_chw(channels: usize, height: usize, width: usize, data: &[f32]) -> Result<Self> {
        let plane = height * width;
        if data.len() != channels * plane {
            return Err(Error::InvalidImage(format!(
                "expected {} planar values, got {}",
                channels * plane,
                data.len()
            )));
        }
        let mut pixels = Vec::with_capacity(data.len());
        for i in 0..plane {
            for ch in 0..channels {
                pixels.push(data[ch * plane + i]);
            }
        }
        Self::new(channels, height, width, pixels)
    }
}

pub(crate) fn luma(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

pub fn quantize(p: f32) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(ImageBuffer::new(2, 1, 1, vec![0.0, 0.0]).is_err());
        assert!(ImageBuffer::new(1, 0, 1, vec![]).is_err());
        assert!(ImageBuffer::new(1, 2, 2, vec![0.0; 3]).is_err());
        assert!(ImageBuffer::new(1, 1, 1, vec![1.5]).is_err());
        assert!(ImageBuffer::new(1, 1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn png_round_trip_is_exact_on_8bit_values() {
        let pixels: Vec<f32> = (0..48).map(|i| (i * 5) as f32 / 255.0).collect();
        let img = ImageBuffer::new(3, 4, 4, pixels).unwrap();
        let back = ImageBuffer::decode(&img.encode_png()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn chw_round_trip() {
        let pixels: Vec<f32> = (0..12).map(|i| i as f32 / 12.0).collect();
        let img = ImageBuffer::new(3, 2, 2, pixels).unwrap();
        let chw = img.to_chw();
        assert_eq!(&chw[..4], &[0.0, 3.0 / 12.0, 6.0 / 12.0, 9.0 / 12.0]);
        assert_eq!(ImageBuffer::from_chw(3, 2, 2, &chw).unwrap(), img);
    }

    #[test]
    fn resize_same_size_is_identity_and_constant_stays_constant() {
        let img = ImageBuffer::filled(1, 5, 7, 0.25).unwrap();
        assert_eq!(img.resize_bilinear(5, 7).unwrap(), img);
        let up = img.resize_bilinear(9, 3).unwrap();
        assert_eq!((up.height(), up.width()), (9, 3));
        assert!(up.pixels().iter().all(|&p| (p - 0.25).abs() < 1e-7));
    }

    #[test]
    fn channel_conversion() {
        let rgb = ImageBuffer::new(3, 1, 1, vec![1.0, 0.0, 0.0]).unwrap();
        let gray = rgb.with_channels(1).unwrap();
        assert!((gray.pixels()[0] - 0.299).abs() < 1e-7);
        let back = gray.with_channels(3).unwrap();
        assert_eq!(back.pixels(), &[gray.pixels()[0]; 3]);
    }
}
