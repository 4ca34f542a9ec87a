//! The five photometric transforms. Every output is clamped to `[0, 1]`.

use crate::image::luma;
use crate::{Error, ImageBuffer, Result};

fn check_factor(name: &str, factor: f32) -> Result<()> {
    if !factor.is_finite() || factor < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "{name} factor must be finite and >= 0, got {factor}"
        )));
    }
    Ok(())
}

fn map_pixels(img: &ImageBuffer, f: impl Fn(f32) -> f32) -> ImageBuffer {
    let pixels = img.pixels().iter().map(|&p| f(p).clamp(0.0, 1.0)).collect();
    ImageBuffer::from_parts(img.channels(), img.height(), img.width(), pixels)
}

/// `out = clamp(factor * in)`.
pub fn adjust_brightness(img: &ImageBuffer, factor: f32) -> Result<ImageBuffer> {
    check_factor("brightness", factor)?;
    Ok(map_pixels(img, |p| factor * p))
}

/// Mean luminance: plain mean for grayscale, mean of 0.299R + 0.587G + 0.114B
/// for RGB.
pub fn luma_mean(img: &ImageBuffer) -> f64 {
    if img.channels() == 1 {
        return img.mean();
    }
    let sum: f64 = img
        .pixels()
        .chunks_exact(3)
        .map(|px| luma(px[0], px[1], px[2]) as f64)
        .sum();
    sum / (img.height() * img.width()) as f64
}

/// Blends towards the luma mean: `out = clamp(factor * in + (1 - factor) * mean)`.
pub fn adjust_contrast(img: &ImageBuffer, factor: f32) -> Result<ImageBuffer> {
    check_factor("contrast", factor)?;
    let mean = luma_mean(img) as f32;
    Ok(map_pixels(img, |p| factor * p + (1.0 - factor) * mean))
}

/// `out = clamp(gain * in^gamma)`.
pub fn adjust_gamma(img: &ImageBuffer, gamma: f32, gain: f32) -> Result<ImageBuffer> {
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "gamma must be finite and > 0, got {gamma}"
        )));
    }
    if !gain.is_finite() || gain < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "gain must be finite and >= 0, got {gain}"
        )));
    }
    Ok(map_pixels(img, |p| gain * p.powf(gamma)))
}

/// The border-preserving 3x3 smoothing used by [`adjust_sharpness`]: kernel
/// `[[1,1,1],[1,5,1],[1,1,1]] / 13` on interior pixels, border copied.
pub fn sharpness_smooth(img: &ImageBuffer) -> ImageBuffer {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let src = img.pixels();
    let mut out = src.to_vec();
    if h < 3 || w < 3 {
        return img.clone();
    }
    for r in 1..h - 1 {
        for col in 1..w - 1 {
            for ch in 0..c {
                let mut acc = 0.0f32;
                for dr in 0..3 {
                    for dc in 0..3 {
                        let weight = if dr == 1 && dc == 1 { 5.0 } else { 1.0 };
                        acc += weight * src[((r + dr - 1) * w + (col + dc - 1)) * c + ch];
                    }
                }
                out[(r * w + col) * c + ch] = (acc / 13.0).clamp(0.0, 1.0);
            }
        }
    }
    ImageBuffer::from_parts(c, h, w, out)
}

/// `out = clamp(smooth + factor * (in - smooth))`. Images smaller than 3x3 are
/// returned unchanged.
pub fn adjust_sharpness(img: &ImageBuffer, factor: f32) -> Result<ImageBuffer> {
    check_factor("sharpness", factor)?;
    if img.height() < 3 || img.width() < 3 {
        return Ok(img.clone());
    }
    let smooth = sharpness_smooth(img);
    let pixels = img
        .pixels()
        .iter()
        .zip(smooth.pixels())
        .map(|(&p, &s)| (factor * p + (1.0 - factor) * s).clamp(0.0, 1.0))
        .collect();
    Ok(ImageBuffer::from_parts(
        img.channels(),
        img.height(),
        img.width(),
        pixels,
    ))
}

/// Kernel radius for a given sigma: `ceil(3 * sigma)`.
pub fn blur_radius(sigma: f32) -> usize {
    (3.0 * sigma).ceil() as usize
}

/// Normalized 1-D Gaussian weights for offsets `-r..=r`.
pub fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = blur_radius(sigma) as i64;
    let raw: Vec<f32> = (-radius..=radius)
        .map(|i| {
            let x = i as f32 / sigma;
            (-0.5 * x * x).exp()
        })
        .collect();
    let total: f32 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Reflect an out-of-range index back into `0..n` without repeating the edge
/// sample (`-1 -> 1`, `n -> n - 2`).
pub(crate) fn reflect(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let m = i.rem_euclid(period);
    if m < n as i64 {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Separable Gaussian blur, horizontal pass then vertical pass, reflect
/// padding.
pub fn gaussian_blur(img: &ImageBuffer, sigma: f32) -> Result<ImageBuffer> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "blur sigma must be finite and > 0, got {sigma}"
        )));
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let src = img.pixels();

    let mut horizontal = vec![0.0f32; src.len()];
    for r in 0..h {
        for col in 0..w {
            for ch in 0..c {
                let mut acc = 0.0f32;
                for (k, &weight) in kernel.iter().enumerate() {
                    let x = reflect(col as i64 + k as i64 - radius, w);
                    acc += weight * src[(r * w + x) * c + ch];
                }
                horizontal[(r * w + col) * c + ch] = acc;
            }
        }
    }

    let mut out = vec![0.0f32; src.len()];
    for r in 0..h {
        for col in 0..w {
            for ch in 0..c {
                let mut acc = 0.0f32;
                for (k, &weight) in kernel.iter().enumerate() {
                    let y = reflect(r as i64 + k as i64 - radius, h);
                    acc += weight * horizontal[(y * w + col) * c + ch];
                }
                out[(r * w + col) * c + ch] = acc.clamp(0.0, 1.0);
            }
        }
    }
    Ok(ImageBuffer::from_parts(c, h, w, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(h: usize, w: usize, px: &[f32]) -> ImageBuffer {
        ImageBuffer::new(1, h, w, px.to_vec()).unwrap()
    }

    fn close(a: f32, b: f32) -> bool {
        (a - b).abs() <= 1e-6
    }

    #[test]
    fn brightness_examples() {
        let img = gray(1, 3, &[0.1, 0.5, 0.9]);
        assert_eq!(adjust_brightness(&img, 1.0).unwrap(), img);
        assert!(adjust_brightness(&img, 0.0)
            .unwrap()
            .pixels()
            .iter()
            .all(|&p| p == 0.0));
        assert_eq!(adjust_brightness(&gray(1, 1, &[0.5]), 2.0).unwrap().pixels(), &[1.0]);
        assert!(matches!(
            adjust_brightness(&img, -0.1),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn luma_mean_examples() {
        assert!(close(luma_mean(&gray(1, 2, &[0.2, 0.6])) as f32, 0.4));
        assert!(close(luma_mean(&gray(2, 2, &[0.3; 4])) as f32, 0.3));
        let red = ImageBuffer::new(3, 1, 1, vec![1.0, 0.0, 0.0]).unwrap();
        assert!(close(luma_mean(&red) as f32, 0.299));
    }

    #[test]
    fn contrast_examples() {
        let img = gray(1, 2, &[0.2, 0.6]);
        assert_eq!(adjust_contrast(&img, 1.0).unwrap(), img);
        let flat = adjust_contrast(&img, 0.0).unwrap();
        assert!(flat.pixels().iter().all(|&p| close(p, 0.4)));
        let stretched = adjust_contrast(&img, 2.0).unwrap();
        assert!(close(stretched.pixels()[0], 0.0));
        assert!(close(stretched.pixels()[1], 0.8));
        assert!(adjust_contrast(&img, -1.0).is_err());
    }

    #[test]
    fn gamma_examples() {
        let img = gray(1, 3, &[0.0, 0.25, 1.0]);
        assert_eq!(adjust_gamma(&img, 1.0, 1.0).unwrap(), img);
        assert!(close(adjust_gamma(&img, 0.5, 1.0).unwrap().pixels()[1], 0.5));
        assert!(close(
            adjust_gamma(&gray(1, 1, &[0.5]), 2.0, 1.0).unwrap().pixels()[0],
            0.25
        ));
        let boosted = adjust_gamma(&img, 2.0, 1.5).unwrap();
        assert_eq!(boosted.pixels()[0], 0.0);
        assert_eq!(boosted.pixels()[2], 1.0);
        assert!(adjust_gamma(&img, 0.0, 1.0).is_err());
        assert!(adjust_gamma(&img, -2.0, 1.0).is_err());
    }

    #[test]
    fn sharpness_examples() {
        let mut px = [0.0f32; 9];
        px[4] = 1.0;
        let img = gray(3, 3, &px);
        assert_eq!(adjust_sharpness(&img, 1.0).unwrap(), img);
        let smooth = adjust_sharpness(&img, 0.0).unwrap();
        assert!(close(smooth.pixels()[4], 5.0 / 13.0));
        for i in [0, 1, 2, 3, 5, 6, 7, 8] {
            assert_eq!(smooth.pixels()[i], 0.0);
        }
        let constant = gray(4, 5, &[0.37; 20]);
        for f in [0.0, 0.5, 2.0, 8.0] {
            let out = adjust_sharpness(&constant, f).unwrap();
            assert!(out.pixels().iter().all(|&p| close(p, 0.37)));
        }
        let tiny = gray(2, 5, &[0.1, 0.9, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.2, 0.0]);
        assert_eq!(adjust_sharpness(&tiny, 3.0).unwrap(), tiny);
        assert!(adjust_sharpness(&img, -0.5).is_err());
    }

    #[test]
    fn reflect_indexing() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(6, 5), 2);
        assert_eq!(reflect(-3, 3), 1);
        assert_eq!(reflect(4, 1), 0);
    }

    #[test]
    fn kernel_shape() {
        let k = gaussian_kernel(0.5);
        assert_eq!(k.len(), 5);
        assert!(close(k.iter().sum::<f32>(), 1.0));
        assert_eq!(gaussian_kernel(0.6).len(), 2 * 2 + 1);
        assert_eq!(gaussian_kernel(1.8).len(), 2 * 6 + 1);
    }

    #[test]
    fn blur_examples() {
        let constant = gray(6, 4, &[0.42; 24]);
        let out = gaussian_blur(&constant, 1.3).unwrap();
        assert!(out.pixels().iter().all(|&p| close(p, 0.42)));
        assert!(gaussian_blur(&constant, 0.0).is_err());
        assert!(gaussian_blur(&constant, -1.0).is_err());
    }
}
