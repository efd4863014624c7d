//! Pixel containers shared by every stage of the pipeline.
//!
//! Coordinates are continuous with pixel centers on the integer grid: pixel
//! `(x, y)` covers `[x - 0.5, x + 0.5] x [y - 0.5, y + 0.5]`, `x` grows to the
//! right and `y` grows downward.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Continuous image-plane position in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

/// Row-major RGB image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        assert!(width > 0 && height > 0, "image must be non-empty");
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut img = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.set(x, y, f(x, y));
            }
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        let o = (y * self.width + x) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let o = (y * self.width + x) * 3;
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    /// Bilinear sample at a continuous position. Positions outside the image
    /// are clamped to the border, so every coordinate yields a defined value.
    pub fn sample_bilinear(&self, p: Point) -> [f32; 3] {
        let (x0, x1, fx) = bilinear_taps(p.x, self.width);
        let (y0, y1, fy) = bilinear_taps(p.y, self.height);
        let a = self.get(x0, y0);
        let b = self.get(x1, y0);
        let c = self.get(x0, y1);
        let d = self.get(x1, y1);
        let mut out = [0.0f32; 3];
        for ch in 0..3 {
            let top = a[ch] as f64 * (1.0 - fx) + b[ch] as f64 * fx;
            let bottom = c[ch] as f64 * (1.0 - fx) + d[ch] as f64 * fx;
            out[ch] = (top * (1.0 - fy) + bottom * fy) as f32;
        }
        out
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let rgb = image::open(path)?.to_rgb8();
        let (w, h) = rgb.dimensions();
        Ok(Self::from_fn(w as usize, h as usize, |x, y| {
            let p = rgb.get_pixel(x as u32, y as u32).0;
            [p[0] as f32 / 255.0, p[1] as f32 / 255.0, p[2] as f32 / 255.0]
        }))
    }

    pub fn to_rgb8(&self) -> RgbImage {
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let p = self.get(x as usize, y as usize);
            Rgb(p.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8))
        })
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_rgb8().save(path)?;
        Ok(())
    }
}

/// Lower/upper integer taps and fractional weight for one axis, clamped.
fn bilinear_taps(v: f64, len: usize) -> (usize, usize, f64) {
    let max = (len - 1) as f64;
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, max) };
    let lo = v.floor();
    let frac = v - lo;
    let lo = lo as usize;
    let hi = (lo + 1).min(len - 1);
    (lo, hi, frac)
}

/// Binary pixel mask, `true` = foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "mask must be non-empty");
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.data[y * width + x] = f(x, y);
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Like [`get`](Self::get) but outside pixels read as background.
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            false
        } else {
            self.get(x as usize, y as usize)
        }
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    /// Nearest-pixel lookup at a continuous position, clamped to the border.
    pub fn sample_nearest(&self, p: Point) -> bool {
        let x = clamp_round(p.x, self.width);
        let y = clamp_round(p.y, self.height);
        self.get(x, y)
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// Foreground pixels that have a 4-neighbor in the background (pixels
    /// outside the image count as background).
    pub fn inner_boundary(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| {
            if !self.get(x, y) {
                return false;
            }
            let (x, y) = (x as i64, y as i64);
            [(1, 0), (-1, 0), (0, 1), (0, -1)]
                .iter()
                .any(|&(dx, dy)| !self.get_signed(x + dx, y + dy))
        })
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let gray = image::open(path)?.to_luma8();
        let (w, h) = gray.dimensions();
        Ok(Self::from_fn(w as usize, h as usize, |x, y| {
            gray.get_pixel(x as u32, y as u32).0[0] != 0
        }))
    }

    pub fn to_gray8(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([if self.get(x as usize, y as usize) { 255 } else { 0 }])
        })
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_gray8().save(path)?;
        Ok(())
    }
}

fn clamp_round(v: f64, len: usize) -> usize {
    if v.is_nan() {
        return 0;
    }
    v.round().clamp(0.0, (len - 1) as f64) as usize
}

/// ITU-R 601 luma.
pub fn luminance(rgb: [f32; 3]) -> f64 {
    0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64
}

pub(crate) fn check_same_dims(a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::InvalidInput(format!(
            "mask dimensions differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_is_exact_at_pixel_centers() {
        let img = RasterImage::from_fn(5, 4, |x, y| [x as f32 / 4.0, y as f32 / 3.0, 0.5]);
        for y in 0..4 {
            for x in 0..5 {
                let s = img.sample_bilinear(Point::new(x as f64, y as f64));
                assert_eq!(s, img.get(x, y));
            }
        }
    }

    #[test]
    fn bilinear_midpoint_and_clamp() {
        let img = RasterImage::from_fn(2, 1, |x, _| [x as f32, 0.0, 0.0]);
        assert!((img.sample_bilinear(Point::new(0.5, 0.0))[0] - 0.5).abs() < 1e-7);
        assert_eq!(img.sample_bilinear(Point::new(-3.0, 7.0))[0], 0.0);
        assert_eq!(img.sample_bilinear(Point::new(9.0, -2.0))[0], 1.0);
    }

    #[test]
    fn inner_boundary_of_square() {
        let m = BinaryMask::from_fn(6, 6, |x, y| (1..5).contains(&x) && (1..5).contains(&y));
        let b = m.inner_boundary();
        assert_eq!(b.count(), 12);
        assert!(!b.get(2, 2));
        assert!(b.get(1, 1));
    }

    #[test]
    fn luminance_coefficients() {
        assert!((luminance([1.0, 1.0, 1.0]) - 1.0).abs() < 1e-12);
        assert!((luminance([0.0, 1.0, 0.0]) - 0.587).abs() < 1e-12);
        assert!((luminance([0.25, 0.25, 0.25]) - 0.25).abs() < 1e-7);
    }
}
