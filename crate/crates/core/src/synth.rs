//! Synthetic shapes with analytic ground truth.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Point, RasterImage};

/// A filled planar region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Disk {
        center: Point,
        radius: f64,
    },
    Ellipse {
        center: Point,
        rx: f64,
        ry: f64,
        /// Rotation in radians.
        angle: f64,
    },
    /// Radius `radius * (1 + amplitude * cos(lobes * theta))`.
    Star {
        center: Point,
        radius: f64,
        amplitude: f64,
        lobes: u32,
    },
    TwoCircles {
        a: Point,
        b: Point,
        radius: f64,
    },
    /// Half-plane `x >= position` (clipped by the image).
    StepEdge {
        position: f64,
    },
    /// Axis-aligned ellipse whose boundary is pushed outward by `amount`
    /// over an angular window centered at `direction`, with cosine tapers.
    BulgedEllipse {
        center: Point,
        rx: f64,
        ry: f64,
        amount: f64,
        direction: f64,
        /// Half-width of the fully displaced window (radians).
        flat: f64,
        /// Width of each taper (radians).
        taper: f64,
    },
}

fn wrap_angle(a: f64) -> f64 {
    let t = std::f64::consts::TAU;
    let r = a.rem_euclid(t);
    if r > std::f64::consts::PI {
        r - t
    } else {
        r
    }
}

impl Shape {
    pub fn contains(&self, p: Point) -> bool {
        match *self {
            Shape::Disk { center, radius } => p.dist(center) <= radius,
            Shape::Ellipse {
                center,
                rx,
                ry,
                angle,
            } => {
                let d = p - center;
                let (s, c) = angle.sin_cos();
                let u = c * d.x + s * d.y;
                let v = -s * d.x + c * d.y;
                (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
            }
            Shape::Star {
                center,
                radius,
                amplitude,
                lobes,
            } => {
                let d = p - center;
                let theta = d.y.atan2(d.x);
                d.norm() <= radius * (1.0 + amplitude * (lobes as f64 * theta).cos())
            }
            Shape::TwoCircles { a, b, radius } => p.dist(a) <= radius || p.dist(b) <= radius,
            Shape::StepEdge { position } => p.x >= position,
            Shape::BulgedEllipse { center, .. } => {
                let d = p - center;
                d.norm() <= self.bulged_radius(d.y.atan2(d.x))
            }
        }
    }

    /// Boundary radius of a bulged ellipse in direction `theta`.
    fn bulged_radius(&self, theta: f64) -> f64 {
        let Shape::BulgedEllipse {
            rx,
            ry,
            amount,
            direction,
            flat,
            taper,
            ..
        } = *self
        else {
            unreachable!()
        };
        let (s, c) = theta.sin_cos();
        let base = 1.0 / ((c / rx).powi(2) + (s / ry).powi(2)).sqrt();
        let off = wrap_angle(theta - direction).abs();
        let weight = if off <= flat {
            1.0
        } else if off < flat + taper {
            0.5 * (1.0 + (std::f64::consts::PI * (off - flat) / taper).cos())
        } else {
            0.0
        };
        base + amount * weight
    }

    /// Exact distance from `p` to the boundary, when it has a closed form.
    pub fn boundary_distance(&self, p: Point) -> Option<f64> {
        match *self {
            Shape::Disk { center, radius } => Some((p.dist(center) - radius).abs()),
            Shape::TwoCircles { a, b, radius } => {
                let (da, db) = (p.dist(a), p.dist(b));
                // Only arcs outside the other disk are boundary.
                let arc = |d: f64, other: Point, c: Point| {
                    let q = c + (p - c) * (radius / d.max(1e-12));
                    if q.dist(other) >= radius {
                        (d - radius).abs()
                    } else {
                        f64::INFINITY
                    }
                };
                let best = arc(da, b, a).min(arc(db, a, b));
                best.is_finite().then_some(best)
            }
            Shape::StepEdge { position } => Some((p.x - position).abs()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub width: usize,
    pub height: usize,
    pub shape: Shape,
    pub background: f32,
    /// Foreground intensity minus background intensity.
    pub contrast: f32,
    pub noise_sigma: f32,
    /// Subsamples per axis for anti-aliased rendering.
    pub supersample: usize,
    pub seed: u64,
}

impl SynthParams {
    pub fn new(width: usize, height: usize, shape: Shape) -> Self {
        Self {
            width,
            height,
            shape,
            background: 0.2,
            contrast: 0.6,
            noise_sigma: 0.0,
            supersample: 4,
            seed: 0,
        }
    }
}

/// Rendered scene: image, ground-truth mask and the shape itself.
#[derive(Debug, Clone)]
pub struct Scene {
    pub image: RasterImage,
    pub gt_mask: BinaryMask,
    pub shape: Shape,
}

/// Gray image with anti-aliased shape, plus the mask of pixel centers inside.
pub fn render(params: &SynthParams) -> Result<Scene> {
    if params.width == 0 || params.height == 0 || params.supersample == 0 {
        return Err(Error::InvalidConfig("empty synthetic canvas".into()));
    }
    let n = params.supersample;
    let shape = &params.shape;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let noise = if params.noise_sigma > 0.0 {
        Some(
            Normal::new(0.0f32, params.noise_sigma)
                .map_err(|e| Error::InvalidConfig(e.to_string()))?,
        )
    } else {
        None
    };
    let image = RasterImage::from_fn(params.width, params.height, |x, y| {
        let mut inside = 0usize;
        for a in 0..n {
            for b in 0..n {
                let p = Point::new(
                    x as f64 - 0.5 + (a as f64 + 0.5) / n as f64,
                    y as f64 - 0.5 + (b as f64 + 0.5) / n as f64,
                );
                inside += shape.contains(p) as usize;
            }
        }
        let cover = inside as f32 / (n * n) as f32;
        let mut v = params.background + params.contrast * cover;
        if let Some(d) = &noise {
            v += d.sample(&mut rng);
        }
        [v; 3]
    });
    let gt_mask = BinaryMask::from_fn(params.width, params.height, |x, y| {
        shape.contains(Point::new(x as f64, y as f64))
    });
    Ok(Scene {
        image,
        gt_mask,
        shape: shape.clone(),
    })
}

/// Box-filter downsample by an integer factor; a low-resolution pixel is
/// foreground when at least half of its block is.
pub fn downsample_mask(mask: &BinaryMask, factor: usize) -> Result<BinaryMask> {
    if factor == 0 || mask.width() % factor != 0 || mask.height() % factor != 0 {
        return Err(Error::InvalidConfig(format!(
            "downsample factor {factor} does not divide {}x{}",
            mask.width(),
            mask.height()
        )));
    }
    let area = factor * factor;
    Ok(BinaryMask::from_fn(
        mask.width() / factor,
        mask.height() / factor,
        |x, y| {
            let mut count = 0;
            for yy in y * factor..(y + 1) * factor {
                for xx in x * factor..(x + 1) * factor {
                    count += mask.get(xx, yy) as usize;
                }
            }
            2 * count >= area
        },
    ))
}

/// Bilinear upsampling of a 0/1 mask with pixel-center alignment, then a
/// 0.5 threshold.
pub fn upsample_mask_bilinear(mask: &BinaryMask, scale: usize) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let s = scale as f64;
    let value = |x: i64, y: i64| {
        let x = x.clamp(0, w as i64 - 1) as usize;
        let y = y.clamp(0, h as i64 - 1) as usize;
        if mask.get(x, y) {
            1.0
        } else {
            0.0
        }
    };
    BinaryMask::from_fn(w * scale, h * scale, |x, y| {
        let u = (x as f64 + 0.5) / s - 0.5;
        let v = (y as f64 + 0.5) / s - 0.5;
        let (x0, y0) = (u.floor(), v.floor());
        let (fx, fy) = (u - x0, v - y0);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let top = value(x0, y0) * (1.0 - fx) + value(x0 + 1, y0) * fx;
        let bottom = value(x0, y0 + 1) * (1.0 - fx) + value(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy >= 0.5
    })
}
