#![allow(dead_code)]

pub mod cases;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use striprefine::geometry::{fit_periodic_bspline, BoundaryCurve, Contour};
use striprefine::Point;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Scores in (0.05, 0.95), away from the 0/1 labels.
pub fn random_scores(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((h, w), |_| rng.random_range(0.05..0.95))
}

/// One labeled row per column, moving at most one row between columns.
pub fn random_boundary(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut row = rng.random_range(1..h - 1) as i64;
    let mut y = Array2::zeros((h, w));
    for j in 0..w {
        y[[row as usize, j]] = 1.0;
        row = (row + rng.random_range(-1..=1)).clamp(0, h as i64 - 1);
    }
    y
}

/// Outcome of comparing an analytic gradient with central differences.
#[derive(Debug, Default, Clone, Copy)]
pub struct GradCheck {
    pub max_rel: f64,
    pub checked: usize,
    /// Cells skipped because a kink lies inside the difference stencil.
    pub skipped: usize,
}

impl GradCheck {
    pub fn merge(&mut self, other: GradCheck) {
        self.max_rel = self.max_rel.max(other.max_rel);
        self.checked += other.checked;
        self.skipped += other.skipped;
    }
}

/// Central differences of `f` around `a` with `step`, compared cell by cell
/// against `analytic`. A cell is skipped when the forward and backward slopes
/// disagree, i.e. the function is not smooth within the stencil.
pub fn check_gradient(
    a: &Array2<f64>,
    analytic: &Array2<f64>,
    step: f64,
    f: impl Fn(&Array2<f64>) -> f64,
) -> GradCheck {
    let f0 = f(a);
    let mut out = GradCheck::default();
    let mut probe = a.clone();
    for idx in ndarray::indices(a.dim()) {
        let orig = probe[idx];
        probe[idx] = orig + step;
        let fp = f(&probe);
        probe[idx] = orig - step;
        let fm = f(&probe);
        probe[idx] = orig;
        let fwd = (fp - f0) / step;
        let bwd = (f0 - fm) / step;
        if (fwd - bwd).abs() > 1e-2 * fwd.abs().max(bwd.abs()).max(1e-6) {
            out.skipped += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * step);
        let an = analytic[idx];
        let rel = (an - numeric).abs() / an.abs().max(numeric.abs()).max(1e-6);
        out.max_rel = out.max_rel.max(rel);
        out.checked += 1;
    }
    out
}

pub fn circle_points(center: Point, radius: f64, n: usize) -> Vec<Point> {
    (0..n)
        .map(|i| {
            let t = i as f64 / n as f64 * std::f64::consts::TAU;
            Point::new(center.x + radius * t.cos(), center.y + radius * t.sin())
        })
        .collect()
}

/// Clockwise-on-screen circle (foreground on the right) fitted with a
/// spline; normals point away from the center.
pub fn circle_curve(center: Point, radius: f64, n: usize) -> BoundaryCurve {
    let mut pts = circle_points(center, radius, n);
    pts.reverse();
    let curve = fit_periodic_bspline(&Contour::new(pts), 0.0).unwrap();
    let (p, nrm) = curve.frame(0.0).unwrap();
    let outward = (p - center).dot(nrm) > 0.0;
    if outward {
        curve
    } else {
        let mut doc = curve.to_doc();
        doc.orientation_flag = -doc.orientation_flag;
        BoundaryCurve::from_doc(&doc).unwrap()
    }
}

pub const CENTER: Point = Point { x: 511.5, y: 511.5 };

/// 1024 x 1024 image showing `image_shape` and the scale-16 mask of
/// `mask_shape` (contrast 0.6, no noise).
pub fn scene(
    image_shape: striprefine::synth::Shape,
    mask_shape: striprefine::synth::Shape,
) -> (striprefine::RasterImage, striprefine::BinaryMask, striprefine::BinaryMask) {
    use striprefine::synth::{downsample_mask, render, SynthParams};
    let shown = render(&SynthParams::new(1024, 1024, image_shape)).unwrap();
    let masked = render(&SynthParams::new(1024, 1024, mask_shape)).unwrap();
    let lr = downsample_mask(&masked.gt_mask, 16).unwrap();
    (shown.image, lr, shown.gt_mask)
}

pub fn disk(radius: f64) -> striprefine::synth::Shape {
    striprefine::synth::Shape::Disk {
        center: CENTER,
        radius,
    }
}

/// Mean distance of `points` to the circle of `radius` around `CENTER`.
pub fn mean_circle_distance(points: &[Point], radius: f64) -> f64 {
    points.iter().map(|p| (p.dist(CENTER) - radius).abs()).sum::<f64>() / points.len() as f64
}
