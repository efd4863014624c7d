//! Boundary precision, recall and F-score under a distance tolerance.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::raster::{check_same_dims, BinaryMask};

/// How the match tolerance is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum ToleranceMode {
    /// Tolerance in pixels.
    #[default]
    Pixels,
    /// Tolerance as a fraction of the image diagonal.
    DiagonalFraction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEval {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    /// Tolerance as requested.
    pub tolerance: f64,
    /// Pixel radius actually used for matching.
    pub tolerance_px: f64,
    /// Mean distance from predicted boundary pixels to the nearest ground
    /// truth pixel (0 when either side is empty).
    pub mean_distance: f64,
    pub empty_prediction: bool,
    pub empty_ground_truth: bool,
}

const FAR: f64 = 1e20;

/// 1-D squared distance transform of a sampled function (lower envelope of
/// parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let parabola = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    for q in 1..n {
        let mut s = parabola(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = parabola(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared Euclidean distance from every pixel to the nearest set pixel,
/// row-major. All entries are huge when the mask is empty.
pub fn squared_distance_transform(mask: &BinaryMask) -> Vec<f64> {
    let (w, h) = (mask.width(), mask.height());
    let mut grid = vec![FAR; w * h];
    for (x, y) in mask.iter_set() {
        grid[y * w + x] = 0.0;
    }
    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    grid
}

/// Pixels within Euclidean distance `radius` of the mask.
pub fn dilate(mask: &BinaryMask, radius: f64) -> BinaryMask {
    let d2 = squared_distance_transform(mask);
    let r2 = radius * radius;
    let w = mask.width();
    BinaryMask::from_fn(w, mask.height(), |x, y| d2[y * w + x] <= r2)
}

/// Fraction of `a` pixels within `radius` of `b`, and the mean distance of
/// `a` pixels to `b`.
fn directed_match(a: &BinaryMask, b: &BinaryMask, radius: f64) -> (f64, f64) {
    let count = a.count();
    if count == 0 || b.is_empty() {
        return (0.0, 0.0);
    }
    let d2 = squared_distance_transform(b);
    let w = b.width();
    let r2 = radius * radius;
    let mut hits = 0usize;
    let mut total = 0.0;
    for (x, y) in a.iter_set() {
        let d = d2[y * w + x];
        if d <= r2 {
            hits += 1;
        }
        total += d.sqrt();
    }
    (hits as f64 / count as f64, total / count as f64)
}

/// Boundary F-score with the tolerance in pixels.
pub fn boundary_f(pred: &BinaryMask, gt: &BinaryMask, tolerance_px: f64) -> Result<BoundaryEval> {
    boundary_f_with(pred, gt, tolerance_px, ToleranceMode::Pixels)
}

pub fn boundary_f_with(
    pred: &BinaryMask,
    gt: &BinaryMask,
    tolerance: f64,
    mode: ToleranceMode,
) -> Result<BoundaryEval> {
    check_same_dims(pred, gt)?;
    let radius = match mode {
        ToleranceMode::Pixels => tolerance,
        ToleranceMode::DiagonalFraction => {
            tolerance * (pred.width() as f64).hypot(pred.height() as f64)
        }
    };
    let (precision, mean_distance) = directed_match(pred, gt, radius);
    let (recall, _) = directed_match(gt, pred, radius);
    let f_score = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(BoundaryEval {
        precision,
        recall,
        f_score,
        tolerance,
        tolerance_px: radius,
        mean_distance,
        empty_prediction: pred.is_empty(),
        empty_ground_truth: gt.is_empty(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn brute_d2(mask: &BinaryMask, x: usize, y: usize) -> f64 {
        mask.iter_set()
            .map(|(a, b)| {
                let dx = a as f64 - x as f64;
                let dy = b as f64 - y as f64;
                dx * dx + dy * dy
            })
            .fold(FAR, f64::min)
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let w = rng.random_range(1..20);
            let h = rng.random_range(1..20);
            let p = rng.random_range(0.01..0.3);
            let mask = BinaryMask::from_fn(w, h, |_, _| rng.random_bool(p));
            let d2 = squared_distance_transform(&mask);
            for y in 0..h {
                for x in 0..w {
                    let want = brute_d2(&mask, x, y);
                    if mask.is_empty() {
                        assert!(d2[y * w + x] >= FAR);
                    } else {
                        assert_eq!(d2[y * w + x], want, "at ({x},{y})");
                    }
                }
            }
        }
    }

    #[test]
    fn dilation_is_a_euclidean_disk() {
        let mut m = BinaryMask::new(11, 11);
        m.set(5, 5, true);
        let d = dilate(&m, 2.0);
        assert_eq!(d.count(), 13);
        assert!(d.get(7, 5) && !d.get(7, 7) && d.get(6, 6));
    }

    fn hline(y: usize) -> BinaryMask {
        BinaryMask::from_fn(30, 20, |x, yy| yy == y && (3..27).contains(&x))
    }

    #[test]
    fn identical_and_shifted_lines() {
        let gt = hline(8);
        for tol in [0.0, 1.0, 2.0] {
            let e = boundary_f(&gt, &gt, tol).unwrap();
            assert_eq!(e.f_score, 1.0);
            assert_eq!(e.mean_distance, 0.0);
        }
        let shifted = hline(9);
        assert_eq!(boundary_f(&shifted, &gt, 1.0).unwrap().f_score, 1.0);
        let e = boundary_f(&shifted, &gt, 0.0).unwrap();
        assert_eq!(e.f_score, 0.0);
        assert_eq!(e.mean_distance, 1.0);
    }

    #[test]
    fn empty_masks_are_flagged() {
        let gt = hline(8);
        let empty = BinaryMask::new(30, 20);
        let e = boundary_f(&empty, &gt, 1.0).unwrap();
        assert!(e.empty_prediction && !e.empty_ground_truth);
        assert_eq!((e.precision, e.recall, e.f_score), (0.0, 0.0, 0.0));
        let e = boundary_f(&gt, &empty, 1.0).unwrap();
        assert!(e.empty_ground_truth);
        assert_eq!(e.f_score, 0.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(boundary_f(&BinaryMask::new(3, 3), &BinaryMask::new(3, 4), 1.0).is_err());
    }

    #[test]
    fn diagonal_fraction_scales_radius() {
        let gt = hline(8);
        let e = boundary_f_with(&hline(10), &gt, 0.06, ToleranceMode::DiagonalFraction).unwrap();
        assert!((e.tolerance_px - 0.06 * (30f64).hypot(20.0)).abs() < 1e-12);
        assert_eq!(e.f_score, 1.0);
    }
}
