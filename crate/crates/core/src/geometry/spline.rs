//! Closed uniform cubic B-splines parameterized by arclength.
//!
//! A curve with `n` control points `P_0..P_{n-1}` is evaluated on the
//! parameter range `[0, n)`; at integer parameter `i` it passes through
//! `(P_{i-1} + 4 P_i + P_{i+1}) / 6`. Arclength queries go through a dense
//! lookup table built with Gauss-Legendre quadrature.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::contour::Contour;
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Point};

/// Lookup-table sub-intervals per spline segment.
const LUT_SAMPLES_PER_SEGMENT: usize = 16;
const COLLINEAR_TOL: f64 = 1e-9;
const SINGULAR_SPEED: f64 = 1e-12;

// 5-point Gauss-Legendre nodes/weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_08,
    0.236_926_885_056_189_08,
];

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCurve {
    control_points: Vec<Point>,
    /// +1 keeps `(t_y, -t_x)` as the outward normal, -1 flips it.
    orientation: i8,
    lut_u: Vec<f64>,
    lut_s: Vec<f64>,
}

/// JSON form of a curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveDoc {
    pub degree: usize,
    pub knots: Vec<f64>,
    pub control_points: Vec<[f64; 2]>,
    pub orientation_flag: i8,
}

impl BoundaryCurve {
    /// Builds a curve from control points and an orientation flag.
    pub fn from_control_points(control_points: Vec<Point>, orientation: i8) -> Result<Self> {
        if control_points.len() < 4 {
            return Err(Error::DegenerateContour);
        }
        let orientation = if orientation < 0 { -1 } else { 1 };
        let (lut_u, lut_s) = build_lut(&control_points)?;
        Ok(Self {
            control_points,
            orientation,
            lut_u,
            lut_s,
        })
    }

    pub fn control_points(&self) -> &[Point] {
        &self.control_points
    }

    pub fn degree(&self) -> usize {
        3
    }

    pub fn orientation(&self) -> i8 {
        self.orientation
    }

    /// Periodic uniform knot vector covering the padded basis support.
    pub fn knots(&self) -> Vec<f64> {
        let n = self.control_points.len() as i64;
        (-3..=n + 3).map(|k| k as f64).collect()
    }

    /// Curve length `|C|` in pixels.
    pub fn total_length(&self) -> f64 {
        *self.lut_s.last().unwrap()
    }

    pub fn arclength_table(&self) -> (&[f64], &[f64]) {
        (&self.lut_s, &self.lut_u)
    }

    /// Stable identifier derived from the curve's data (FNV-1a).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bits: u64| {
            for b in bits.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for p in &self.control_points {
            feed(p.x.to_bits());
            feed(p.y.to_bits());
        }
        feed(self.orientation as u64);
        h
    }

    fn n(&self) -> usize {
        self.control_points.len()
    }

    /// Spline parameter for arclength `k`, wrapping modulo the length.
    pub fn param_at(&self, k: f64) -> f64 {
        let total = self.total_length();
        let mut k = k.rem_euclid(total);
        if k >= total {
            k = 0.0;
        }
        // Last index with lut_s[idx] <= k.
        let idx = self.lut_s.partition_point(|&s| s <= k).saturating_sub(1);
        let idx = idx.min(self.lut_s.len() - 2);
        let (s0, s1) = (self.lut_s[idx], self.lut_s[idx + 1]);
        let (u0, u1) = (self.lut_u[idx], self.lut_u[idx + 1]);
        u0 + (u1 - u0) * (k - s0) / (s1 - s0)
    }

    pub fn point_at_param(&self, u: f64) -> Point {
        let (i, basis) = self.basis(u, false);
        self.combine(i, basis)
    }

    pub fn derivative_at_param(&self, u: f64) -> Point {
        let (i, basis) = self.basis(u, true);
        self.combine(i, basis)
    }

    fn basis(&self, u: f64, derivative: bool) -> (usize, [f64; 4]) {
        let n = self.n() as f64;
        let u = u.rem_euclid(n);
        let seg = (u.floor() as usize).min(self.n() - 1);
        let t = u - seg as f64;
        let b = if derivative {
            cubic_basis_derivative(t)
        } else {
            cubic_basis(t)
        };
        (seg, b)
    }

    fn combine(&self, seg: usize, b: [f64; 4]) -> Point {
        let n = self.n();
        let mut p = Point::default();
        for (r, w) in b.iter().enumerate() {
            let cp = self.control_points[(seg + n - 1 + r) % n];
            p.x += w * cp.x;
            p.y += w * cp.y;
        }
        p
    }

    /// Point at arclength `k` (wraps modulo the curve length).
    pub fn eval_point(&self, k: f64) -> Point {
        self.point_at_param(self.param_at(k))
    }

    /// Unit tangent at arclength `k`.
    pub fn eval_tangent(&self, k: f64) -> Result<Point> {
        let d = self.derivative_at_param(self.param_at(k));
        let len = d.norm();
        if !(len > SINGULAR_SPEED) {
            return Err(Error::SingularTangent);
        }
        Ok(d * (1.0 / len))
    }

    /// Unit normal at arclength `k`, pointing from foreground to background.
    pub fn eval_normal(&self, k: f64) -> Result<Point> {
        let t = self.eval_tangent(k)?;
        let s = self.orientation as f64;
        Ok(Point::new(t.y * s, -t.x * s))
    }

    /// Point and outward normal together.
    pub fn frame(&self, k: f64) -> Result<(Point, Point)> {
        let u = self.param_at(k);
        let d = self.derivative_at_param(u);
        let len = d.norm();
        if !(len > SINGULAR_SPEED) {
            return Err(Error::SingularTangent);
        }
        let s = self.orientation as f64 / len;
        Ok((self.point_at_param(u), Point::new(d.y * s, -d.x * s)))
    }

    /// Checks the normal orientation against `mask` by probing `probe` pixels
    /// on either side of the curve at evenly spaced samples, and flips the
    /// cached orientation flag if most samples disagree.
    pub fn orient_with_mask(&mut self, mask: &BinaryMask, probe: f64) -> Result<i8> {
        const SAMPLES: usize = 64;
        let total = self.total_length();
        let (mut agree, mut disagree) = (0usize, 0usize);
        for i in 0..SAMPLES {
            let k = total * i as f64 / SAMPLES as f64;
            let (p, n) = self.frame(k)?;
            let outside = mask.sample_nearest(p + n * probe);
            let inside = mask.sample_nearest(p - n * probe);
            match (inside, outside) {
                (true, false) => agree += 1,
                (false, true) => disagree += 1,
                _ => {}
            }
        }
        if disagree > agree {
            self.orientation = -self.orientation;
        }
        Ok(self.orientation)
    }

    pub fn to_doc(&self) -> CurveDoc {
        CurveDoc {
            degree: 3,
            knots: self.knots(),
            control_points: self.control_points.iter().map(|p| [p.x, p.y]).collect(),
            orientation_flag: self.orientation,
        }
    }

    pub fn from_doc(doc: &CurveDoc) -> Result<Self> {
        if doc.degree != 3 {
            return Err(Error::Format(format!("unsupported degree {}", doc.degree)));
        }
        let cps: Vec<Point> = doc
            .control_points
            .iter()
            .map(|&[x, y]| Point::new(x, y))
            .collect();
        let curve = Self::from_control_points(cps, doc.orientation_flag)?;
        if curve.knots() != doc.knots {
            return Err(Error::Format(
                "only periodic uniform knot vectors are supported".into(),
            ));
        }
        Ok(curve)
    }
}

fn cubic_basis(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    let s = 1.0 - t;
    [
        s * s * s / 6.0,
        (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
        (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
        t3 / 6.0,
    ]
}

fn cubic_basis_derivative(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let s = 1.0 - t;
    [
        -0.5 * s * s,
        0.5 * (3.0 * t2 - 4.0 * t),
        0.5 * (-3.0 * t2 + 2.0 * t + 1.0),
        0.5 * t2,
    ]
}

fn build_lut(cps: &[Point]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = cps.len();
    let probe = BoundaryCurve {
        control_points: cps.to_vec(),
        orientation: 1,
        lut_u: Vec::new(),
        lut_s: Vec::new(),
    };
    let steps = n * LUT_SAMPLES_PER_SEGMENT;
    let h = 1.0 / LUT_SAMPLES_PER_SEGMENT as f64;
    let mut lut_u = Vec::with_capacity(steps + 1);
    let mut lut_s = Vec::with_capacity(steps + 1);
    lut_u.push(0.0);
    lut_s.push(0.0);
    let mut acc = 0.0;
    for i in 0..steps {
        let a = i as f64 * h;
        let mid = a + 0.5 * h;
        let piece: f64 = GL_NODES
            .iter()
            .zip(GL_WEIGHTS.iter())
            .map(|(&x, &w)| w * probe.derivative_at_param(mid + 0.5 * h * x).norm())
            .sum::<f64>()
            * 0.5
            * h;
        acc += piece;
        if !(piece > SINGULAR_SPEED * h) {
            return Err(Error::SingularTangent);
        }
        lut_u.push((i + 1) as f64 * h);
        lut_s.push(acc);
    }
    Ok((lut_u, lut_s))
}

/// Default smoothing budget for a contour: one hundredth of its perimeter.
pub fn default_smoothing(contour: &Contour) -> f64 {
    contour.perimeter() / 100.0
}

/// Least-squares closed cubic B-spline through `contour`.
///
/// One control point is placed per contour vertex. A second-difference
/// penalty on the control polygon is weighted so that the summed squared
/// residual at the vertices matches `smoothing` (capped by what the penalty
/// can reach); `smoothing = 0` interpolates every vertex.
pub fn fit_periodic_bspline(contour: &Contour, smoothing: f64) -> Result<BoundaryCurve> {
    let pts = &contour.points;
    let m = pts.len();
    if m < 4 || is_collinear(pts) {
        return Err(Error::DegenerateContour);
    }
    let smoothing = smoothing.max(0.0);

    let mut spectrum: Vec<Complex<f64>> = pts.iter().map(|p| Complex::new(p.x, p.y)).collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(m).process(&mut spectrum);

    let symbols: Vec<(f64, f64)> = (0..m)
        .map(|k| {
            let c = (2.0 * PI * k as f64 / m as f64).cos();
            let b = (4.0 + 2.0 * c) / 6.0;
            let g = (2.0 - 2.0 * c).powi(2);
            (b, g)
        })
        .collect();
    let residual = |lambda: f64| -> f64 {
        symbols
            .iter()
            .zip(spectrum.iter())
            .map(|(&(b, g), d)| {
                let r = lambda * g / (b * b + lambda * g);
                r * r * d.norm_sqr()
            })
            .sum::<f64>()
            / m as f64
    };

    let lambda = if smoothing == 0.0 {
        0.0
    } else {
        let (mut lo, mut hi) = (-12.0f64, 12.0f64);
        if residual(10f64.powf(hi)) <= smoothing {
            10f64.powf(hi)
        } else if residual(10f64.powf(lo)) >= smoothing {
            10f64.powf(lo)
        } else {
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if residual(10f64.powf(mid)) > smoothing {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            10f64.powf(lo)
        }
    };

    let mut coeffs: Vec<Complex<f64>> = symbols
        .iter()
        .zip(spectrum.iter())
        .map(|(&(b, g), d)| d * (b / (b * b + lambda * g)))
        .collect();
    planner.plan_fft_inverse(m).process(&mut coeffs);
    let scale = 1.0 / m as f64;
    let cps = coeffs
        .iter()
        .map(|c| Point::new(c.re * scale, c.im * scale))
        .collect();
    BoundaryCurve::from_control_points(cps, 1)
}

fn is_collinear(pts: &[Point]) -> bool {
    let a = pts[0];
    let Some(b) = pts
        .iter()
        .copied()
        .max_by(|p, q| p.dist(a).total_cmp(&q.dist(a)))
    else {
        return true;
    };
    let span = b.dist(a);
    if span <= COLLINEAR_TOL {
        return true;
    }
    let dir = (b - a) * (1.0 / span);
    pts.iter().all(|&p| (p - a).cross(dir).abs() <= COLLINEAR_TOL)
}

/// Multiplies every control point by `factor`. Arclengths scale exactly.
pub fn scale_curve(curve: &BoundaryCurve, factor: f64) -> BoundaryCurve {
    assert!(factor > 0.0, "scale factor must be positive");
    BoundaryCurve {
        control_points: curve.control_points.iter().map(|&p| p * factor).collect(),
        orientation: curve.orientation,
        lut_u: curve.lut_u.clone(),
        lut_s: curve.lut_s.iter().map(|s| s * factor).collect(),
    }
}

/// Shifts every control point by `offset`.
pub fn translate_curve(curve: &BoundaryCurve, offset: Point) -> BoundaryCurve {
    BoundaryCurve {
        control_points: curve.control_points.iter().map(|&p| p + offset).collect(),
        ..curve.clone()
    }
}

/// Maps a curve fitted in low-resolution pixel coordinates into the frame of
/// an image `scale` times larger, keeping pixel centers aligned. The
/// arclength table is rebuilt, so the result is identical to a curve
/// constructed from the lifted control points.
pub fn lift_to_high_res(curve: &BoundaryCurve, scale: f64) -> Result<BoundaryCurve> {
    let shift = 0.5 * (scale - 1.0);
    let lifted = translate_curve(&scale_curve(curve, scale), Point::new(shift, shift));
    BoundaryCurve::from_control_points(lifted.control_points, curve.orientation)
}

/// Moves each control point along the local normal by a smooth, seeded
/// low-frequency signal whose magnitude never exceeds `amplitude`.
pub fn perturb_curve(curve: &BoundaryCurve, amplitude: f64, seed: u64) -> Result<BoundaryCurve> {
    assert!(amplitude >= 0.0, "amplitude must be non-negative");
    if amplitude == 0.0 {
        return Ok(curve.clone());
    }
    const HARMONICS: usize = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<(f64, f64)> = (0..HARMONICS)
        .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0 * PI)))
        .collect();
    let n = curve.n();
    let signal: Vec<f64> = (0..n)
        .map(|i| {
            let u = i as f64 / n as f64;
            terms
                .iter()
                .enumerate()
                .map(|(f, &(a, phase))| a * (2.0 * PI * (f + 1) as f64 * u + phase).sin())
                .sum()
        })
        .collect();
    let peak = signal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Ok(curve.clone());
    }
    let s = curve.orientation as f64;
    let mut cps = Vec::with_capacity(n);
    for (i, &cp) in curve.control_points.iter().enumerate() {
        let d = curve.derivative_at_param(i as f64);
        let len = d.norm();
        if !(len > SINGULAR_SPEED) {
            return Err(Error::SingularTangent);
        }
        let normal = Point::new(d.y * s / len, -d.x * s / len);
        cps.push(cp + normal * (amplitude * signal[i] / peak));
    }
    BoundaryCurve::from_control_points(cps, curve.orientation)
}
