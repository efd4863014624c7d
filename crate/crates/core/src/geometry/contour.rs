//! Closed sub-pixel contours of a binary mask.
//!
//! Contours follow the 0.5 iso-line of the mask with pixel centers on the
//! integer grid. Foreground is always on the right-hand side of the direction
//! of travel (screen coordinates, `y` down), so outer boundaries run clockwise
//! on screen and holes run counter-clockwise. Diagonal saddles are resolved in
//! favor of 8-connected foreground.

use std::collections::HashMap;

use crate::raster::{BinaryMask, Point};

/// Default minimum perimeter for [`extract_contours`].
pub const DEFAULT_MIN_LENGTH: f64 = 8.0;

/// Contours with fewer vertices than this are returned without staircase
/// smoothing.
const SMOOTHING_MIN_POINTS: usize = 16;
const SMOOTHING_PASSES: usize = 12;
const TAUBIN_LAMBDA: f64 = 0.5;
const TAUBIN_MU: f64 = -0.53;

/// Closed polygon traced along a foreground/background interface.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub points: Vec<Point>,
}

impl Contour {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Length of the closed polygon.
    pub fn perimeter(&self) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|i| self.points[i].dist(self.points[(i + 1) % n]))
            .sum()
    }

    /// Shoelace area in screen coordinates. Positive for outer boundaries.
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        0.5 * (0..n)
            .map(|i| self.points[i].cross(self.points[(i + 1) % n]))
            .sum::<f64>()
    }

    pub fn is_hole(&self) -> bool {
        self.signed_area() < 0.0
    }
}

/// Traces every closed interface of `mask`, outer boundaries and holes alike,
/// and drops those with perimeter below `min_length`.
///
/// Staircase artifacts of the pixel grid are reduced with a few passes of
/// non-shrinking (Taubin) smoothing on contours with at least 16 vertices.
pub fn extract_contours(mask: &BinaryMask, min_length: f64) -> Vec<Contour> {
    trace_raw(mask)
        .into_iter()
        .map(|pts| {
            let pts = if pts.len() >= SMOOTHING_MIN_POINTS {
                taubin_smooth(pts, SMOOTHING_PASSES)
            } else {
                pts
            };
            Contour::new(pts)
        })
        .filter(|c| c.perimeter() >= min_length)
        .collect()
}

/// Vertex key on the half-pixel lattice (coordinates doubled).
type Key = (i64, i64);

fn key(p: Point) -> Key {
    ((p.x * 2.0).round() as i64, (p.y * 2.0).round() as i64)
}

/// Marching squares without smoothing. Each returned loop has vertices on
/// edge midpoints between differing pixel centers.
pub(crate) fn trace_raw(mask: &BinaryMask) -> Vec<Vec<Point>> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    // Directed segments in raster discovery order.
    let mut segments: Vec<(Point, Point)> = Vec::new();
    for cy in -1..h {
        for cx in -1..w {
            cell_segments(mask, cx, cy, &mut segments);
        }
    }

    let mut next: HashMap<Key, usize> = HashMap::with_capacity(segments.len());
    for (i, (a, _)) in segments.iter().enumerate() {
        let prev = next.insert(key(*a), i);
        debug_assert!(prev.is_none(), "vertex with two outgoing segments");
    }

    let mut used = vec![false; segments.len()];
    let mut loops = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        let mut pts = Vec::new();
        let mut cur = start;
        loop {
            used[cur] = true;
            let (a, b) = segments[cur];
            pts.push(a);
            match next.get(&key(b)) {
                Some(&n) if n == start => break,
                Some(&n) if !used[n] => cur = n,
                _ => break,
            }
        }
        loops.push(pts);
    }
    loops
}

fn cell_segments(mask: &BinaryMask, cx: i64, cy: i64, out: &mut Vec<(Point, Point)>) {
    // Corners in clockwise screen order: TL, TR, BR, BL.
    let corners = [(cx, cy), (cx + 1, cy), (cx + 1, cy + 1), (cx, cy + 1)];
    let fg = corners.map(|(x, y)| mask.get_signed(x, y));
    let n_fg = fg.iter().filter(|&&v| v).count();
    if n_fg == 0 || n_fg == 4 {
        return;
    }
    let corner_pt = |i: usize| Point::new(corners[i].0 as f64, corners[i].1 as f64);
    // Edge e joins corner e and corner e+1.
    let edge_mid = |e: usize| {
        let a = corner_pt(e);
        let b = corner_pt((e + 1) % 4);
        Point::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y))
    };
    let center = Point::new(cx as f64 + 0.5, cy as f64 + 0.5);

    let mut emit = |p: Point, q: Point, fg_ref: Point| {
        // Right-hand normal of (q - p) in screen coordinates is (-dy, dx).
        let d = q - p;
        let right = Point::new(-d.y, d.x);
        if (fg_ref - p).dot(right) > 0.0 {
            out.push((p, q));
        } else {
            out.push((q, p));
        }
    };

    let diagonal_saddle = n_fg == 2 && fg[0] == fg[2];
    if diagonal_saddle {
        // Foreground diagonal stays connected; cut off each background corner.
        for c in 0..4 {
            if !fg[c] {
                let e_in = (c + 3) % 4;
                emit(edge_mid(e_in), edge_mid(c), center);
            }
        }
        return;
    }

    let crossing: Vec<usize> = (0..4).filter(|&e| fg[e] != fg[(e + 1) % 4]).collect();
    debug_assert_eq!(crossing.len(), 2);
    let fg_ref = match n_fg {
        1 => corner_pt(fg.iter().position(|&v| v).unwrap()),
        3 => center,
        _ => {
            let c = fg.iter().position(|&v| v).unwrap();
            let c2 = if fg[(c + 1) % 4] { (c + 1) % 4 } else { (c + 3) % 4 };
            let (a, b) = (corner_pt(c), corner_pt(c2));
            Point::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y))
        }
    };
    emit(edge_mid(crossing[0]), edge_mid(crossing[1]), fg_ref);
}

/// Alternating shrink/inflate Laplacian passes on a closed polygon.
fn taubin_smooth(mut pts: Vec<Point>, passes: usize) -> Vec<Point> {
    let n = pts.len();
    let mut tmp = pts.clone();
    for _ in 0..passes {
        for factor in [TAUBIN_LAMBDA, TAUBIN_MU] {
            for i in 0..n {
                let prev = pts[(i + n - 1) % n];
                let next = pts[(i + 1) % n];
                let lap = Point::new(
                    0.5 * (prev.x + next.x) - pts[i].x,
                    0.5 * (prev.y + next.y) - pts[i].y,
                );
                tmp[i] = pts[i] + lap * factor;
            }
            std::mem::swap(&mut pts, &mut tmp);
        }
    }
    pts
}
