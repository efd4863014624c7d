//! Rasterizing refined boundaries: filled masks, 1-px boundaries, overlays.

use std::collections::{BTreeSet, HashMap};

use crate::raster::{BinaryMask, Point, RasterImage};

/// Fill closed polygons by the even-odd rule, sampling at pixel centers.
pub fn fill_even_odd(polygons: &[Vec<Point>], width: usize, height: usize) -> BinaryMask {
    let mut mask = BinaryMask::new(width, height);
    let mut crossings = Vec::new();
    for y in 0..height {
        let yc = y as f64;
        crossings.clear();
        for poly in polygons {
            let n = poly.len();
            if n < 3 {
                continue;
            }
            for i in 0..n {
                let a = poly[i];
                let b = poly[(i + 1) % n];
                // Half-open rule so shared vertices count once.
                if (a.y <= yc) != (b.y <= yc) {
                    crossings.push(a.x + (yc - a.y) / (b.y - a.y) * (b.x - a.x));
                }
            }
        }
        crossings.sort_by(f64::total_cmp);
        for pair in crossings.chunks_exact(2) {
            let x0 = pair[0].ceil().max(0.0);
            let x1 = pair[1].min(width as f64 - 1.0);
            if x1 < x0 {
                continue;
            }
            for x in x0 as usize..=x1.floor() as usize {
                mask.set(x, y, !mask.get(x, y));
            }
        }
    }
    mask
}

/// Pixels visited by the segments of a polyline (closed if requested),
/// clipped to the canvas. Each segment is walked with one sample per unit
/// of its larger axis extent.
pub fn rasterize_polyline(points: &[Point], closed: bool, width: usize, height: usize) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    let mut put = |p: Point| {
        let (x, y) = (p.x.round(), p.y.round());
        if x >= 0.0 && y >= 0.0 && (x as usize) < width && (y as usize) < height {
            out.insert((x as usize, y as usize));
        }
    };
    if points.is_empty() {
        return out;
    }
    let n = points.len();
    let segments = if closed { n } else { n - 1 };
    put(points[0]);
    for i in 0..segments {
        let a = points[i];
        let b = points[(i + 1) % n];
        let steps = (b.x - a.x).abs().max((b.y - a.y).abs()).ceil().max(1.0) as usize;
        for k in 1..=steps {
            put(a + (b - a) * (k as f64 / steps as f64));
        }
    }
    out
}

/// Copy of `image` with the given pixels painted.
pub fn overlay(image: &RasterImage, pixels: &BTreeSet<(usize, usize)>, color: [f32; 3]) -> RasterImage {
    let mut out = image.clone();
    for &(x, y) in pixels {
        out.set(x, y, color);
    }
    out
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = (b - a).cross(c - a);
    let d2 = (b - a).cross(d - a);
    let d3 = (d - c).cross(a - c);
    let d4 = (d - c).cross(b - c);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Whether any two non-adjacent segments of the closed polygons properly
/// cross each other.
pub fn has_intersections(polygons: &[Vec<Point>]) -> bool {
    const CELL: f64 = 4.0;
    let mut segs: Vec<(usize, usize, Point, Point)> = Vec::new();
    for (pi, poly) in polygons.iter().enumerate() {
        let n = poly.len();
        for i in 0..n {
            segs.push((pi, i, poly[i], poly[(i + 1) % n]));
        }
    }
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (idx, &(_, _, a, b)) in segs.iter().enumerate() {
        let (x0, x1) = (a.x.min(b.x), a.x.max(b.x));
        let (y0, y1) = (a.y.min(b.y), a.y.max(b.y));
        for cx in (x0 / CELL).floor() as i64..=(x1 / CELL).floor() as i64 {
            for cy in (y0 / CELL).floor() as i64..=(y1 / CELL).floor() as i64 {
                grid.entry((cx, cy)).or_default().push(idx);
            }
        }
    }
    for bucket in grid.values() {
        for (k, &i) in bucket.iter().enumerate() {
            for &j in &bucket[k + 1..] {
                let (pi, si, a, b) = segs[i];
                let (pj, sj, c, d) = segs[j];
                if pi == pj {
                    let n = polygons[pi].len();
                    if si.abs_diff(sj) <= 1 || si.abs_diff(sj) == n - 1 {
                        continue;
                    }
                }
                if segments_cross(a, b, c, d) {
                    return true;
                }
            }
        }
    }
    false
}
