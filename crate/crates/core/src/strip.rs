//! Strip images: the band around a curve resampled into a rectangle whose
//! rows are normal offsets and whose columns are arclength steps.
//!
//! Row `i` of a strip with height `H` sits at normal offset
//! `t = (i - H/2) * dt` (negative = foreground side) and column `j` at
//! arclength `k = start + j * dk`.

use ndarray::{s, Array2, Array3};

use crate::error::{Error, Result};
use crate::geometry::BoundaryCurve;
use crate::raster::{BinaryMask, Point, RasterImage};

/// Default strip height in pixels.
pub const DEFAULT_HEIGHT: usize = 80;
/// Default multiplier applied to `scale * |C_lr|` when choosing the width.
pub const DEFAULT_WIDTH_FACTOR: f64 = 1.5;
const MIN_WIDTH: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct StripConfig {
    pub height: usize,
    pub width: usize,
    /// Normal step in pixels.
    pub dt: f64,
    pub width_factor: f64,
    /// Use `floor(|C| / W)` for the tangential step instead of `|C| / W`.
    pub floor_dk: bool,
    /// Arclength of column 0.
    pub start_offset: f64,
}

impl Default for StripConfig {
    fn default() -> Self {
        Self {
            height: DEFAULT_HEIGHT,
            width: 4096,
            dt: 1.0,
            width_factor: DEFAULT_WIDTH_FACTOR,
            floor_dk: false,
            start_offset: 0.0,
        }
    }
}

impl StripConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < 4 || self.height % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "strip height must be even and >= 4, got {}",
                self.height
            )));
        }
        if self.width < MIN_WIDTH {
            return Err(Error::InvalidConfig(format!(
                "strip width must be >= {MIN_WIDTH}, got {}",
                self.width
            )));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidConfig("dt must be positive".into()));
        }
        if !(self.width_factor > 0.0) {
            return Err(Error::InvalidConfig("width factor must be positive".into()));
        }
        Ok(())
    }
}

/// Strip width for a contour: `round(width_factor * scale * lr_length)`,
/// never below 8.
pub fn choose_strip_width(lr_curve_length: f64, scale: f64, cfg: &StripConfig) -> usize {
    let w = (cfg.width_factor * scale * lr_curve_length).round();
    if w.is_finite() && w > MIN_WIDTH as f64 {
        w as usize
    } else {
        MIN_WIDTH
    }
}

/// Image-space position of every strip cell.
#[derive(Debug, Clone, PartialEq)]
pub struct StripGeometry {
    pub coords: Array2<Point>,
    pub dk: f64,
    pub dt: f64,
    pub start: f64,
    pub curve_id: u64,
}

impl StripGeometry {
    pub fn height(&self) -> usize {
        self.coords.nrows()
    }

    pub fn width(&self) -> usize {
        self.coords.ncols()
    }

    pub fn at(&self, row: usize, col: usize) -> Point {
        self.coords[[row, col]]
    }

    /// Normal offset of `row`.
    pub fn offset_of_row(&self, row: usize) -> f64 {
        (row as f64 - (self.height() / 2) as f64) * self.dt
    }
}

/// Sampled colors, shape `(H, W, 3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StripImage {
    pub data: Array3<f32>,
}

impl StripImage {
    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        [
            self.data[[row, col, 0]],
            self.data[[row, col, 1]],
            self.data[[row, col, 2]],
        ]
    }
}

/// Ground-truth boundary labels in strip space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StripMask {
    pub labels: Array2<u8>,
}

impl StripMask {
    pub fn height(&self) -> usize {
        self.labels.nrows()
    }

    pub fn width(&self) -> usize {
        self.labels.ncols()
    }

    /// First labeled row of each column (0 for an unlabeled column).
    pub fn boundary_rows(&self) -> Vec<usize> {
        self.labels
            .columns()
            .into_iter()
            .map(|c| c.iter().position(|&v| v != 0).unwrap_or(0))
            .collect()
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.labels.mapv(|v| if v != 0 { 1.0 } else { 0.0 })
    }
}

/// Geometry only: cell positions for a strip of `height x width` around
/// `curve`.
pub fn strip_geometry(curve: &BoundaryCurve, cfg: &StripConfig) -> Result<StripGeometry> {
    cfg.validate()?;
    let length = curve.total_length();
    if cfg.width as f64 > 8.0 * length {
        return Err(Error::OversampledStrip {
            width: cfg.width,
            length,
        });
    }
    let dk = if cfg.floor_dk {
        (length / cfg.width as f64).floor()
    } else {
        length / cfg.width as f64
    };
    if !(dk > 0.0) {
        return Err(Error::OversampledStrip {
            width: cfg.width,
            length,
        });
    }
    let (h, w) = (cfg.height, cfg.width);
    let half = (h / 2) as f64;
    let mut coords = Array2::from_elem((h, w), Point::default());
    for j in 0..w {
        let (p, n) = curve.frame(cfg.start_offset + j as f64 * dk)?;
        for i in 0..h {
            coords[[i, j]] = p + n * ((i as f64 - half) * cfg.dt);
        }
    }
    Ok(StripGeometry {
        coords,
        dk,
        dt: cfg.dt,
        start: cfg.start_offset,
        curve_id: curve.fingerprint(),
    })
}

/// Bilinearly resamples `image` over the strip geometry.
pub fn sample_strip(image: &RasterImage, geom: &StripGeometry) -> StripImage {
    let (h, w) = geom.coords.dim();
    let mut data = Array3::<f32>::zeros((h, w, 3));
    for ((i, j), &p) in geom.coords.indexed_iter() {
        let rgb = image.sample_bilinear(p);
        for ch in 0..3 {
            data[[i, j, ch]] = rgb[ch];
        }
    }
    StripImage { data }
}

/// Builds the strip image and its geometry.
pub fn make_strip(
    image: &RasterImage,
    curve: &BoundaryCurve,
    cfg: &StripConfig,
) -> Result<(StripImage, StripGeometry)> {
    let geom = strip_geometry(curve, cfg)?;
    Ok((sample_strip(image, &geom), geom))
}

/// 8-connected group of labeled strip cells.
#[derive(Debug, Clone, PartialEq)]
pub struct StripComponent {
    pub cells: Vec<(usize, usize)>,
}

impl StripComponent {
    /// Number of distinct columns touched.
    pub fn column_coverage(&self) -> usize {
        let mut cols: Vec<usize> = self.cells.iter().map(|&(_, j)| j).collect();
        cols.sort_unstable();
        cols.dedup();
        cols.len()
    }

    pub fn mean_center_distance(&self, height: usize) -> f64 {
        let half = (height / 2) as f64;
        self.cells
            .iter()
            .map(|&(i, _)| (i as f64 - half).abs())
            .sum::<f64>()
            / self.cells.len() as f64
    }
}

/// 8-connected components of the nonzero cells, in raster discovery order.
pub fn label_components(labels: &Array2<u8>) -> Vec<StripComponent> {
    let (h, w) = labels.dim();
    let mut seen = Array2::from_elem((h, w), false);
    let mut out = Vec::new();
    for i in 0..h {
        for j in 0..w {
            if labels[[i, j]] == 0 || seen[[i, j]] {
                continue;
            }
            let mut cells = Vec::new();
            let mut stack = vec![(i, j)];
            seen[[i, j]] = true;
            while let Some((ci, cj)) = stack.pop() {
                cells.push((ci, cj));
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        let (ni, nj) = (ci as i64 + di, cj as i64 + dj);
                        if ni < 0 || nj < 0 || ni >= h as i64 || nj >= w as i64 {
                            continue;
                        }
                        let (ni, nj) = (ni as usize, nj as usize);
                        if labels[[ni, nj]] != 0 && !seen[[ni, nj]] {
                            seen[[ni, nj]] = true;
                            stack.push((ni, nj));
                        }
                    }
                }
            }
            out.push(StripComponent { cells });
        }
    }
    out
}

/// Ground-truth boundary labels for a strip.
///
/// The mask is sampled nearest-neighbor at every cell; along each column the
/// foreground-side cell of each foreground/background transition is marked.
/// Only the marked component covering the most columns is kept (ties go to
/// the one closest to the center row). Columns left without a label get a
/// border label: the last row if the column is foreground, row 0 if it is
/// background. Finally each column is bridged vertically to its left
/// neighbor so the labels form one 8-connected band across the strip.
pub fn rasterize_gt_strip_mask(gt_mask: &BinaryMask, geom: &StripGeometry) -> Result<StripMask> {
    if gt_mask.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let (h, w) = geom.coords.dim();
    let sampled = geom.coords.mapv(|p| gt_mask.sample_nearest(p));

    let mut marks = Array2::<u8>::zeros((h, w));
    for j in 0..w {
        for i in 0..h - 1 {
            let (a, b) = (sampled[[i, j]], sampled[[i + 1, j]]);
            if a != b {
                let fg_row = if a { i } else { i + 1 };
                marks[[fg_row, j]] = 1;
            }
        }
    }

    let mut labels = Array2::<u8>::zeros((h, w));
    let components = label_components(&marks);
    let best = components.iter().max_by(|a, b| {
        a.column_coverage()
            .cmp(&b.column_coverage())
            .then(b.mean_center_distance(h).total_cmp(&a.mean_center_distance(h)))
    });
    if let Some(best) = best {
        for &(i, j) in &best.cells {
            labels[[i, j]] = 1;
        }
    }

    for j in 0..w {
        if labels.column(j).iter().any(|&v| v != 0) {
            continue;
        }
        let col = sampled.column(j);
        let fg = if col.iter().all(|&v| v) {
            true
        } else if col.iter().all(|&v| !v) {
            false
        } else {
            // Only transitions of discarded components here.
            col[h / 2]
        };
        labels[[if fg { h - 1 } else { 0 }, j]] = 1;
    }

    bridge_columns(&mut labels);
    Ok(StripMask { labels })
}

/// Extends each column toward its left neighbor until they touch
/// (8-connectivity).
fn bridge_columns(labels: &mut Array2<u8>) {
    let w = labels.ncols();
    for j in 1..w {
        let prev: Vec<usize> = rows_set(labels, j - 1);
        let cur: Vec<usize> = rows_set(labels, j);
        let mut best: Option<(usize, usize)> = None;
        for &p in &prev {
            for &c in &cur {
                let gap = p.abs_diff(c);
                if best.map_or(true, |(bp, bc)| gap < bp.abs_diff(bc)) {
                    best = Some((p, c));
                }
            }
        }
        let Some((p, c)) = best else { continue };
        if p.abs_diff(c) <= 1 {
            continue;
        }
        let (lo, hi) = if p < c { (p + 1, c) } else { (c, p - 1) };
        for i in lo..=hi {
            labels[[i, j]] = 1;
        }
    }
}

fn rows_set(labels: &Array2<u8>, j: usize) -> Vec<usize> {
    labels
        .column(j)
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0)
        .map(|(i, _)| i)
        .collect()
}

/// Result of a centered row crop.
#[derive(Debug, Clone, PartialEq)]
pub struct Cropped<T> {
    pub strip: T,
    /// Index in the original strip of the first retained row.
    pub row_offset: usize,
}

/// Strip-shaped data that can be cropped to a band of rows.
pub trait RowCrop: Sized {
    fn row_count(&self) -> usize;
    fn crop_rows(&self, start: usize, len: usize) -> Self;
}

impl RowCrop for StripImage {
    fn row_count(&self) -> usize {
        self.height()
    }
    fn crop_rows(&self, start: usize, len: usize) -> Self {
        StripImage {
            data: self.data.slice(s![start..start + len, .., ..]).to_owned(),
        }
    }
}

impl RowCrop for StripMask {
    fn row_count(&self) -> usize {
        self.height()
    }
    fn crop_rows(&self, start: usize, len: usize) -> Self {
        StripMask {
            labels: self.labels.slice(s![start..start + len, ..]).to_owned(),
        }
    }
}

impl RowCrop for StripGeometry {
    fn row_count(&self) -> usize {
        self.height()
    }
    fn crop_rows(&self, start: usize, len: usize) -> Self {
        StripGeometry {
            coords: self.coords.slice(s![start..start + len, ..]).to_owned(),
            ..self.clone()
        }
    }
}

impl RowCrop for Array2<f64> {
    fn row_count(&self) -> usize {
        self.nrows()
    }
    fn crop_rows(&self, start: usize, len: usize) -> Self {
        self.slice(s![start..start + len, ..]).to_owned()
    }
}

/// Keeps the `new_height` rows centered on the strip's middle row.
pub fn crop_strip<T: RowCrop>(strip: &T, new_height: usize) -> Result<Cropped<T>> {
    let h = strip.row_count();
    if new_height >= h || new_height == 0 || new_height % 2 != 0 {
        return Err(Error::InvalidConfig(format!(
            "crop height must be even and in (0, {h}), got {new_height}"
        )));
    }
    let row_offset = (h - new_height) / 2;
    Ok(Cropped {
        strip: strip.crop_rows(row_offset, new_height),
        row_offset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{fit_periodic_bspline, Contour};
    use std::f64::consts::PI;

    fn circle_curve(c: Point, r: f64, n: usize) -> BoundaryCurve {
        let pts = (0..n)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / n as f64;
                Point::new(c.x + r * a.cos(), c.y + r * a.sin())
            })
            .collect();
        fit_periodic_bspline(&Contour::new(pts), 0.0).unwrap()
    }

    fn cfg(h: usize, w: usize) -> StripConfig {
        StripConfig {
            height: h,
            width: w,
            ..StripConfig::default()
        }
    }

    #[test]
    fn width_choice() {
        let c = StripConfig::default();
        assert_eq!(choose_strip_width(200.0, 16.0, &c), 4800);
        let c1 = StripConfig {
            width_factor: 1.0,
            ..c.clone()
        };
        assert_eq!(choose_strip_width(200.0, 4.0, &c1), 800);
        assert_eq!(choose_strip_width(1.0, 2.0, &c), 8);
    }

    #[test]
    fn config_validation() {
        assert!(cfg(79, 100).validate().is_err());
        assert!(cfg(2, 100).validate().is_err());
        assert!(cfg(80, 7).validate().is_err());
        assert!(cfg(80, 8).validate().is_ok());
    }

    #[test]
    fn constant_image_gives_constant_strip() {
        let img = RasterImage::filled(64, 64, [0.2, 0.4, 0.6]);
        let curve = circle_curve(Point::new(32.0, 32.0), 20.0, 48);
        let (strip, _) = make_strip(&img, &curve, &cfg(8, 64)).unwrap();
        assert!(strip.data.iter().zip([0.2f32, 0.4, 0.6].iter().cycle()).all(|(a, b)| a == b));
    }

    #[test]
    fn radial_field_rows_are_column_independent() {
        let c = Point::new(128.0, 128.0);
        let norm = 200.0;
        let img = RasterImage::from_fn(256, 256, |x, y| {
            let v = (Point::new(x as f64, y as f64).dist(c) / norm) as f32;
            [v, v, v]
        });
        let r = 60.0;
        let curve = circle_curve(c, r, 96);
        let h = 20;
        let (strip, _) = make_strip(&img, &curve, &cfg(h, 300)).unwrap();
        for i in 0..h {
            let expected = (r + (i as f64 - (h / 2) as f64)) / norm;
            for j in 0..300 {
                let v = strip.data[[i, j, 0]] as f64;
                assert!((v - expected).abs() < 0.01, "({i},{j}) {v} vs {expected}");
            }
        }
    }

    #[test]
    fn column_zero_matches_wrap_evaluation() {
        let curve = circle_curve(Point::new(50.0, 50.0), 30.0, 40);
        let geom = strip_geometry(&curve, &cfg(10, 100)).unwrap();
        let l = curve.total_length();
        let (p, n) = curve.frame(l).unwrap();
        for i in 0..10 {
            let expected = p + n * (i as f64 - 5.0);
            assert!(geom.at(i, 0).dist(expected) < 1e-6);
        }
        assert!((geom.dk * 100.0 - l).abs() < 1e-9);
    }

    #[test]
    fn oversampling_is_rejected() {
        let curve = circle_curve(Point::new(50.0, 50.0), 2.0, 16);
        let err = strip_geometry(&curve, &cfg(8, 1000)).unwrap_err();
        assert!(matches!(err, Error::OversampledStrip { .. }));
    }

    #[test]
    fn floor_variant_truncates_step() {
        let curve = circle_curve(Point::new(50.0, 50.0), 30.0, 40);
        let c = StripConfig {
            floor_dk: true,
            ..cfg(8, 50)
        };
        let geom = strip_geometry(&curve, &c).unwrap();
        assert_eq!(geom.dk, (curve.total_length() / 50.0).floor());
    }

    #[test]
    fn centered_crop_rows() {
        let a = Array2::from_shape_fn((80, 3), |(i, _)| i as f64);
        let c = crop_strip(&a, 40).unwrap();
        assert_eq!(c.row_offset, 20);
        assert_eq!(c.strip[[0, 0]], 20.0);
        assert_eq!(c.strip[[39, 0]], 59.0);
        assert!(crop_strip(&a, 80).is_err());
        assert!(crop_strip(&a, 81).is_err());
    }

    #[test]
    fn crop_composes() {
        let a = Array2::from_shape_fn((80, 5), |(i, j)| (i * 5 + j) as f64);
        let once = crop_strip(&a, 20).unwrap();
        let first = crop_strip(&a, 40).unwrap();
        let twice = crop_strip(&first.strip, 20).unwrap();
        assert_eq!(once.strip, twice.strip);
        assert_eq!(once.row_offset, first.row_offset + twice.row_offset);
    }

    #[test]
    fn empty_ground_truth_is_error() {
        let curve = circle_curve(Point::new(32.0, 32.0), 20.0, 48);
        let geom = strip_geometry(&curve, &cfg(8, 64)).unwrap();
        assert!(matches!(
            rasterize_gt_strip_mask(&BinaryMask::new(64, 64), &geom),
            Err(Error::EmptyGroundTruth)
        ));
    }

    #[test]
    fn bridging_connects_offset_columns() {
        let mut labels = Array2::<u8>::zeros((10, 3));
        labels[[1, 0]] = 1;
        labels[[8, 1]] = 1;
        labels[[8, 2]] = 1;
        bridge_columns(&mut labels);
        assert_eq!(label_components(&labels).len(), 1);
        assert_eq!(rows_set(&labels, 1), vec![2, 3, 4, 5, 6, 7, 8]);
    }
}
