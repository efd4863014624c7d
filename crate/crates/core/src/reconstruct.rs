//! From strip scores back to an image-space boundary.
//!
//! The energy of a strip cell is `-s - |grad I| / max |grad I|`; the boundary
//! is the minimum-energy path that picks one row per column and moves at
//! most one row between neighboring columns (seam carving), closed around
//! the strip when the contour is closed.

use ndarray::{s, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{lift_to_high_res, BoundaryCurve};
use crate::loss::StripPrediction;
use crate::predictor::{grayscale, predict, PredictorSpec};
use crate::raster::{Point, RasterImage};
use crate::strip::{
    choose_strip_width, make_strip, strip_geometry, StripConfig, StripGeometry, StripImage,
};

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMap {
    pub values: Array2<f64>,
    /// Normalization constant `max |grad I|` of the strip (0 if flat).
    pub gradient_max: f64,
}

/// Gradient magnitude of the strip luminance: central differences on both
/// axes, one-sided at the top/bottom rows and wrapping across columns.
pub fn strip_gradient_magnitude(strip: &StripImage) -> Array2<f64> {
    let gray = grayscale(strip);
    let (h, w) = gray.dim();
    Array2::from_shape_fn((h, w), |(i, j)| {
        let gy = if h < 2 {
            0.0
        } else if i == 0 {
            gray[[1, j]] - gray[[0, j]]
        } else if i == h - 1 {
            gray[[h - 1, j]] - gray[[h - 2, j]]
        } else {
            0.5 * (gray[[i + 1, j]] - gray[[i - 1, j]])
        };
        let gx = 0.5 * (gray[[i, (j + 1) % w]] - gray[[i, (j + w - 1) % w]]);
        gx.hypot(gy)
    })
}

/// `E = -s - |grad I| / max |grad I|`.
pub fn build_energy(pred: &StripPrediction, strip: &StripImage) -> Result<EnergyMap> {
    let dim = (strip.height(), strip.width());
    if pred.s.dim() != dim {
        return Err(Error::ShapeMismatch {
            expected: dim,
            actual: pred.s.dim(),
        });
    }
    let grad = strip_gradient_magnitude(strip);
    let gradient_max = grad.iter().copied().fold(0.0f64, f64::max);
    let values = if gradient_max > 0.0 {
        -&pred.s - &(grad / gradient_max)
    } else {
        -&pred.s
    };
    Ok(EnergyMap {
        values,
        gradient_max,
    })
}

/// Row per column of an optimal path and its total energy.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRows {
    pub rows: Vec<usize>,
    pub energy: f64,
}

/// Forward pass. `cost[i]` holds the best energy of a path ending at row `i`
/// of the current column; `back[[i, j]]` the predecessor row offset (0..=2
/// meaning -1..=+1).
fn forward(energy: &Array2<f64>, init: &[f64], back: Option<&mut Array2<u8>>) -> Vec<f64> {
    let (h, w) = energy.dim();
    let mut cost = init.to_vec();
    let mut next = vec![0.0; h];
    let mut back = back;
    for j in 1..w {
        for i in 0..h {
            let mut best = cost[i.saturating_sub(1)];
            let mut arg = if i == 0 { 1 } else { 0 };
            for (off, r) in [(1u8, i), (2u8, i + 1)] {
                if r >= h || (off == 1 && i == 0) {
                    continue;
                }
                if cost[r] < best {
                    best = cost[r];
                    arg = off;
                }
            }
            next[i] = best + energy[[i, j]];
            if let Some(b) = back.as_deref_mut() {
                b[[i, j]] = arg;
            }
        }
        std::mem::swap(&mut cost, &mut next);
    }
    cost
}

fn backtrack(back: &Array2<u8>, end_row: usize) -> Vec<usize> {
    let w = back.ncols();
    let mut rows = vec![0; w];
    let mut r = end_row;
    rows[w - 1] = r;
    for j in (1..w).rev() {
        r = r + back[[r, j]] as usize - 1;
        rows[j - 1] = r;
    }
    rows
}

fn first_min(values: impl Iterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values {
        if best.map_or(true, |(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best
}

/// Minimum-energy path with `|rows[j+1] - rows[j]| <= 1`. With `cyclic` the
/// constraint also holds between the last and first column; this is solved
/// exactly by one DP per starting row. Ties go to the smaller row, then the
/// smaller starting row.
pub fn min_energy_path(energy: &Array2<f64>, cyclic: bool) -> PathRows {
    let (h, w) = energy.dim();
    assert!(h >= 1 && w >= 2, "energy map must have at least two columns");
    let col0: Vec<f64> = energy.column(0).to_vec();

    if !cyclic {
        let mut back = Array2::zeros((h, w));
        let cost = forward(energy, &col0, Some(&mut back));
        let (end, energy) = first_min(cost.iter().copied().enumerate()).unwrap();
        return PathRows {
            rows: backtrack(&back, end),
            energy,
        };
    }

    let pinned_init = |r0: usize| -> Vec<f64> {
        let mut init = vec![f64::INFINITY; h];
        init[r0] = col0[r0];
        init
    };
    let closing = |r0: usize, cost: &[f64]| {
        first_min(
            (r0.saturating_sub(1)..=(r0 + 1).min(h - 1)).map(|i| (i, cost[i])),
        )
        .unwrap()
    };
    let per_pin: Vec<(usize, f64)> = (0..h)
        .into_par_iter()
        .map(|r0| {
            if !col0[r0].is_finite() {
                return (r0, f64::INFINITY);
            }
            let cost = forward(energy, &pinned_init(r0), None);
            (r0, closing(r0, &cost).1)
        })
        .collect();
    let (r0, _) = first_min(per_pin.into_iter()).unwrap();
    let mut back = Array2::zeros((h, w));
    let cost = forward(energy, &pinned_init(r0), Some(&mut back));
    let (end, energy) = closing(r0, &cost);
    PathRows {
        rows: backtrack(&back, end),
        energy,
    }
}

/// Image coordinates of a strip path.
pub fn map_path(rows: &[usize], geom: &StripGeometry) -> Vec<Point> {
    assert_eq!(rows.len(), geom.width(), "one row per strip column");
    rows.iter()
        .enumerate()
        .map(|(j, &i)| geom.at(i, j))
        .collect()
}

/// Refined boundary of one contour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPath {
    pub closed: bool,
    /// Strip row per column.
    #[serde(skip)]
    pub rows: Vec<usize>,
    #[serde(with = "point_pairs")]
    pub points: Vec<Point>,
    pub energy: f64,
}

mod point_pairs {
    use super::Point;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(pts: &[Point], s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = pts.iter().map(|p| [p.x, p.y]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Point>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[x, y]| Point::new(x, y)).collect())
    }
}

/// Energy, optimal closed path and its image-space polyline for one strip.
pub fn reconstruct_strip(
    strip: &StripImage,
    geom: &StripGeometry,
    pred: &StripPrediction,
    cyclic: bool,
) -> Result<BoundaryPath> {
    let energy = build_energy(pred, strip)?;
    let path = min_energy_path(&energy.values, cyclic);
    Ok(BoundaryPath {
        closed: cyclic,
        points: map_path(&path.rows, geom),
        rows: path.rows,
        energy: path.energy,
    })
}

/// Knobs shared by fixed-height and adaptive refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineConfig {
    /// Height, normal step, width factor and start offset; the width is
    /// recomputed per contour.
    pub strip: StripConfig,
    /// Close the path around the strip (exact, `H` times one DP).
    pub cyclic: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            strip: StripConfig::default(),
            cyclic: true,
        }
    }
}

/// Image-resolution curve and strip configuration for a low-resolution
/// contour.
pub fn high_res_setup(
    lr_curve: &BoundaryCurve,
    scale: f64,
    cfg: &RefineConfig,
) -> Result<(BoundaryCurve, StripConfig)> {
    let hr_curve = lift_to_high_res(lr_curve, scale)?;
    let width = choose_strip_width(lr_curve.total_length(), scale, &cfg.strip);
    let strip_cfg = StripConfig {
        width,
        ..cfg.strip.clone()
    };
    Ok((hr_curve, strip_cfg))
}

/// Fixed-height refinement of one contour given in low-resolution pixels.
pub fn refine_contour(
    image: &RasterImage,
    lr_curve: &BoundaryCurve,
    scale: f64,
    spec: &PredictorSpec,
    cfg: &RefineConfig,
) -> Result<BoundaryPath> {
    if !(scale > 0.0) {
        return Err(Error::InvalidConfig("scale must be positive".into()));
    }
    let (hr_curve, strip_cfg) = high_res_setup(lr_curve, scale, cfg)?;
    let (strip, geom) = make_strip(image, &hr_curve, &strip_cfg)?;
    let pred = predict(&strip, spec)?;
    reconstruct_strip(&strip, &geom, &pred, cfg.cyclic)
}

/// How a strip height is scored when deciding whether to keep growing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum HeightStatistic {
    /// Mean over columns of the column maximum of `s`.
    #[default]
    ColumnMaxMean,
    /// Plain sum of `s`.
    Sum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveConfig {
    /// Number of equal-length contour segments adjusted independently.
    pub segments: usize,
    pub growth: f64,
    pub statistic: HeightStatistic,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            segments: 1,
            growth: 1.5,
            statistic: HeightStatistic::ColumnMaxMean,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveOutcome {
    pub path: BoundaryPath,
    /// Chosen strip height per segment.
    pub segment_heights: Vec<usize>,
    /// Statistic per segment for every height tried, in order.
    pub trace: Vec<(usize, Vec<f64>)>,
}

fn next_height(h: usize, growth: f64) -> usize {
    let grown = (h as f64 * growth).ceil() as usize;
    let grown = grown.max(h + 2);
    grown + grown % 2
}

fn segment_ranges(width: usize, segments: usize) -> Vec<std::ops::Range<usize>> {
    (0..segments)
        .map(|s| (s * width / segments)..((s + 1) * width / segments))
        .collect()
}

fn height_statistic(s: &Array2<f64>, cols: std::ops::Range<usize>, kind: HeightStatistic) -> f64 {
    let view = s.slice(s![.., cols]);
    match kind {
        HeightStatistic::Sum => view.sum(),
        HeightStatistic::ColumnMaxMean => {
            let n = view.ncols().max(1) as f64;
            view.columns()
                .into_iter()
                .map(|c| c.iter().copied().fold(0.0f64, f64::max))
                .sum::<f64>()
                / n
        }
    }
}

/// Refinement with progressively taller strips.
///
/// Heights grow `H, ceil(H * growth), ...` (rounded up to even). Each segment
/// keeps growing while its statistic strictly improves; a segment whose
/// statistic is still zero has seen no boundary evidence yet and keeps
/// growing. Growth stops at half the smaller image side. The per-segment
/// winners are embedded, centered, in one strip of the tallest chosen height
/// and a single closed path is solved across all segments.
pub fn adaptive_refine(
    image: &RasterImage,
    lr_curve: &BoundaryCurve,
    scale: f64,
    spec: &PredictorSpec,
    cfg: &RefineConfig,
    adaptive: &AdaptiveConfig,
) -> Result<AdaptiveOutcome> {
    if !(adaptive.growth > 1.0) {
        return Err(Error::InvalidConfig("growth must exceed 1".into()));
    }
    if !(1..=2).contains(&adaptive.segments) {
        return Err(Error::InvalidConfig("segments must be 1 or 2".into()));
    }
    let (hr_curve, base_cfg) = high_res_setup(lr_curve, scale, cfg)?;
    base_cfg.validate()?;
    let limit = image.width().min(image.height()) / 2;
    let width = base_cfg.width;
    let ranges = segment_ranges(width, adaptive.segments);

    let mut best: Vec<Option<(f64, usize, Array2<f64>)>> = vec![None; ranges.len()];
    let mut active = vec![true; ranges.len()];
    let mut trace = Vec::new();
    let mut height = base_cfg.height;
    loop {
        let strip_cfg = StripConfig {
            height,
            ..base_cfg.clone()
        };
        let (strip, _) = make_strip(image, &hr_curve, &strip_cfg)?;
        let pred = predict(&strip, spec)?;
        let energy = build_energy(&pred, &strip)?;
        let stats: Vec<f64> = ranges
            .iter()
            .map(|r| height_statistic(&pred.s, r.clone(), adaptive.statistic))
            .collect();
        for (seg, &stat) in stats.iter().enumerate() {
            if !active[seg] {
                continue;
            }
            let improves = match &best[seg] {
                None => true,
                Some((prev, _, _)) => stat > *prev || *prev == 0.0,
            };
            if improves {
                best[seg] = Some((stat, height, energy.values.clone()));
            } else {
                active[seg] = false;
            }
        }
        trace.push((height, stats));
        let next = next_height(height, adaptive.growth);
        if !active.iter().any(|&a| a) || next > limit {
            break;
        }
        height = next;
    }

    let chosen: Vec<(usize, Array2<f64>)> = best
        .into_iter()
        .map(|b| {
            let (_, h, e) = b.expect("first height always recorded");
            (h, e)
        })
        .collect();
    let tallest = chosen.iter().map(|(h, _)| *h).max().unwrap();
    let mut combined = Array2::from_elem((tallest, width), f64::INFINITY);
    for ((h, e), cols) in chosen.iter().zip(ranges.iter()) {
        let off = (tallest - h) / 2;
        combined
            .slice_mut(s![off..off + h, cols.clone()])
            .assign(&e.slice(s![.., cols.clone()]));
    }
    let geom = strip_geometry(
        &hr_curve,
        &StripConfig {
            height: tallest,
            ..base_cfg.clone()
        },
    )?;
    let path = min_energy_path(&combined, cfg.cyclic);
    Ok(AdaptiveOutcome {
        path: BoundaryPath {
            closed: cfg.cyclic,
            points: map_path(&path.rows, &geom),
            rows: path.rows,
            energy: path.energy,
        },
        segment_heights: chosen.iter().map(|(h, _)| *h).collect(),
        trace,
    })
}
