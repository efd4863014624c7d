//! Strip-space boundary scorers.
//!
//! The gradient scorer needs no training: it rates every strip cell by the
//! luminance change along the normal direction. The external scorer accepts
//! score maps produced by any model trained elsewhere.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::loss::{compose_selection, StripPrediction};
use crate::raster::luminance;
use crate::strip::StripImage;

/// Default logit gain of the selection softmax.
pub const DEFAULT_ALPHA: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientParams {
    /// Half-width of the box filter across neighboring columns (0 = off).
    pub smoothing_radius: usize,
    /// Selection logits are `alpha * x`.
    pub alpha: f64,
}

impl Default for GradientParams {
    fn default() -> Self {
        Self {
            smoothing_radius: 0,
            alpha: DEFAULT_ALPHA,
        }
    }
}

/// Scores supplied from outside: initial scores and, optionally, selection
/// logits. Without logits the selection uses `alpha * x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub x: Array2<f64>,
    pub logits: Option<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredictorSpec {
    Gradient(GradientParams),
    External(ScoreMap),
}

impl Default for PredictorSpec {
    fn default() -> Self {
        PredictorSpec::Gradient(GradientParams::default())
    }
}

/// `0.299 R + 0.587 G + 0.114 B` per strip cell.
pub fn grayscale(strip: &StripImage) -> Array2<f64> {
    Array2::from_shape_fn((strip.height(), strip.width()), |(i, j)| {
        luminance(strip.pixel(i, j))
    })
}

/// Absolute central difference down each column, one-sided at the ends.
pub(crate) fn row_gradient(gray: &Array2<f64>) -> Array2<f64> {
    let (h, w) = gray.dim();
    Array2::from_shape_fn((h, w), |(i, j)| {
        if h < 2 {
            return 0.0;
        }
        let d = if i == 0 {
            gray[[1, j]] - gray[[0, j]]
        } else if i == h - 1 {
            gray[[h - 1, j]] - gray[[h - 2, j]]
        } else {
            0.5 * (gray[[i + 1, j]] - gray[[i - 1, j]])
        };
        d.abs()
    })
}

fn box_smooth_columns(a: &Array2<f64>, radius: usize) -> Array2<f64> {
    if radius == 0 {
        return a.clone();
    }
    let (h, w) = a.dim();
    let span = (2 * radius + 1) as f64;
    Array2::from_shape_fn((h, w), |(i, j)| {
        (0..=2 * radius)
            .map(|o| a[[i, (j + w * (radius + 1) + o - radius) % w]])
            .sum::<f64>()
            / span
    })
}

fn normalize_columns(a: &mut Array2<f64>) {
    for mut col in a.columns_mut() {
        let max = col.iter().copied().fold(0.0f64, f64::max);
        if max > 0.0 {
            col.mapv_inplace(|v| v / max);
        } else {
            col.fill(0.0);
        }
    }
}

/// Scores a strip.
pub fn predict(strip: &StripImage, spec: &PredictorSpec) -> Result<StripPrediction> {
    match spec {
        PredictorSpec::Gradient(params) => {
            let gray = grayscale(strip);
            let mut x = box_smooth_columns(&row_gradient(&gray), params.smoothing_radius);
            normalize_columns(&mut x);
            let logits = &x * params.alpha;
            compose_selection(x, &logits)
        }
        PredictorSpec::External(map) => {
            let expected = (strip.height(), strip.width());
            let shape_ok = map.x.dim() == expected
                && map.logits.as_ref().map_or(true, |l| l.dim() == expected);
            if !shape_ok {
                return Err(Error::ShapeMismatch {
                    expected,
                    actual: map.x.dim(),
                });
            }
            let logits = match &map.logits {
                Some(l) => l.clone(),
                None => &map.x * DEFAULT_ALPHA,
            };
            compose_selection(map.x.clone(), &logits)
        }
    }
}

/// Row of the first maximum of `s` in every column.
pub fn column_argmax(s: &Array2<f64>) -> Vec<usize> {
    s.columns()
        .into_iter()
        .map(|col| {
            let mut best = 0;
            for (i, &v) in col.iter().enumerate() {
                if v > col[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
