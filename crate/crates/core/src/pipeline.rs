//! Whole-mask refinement: every contour of a low-resolution mask is refined
//! independently and the results are filled back into a full mask.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{default_smoothing, extract_contours, fit_periodic_bspline, BoundaryCurve, DEFAULT_MIN_LENGTH};
use crate::loss::{total_loss, LossBreakdown, LossConfig};
use crate::predictor::{predict, GradientParams, PredictorSpec, ScoreMap};
use crate::raster::{BinaryMask, Point, RasterImage};
use crate::reconstruct::{adaptive_refine, refine_contour, AdaptiveConfig, BoundaryPath, HeightStatistic, RefineConfig};
use crate::render::{fill_even_odd, has_intersections};
use crate::strip::{crop_strip, RowCrop, StripConfig, StripImage, StripMask};

/// Probe distance (low-resolution pixels) used to orient normals.
const ORIENT_PROBE: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AdaptiveMode {
    #[default]
    Off,
    Segments(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scale: f64,
    pub strip: StripConfig,
    pub predictor: GradientParams,
    pub adaptive: AdaptiveMode,
    pub growth: f64,
    pub statistic: HeightStatistic,
    pub cyclic: bool,
    /// Contours shorter than this (low-resolution pixels) are skipped.
    pub min_length: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scale: 16.0,
            strip: StripConfig::default(),
            predictor: GradientParams::default(),
            adaptive: AdaptiveMode::Off,
            growth: 1.5,
            statistic: HeightStatistic::ColumnMaxMean,
            cyclic: true,
            min_length: DEFAULT_MIN_LENGTH,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale >= 1.0) {
            return Err(Error::InvalidConfig(format!("scale must be >= 1, got {}", self.scale)));
        }
        if let AdaptiveMode::Segments(n) = self.adaptive {
            if !(1..=2).contains(&n) {
                return Err(Error::InvalidConfig("adaptive segments must be 1 or 2".into()));
            }
        }
        if self.adaptive != AdaptiveMode::Off && !(self.growth > 1.0) {
            return Err(Error::InvalidConfig("growth must exceed 1".into()));
        }
        self.strip.validate()
    }

    pub fn refine_config(&self) -> RefineConfig {
        RefineConfig {
            strip: self.strip.clone(),
            cyclic: self.cyclic,
        }
    }
}

/// Spline boundary curves of every contour of a low-resolution mask, with
/// normals oriented toward the background.
pub fn lr_curves(lr_mask: &BinaryMask, min_length: f64) -> Result<Vec<BoundaryCurve>> {
    let contours = extract_contours(lr_mask, min_length);
    if contours.is_empty() {
        return Err(Error::InvalidInput(format!(
            "mask has no contour of length >= {min_length}"
        )));
    }
    contours
        .iter()
        .map(|c| {
            let mut curve = fit_periodic_bspline(c, default_smoothing(c))?;
            curve.orient_with_mask(lr_mask, ORIENT_PROBE)?;
            Ok(curve)
        })
        .collect()
}

/// Image size must be the mask size times the scale.
pub fn check_scaled_dims(image: &RasterImage, lr_mask: &BinaryMask, scale: f64) -> Result<()> {
    let ew = (lr_mask.width() as f64 * scale).round() as usize;
    let eh = (lr_mask.height() as f64 * scale).round() as usize;
    if image.width() != ew || image.height() != eh {
        return Err(Error::InvalidInput(format!(
            "image is {}x{} but mask {}x{} at scale {scale} implies {ew}x{eh}",
            image.width(),
            image.height(),
            lr_mask.width(),
            lr_mask.height()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContourRefinement {
    pub path: BoundaryPath,
    /// Strip height used per segment.
    pub heights: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Refinement {
    pub contours: Vec<ContourRefinement>,
    pub mask: BinaryMask,
    pub boundary: BinaryMask,
    /// Refined contours cross each other or themselves.
    pub intersections: bool,
}

/// Refines one low-resolution curve according to `cfg`.
pub fn refine_curve(image: &RasterImage, curve: &BoundaryCurve, cfg: &RunConfig) -> Result<ContourRefinement> {
    let spec = PredictorSpec::Gradient(cfg.predictor.clone());
    let rcfg = cfg.refine_config();
    match cfg.adaptive {
        AdaptiveMode::Off => Ok(ContourRefinement {
            path: refine_contour(image, curve, cfg.scale, &spec, &rcfg)?,
            heights: vec![cfg.strip.height],
        }),
        AdaptiveMode::Segments(segments) => {
            let out = adaptive_refine(
                image,
                curve,
                cfg.scale,
                &spec,
                &rcfg,
                &AdaptiveConfig {
                    segments,
                    growth: cfg.growth,
                    statistic: cfg.statistic,
                },
            )?;
            Ok(ContourRefinement {
                path: out.path,
                heights: out.segment_heights,
            })
        }
    }
}

/// Filled mask, its 1-px inner boundary and the crossing flag for a set of
/// closed paths.
pub fn assemble(paths: &[BoundaryPath], width: usize, height: usize) -> (BinaryMask, BinaryMask, bool) {
    let polys: Vec<Vec<Point>> = paths.iter().map(|p| p.points.clone()).collect();
    let mask = fill_even_odd(&polys, width, height);
    let boundary = mask.inner_boundary();
    (mask, boundary, has_intersections(&polys))
}

/// Refines every contour of `lr_mask` against `image`.
pub fn refine_mask(image: &RasterImage, lr_mask: &BinaryMask, cfg: &RunConfig) -> Result<Refinement> {
    cfg.validate()?;
    check_scaled_dims(image, lr_mask, cfg.scale)?;
    let curves = lr_curves(lr_mask, cfg.min_length)?;
    let contours = curves
        .par_iter()
        .map(|c| refine_curve(image, c, cfg))
        .collect::<Result<Vec<_>>>()?;
    let paths: Vec<BoundaryPath> = contours.iter().map(|c| c.path.clone()).collect();
    let (mask, boundary, intersections) = assemble(&paths, image.width(), image.height());
    Ok(Refinement {
        contours,
        mask,
        boundary,
        intersections,
    })
}

/// Loss terms of a predictor on one strip against its ground-truth mask.
/// The matching term compares against a prediction for the centered crop
/// of `crop_fraction * H` rows.
pub fn strip_losses(
    strip: &StripImage,
    gt: &StripMask,
    spec: &PredictorSpec,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    let h = strip.height();
    let hc = 2 * ((h as f64 * cfg.crop_fraction / 2.0).round() as usize);
    let image_crop = crop_strip(strip, hc)?;
    let y = gt.to_f64();
    let y_crop = crop_strip(&y, hc)?;
    let cropped_spec = match spec {
        PredictorSpec::Gradient(_) => spec.clone(),
        PredictorSpec::External(map) => {
            let off = image_crop.row_offset;
            PredictorSpec::External(ScoreMap {
                x: map.x.crop_rows(off, hc),
                logits: map.logits.as_ref().map(|l| l.crop_rows(off, hc)),
            })
        }
    };
    let pred = predict(strip, spec)?;
    let pred_crop = predict(&image_crop.strip, &cropped_spec)?;
    let (breakdown, _) = total_loss(&pred, &pred_crop, y.view(), y_crop.strip.view(), cfg)?;
    Ok(breakdown)
}
