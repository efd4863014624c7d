//! On-disk formats.
//!
//! A bundle is a directory holding `header.json` and raw little-endian
//! arrays. Strip bundles carry the sampled strip, the image-resolution curve
//! (`curve.json`) and optionally the ground-truth strip mask; score bundles
//! carry an external predictor's output for one strip.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryCurve, CurveDoc};
use crate::predictor::ScoreMap;
use crate::reconstruct::BoundaryPath;
use crate::strip::{strip_geometry, StripConfig, StripGeometry, StripImage, StripMask};

pub const HEADER_FILE: &str = "header.json";
pub const CURVE_FILE: &str = "curve.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleRole {
    Strip,
    Score,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DType {
    F32,
    U8,
}

impl DType {
    fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub file: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub byte_order: String,
    pub layout: String,
    pub rows: String,
    pub columns: String,
}

impl Default for Conventions {
    fn default() -> Self {
        Self {
            byte_order: "little".into(),
            layout: "row-major, last axis fastest".into(),
            rows: "row i is normal offset (i - H/2) * dt; larger rows lie toward the background".into(),
            columns: "column j is arclength start + j * dk along the curve".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleHeader {
    pub format_version: u32,
    pub role: BundleRole,
    pub height: usize,
    pub width: usize,
    pub dk: f64,
    pub dt: f64,
    pub start: f64,
    pub floor_dk: bool,
    pub curve_id: u64,
    pub image_width: usize,
    pub image_height: usize,
    pub scale: f64,
    pub conventions: Conventions,
    pub arrays: Vec<ArrayEntry>,
}

impl BundleHeader {
    pub fn strip_config(&self) -> StripConfig {
        StripConfig {
            height: self.height,
            width: self.width,
            dt: self.dt,
            floor_dk: self.floor_dk,
            start_offset: self.start,
            ..StripConfig::default()
        }
    }

    fn array(&self, name: &str) -> Option<&ArrayEntry> {
        self.arrays.iter().find(|a| a.name == name)
    }
}

/// Everything needed to rebuild a strip and map a path back to the image.
#[derive(Debug, Clone)]
pub struct StripBundle {
    pub header: BundleHeader,
    pub strip: StripImage,
    pub curve: BoundaryCurve,
    pub gt: Option<StripMask>,
}

impl StripBundle {
    /// Recomputes the strip geometry from the stored curve.
    pub fn geometry(&self) -> Result<StripGeometry> {
        let geom = strip_geometry(&self.curve, &self.header.strip_config())?;
        if geom.curve_id != self.header.curve_id {
            return Err(Error::Format("curve does not match header curve_id".into()));
        }
        Ok(geom)
    }
}

fn write_f32(path: &Path, values: impl Iterator<Item = f32>) -> Result<()> {
    let bytes: Vec<u8> = values.flat_map(f32::to_le_bytes).collect();
    fs::write(path, bytes)?;
    Ok(())
}

fn read_raw(dir: &Path, entry: &ArrayEntry, dtype: DType) -> Result<Vec<u8>> {
    if entry.dtype != dtype {
        return Err(Error::Format(format!("array {} has dtype {:?}", entry.name, entry.dtype)));
    }
    if entry.file.contains(['/', '\\']) || entry.file.starts_with('.') {
        return Err(Error::Format(format!("array file name {:?} not allowed", entry.file)));
    }
    let bytes = fs::read(dir.join(&entry.file))?;
    let expected = entry.shape.iter().product::<usize>() * dtype.size();
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{}: expected {expected} bytes, found {}",
            entry.file,
            bytes.len()
        )));
    }
    Ok(bytes)
}

fn read_f32(dir: &Path, entry: &ArrayEntry) -> Result<Vec<f32>> {
    Ok(read_raw(dir, entry, DType::F32)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn expect_shape(entry: &ArrayEntry, shape: &[usize]) -> Result<()> {
    if entry.shape != shape {
        return Err(Error::Format(format!(
            "array {} has shape {:?}, expected {:?}",
            entry.name, entry.shape, shape
        )));
    }
    Ok(())
}

pub fn read_header(dir: &Path) -> Result<BundleHeader> {
    let text = fs::read_to_string(dir.join(HEADER_FILE))?;
    let header: BundleHeader = serde_json::from_str(&text)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {}", header.format_version)));
    }
    if header.height == 0 || header.width == 0 {
        return Err(Error::Format("empty strip dimensions".into()));
    }
    Ok(header)
}

fn write_header(dir: &Path, header: &BundleHeader) -> Result<()> {
    fs::write(dir.join(HEADER_FILE), serde_json::to_string_pretty(header)?)?;
    Ok(())
}

/// Image size and scale recorded alongside a strip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageInfo {
    pub width: usize,
    pub height: usize,
    pub scale: f64,
}

pub fn write_strip_bundle(
    dir: &Path,
    strip: &StripImage,
    geom: &StripGeometry,
    cfg: &StripConfig,
    curve: &BoundaryCurve,
    info: ImageInfo,
    gt: Option<&StripMask>,
) -> Result<BundleHeader> {
    fs::create_dir_all(dir)?;
    let (h, w) = (strip.height(), strip.width());
    let mut arrays = vec![ArrayEntry {
        name: "image".into(),
        file: "image.f32".into(),
        dtype: DType::F32,
        shape: vec![h, w, 3],
    }];
    write_f32(&dir.join("image.f32"), strip.data.iter().copied())?;
    arrays.push(ArrayEntry {
        name: "geometry".into(),
        file: "geometry.f32".into(),
        dtype: DType::F32,
        shape: vec![h, w, 2],
    });
    write_f32(
        &dir.join("geometry.f32"),
        geom.coords.iter().flat_map(|p| [p.x as f32, p.y as f32]),
    )?;
    if let Some(gt) = gt {
        arrays.push(ArrayEntry {
            name: "gt_mask".into(),
            file: "gt_mask.u8".into(),
            dtype: DType::U8,
            shape: vec![h, w],
        });
        fs::write(dir.join("gt_mask.u8"), gt.labels.iter().copied().collect::<Vec<u8>>())?;
    }
    fs::write(dir.join(CURVE_FILE), serde_json::to_string_pretty(&curve.to_doc())?)?;
    let header = BundleHeader {
        format_version: FORMAT_VERSION,
        role: BundleRole::Strip,
        height: h,
        width: w,
        dk: geom.dk,
        dt: geom.dt,
        start: geom.start,
        floor_dk: cfg.floor_dk,
        curve_id: geom.curve_id,
        image_width: info.width,
        image_height: info.height,
        scale: info.scale,
        conventions: Conventions::default(),
        arrays,
    };
    write_header(dir, &header)?;
    Ok(header)
}

pub fn read_strip_bundle(dir: &Path) -> Result<StripBundle> {
    let header = read_header(dir)?;
    if header.role != BundleRole::Strip {
        return Err(Error::Format("bundle is not a strip bundle".into()));
    }
    let (h, w) = (header.height, header.width);
    let entry = header
        .array("image")
        .ok_or_else(|| Error::Format("strip bundle lacks image array".into()))?;
    expect_shape(entry, &[h, w, 3])?;
    let data = Array3::from_shape_vec((h, w, 3), read_f32(dir, entry)?)
        .map_err(|e| Error::Format(e.to_string()))?;
    let gt = match header.array("gt_mask") {
        Some(entry) => {
            expect_shape(entry, &[h, w])?;
            let labels = Array2::from_shape_vec((h, w), read_raw(dir, entry, DType::U8)?)
                .map_err(|e| Error::Format(e.to_string()))?;
            Some(StripMask { labels })
        }
        None => None,
    };
    let doc: CurveDoc = serde_json::from_str(&fs::read_to_string(dir.join(CURVE_FILE))?)?;
    let curve = BoundaryCurve::from_doc(&doc)?;
    Ok(StripBundle {
        header,
        strip: StripImage { data },
        curve,
        gt,
    })
}

/// Writes scores for a strip described by `strip_header`: one channel
/// (`x`) or two (`x`, selection logits).
pub fn write_score_bundle(dir: &Path, strip_header: &BundleHeader, scores: &ScoreMap) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (h, w) = scores.x.dim();
    let channels = 1 + scores.logits.is_some() as usize;
    let values = scores
        .x
        .iter()
        .chain(scores.logits.iter().flat_map(|l| l.iter()))
        .map(|&v| v as f32);
    write_f32(&dir.join("scores.f32"), values)?;
    let header = BundleHeader {
        role: BundleRole::Score,
        height: h,
        width: w,
        arrays: vec![ArrayEntry {
            name: "scores".into(),
            file: "scores.f32".into(),
            dtype: DType::F32,
            shape: vec![channels, h, w],
        }],
        ..strip_header.clone()
    };
    write_header(dir, &header)
}

pub fn read_score_bundle(dir: &Path) -> Result<ScoreMap> {
    let header = read_header(dir)?;
    if header.role != BundleRole::Score {
        return Err(Error::Format("bundle is not a score bundle".into()));
    }
    let entry = header
        .array("scores")
        .ok_or_else(|| Error::Format("score bundle lacks scores array".into()))?;
    let [c, h, w] = entry.shape[..] else {
        return Err(Error::Format("scores must have shape [channels, H, W]".into()));
    };
    if !(1..=2).contains(&c) {
        return Err(Error::Format(format!("scores must have 1 or 2 channels, got {c}")));
    }
    let values: Vec<f64> = read_f32(dir, entry)?.into_iter().map(f64::from).collect();
    let plane = h * w;
    let to_array = |k: usize| {
        Array2::from_shape_vec((h, w), values[k * plane..(k + 1) * plane].to_vec())
            .map_err(|e| Error::Format(e.to_string()))
    };
    Ok(ScoreMap {
        x: to_array(0)?,
        logits: if c == 2 { Some(to_array(1)?) } else { None },
    })
}

/// Refined boundaries of one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDoc {
    pub image_width: usize,
    pub image_height: usize,
    /// Refined contours cross each other or themselves.
    pub intersections: bool,
    pub contours: Vec<BoundaryPath>,
}

impl BoundaryDoc {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Subdirectory name of the `index`-th contour in multi-contour outputs.
pub fn contour_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("contour_{index:03}"))
}

/// Contour subdirectories of `root`, in index order.
pub fn list_contour_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("contour_"))
        })
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::InvalidInput(format!("no contour_* bundles in {}", root.display())));
    }
    Ok(dirs)
}
