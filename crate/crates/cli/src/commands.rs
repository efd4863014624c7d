use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use striprefine::io::{
    contour_dir, list_contour_dirs, read_score_bundle, read_strip_bundle, write_strip_bundle,
    BoundaryDoc, ImageInfo,
};
use striprefine::loss::LossConfig;
use striprefine::metrics::{boundary_f_with, BoundaryEval, ToleranceMode};
use striprefine::pipeline::{
    assemble, check_scaled_dims, lr_curves, refine_curve, strip_losses, AdaptiveMode, RunConfig,
};
use striprefine::predictor::{predict, GradientParams, PredictorSpec};
use striprefine::reconstruct::{high_res_setup, reconstruct_strip, BoundaryPath, HeightStatistic};
use striprefine::render::{overlay, rasterize_polyline};
use striprefine::strip::{make_strip, rasterize_gt_strip_mask, StripConfig};
use striprefine::synth::{downsample_mask, render, Shape, SynthParams};
use striprefine::{BinaryMask, Point, RasterImage};

use crate::{Command, RunArgs, ShapeKind};

enum PredictorArg {
    Gradient,
    External(PathBuf),
}

fn parse_predictor(s: &str) -> Result<PredictorArg> {
    match s {
        "gradient" => Ok(PredictorArg::Gradient),
        _ => match s.strip_prefix("external:") {
            Some(p) if !p.is_empty() => Ok(PredictorArg::External(PathBuf::from(p))),
            _ => bail!("predictor must be `gradient` or `external:PATH`, got {s:?}"),
        },
    }
}

fn parse_adaptive(s: &str) -> Result<AdaptiveMode> {
    match s {
        "off" => Ok(AdaptiveMode::Off),
        "1" => Ok(AdaptiveMode::Segments(1)),
        "2" => Ok(AdaptiveMode::Segments(2)),
        _ => bail!("adaptive must be off, 1 or 2, got {s:?}"),
    }
}

fn run_config(args: &RunArgs) -> Result<RunConfig> {
    let cfg = RunConfig {
        scale: args.scale,
        strip: StripConfig {
            height: args.strip_height,
            width_factor: args.width_factor,
            ..StripConfig::default()
        },
        predictor: GradientParams::default(),
        adaptive: parse_adaptive(&args.adaptive)?,
        growth: args.growth,
        statistic: if args.sum_statistic {
            HeightStatistic::Sum
        } else {
            HeightStatistic::ColumnMaxMean
        },
        cyclic: !args.open,
        seed: args.seed,
        ..RunConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_image(path: &Path) -> Result<RasterImage> {
    RasterImage::load_png(path).with_context(|| format!("reading image {}", path.display()))
}

fn load_mask(path: &Path) -> Result<BinaryMask> {
    BinaryMask::load_png(path).with_context(|| format!("reading mask {}", path.display()))
}

fn write_outputs(out_dir: &Path, paths: Vec<BoundaryPath>, width: usize, height: usize) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let (mask, boundary, intersections) = assemble(&paths, width, height);
    let doc = BoundaryDoc {
        image_width: width,
        image_height: height,
        intersections,
        contours: paths,
    };
    doc.save(&out_dir.join("boundary.json"))?;
    boundary.save_png(out_dir.join("boundary.png"))?;
    mask.save_png(out_dir.join("mask.png"))?;
    if intersections {
        eprintln!("warning: refined contours intersect; mask filled by even-odd rule");
    }
    Ok(())
}

fn external_scores(dir: &Path, count: usize) -> Result<Vec<PredictorSpec>> {
    let dirs = list_contour_dirs(dir)?;
    if dirs.len() != count {
        bail!("{} score bundles for {count} contours", dirs.len());
    }
    dirs.iter()
        .map(|d| {
            let map = read_score_bundle(d).with_context(|| format!("reading scores {}", d.display()))?;
            Ok(PredictorSpec::External(map))
        })
        .collect()
}

fn cmd_refine(image: &Path, mask: &Path, args: &RunArgs, out_dir: &Path) -> Result<()> {
    let cfg = run_config(args)?;
    let image = load_image(image)?;
    let lr = load_mask(mask)?;
    check_scaled_dims(&image, &lr, cfg.scale)?;
    let curves = lr_curves(&lr, cfg.min_length)?;
    let paths: Vec<BoundaryPath> = match parse_predictor(&args.predictor)? {
        PredictorArg::Gradient => curves
            .par_iter()
            .map(|c| refine_curve(&image, c, &cfg).map(|r| r.path))
            .collect::<striprefine::Result<_>>()?,
        PredictorArg::External(dir) => {
            if cfg.adaptive != AdaptiveMode::Off {
                bail!("adaptive height needs the built-in predictor");
            }
            let specs = external_scores(&dir, curves.len())?;
            let rcfg = cfg.refine_config();
            curves
                .iter()
                .zip(specs.iter())
                .map(|(c, spec)| {
                    striprefine::reconstruct::refine_contour(&image, c, cfg.scale, spec, &rcfg)
                })
                .collect::<striprefine::Result<_>>()?
        }
    };
    write_outputs(out_dir, paths, image.width(), image.height())
}

fn cmd_extract(image: &Path, mask: &Path, gt: Option<&Path>, args: &RunArgs, out_dir: &Path) -> Result<()> {
    let cfg = run_config(args)?;
    let image = load_image(image)?;
    let lr = load_mask(mask)?;
    check_scaled_dims(&image, &lr, cfg.scale)?;
    let gt = gt.map(load_mask).transpose()?;
    if let Some(gt) = &gt {
        if gt.width() != image.width() || gt.height() != image.height() {
            bail!("ground-truth mask size differs from image size");
        }
    }
    let curves = lr_curves(&lr, cfg.min_length)?;
    let rcfg = cfg.refine_config();
    let info = ImageInfo {
        width: image.width(),
        height: image.height(),
        scale: cfg.scale,
    };
    for (k, curve) in curves.iter().enumerate() {
        let (hr, strip_cfg) = high_res_setup(curve, cfg.scale, &rcfg)?;
        let (strip, geom) = make_strip(&image, &hr, &strip_cfg)?;
        let labels = gt
            .as_ref()
            .map(|m| rasterize_gt_strip_mask(m, &geom))
            .transpose()?;
        let dir = contour_dir(out_dir, k);
        write_strip_bundle(&dir, &strip, &geom, &strip_cfg, &hr, info, labels.as_ref())?;
        println!("{} {}x{}", dir.display(), strip.height(), strip.width());
    }
    Ok(())
}

fn bundle_specs(strips: &[PathBuf], predictor: &str) -> Result<Vec<PredictorSpec>> {
    match parse_predictor(predictor)? {
        PredictorArg::Gradient => Ok(vec![PredictorSpec::default(); strips.len()]),
        PredictorArg::External(dir) => external_scores(&dir, strips.len()),
    }
}

fn cmd_reconstruct(strips: &Path, predictor: &str, cyclic: bool, out_dir: &Path) -> Result<()> {
    let dirs = list_contour_dirs(strips)?;
    let specs = bundle_specs(&dirs, predictor)?;
    let mut size = None;
    let mut paths = Vec::new();
    for (dir, spec) in dirs.iter().zip(specs.iter()) {
        let bundle = read_strip_bundle(dir).with_context(|| format!("reading bundle {}", dir.display()))?;
        let dims = (bundle.header.image_width, bundle.header.image_height);
        if *size.get_or_insert(dims) != dims {
            bail!("bundles disagree on image size");
        }
        let geom = bundle.geometry()?;
        let pred = predict(&bundle.strip, spec)?;
        paths.push(reconstruct_strip(&bundle.strip, &geom, &pred, cyclic)?);
    }
    let (w, h) = size.expect("at least one bundle");
    write_outputs(out_dir, paths, w, h)
}

#[derive(Serialize)]
struct ContourLosses {
    bundle: String,
    #[serde(flatten)]
    losses: striprefine::loss::LossBreakdown,
}

fn cmd_losses(strips: &Path, predictor: &str) -> Result<()> {
    let dirs = list_contour_dirs(strips)?;
    let specs = bundle_specs(&dirs, predictor)?;
    let cfg = LossConfig::default();
    let mut rows = Vec::new();
    for (dir, spec) in dirs.iter().zip(specs.iter()) {
        let bundle = read_strip_bundle(dir)?;
        let Some(gt) = &bundle.gt else {
            bail!("{} has no ground-truth strip mask", dir.display());
        };
        rows.push(ContourLosses {
            bundle: dir.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            losses: strip_losses(&bundle.strip, gt, spec, &cfg)?,
        });
    }
    println!("{}", serde_json::to_string_pretty(&rows)?);
    Ok(())
}

fn boundary_input(path: &Path, filled: bool) -> Result<BinaryMask> {
    let m = load_mask(path)?;
    Ok(if filled { m.inner_boundary() } else { m })
}

fn evaluate_pair(pred: &Path, gt: &Path, tolerances: &[f64], mode: ToleranceMode, filled: bool) -> Result<Vec<BoundaryEval>> {
    let p = boundary_input(pred, filled)?;
    let g = boundary_input(gt, filled)?;
    tolerances
        .iter()
        .map(|&t| Ok(boundary_f_with(&p, &g, t, mode)?))
        .collect()
}

#[derive(Serialize)]
struct EvalRow {
    file: String,
    tolerance: f64,
    precision: f64,
    recall: f64,
    f_score: f64,
    mean_distance: f64,
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    pred: Option<&Path>,
    gt: Option<&Path>,
    pred_dir: Option<&Path>,
    gt_dir: Option<&Path>,
    tolerances: &[f64],
    diagonal: bool,
    filled: bool,
    csv_path: Option<&Path>,
) -> Result<()> {
    if tolerances.iter().any(|t| !(*t >= 0.0)) {
        bail!("tolerances must be non-negative");
    }
    let mode = if diagonal {
        ToleranceMode::DiagonalFraction
    } else {
        ToleranceMode::Pixels
    };
    if let (Some(pd), Some(gd)) = (pred_dir, gt_dir) {
        let mut names: Vec<String> = fs::read_dir(pd)?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".png"))
            .collect();
        names.sort();
        if names.is_empty() {
            bail!("no PNG files in {}", pd.display());
        }
        let per_file: Vec<Vec<BoundaryEval>> = names
            .par_iter()
            .map(|n| evaluate_pair(&pd.join(n), &gd.join(n), tolerances, mode, filled))
            .collect::<Result<_>>()?;
        let out: Box<dyn std::io::Write> = match csv_path {
            Some(p) => Box::new(fs::File::create(p)?),
            None => Box::new(std::io::stdout()),
        };
        let mut writer = csv::Writer::from_writer(out);
        for (name, evals) in names.iter().zip(per_file.iter()) {
            for e in evals {
                writer.serialize(EvalRow {
                    file: name.clone(),
                    tolerance: e.tolerance,
                    precision: e.precision,
                    recall: e.recall,
                    f_score: e.f_score,
                    mean_distance: e.mean_distance,
                })?;
            }
        }
        let n = per_file.len() as f64;
        for (k, &t) in tolerances.iter().enumerate() {
            let mean = |f: fn(&BoundaryEval) -> f64| per_file.iter().map(|v| f(&v[k])).sum::<f64>() / n;
            writer.serialize(EvalRow {
                file: "ALL".into(),
                tolerance: t,
                precision: mean(|e| e.precision),
                recall: mean(|e| e.recall),
                f_score: mean(|e| e.f_score),
                mean_distance: mean(|e| e.mean_distance),
            })?;
        }
        writer.flush()?;
        return Ok(());
    }
    let (Some(pred), Some(gt)) = (pred, gt) else {
        bail!("give --pred and --gt, or --pred-dir and --gt-dir");
    };
    let evals = evaluate_pair(pred, gt, tolerances, mode, filled)?;
    println!("{}", serde_json::to_string_pretty(&evals)?);
    Ok(())
}

fn synth_shape(kind: ShapeKind, size: usize, radius: f64, lobes: u32) -> Shape {
    let c = (size as f64 - 1.0) / 2.0;
    let center = Point::new(c, c);
    match kind {
        ShapeKind::Disk => Shape::Disk { center, radius },
        ShapeKind::Ellipse => Shape::Ellipse {
            center,
            rx: radius,
            ry: 0.7 * radius,
            angle: 0.3,
        },
        ShapeKind::Star => Shape::Star {
            center,
            radius,
            amplitude: 0.3,
            lobes,
        },
        ShapeKind::TwoCircles => Shape::TwoCircles {
            a: Point::new(c - 0.6 * radius, c),
            b: Point::new(c + 0.6 * radius, c),
            radius: 0.5 * radius,
        },
        ShapeKind::StepEdge => Shape::StepEdge { position: c + 0.25 },
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    kind: ShapeKind,
    size: usize,
    radius: f64,
    contrast: f32,
    noise: f32,
    lobes: u32,
    scale: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<()> {
    if !(noise >= 0.0) {
        bail!("noise must be non-negative");
    }
    let params = SynthParams {
        contrast,
        noise_sigma: noise,
        seed,
        ..SynthParams::new(size, size, synth_shape(kind, size, radius, lobes))
    };
    let scene = render(&params)?;
    let lr = downsample_mask(&scene.gt_mask, scale)?;
    fs::create_dir_all(out_dir)?;
    scene.image.save_png(out_dir.join("image.png"))?;
    scene.gt_mask.save_png(out_dir.join("hr_gt.png"))?;
    lr.save_png(out_dir.join("lr_mask.png"))?;
    fs::write(out_dir.join("scene.json"), serde_json::to_string_pretty(&params)?)?;
    Ok(())
}

fn parse_color(s: &str) -> Result<[f32; 3]> {
    let parts: Vec<f32> = s
        .split(',')
        .map(|p| p.trim().parse::<f32>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("bad color {s:?}"))?;
    match parts[..] {
        [r, g, b] if parts.iter().all(|v| (0.0..=1.0).contains(v)) => Ok([r, g, b]),
        _ => bail!("color needs three components in [0, 1], got {s:?}"),
    }
}

fn cmd_overlay(image: &Path, boundary: &Path, out: &Path, color: &str) -> Result<()> {
    let color = parse_color(color)?;
    let image = load_image(image)?;
    let doc = BoundaryDoc::load(boundary).with_context(|| format!("reading {}", boundary.display()))?;
    let mut pixels = std::collections::BTreeSet::new();
    for c in &doc.contours {
        pixels.extend(rasterize_polyline(&c.points, c.closed, image.width(), image.height()));
    }
    overlay(&image, &pixels, color).save_png(out)?;
    Ok(())
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Refine {
            image,
            mask,
            run,
            out_dir,
        } => cmd_refine(&image, &mask, &run, &out_dir),
        Command::ExtractStrip {
            image,
            mask,
            gt,
            run,
            out_dir,
        } => cmd_extract(&image, &mask, gt.as_deref(), &run, &out_dir),
        Command::Reconstruct {
            strips,
            predictor,
            open,
            out_dir,
        } => cmd_reconstruct(&strips, &predictor, !open, &out_dir),
        Command::Losses { strips, predictor } => cmd_losses(&strips, &predictor),
        Command::Evaluate {
            pred,
            gt,
            pred_dir,
            gt_dir,
            tolerance,
            diagonal,
            filled,
            csv,
        } => cmd_evaluate(
            pred.as_deref(),
            gt.as_deref(),
            pred_dir.as_deref(),
            gt_dir.as_deref(),
            &tolerance,
            diagonal,
            filled,
            csv.as_deref(),
        ),
        Command::Synth {
            kind,
            size,
            radius,
            contrast,
            noise,
            lobes,
            scale,
            seed,
            out_dir,
        } => cmd_synth(kind, size, radius, contrast, noise, lobes, scale, seed, &out_dir),
        Command::Overlay {
            image,
            boundary,
            out,
            color,
        } => cmd_overlay(&image, &boundary, &out, &color),
    }
}
