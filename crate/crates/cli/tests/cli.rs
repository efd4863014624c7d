use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use striprefine::geometry::extract_contours;
use striprefine::io::{read_header, read_strip_bundle, write_score_bundle, BoundaryDoc};
use striprefine::pipeline::lr_curves;
use striprefine::predictor::ScoreMap;
use striprefine::render::rasterize_polyline;
use striprefine::{BinaryMask, RasterImage};

fn striprefine(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_striprefine"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = striprefine(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn exit_code(args: &[&str]) -> i32 {
    striprefine(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Disk of radius 300 in a 1024 x 1024 image with its scale-16 mask.
fn disk_scene(root: &Path) -> PathBuf {
    let dir = root.join("scene");
    ok(&["synth", "--kind", "disk", "--out-dir", s(&dir)]);
    dir
}

#[test]
fn synth_disk_arithmetic() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = disk_scene(tmp.path());
    let lr = BinaryMask::load_png(scene.join("lr_mask.png")).unwrap();
    assert_eq!((lr.width(), lr.height()), (64, 64));
    let radius = (lr.count() as f64 / std::f64::consts::PI).sqrt();
    assert!((radius - 300.0 / 16.0).abs() < 0.5, "radius {radius}");
    let img = RasterImage::load_png(scene.join("image.png")).unwrap();
    assert_eq!((img.width(), img.height()), (1024, 1024));
}

#[test]
fn synth_star_has_one_contour() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("star");
    ok(&["synth", "--kind", "star", "--size", "512", "--radius", "150", "--out-dir", s(&dir)]);
    let gt = BinaryMask::load_png(dir.join("hr_gt.png")).unwrap();
    assert_eq!(extract_contours(&gt, 8.0).len(), 1);
}

#[test]
fn synth_without_noise_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&["synth", "--size", "256", "--radius", "80", "--seed", "1", "--out-dir", s(&a)]);
    ok(&["synth", "--size", "256", "--radius", "80", "--seed", "2", "--out-dir", s(&b)]);
    assert_eq!(fs::read(a.join("image.png")).unwrap(), fs::read(b.join("image.png")).unwrap());
}

#[test]
fn refine_disk_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = disk_scene(tmp.path());
    let out = tmp.path().join("out");
    ok(&[
        "refine",
        "--image",
        s(&scene.join("image.png")),
        "--mask",
        s(&scene.join("lr_mask.png")),
        "--out-dir",
        s(&out),
    ]);
    for f in ["boundary.json", "boundary.png", "mask.png"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let json = ok(&[
        "evaluate",
        "--pred",
        s(&out.join("mask.png")),
        "--gt",
        s(&scene.join("hr_gt.png")),
        "--filled",
        "--tolerance",
        "1",
    ]);
    let evals: serde_json::Value = serde_json::from_str(&json).unwrap();
    let f = evals[0]["f_score"].as_f64().unwrap();
    assert!(f >= 0.9, "F(1px) = {f}");
}

#[test]
fn refine_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = disk_scene(tmp.path());
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = tmp.path().join(format!("run{k}"));
        ok(&[
            "refine",
            "--image",
            s(&scene.join("image.png")),
            "--mask",
            s(&scene.join("lr_mask.png")),
            "--seed",
            "7",
            "--out-dir",
            s(&out),
        ]);
        outputs.push(fs::read(out.join("boundary.json")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn input_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = disk_scene(tmp.path());
    let empty = tmp.path().join("empty.png");
    BinaryMask::new(64, 64).save_png(&empty).unwrap();
    let image = scene.join("image.png");
    let refine = |mask: &Path, extra: &[&str]| {
        let mut args = vec!["refine", "--image", s(&image), "--mask", s(mask), "--out-dir", s(tmp.path())];
        args.extend_from_slice(extra);
        exit_code(&args)
    };
    assert_eq!(refine(&empty, &[]), 2);
    assert_eq!(refine(&tmp.path().join("missing.png"), &[]), 2);
    let small = tmp.path().join("small.png");
    BinaryMask::from_fn(32, 32, |x, y| (10..20).contains(&x) && (10..20).contains(&y))
        .save_png(&small)
        .unwrap();
    assert_eq!(refine(&small, &[]), 2);
    let lr = scene.join("lr_mask.png");
    assert_eq!(refine(&lr, &["--adaptive", "3"]), 2);
    assert_eq!(refine(&lr, &["--predictor", "magic"]), 2);
    assert_eq!(refine(&lr, &["--scale", "0.5"]), 2);
}

fn extract(scene: &Path, out: &Path, gt: bool) {
    let image = scene.join("image.png");
    let mask = scene.join("lr_mask.png");
    let mut args = vec![
        "extract-strip",
        "--image",
        s(&image),
        "--mask",
        s(&mask),
        "--out-dir",
        s(out),
    ];
    let gt_path = scene.join("hr_gt.png");
    if gt {
        args.extend_from_slice(&["--gt", s(&gt_path)]);
    }
    ok(&args);
}

#[test]
fn extract_strip_header_and_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = disk_scene(tmp.path());
    let strips = tmp.path().join("strips");
    extract(&scene, &strips, true);
    let dir = strips.join("contour_000");
    let header = read_header(&dir).unwrap();
    let lr = BinaryMask::load_png(scene.join("lr_mask.png")).unwrap();
    let curves = lr_curves(&lr, 8.0).unwrap();
    assert_eq!(curves.len(), 1);
    assert_eq!(header.height, 80);
    assert_eq!(header.width, (1.5 * 16.0 * curves[0].total_length()).round() as usize);

    let a = read_strip_bundle(&dir).unwrap();
    let b = read_strip_bundle(&dir).unwrap();
    assert_eq!(a.strip.data, b.strip.data);
    assert_eq!(a.gt, b.gt);
    let raw = fs::read(dir.join("image.f32")).unwrap();
    let bytes: Vec<u8> = a.strip.data.iter().flat_map(|v| v.to_le_bytes()).collect();
    assert_eq!(raw, bytes);

    let losses = ok(&["losses", "--strips", s(&strips)]);
    let v: serde_json::Value = serde_json::from_str(&losses).unwrap();
    assert!(v[0]["total"].as_f64().unwrap().is_finite());
}

#[test]
fn extract_then_reconstruct_matches_refine() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = disk_scene(tmp.path());
    let strips = tmp.path().join("strips");
    extract(&scene, &strips, false);
    let via_bundle = tmp.path().join("via_bundle");
    ok(&["reconstruct", "--strips", s(&strips), "--out-dir", s(&via_bundle)]);
    let direct = tmp.path().join("direct");
    ok(&[
        "refine",
        "--image",
        s(&scene.join("image.png")),
        "--mask",
        s(&scene.join("lr_mask.png")),
        "--out-dir",
        s(&direct),
    ]);
    for f in ["boundary.json", "mask.png", "boundary.png"] {
        assert_eq!(fs::read(via_bundle.join(f)).unwrap(), fs::read(direct.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn reconstruct_with_external_scores() {
    let tmp = tempfile::tempdir().unwrap();
    // Flat image: only the scores shape the energy.
    let scene = tmp.path().join("flat");
    ok(&["synth", "--contrast", "0", "--out-dir", s(&scene)]);
    let strips = tmp.path().join("strips");
    extract(&scene, &strips, false);
    let dir = strips.join("contour_000");
    let bundle = read_strip_bundle(&dir).unwrap();
    let (h, w) = (bundle.header.height, bundle.header.width);

    let scores = tmp.path().join("scores");
    let one_hot = ScoreMap {
        x: ndarray::Array2::from_shape_fn((h, w), |(i, _)| (i == h / 2) as u8 as f64),
        logits: None,
    };
    write_score_bundle(&scores.join("contour_000"), &bundle.header, &one_hot).unwrap();
    let out = tmp.path().join("out");
    let predictor = format!("external:{}", s(&scores));
    ok(&["reconstruct", "--strips", s(&strips), "--predictor", &predictor, "--out-dir", s(&out)]);
    let doc = BoundaryDoc::load(&out.join("boundary.json")).unwrap();
    let geom = bundle.geometry().unwrap();
    assert_eq!(doc.contours[0].points.len(), w);
    for (j, p) in doc.contours[0].points.iter().enumerate() {
        assert!(p.dist(geom.at(h / 2, j)) < 1e-9);
        assert!(p.dist(bundle.curve.eval_point(j as f64 * geom.dk)) < 1e-6);
    }

    // Same scores through `refine`.
    let refined = tmp.path().join("refined");
    ok(&[
        "refine",
        "--image",
        s(&scene.join("image.png")),
        "--mask",
        s(&scene.join("lr_mask.png")),
        "--predictor",
        &predictor,
        "--out-dir",
        s(&refined),
    ]);
    assert_eq!(
        fs::read(refined.join("boundary.json")).unwrap(),
        fs::read(out.join("boundary.json")).unwrap()
    );

    let bad = tmp.path().join("bad_scores");
    let wrong = ScoreMap {
        x: ndarray::Array2::zeros((h / 2, w)),
        logits: None,
    };
    write_score_bundle(&bad.join("contour_000"), &bundle.header, &wrong).unwrap();
    let bad_predictor = format!("external:{}", s(&bad));
    assert_eq!(
        exit_code(&["reconstruct", "--strips", s(&strips), "--predictor", &bad_predictor, "--out-dir", s(&out)]),
        2
    );
}

#[test]
fn corrupt_bundle_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = disk_scene(tmp.path());
    let strips = tmp.path().join("strips");
    extract(&scene, &strips, false);
    fs::write(strips.join("contour_000/header.json"), "{\"height\": ").unwrap();
    let out = tmp.path().join("out");
    assert_eq!(exit_code(&["reconstruct", "--strips", s(&strips), "--out-dir", s(&out)]), 2);
    assert_eq!(exit_code(&["reconstruct", "--strips", s(tmp.path()), "--out-dir", s(&out)]), 2);
}

#[test]
fn overlay_draws_polyline_pixels() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = disk_scene(tmp.path());
    let out = tmp.path().join("out");
    let image = scene.join("image.png");
    ok(&["refine", "--image", s(&image), "--mask", s(&scene.join("lr_mask.png")), "--out-dir", s(&out)]);
    let drawn = tmp.path().join("overlay.png");
    ok(&["overlay", "--image", s(&image), "--boundary", s(&out.join("boundary.json")), "--out", s(&drawn)]);

    let before = RasterImage::load_png(&image).unwrap();
    let after = RasterImage::load_png(&drawn).unwrap();
    let changed = (0..1024)
        .flat_map(|y| (0..1024).map(move |x| (x, y)))
        .filter(|&(x, y)| before.get(x, y) != after.get(x, y))
        .count();
    let doc = BoundaryDoc::load(&out.join("boundary.json")).unwrap();
    let expected = rasterize_polyline(&doc.contours[0].points, true, 1024, 1024).len();
    assert_eq!(changed, expected);

    let empty = tmp.path().join("empty.json");
    let mut doc = doc;
    doc.contours.clear();
    doc.save(&empty).unwrap();
    let copy = tmp.path().join("copy.png");
    ok(&["overlay", "--image", s(&image), "--boundary", s(&empty), "--out", s(&copy)]);
    assert_eq!(RasterImage::load_png(&copy).unwrap(), before);

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "not json").unwrap();
    assert_eq!(exit_code(&["overlay", "--image", s(&image), "--boundary", s(&bad), "--out", s(&copy)]), 2);
}

#[test]
fn evaluate_single_and_batch() {
    let tmp = tempfile::tempdir().unwrap();
    let pred_dir = tmp.path().join("pred");
    let gt_dir = tmp.path().join("gt");
    fs::create_dir_all(&pred_dir).unwrap();
    fs::create_dir_all(&gt_dir).unwrap();
    let line = |y: usize| BinaryMask::from_fn(40, 30, move |x, yy| yy == y && (5..35).contains(&x));
    line(10).save_png(pred_dir.join("a.png")).unwrap();
    line(10).save_png(gt_dir.join("a.png")).unwrap();
    line(11).save_png(pred_dir.join("b.png")).unwrap();
    line(10).save_png(gt_dir.join("b.png")).unwrap();

    let json = ok(&[
        "evaluate",
        "--pred",
        s(&pred_dir.join("b.png")),
        "--gt",
        s(&gt_dir.join("b.png")),
        "--tolerance",
        "0",
        "--tolerance",
        "1",
    ]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v[0]["f_score"], 0.0);
    assert_eq!(v[1]["f_score"], 1.0);

    let csv_path = tmp.path().join("metrics.csv");
    ok(&[
        "evaluate",
        "--pred-dir",
        s(&pred_dir),
        "--gt-dir",
        s(&gt_dir),
        "--tolerance",
        "0",
        "--csv",
        s(&csv_path),
    ]);
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(&rows[0][0], "a.png");
    assert_eq!(&rows[2][0], "ALL");
    let f_all: f64 = rows[2][4].parse().unwrap();
    assert_eq!(f_all, 0.5);

    let other = tmp.path().join("other.png");
    BinaryMask::new(10, 10).save_png(&other).unwrap();
    assert_eq!(
        exit_code(&["evaluate", "--pred", s(&other), "--gt", s(&gt_dir.join("a.png"))]),
        2
    );
}
