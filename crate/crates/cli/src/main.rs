use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Refine low-resolution object masks against high-resolution images.
#[derive(Debug, Parser)]
#[command(name = "striprefine", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Refine every contour of a low-resolution mask.
    Refine {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Write one strip bundle per contour for an external predictor.
    ExtractStrip {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// High-resolution ground-truth mask; adds a strip label array.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Turn strip bundles (and optional external scores) into boundaries.
    Reconstruct {
        /// Directory produced by `extract-strip`.
        #[arg(long)]
        strips: PathBuf,
        /// `gradient` or `external:DIR` with one score bundle per contour.
        #[arg(long, default_value = "gradient")]
        predictor: String,
        /// Leave the path open at the strip seam.
        #[arg(long)]
        open: bool,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Report the training loss terms of a predictor on labeled strips.
    Losses {
        #[arg(long)]
        strips: PathBuf,
        #[arg(long, default_value = "gradient")]
        predictor: String,
    },
    /// Boundary precision, recall and F-score.
    Evaluate {
        /// Predicted boundary PNG (single mode).
        #[arg(long, required_unless_present = "pred_dir")]
        pred: Option<PathBuf>,
        /// Ground-truth boundary PNG (single mode).
        #[arg(long, required_unless_present = "gt_dir")]
        gt: Option<PathBuf>,
        /// Directory of predicted boundary PNGs (batch mode).
        #[arg(long, requires = "gt_dir")]
        pred_dir: Option<PathBuf>,
        /// Directory of ground-truth PNGs with matching file names.
        #[arg(long, requires = "pred_dir")]
        gt_dir: Option<PathBuf>,
        /// Match tolerance; repeat for several.
        #[arg(long, default_values_t = [1.0])]
        tolerance: Vec<f64>,
        /// Read tolerances as fractions of the image diagonal.
        #[arg(long)]
        diagonal: bool,
        /// Treat inputs as filled masks and compare their inner boundaries.
        #[arg(long)]
        filled: bool,
        /// Batch CSV output path (stdout if omitted).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Render a synthetic scene with its ground truth and low-resolution mask.
    Synth {
        #[arg(long, value_enum, default_value_t = ShapeKind::Disk)]
        kind: ShapeKind,
        #[arg(long, default_value_t = 1024)]
        size: usize,
        #[arg(long, default_value_t = 300.0)]
        radius: f64,
        #[arg(long, default_value_t = 0.6)]
        contrast: f32,
        #[arg(long, default_value_t = 0.0)]
        noise: f32,
        #[arg(long, default_value_t = 5)]
        lobes: u32,
        #[arg(long, default_value_t = 16)]
        scale: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Draw boundaries from a boundary JSON onto an image.
    Overlay {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        boundary: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// RGB color in [0, 1], comma separated.
        #[arg(long, default_value = "1,0,0")]
        color: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum ShapeKind {
    Disk,
    Ellipse,
    Star,
    TwoCircles,
    StepEdge,
}

#[derive(Debug, Clone, Args)]
struct RunArgs {
    #[arg(long, default_value_t = 16.0)]
    scale: f64,
    #[arg(long, default_value_t = 80)]
    strip_height: usize,
    #[arg(long, default_value_t = 1.5)]
    width_factor: f64,
    /// `gradient` or `external:DIR` with one score bundle per contour.
    #[arg(long, default_value = "gradient")]
    predictor: String,
    /// `off`, `1` or `2` segments.
    #[arg(long, default_value = "off")]
    adaptive: String,
    #[arg(long, default_value_t = 1.5)]
    growth: f64,
    /// Use the plain score sum as the adaptive-height statistic.
    #[arg(long)]
    sum_statistic: bool,
    /// Leave the path open at the strip seam (faster, no closure).
    #[arg(long)]
    open: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
