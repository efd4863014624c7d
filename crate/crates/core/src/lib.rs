pub mod error;
pub mod geometry;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod pipeline;
pub mod predictor;
pub mod raster;
pub mod reconstruct;
pub mod render;
pub mod strip;
pub mod synth;

pub use error::{Error, Result};
pub use raster::{BinaryMask, Point, RasterImage};
