//! Contours of binary masks and the closed B-spline curves fitted to them.

pub mod contour;
pub mod spline;

pub use contour::{extract_contours, Contour, DEFAULT_MIN_LENGTH};
pub use spline::{
    default_smoothing, fit_periodic_bspline, lift_to_high_res, perturb_curve, scale_curve,
    translate_curve, BoundaryCurve, CurveDoc,
};
