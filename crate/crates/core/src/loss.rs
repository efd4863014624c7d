//! Training losses for strip-space boundary predictors, each returning its
//! value together with the analytic gradient.
//!
//! Non-smooth points (`|a|` at 0, `max(0, .)` at the margin, max-pool ties)
//! take the subgradient of the attained branch, with ties going to the lower
//! index. Rows inside the soft argmax are counted from 1.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::strip::RowCrop;

/// Initial scores, column-stochastic selection map and final scores.
#[derive(Debug, Clone, PartialEq)]
pub struct StripPrediction {
    pub x: Array2<f64>,
    pub m: Array2<f64>,
    pub s: Array2<f64>,
}

impl StripPrediction {
    pub fn height(&self) -> usize {
        self.s.nrows()
    }

    pub fn width(&self) -> usize {
        self.s.ncols()
    }
}

impl RowCrop for StripPrediction {
    fn row_count(&self) -> usize {
        self.height()
    }
    fn crop_rows(&self, start: usize, len: usize) -> Self {
        StripPrediction {
            x: self.x.crop_rows(start, len),
            m: self.m.crop_rows(start, len),
            s: self.s.crop_rows(start, len),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub epsilon: f64,
    /// Boundary-distance weight.
    pub lambda1: f64,
    /// Matching weight.
    pub lambda2: f64,
    /// C0 continuity weight.
    pub lambda3: f64,
    pub margin: f64,
    pub maxpool_kernel: usize,
    pub crop_fraction: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            lambda1: 0.1,
            lambda2: 20.0,
            lambda3: 1.0,
            margin: 1.0,
            maxpool_kernel: 11,
            crop_fraction: 0.5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.epsilon,
            self.lambda1,
            self.lambda2,
            self.lambda3,
            self.margin,
            self.crop_fraction,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidConfig("loss weights must be positive".into()));
        }
        if self.maxpool_kernel % 2 == 0 {
            return Err(Error::InvalidConfig("max-pool kernel must be odd".into()));
        }
        Ok(())
    }
}

/// A scalar loss and its gradient with respect to the scored array.
#[derive(Debug, Clone, PartialEq)]
pub struct Loss {
    pub value: f64,
    pub grad: Array2<f64>,
}

fn check_shape(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(())
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Softmax down each column.
pub fn column_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut m = logits.clone();
    for mut col in m.columns_mut() {
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        col.mapv_inplace(|v| (v - max).exp());
        let z: f64 = col.sum();
        col.mapv_inplace(|v| v / z);
    }
    m
}

/// Final scores as the initial scores gated by a column-wise softmax.
pub fn compose_selection(x: Array2<f64>, logits: &Array2<f64>) -> Result<StripPrediction> {
    check_shape(&x.view(), &logits.view())?;
    let m = column_softmax(logits);
    let s = &x * &m;
    Ok(StripPrediction { x, m, s })
}

/// Back-propagates a gradient on `s` through `s = x * softmax(logits)`.
/// Returns `(d/dx, d/dlogits)`.
pub fn selection_backward(pred: &StripPrediction, grad_s: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let grad_x = grad_s * &pred.m;
    let g = grad_s * &pred.x;
    let mut grad_logits = Array2::zeros(g.dim());
    for j in 0..g.ncols() {
        let mj = pred.m.column(j);
        let gj = g.column(j);
        let dot: f64 = mj.iter().zip(gj.iter()).map(|(a, b)| a * b).sum();
        for i in 0..g.nrows() {
            grad_logits[[i, j]] = mj[i] * (gj[i] - dot);
        }
    }
    (grad_x, grad_logits)
}

/// Class-balanced L1: boundary cells weighted by the background fraction and
/// vice versa.
pub fn weighted_l1(s: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<Loss> {
    check_shape(&s, &y)?;
    let total = y.len() as f64;
    let negatives = y.iter().filter(|&&v| v == 0.0).count() as f64;
    let beta = negatives / total;
    let mut value = 0.0;
    let mut grad = Array2::zeros(s.dim());
    Zip::from(&mut grad).and(&s).and(&y).for_each(|g, &sv, &yv| {
        let w = if yv != 0.0 { beta } else { 1.0 - beta };
        value += w * (yv - sv).abs();
        *g = w * sign(sv - yv);
    });
    Ok(Loss { value, grad })
}

/// `1 - (2 sum(s*y) + eps) / (sum(s) + sum(y) + eps)`.
pub fn dice_loss(s: ArrayView2<f64>, y: ArrayView2<f64>, eps: f64) -> Result<Loss> {
    check_shape(&s, &y)?;
    let inter: f64 = s.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
    let num = 2.0 * inter + eps;
    let den = s.sum() + y.sum() + eps;
    let value = 1.0 - num / den;
    let grad = y.mapv(|yv| -(2.0 * yv * den - num) / (den * den));
    Ok(Loss { value, grad })
}

/// Soft argmax of one column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftArgmax {
    /// Expected 1-based row.
    pub position: f64,
    /// Set when the column's L1 norm vanished and the center was returned.
    pub degenerate: bool,
}

const DEGENERATE_NORM: f64 = 1e-12;

/// `sum_i |s_i| / ||s||_1 * i` over rows `i = 1..H`.
pub fn soft_argmax_column(col: ArrayView1<f64>) -> SoftArgmax {
    soft_argmax_with_grad(col).0
}

fn soft_argmax_with_grad(col: ArrayView1<f64>) -> (SoftArgmax, Array1<f64>) {
    let h = col.len();
    let norm: f64 = col.iter().map(|v| v.abs()).sum();
    if norm < DEGENERATE_NORM {
        let center = SoftArgmax {
            position: (h as f64 + 1.0) / 2.0,
            degenerate: true,
        };
        return (center, Array1::zeros(h));
    }
    let moment: f64 = col
        .iter()
        .enumerate()
        .map(|(i, v)| v.abs() * (i + 1) as f64)
        .sum();
    let position = moment / norm;
    let grad = Array1::from_shape_fn(h, |i| {
        let dabs = if col[i] < 0.0 { -1.0 } else { 1.0 };
        dabs * ((i + 1) as f64 - position) / norm
    });
    (
        SoftArgmax {
            position,
            degenerate: false,
        },
        grad,
    )
}

/// Soft argmax of every column.
pub fn soft_argmax_columns(s: ArrayView2<f64>) -> Vec<SoftArgmax> {
    s.axis_iter(Axis(1)).map(soft_argmax_column).collect()
}

/// 1-based row of the first maximum in a column.
fn argmax_1based(col: ArrayView1<f64>) -> f64 {
    let mut best = 0;
    for (i, &v) in col.iter().enumerate() {
        if v > col[best] {
            best = i;
        }
    }
    (best + 1) as f64
}

/// Mean per-column gap between the soft argmax of `s` and the labeled row of
/// `y`.
pub fn boundary_distance_loss(s: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<Loss> {
    check_shape(&s, &y)?;
    let w = s.ncols() as f64;
    let mut value = 0.0;
    let mut grad = Array2::zeros(s.dim());
    for j in 0..s.ncols() {
        let (sa, dsa) = soft_argmax_with_grad(s.column(j));
        let target = argmax_1based(y.column(j));
        let diff = sa.position - target;
        value += diff.abs() / w;
        let g = sign(diff) / w;
        grad.column_mut(j).assign(&(dsa * g));
    }
    Ok(Loss { value, grad })
}

/// Matching loss between a prediction and the prediction for its centered
/// crop.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingLoss {
    pub value: f64,
    /// Gradient with respect to the full-height prediction.
    pub grad_full: Array2<f64>,
    /// Gradient with respect to the cropped prediction.
    pub grad_cropped: Array2<f64>,
}

/// Mean absolute difference over the rows shared by `x` and `x_cropped`, with
/// `x_cropped` row 0 aligned to `x` row `row_offset`.
pub fn matching_loss(
    x: ArrayView2<f64>,
    x_cropped: ArrayView2<f64>,
    row_offset: usize,
) -> Result<MatchingLoss> {
    let (h, w) = x.dim();
    let (hc, wc) = x_cropped.dim();
    if wc != w || row_offset + hc > h {
        return Err(Error::ShapeMismatch {
            expected: (h.saturating_sub(row_offset), w),
            actual: (hc, wc),
        });
    }
    let n = hc * wc;
    if n == 0 {
        return Err(Error::ZeroOverlap);
    }
    let inv = 1.0 / n as f64;
    let mut value = 0.0;
    let mut grad_full = Array2::zeros((h, w));
    let mut grad_cropped = Array2::zeros((hc, wc));
    for i in 0..hc {
        for j in 0..w {
            let d = x_cropped[[i, j]] - x[[i + row_offset, j]];
            value += d.abs() * inv;
            grad_cropped[[i, j]] = sign(d) * inv;
            grad_full[[i + row_offset, j]] = -sign(d) * inv;
        }
    }
    Ok(MatchingLoss {
        value,
        grad_full,
        grad_cropped,
    })
}

/// Per-column margin violations `max(0, |f_j - f_{j+1}| - v)` with the last
/// column wrapping to the first.
fn c0_gaps(positions: &[f64], margin: f64) -> Vec<f64> {
    let w = positions.len();
    (0..w)
        .map(|j| ((positions[j] - positions[(j + 1) % w]).abs() - margin).max(0.0))
        .collect()
}

/// Index of the first maximum of `d` in the window of `kernel` centered on
/// `j`, clipped to the array.
fn pool_argmax(d: &[f64], j: usize, kernel: usize) -> usize {
    let half = kernel / 2;
    let lo = j.saturating_sub(half);
    let hi = (j + half).min(d.len() - 1);
    let mut best = lo;
    for i in lo..=hi {
        if d[i] > d[best] {
            best = i;
        }
    }
    best
}

/// Max-pooled margin penalty on jumps between neighboring columns' soft
/// argmax, averaged over columns.
pub fn c0_loss(s: ArrayView2<f64>, cfg: &LossConfig) -> Result<Loss> {
    let (h, w) = s.dim();
    if w < 2 {
        return Err(Error::InvalidInput("C0 loss needs at least two columns".into()));
    }
    let columns: Vec<(SoftArgmax, Array1<f64>)> =
        s.axis_iter(Axis(1)).map(soft_argmax_with_grad).collect();
    let positions: Vec<f64> = columns.iter().map(|(sa, _)| sa.position).collect();
    let gaps = c0_gaps(&positions, cfg.margin);

    let inv_w = 1.0 / w as f64;
    let mut value = 0.0;
    let mut grad_pos = vec![0.0; w];
    for j in 0..w {
        let a = pool_argmax(&gaps, j, cfg.maxpool_kernel);
        value += gaps[a] * inv_w;
        if gaps[a] > 0.0 {
            let next = (a + 1) % w;
            let g = sign(positions[a] - positions[next]) * inv_w;
            grad_pos[a] += g;
            grad_pos[next] -= g;
        }
    }
    let mut grad = Array2::zeros((h, w));
    for (j, (_, dsa)) in columns.iter().enumerate() {
        if grad_pos[j] != 0.0 {
            grad.column_mut(j).assign(&(dsa * grad_pos[j]));
        }
    }
    Ok(Loss { value, grad })
}

/// Per-term values of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_e_initial: f64,
    pub l_e_final: f64,
    pub dice: f64,
    pub bd: f64,
    pub matching: f64,
    pub c0: f64,
    pub total: f64,
}

/// Gradients of the combined objective.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalGrads {
    /// With respect to the initial prediction `x` (direct terms only).
    pub x: Array2<f64>,
    /// With respect to the final prediction `s`.
    pub s: Array2<f64>,
    /// With respect to the cropped strip's initial prediction.
    pub x_cropped: Array2<f64>,
}

/// Weighted sum of every loss term:
/// `Le(x) + Le(s) + dice(s) + l1*bd(s) + l2*matching(x, x') + l3*c0(s)`.
///
/// `pred_cropped` must be the prediction for the centered crop of the same
/// strip; its row offset follows from the two heights.
pub fn total_loss(
    pred: &StripPrediction,
    pred_cropped: &StripPrediction,
    y: ArrayView2<f64>,
    y_cropped: ArrayView2<f64>,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, TotalGrads)> {
    cfg.validate()?;
    let (h, w) = pred.s.dim();
    let (hc, wc) = pred_cropped.x.dim();
    if y_cropped.dim() != (hc, wc) {
        return Err(Error::ShapeMismatch {
            expected: (hc, wc),
            actual: y_cropped.dim(),
        });
    }
    if hc > h || (h - hc) % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "cropped height {hc} is not a centered crop of {h}"
        )));
    }
    let offset = (h - hc) / 2;

    let le_x = weighted_l1(pred.x.view(), y)?;
    let le_s = weighted_l1(pred.s.view(), y)?;
    let dice = dice_loss(pred.s.view(), y, cfg.epsilon)?;
    let bd = boundary_distance_loss(pred.s.view(), y)?;
    let matching = matching_loss(pred.x.view(), pred_cropped.x.view(), offset)?;
    let c0 = c0_loss(pred.s.view(), cfg)?;

    let total = le_x.value
        + le_s.value
        + dice.value
        + cfg.lambda1 * bd.value
        + cfg.lambda2 * matching.value
        + cfg.lambda3 * c0.value;

    let grad_x = &le_x.grad + &(matching.grad_full * cfg.lambda2);
    let grad_s = &le_s.grad + &dice.grad + &(bd.grad * cfg.lambda1) + &(c0.grad * cfg.lambda3);
    let grad_xc = matching.grad_cropped * cfg.lambda2;
    debug_assert_eq!(grad_s.dim(), (h, w));

    Ok((
        LossBreakdown {
            l_e_initial: le_x.value,
            l_e_final: le_s.value,
            dice: dice.value,
            bd: bd.value,
            matching: matching.value,
            c0: c0.value,
            total,
        },
        TotalGrads {
            x: grad_x,
            s: grad_s,
            x_cropped: grad_xc,
        },
    ))
}
