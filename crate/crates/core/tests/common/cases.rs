//! Seeded finite-difference cases for every loss gradient, shared by the
//! gradient tests and the acceptance run.

use ndarray::{s, Array2};
use striprefine::loss::{
    boundary_distance_loss, c0_loss, compose_selection, dice_loss, matching_loss, selection_backward,
    total_loss, weighted_l1, LossConfig, StripPrediction,
};

use super::{check_gradient, random_boundary, random_scores, rng, GradCheck};

pub const STEP: f64 = 1e-4;
pub const TOL: f64 = 1e-4;
pub const SEEDS: u64 = 100;
const H: usize = 8;
const W: usize = 16;

pub type Case = fn(u64) -> GradCheck;

pub const ALL: [(&str, Case); 7] = [
    ("weighted_l1", weighted_l1_case),
    ("dice", dice_case),
    ("boundary_distance", boundary_distance_case),
    ("matching", matching_case),
    ("c0", c0_case),
    ("selection", selection_case),
    ("total", total_case),
];

/// Merged outcome of `case` over all seeds.
pub fn run_case(case: Case) -> GradCheck {
    let mut total = GradCheck::default();
    for seed in 0..SEEDS {
        total.merge(case(seed));
    }
    total
}

/// Errors below tolerance and at most one in ten cells skipped.
pub fn passes(c: &GradCheck) -> bool {
    c.max_rel < TOL && c.skipped * 10 < c.checked
}

pub fn weighted_l1_case(seed: u64) -> GradCheck {
    let mut r = rng(seed);
    let s = random_scores(H, W, &mut r);
    let y = random_boundary(H, W, &mut r);
    let g = weighted_l1(s.view(), y.view()).unwrap().grad;
    check_gradient(&s, &g, STEP, |s| weighted_l1(s.view(), y.view()).unwrap().value)
}

pub fn dice_case(seed: u64) -> GradCheck {
    let mut r = rng(1000 + seed);
    let s = random_scores(H, W, &mut r);
    let y = random_boundary(H, W, &mut r);
    let g = dice_loss(s.view(), y.view(), 1e-6).unwrap().grad;
    check_gradient(&s, &g, STEP, |s| dice_loss(s.view(), y.view(), 1e-6).unwrap().value)
}

pub fn boundary_distance_case(seed: u64) -> GradCheck {
    let mut r = rng(2000 + seed);
    let s = random_scores(H, W, &mut r);
    let y = random_boundary(H, W, &mut r);
    let g = boundary_distance_loss(s.view(), y.view()).unwrap().grad;
    check_gradient(&s, &g, STEP, |s| boundary_distance_loss(s.view(), y.view()).unwrap().value)
}

pub fn matching_case(seed: u64) -> GradCheck {
    let mut r = rng(3000 + seed);
    let x = random_scores(H, W, &mut r);
    let xc = random_scores(H / 2, W, &mut r);
    let off = H / 4;
    let m = matching_loss(x.view(), xc.view(), off).unwrap();
    let mut c = check_gradient(&x, &m.grad_full, STEP, |x| {
        matching_loss(x.view(), xc.view(), off).unwrap().value
    });
    c.merge(check_gradient(&xc, &m.grad_cropped, STEP, |xc| {
        matching_loss(x.view(), xc.view(), off).unwrap().value
    }));
    c
}

/// Peaked columns.
pub fn c0_case(seed: u64) -> GradCheck {
    let cfg = LossConfig::default();
    let mut r = rng(4000 + seed);
    let s = random_scores(H, W, &mut r) * 0.3 + &(random_boundary(H, W, &mut r) * 3.0);
    let g = c0_loss(s.view(), &cfg).unwrap().grad;
    check_gradient(&s, &g, STEP, |s| c0_loss(s.view(), &cfg).unwrap().value)
}

pub fn selection_case(seed: u64) -> GradCheck {
    let mut r = rng(5000 + seed);
    let x = random_scores(H, W, &mut r);
    let logits = random_scores(H, W, &mut r) * 4.0;
    let weights = random_scores(H, W, &mut r);
    let objective =
        |x: &Array2<f64>, l: &Array2<f64>| (compose_selection(x.clone(), l).unwrap().s * &weights).sum();
    let pred = compose_selection(x.clone(), &logits).unwrap();
    let (gx, gl) = selection_backward(&pred, &weights);
    let mut c = check_gradient(&x, &gx, STEP, |x| objective(x, &logits));
    c.merge(check_gradient(&logits, &gl, STEP, |l| objective(&x, l)));
    c
}

fn prediction(x: Array2<f64>, s: Array2<f64>) -> StripPrediction {
    let m = Array2::from_elem(x.dim(), 1.0 / x.nrows() as f64);
    StripPrediction { x, m, s }
}

pub fn total_case(seed: u64) -> GradCheck {
    let cfg = LossConfig::default();
    let mut r = rng(6000 + seed);
    let x = random_scores(H, W, &mut r);
    let s = random_scores(H, W, &mut r) * 0.3 + &(random_boundary(H, W, &mut r) * 0.6);
    let xc = random_scores(H / 2, W, &mut r);
    let y = random_boundary(H, W, &mut r);
    let yc = y.slice(s![H / 4..H / 4 + H / 2, ..]).to_owned();
    let eval = |x: &Array2<f64>, s: &Array2<f64>, xc: &Array2<f64>| {
        let p = prediction(x.clone(), s.clone());
        let pc = prediction(xc.clone(), xc.clone());
        total_loss(&p, &pc, y.view(), yc.view(), &cfg).unwrap()
    };
    let (_, grads) = eval(&x, &s, &xc);
    let mut c = check_gradient(&x, &grads.x, STEP, |x| eval(x, &s, &xc).0.total);
    c.merge(check_gradient(&s, &grads.s, STEP, |s| eval(&x, s, &xc).0.total));
    c.merge(check_gradient(&xc, &grads.x_cropped, STEP, |xc| eval(&x, &s, xc).0.total));
    c
}
