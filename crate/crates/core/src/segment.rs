//! Two-region level-set segmentation of a speed map.
//!
//! The level set `U` marks the moving region as `{U < 0}` and the background
//! as `{U > 0}`. The smoothed Heaviside follows that orientation, so
//! `H_ε(U) → 1` inside. Each evolution step is explicit gradient descent on
//!
//! ```text
//! J(U) = Σ λ (S − c1)² H_ε(U) + λ (S − c2)² (1 − H_ε(U)) + μ δ_ε(U) |∇U|
//! ```
//!
//! at fixed `c1`, `c2`. Between steps the means are re-estimated as plain
//! averages over `{U < 0}` and `{U > 0}`; the smoothed weights are only used
//! inside the evolution itself.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::imgcore::{connected_components, Component, Frame, DEFAULT_MIN_AREA};
use crate::optflow::SpeedMap;

/// Smoothed Heaviside with `H(z) → 1` for `z → −∞`.
#[inline]
pub fn regularized_heaviside(z: f64, epsilon: f64) -> f64 {
    0.5 * (1.0 - (2.0 / PI) * (z / epsilon).atan())
}

/// Magnitude of the derivative of [`regularized_heaviside`].
#[inline]
pub fn regularized_delta(z: f64, epsilon: f64) -> f64 {
    epsilon / (PI * (epsilon * epsilon + z * z))
}

const GRAD_FLOOR: f64 = 1e-8;
const DEGENERATE_WEIGHT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSet {
    pub u: Frame,
}

impl LevelSet {
    pub fn new(u: Frame) -> Self {
        Self { u }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.u.dims()
    }

    /// `sin(πx/period)·sin(πy/period)`, shifted by `phase` pixels on both axes.
    pub fn checkerboard(width: usize, height: usize, period: f64, phase: f64) -> Self {
        Self::new(Frame::from_fn(width, height, |x, y| {
            ((x as f64 + phase) * PI / period).sin() * ((y as f64 + phase) * PI / period).sin()
        }))
    }

    /// Binary mask of `{U < 0}`.
    pub fn inside_mask(&self) -> Frame {
        self.u.map(|v| if v < 0.0 { 1.0 } else { 0.0 })
    }

    pub fn negated(&self) -> Self {
        Self::new(self.u.map(|v| -v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChanVeseParams {
    pub cv_lambda: f64,
    /// Contour-length weight; `None` picks `0.1 · (max S − min S)²`.
    pub mu: Option<f64>,
    pub epsilon: f64,
    pub dt: f64,
    pub max_iters: usize,
    /// Stop once fewer than this fraction of pixels change sign in a step.
    pub stop_tol: f64,
    pub min_area: usize,
}

impl Default for ChanVeseParams {
    fn default() -> Self {
        Self {
            cv_lambda: 1.0,
            mu: None,
            epsilon: 1.0,
            dt: 0.5,
            max_iters: 300,
            stop_tol: 1e-4,
            min_area: DEFAULT_MIN_AREA,
        }
    }
}

impl ChanVeseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cv_lambda > 0.0) {
            return Err(Error::param("cv_lambda", "must be positive"));
        }
        if let Some(mu) = self.mu {
            if !(mu >= 0.0) {
                return Err(Error::param("mu", "must be non-negative"));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::param("epsilon", "must be positive"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::param("dt", "must be positive"));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::param("stop_tol", "must be non-negative"));
        }
        Ok(())
    }

    /// Length weight actually used for a speed map with the given value range.
    pub fn mu_for(&self, range: f64) -> f64 {
        self.mu.unwrap_or(0.1 * range * range)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionStats {
    /// Mean speed inside (`U < 0`).
    pub c1: f64,
    /// Mean speed outside (`U > 0`).
    pub c2: f64,
}

/// Weighting used when averaging the speed map over the two regions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Heaviside {
    /// Indicator of `{U < 0}`.
    Sharp,
    /// [`regularized_heaviside`] with the given width.
    Regularized(f64),
}

impl Heaviside {
    #[inline]
    fn weight(self, u: f64) -> f64 {
        match self {
            Heaviside::Sharp => (u < 0.0) as u8 as f64,
            Heaviside::Regularized(eps) => regularized_heaviside(u, eps),
        }
    }
}

/// Means of the speed map on both sides of the zero level.
pub fn region_means(sv: &SpeedMap, ls: &LevelSet, h: Heaviside) -> Result<RegionStats> {
    sv.data.same_shape(&ls.u)?;
    let (mut num_in, mut den_in, mut num_out, mut den_out) = (0.0, 0.0, 0.0, 0.0);
    for (&s, &u) in sv.data.data().iter().zip(ls.u.data()) {
        let hv = h.weight(u);
        num_in += s * hv;
        den_in += hv;
        num_out += s * (1.0 - hv);
        den_out += 1.0 - hv;
    }
    if den_in < DEGENERATE_WEIGHT {
        return Err(Error::DegenerateRegion {
            region: "inside",
            weight: den_in,
        });
    }
    if den_out < DEGENERATE_WEIGHT {
        return Err(Error::DegenerateRegion {
            region: "outside",
            weight: den_out,
        });
    }
    Ok(RegionStats {
        c1: num_in / den_in,
        c2: num_out / den_out,
    })
}

/// Central-difference gradient with replicated borders (zero normal derivative).
fn central_gradient(u: &Frame, x: usize, y: usize) -> (f64, f64) {
    let (xi, yi) = (x as isize, y as isize);
    let gx = 0.5 * (u.get_clamped(xi + 1, yi) - u.get_clamped(xi - 1, yi));
    let gy = 0.5 * (u.get_clamped(xi, yi + 1) - u.get_clamped(xi, yi - 1));
    (gx, gy)
}

/// `div(∇U / |∇U|)` by central differences of the unit normal field.
pub fn curvature(u: &Frame) -> Frame {
    let (w, h) = u.dims();
    let mut nx = Vec::with_capacity(w * h);
    let mut ny = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (gx, gy) = central_gradient(u, x, y);
            let norm = gx.hypot(gy).max(GRAD_FLOOR);
            nx.push(gx / norm);
            ny.push(gy / norm);
        }
    }
    let nx = Frame::new(w, h, nx).expect("finite normals");
    let ny = Frame::new(w, h, ny).expect("finite normals");
    Frame::from_fn(w, h, |x, y| {
        let (xi, yi) = (x as isize, y as isize);
        0.5 * (nx.get_clamped(xi + 1, yi) - nx.get_clamped(xi - 1, yi))
            + 0.5 * (ny.get_clamped(xi, yi + 1) - ny.get_clamped(xi, yi - 1))
    })
}

/// The data part of the evolution bracket at one pixel.
#[inline]
pub fn data_force(s: f64, stats: &RegionStats, cv_lambda: f64) -> f64 {
    cv_lambda * (s - stats.c1).powi(2) - cv_lambda * (s - stats.c2).powi(2)
}

/// `∂U/∂τ = δ_ε(U)·[μκ + λ(S−c1)² − λ(S−c2)²]` at every pixel.
fn evolution_rate(
    ls: &LevelSet,
    sv: &SpeedMap,
    stats: &RegionStats,
    p: &ChanVeseParams,
    mu: f64,
) -> Vec<f64> {
    let kappa = curvature(&ls.u);
    ls.u.data()
        .iter()
        .zip(sv.data.data())
        .zip(kappa.data())
        .map(|((&u, &s), &k)| {
            regularized_delta(u, p.epsilon) * (mu * k + data_force(s, stats, p.cv_lambda))
        })
        .collect()
}

fn advance(ls: &LevelSet, rate: &[f64], tau: f64) -> LevelSet {
    let (w, h) = ls.dims();
    let u = ls.u.data();
    LevelSet::new(Frame::from_fn(w, h, |x, y| {
        let i = y * w + x;
        u[i] + tau * rate[i]
    }))
}

/// One explicit step `U ← U + dt·δ_ε(U)·[μκ + λ(S−c1)² − λ(S−c2)²]`,
/// computed entirely from the previous iterate.
pub fn evolve_step(
    ls: &LevelSet,
    sv: &SpeedMap,
    stats: &RegionStats,
    p: &ChanVeseParams,
) -> Result<LevelSet> {
    sv.data.same_shape(&ls.u)?;
    let (lo, hi) = sv.data.min_max();
    let rate = evolution_rate(ls, sv, stats, p, p.mu_for(hi - lo));
    Ok(advance(ls, &rate, p.dt))
}

/// Discrete energy `J(U, c1, c2)`; the length term uses central differences.
pub fn level_set_energy(
    ls: &LevelSet,
    sv: &SpeedMap,
    stats: &RegionStats,
    cv_lambda: f64,
    mu: f64,
    epsilon: f64,
) -> f64 {
    let (w, h) = ls.dims();
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let u = ls.u.get(x, y);
            let s = sv.data.get(x, y);
            let hv = regularized_heaviside(u, epsilon);
            let (gx, gy) = central_gradient(&ls.u, x, y);
            total += cv_lambda * (s - stats.c1).powi(2) * hv
                + cv_lambda * (s - stats.c2).powi(2) * (1.0 - hv)
                + mu * regularized_delta(u, epsilon) * gx.hypot(gy);
        }
    }
    total
}

#[derive(Debug, Clone)]
pub struct SegmentationResult {
    /// 1 on the moving region, 0 elsewhere.
    pub mask: Frame,
    pub objects: Vec<Component>,
    pub stats: RegionStats,
    pub iterations: usize,
    /// Final level set, oriented so that `{U < 0}` is the faster region.
    pub level_set: LevelSet,
}

impl SegmentationResult {
    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }
}

/// Energy on either side of one accepted evolution step, at the means that
/// drove it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEnergy {
    pub before: f64,
    pub after: f64,
    /// Time step actually taken.
    pub tau: f64,
}

impl StepEnergy {
    pub fn relative_increase(&self) -> f64 {
        (self.after - self.before) / self.before.abs().max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SegmentTrace {
    pub steps: Vec<StepEnergy>,
    pub reinitializations: usize,
}

impl SegmentTrace {
    pub fn max_relative_increase(&self) -> f64 {
        self.steps
            .iter()
            .map(StepEnergy::relative_increase)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Halvings of the step before an iterate counts as stationary.
const MAX_BACKTRACKS: usize = 40;

/// Takes the largest step `τ ≤ dt / max|∂U/∂τ|` that does not raise `J`.
///
/// Returns `None` when no such step changes `U` measurably.
fn descent_step(
    ls: &LevelSet,
    sv: &SpeedMap,
    stats: &RegionStats,
    p: &ChanVeseParams,
    mu: f64,
) -> Option<(LevelSet, StepEnergy)> {
    let rate = evolution_rate(ls, sv, stats, p, mu);
    let peak = rate.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if !(peak > 0.0) {
        return None;
    }
    let before = level_set_energy(ls, sv, stats, p.cv_lambda, mu, p.epsilon);
    let mut tau = p.dt / peak;
    for _ in 0..MAX_BACKTRACKS {
        let next = advance(ls, &rate, tau);
        let after = level_set_energy(&next, sv, stats, p.cv_lambda, mu, p.epsilon);
        if after <= before {
            return Some((next, StepEnergy { before, after, tau }));
        }
        tau *= 0.5;
    }
    None
}

const CHECKER_PERIOD: f64 = 10.0;

pub fn segment_moving(sv: &SpeedMap, p: &ChanVeseParams) -> Result<SegmentationResult> {
    segment_moving_traced(sv, p, None).map(|(r, _)| r)
}

/// Full evolution from a checkerboard (or a supplied warm start).
///
/// The two-phase energy does not say which phase is the object, so the final
/// level set is oriented to put the region with the larger mean speed inside.
/// A speed map without any contrast yields an empty segmentation.
///
/// `dt` bounds the largest per-pixel change of `U` in one step; the step is
/// halved until `J` does not increase.
pub fn segment_moving_traced(
    sv: &SpeedMap,
    p: &ChanVeseParams,
    warm_start: Option<&LevelSet>,
) -> Result<(SegmentationResult, SegmentTrace)> {
    p.validate()?;
    let (w, h) = sv.dims();
    let (lo, hi) = sv.data.min_max();
    let mut trace = SegmentTrace::default();
    if !(hi - lo > 1e-12) {
        let ls = LevelSet::new(Frame::filled(w, h, 1.0));
        let result = SegmentationResult {
            mask: Frame::zeros(w, h),
            objects: Vec::new(),
            stats: RegionStats { c1: lo, c2: lo },
            iterations: 0,
            level_set: ls,
        };
        return Ok((result, trace));
    }
    let mu = p.mu_for(hi - lo);
    let mut ls = match warm_start {
        Some(init) => {
            init.u.same_shape(&sv.data)?;
            init.clone()
        }
        None => LevelSet::checkerboard(w, h, CHECKER_PERIOD, 0.0),
    };
    let n = (w * h) as f64;
    let mut iterations = 0;
    while iterations < p.max_iters {
        let stats = match region_means(sv, &ls, Heaviside::Sharp) {
            Ok(s) => s,
            Err(e @ Error::DegenerateRegion { .. }) => {
                if trace.reinitializations > 0 {
                    return Err(e);
                }
                trace.reinitializations += 1;
                ls = LevelSet::checkerboard(w, h, CHECKER_PERIOD, CHECKER_PERIOD / 2.0);
                continue;
            }
            Err(e) => return Err(e),
        };
        let Some((next, energy)) = descent_step(&ls, sv, &stats, p, mu) else {
            break;
        };
        trace.steps.push(energy);
        let flips = ls
            .u
            .data()
            .iter()
            .zip(next.u.data())
            .filter(|(&a, &b)| (a < 0.0) != (b < 0.0))
            .count();
        ls = next;
        iterations += 1;
        if (flips as f64) / n < p.stop_tol {
            break;
        }
    }
    let mut stats = region_means(sv, &ls, Heaviside::Sharp)?;
    if stats.c1 < stats.c2 {
        ls = ls.negated();
        stats = RegionStats {
            c1: stats.c2,
            c2: stats.c1,
        };
    }
    let mask = ls.inside_mask();
    let objects = connected_components(&mask, p.min_area);
    Ok((
        SegmentationResult {
            mask,
            objects,
            stats,
            iterations,
            level_set: ls,
        },
        trace,
    ))
}
