use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::features::texture::gabor_bank;
use crate::features::{l2_normalize, DescriptorId, FeatureVector, RegionClass};
use crate::imgcore::{BBox, Frame};

const ORIENTATION_BINS: usize = 36;
const GRID: usize = 4;
const ANGLE_BINS: usize = 8;
const CLAMP: f64 = 0.2;
pub const MIN_SIFT_SIDE: usize = 8;

struct Sample {
    dx: f64,
    dy: f64,
    mag: f64,
    angle: f64,
}

fn samples(f: &Frame, b: &BBox) -> Vec<Sample> {
    let (cx, cy) = (b.x as f64 + (b.width as f64 - 1.0) / 2.0, b.y as f64 + (b.height as f64 - 1.0) / 2.0);
    let sigma = 0.5 * b.width.min(b.height) as f64;
    let mut out = Vec::with_capacity(b.area());
    for y in b.y..b.bottom() {
        for x in b.x..b.right() {
            let (xi, yi) = (x as isize, y as isize);
            let gx = 0.5 * (f.get_clamped(xi + 1, yi) - f.get_clamped(xi - 1, yi));
            let gy = 0.5 * (f.get_clamped(xi, yi + 1) - f.get_clamped(xi, yi - 1));
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let window = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            out.push(Sample {
                dx,
                dy,
                mag: gx.hypot(gy) * window,
                angle: gy.atan2(gx).rem_euclid(TAU),
            });
        }
    }
    out
}

/// Splits `value` between the two nearest of `n` circular bins of width `TAU / n`
/// centered at `(i + 0.5) * width`.
fn vote_circular(hist: &mut [f64], n: usize, angle: f64, weight: f64) {
    let pos = angle / TAU * n as f64 - 0.5;
    let lo = pos.floor();
    let frac = pos - lo;
    let i = (lo as isize).rem_euclid(n as isize) as usize;
    hist[i] += weight * (1.0 - frac);
    hist[(i + 1) % n] += weight * frac;
}

fn dominant_orientation(s: &[Sample]) -> f64 {
    let mut hist = [0.0; ORIENTATION_BINS];
    for p in s {
        vote_circular(&mut hist, ORIENTATION_BINS, p.angle, p.mag);
    }
    let (i, _) = hist
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    let n = ORIENTATION_BINS;
    let (l, c, r) = (hist[(i + n - 1) % n], hist[i], hist[(i + 1) % n]);
    let denom = l - 2.0 * c + r;
    let offset = if denom.abs() > 0.0 { 0.5 * (l - r) / denom } else { 0.0 };
    ((i as f64 + 0.5 + offset) * TAU / n as f64).rem_euclid(TAU)
}

/// Gradient-orientation histograms on a 4×4 grid aligned with the dominant
/// gradient direction of `bbox`. The grid is a square of side
/// `min(width, height)` about the box center. Flat regions give the zero vector.
pub fn sift_region(f: &Frame, bbox: &BBox) -> Result<FeatureVector> {
    let (fw, fh) = f.dims();
    if bbox.width < MIN_SIFT_SIDE || bbox.height < MIN_SIFT_SIDE || bbox.right() > fw || bbox.bottom() > fh {
        return Err(Error::InvalidData(format!(
            "degenerate region {}x{} at ({}, {}) in a {fw}x{fh} frame",
            bbox.width, bbox.height, bbox.x, bbox.y
        )));
    }
    let s = samples(f, bbox);
    let mut desc = vec![0.0; GRID * GRID * ANGLE_BINS];
    if s.iter().all(|p| p.mag == 0.0) {
        return FeatureVector::new(DescriptorId::Sift, RegionClass::KeyFrame, desc);
    }
    let theta = dominant_orientation(&s);
    let (sin, cos) = theta.sin_cos();
    let side = bbox.width.min(bbox.height) as f64;
    let cell = side / GRID as f64;
    for p in &s {
        let rx = cos * p.dx + sin * p.dy;
        let ry = -sin * p.dx + cos * p.dy;
        // Continuous cell coordinates with cell centers at integers.
        let u = (rx + side / 2.0) / cell - 0.5;
        let v = (ry + side / 2.0) / cell - 0.5;
        if u <= -1.0 || v <= -1.0 || u >= GRID as f64 || v >= GRID as f64 {
            continue;
        }
        let mut ohist = [0.0; ANGLE_BINS];
        vote_circular(&mut ohist, ANGLE_BINS, (p.angle - theta).rem_euclid(TAU), p.mag);
        let (u0, v0) = (u.floor(), v.floor());
        let (fu, fv) = (u - u0, v - v0);
        for (cy, wy) in [(v0, 1.0 - fv), (v0 + 1.0, fv)] {
            for (cx, wx) in [(u0, 1.0 - fu), (u0 + 1.0, fu)] {
                if cx < 0.0 || cy < 0.0 || cx >= GRID as f64 || cy >= GRID as f64 {
                    continue;
                }
                let base = ((cy as usize) * GRID + cx as usize) * ANGLE_BINS;
                for (k, o) in ohist.iter().enumerate() {
                    desc[base + k] += wx * wy * o;
                }
            }
        }
    }
    l2_normalize(&mut desc);
    desc.iter_mut().for_each(|d| *d = d.min(CLAMP));
    l2_normalize(&mut desc);
    FeatureVector::new(DescriptorId::Sift, RegionClass::KeyFrame, desc)
}

/// SIFT on `bbox` followed by the Gabor bank on the same box grown to at least
/// 16×16; each part is L2-normalized on its own.
pub fn sift_gabor(f: &Frame, bbox: &BBox) -> Result<FeatureVector> {
    let mut v = sift_region(f, bbox)?.values;
    let grown = bbox.expanded_to(16, 16, f.width(), f.height());
    v.extend(gabor_bank(&f.crop(&grown)?)?.values);
    FeatureVector::new(DescriptorId::SiftGabor, RegionClass::KeyFrame, v)
}
