//! Coarse-to-fine Horn–Schunck optical flow relaxed by Gauss–Seidel sweeps,
//! and the thresholded, smoothed speed map that drives segmentation.
//!
//! The solver minimizes, per pyramid level,
//!
//! ```text
//! E(u, v) = Σ_p (Ix·u + Iy·v + It)²  +  (α²/4) · Σ_edges (Δu² + Δv²)
//! ```
//!
//! with `α² = 1 / hs_lambda` and forward differences over 4-neighbor edges.
//! One Gauss–Seidel step at an interior pixel is the exact minimizer of `E`
//! in `(u_p, v_p)`:
//! `u ← ū − Ix (Ix ū + Iy v̄ + It) / (α² + Ix² + Iy²)`; border pixels use the
//! same rule with `α²` scaled by their neighbor count over four, which is the
//! zero-flux boundary. Each sweep therefore never increases `E`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::imgcore::{build_pyramid, check_pyramid_fits, gaussian_blur, gradients, Frame, GradientField};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub u: Frame,
    pub v: Frame,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            u: Frame::zeros(width, height),
            v: Frame::zeros(width, height),
        }
    }

    pub fn uniform(width: usize, height: usize, u: f64, v: f64) -> Self {
        Self {
            u: Frame::filled(width, height, u),
            v: Frame::filled(width, height, v),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.u.dims()
    }

    pub fn magnitude(&self) -> Frame {
        let (w, h) = self.dims();
        Frame::from_fn(w, h, |x, y| self.u.get(x, y).hypot(self.v.get(x, y)))
    }

    /// Bilinear 2x upsampling to `width`x`height`, with vectors doubled.
    /// Coarse pixel `X` sits on fine pixel `2X` (decimation keeps even samples).
    /// Averages each 2×2 block with offset `(dx, dy)` ∈ {-1, 1}², edge-clamped.
    fn half_pixel_shift(&self, d: isize) -> FlowField {
        let avg = |f: &Frame| {
            let (w, h) = f.dims();
            let step = |i: usize, n: usize| (i as isize + d).clamp(0, n as isize - 1) as usize;
            Frame::from_fn(w, h, |x, y| {
                let (x2, y2) = (step(x, w), step(y, h));
                0.25 * (f.get(x, y) + f.get(x2, y) + f.get(x, y2) + f.get(x2, y2))
            })
        };
        FlowField {
            u: avg(&self.u),
            v: avg(&self.v),
        }
    }

    /// The relaxation estimates flow at cell corners `(x+½, y+½)`; this
    /// resamples such a field at pixel centers.
    pub fn corners_to_centers(&self) -> FlowField {
        self.half_pixel_shift(-1)
    }

    pub fn centers_to_corners(&self) -> FlowField {
        self.half_pixel_shift(1)
    }

    pub fn upsample_to(&self, width: usize, height: usize) -> FlowField {
        let up = |f: &Frame| {
            Frame::from_fn(width, height, |x, y| {
                2.0 * f.sample_bilinear(x as f64 / 2.0, y as f64 / 2.0)
            })
        };
        FlowField {
            u: up(&self.u),
            v: up(&self.v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsParams {
    /// Smoothness weight; the relaxation uses `α² = 1 / hs_lambda`.
    pub hs_lambda: f64,
    pub iterations_per_level: usize,
    pub pyramid_levels: usize,
    /// Stop a level once the mean absolute update of a sweep drops below this.
    pub convergence_eps: f64,
}

impl Default for HsParams {
    fn default() -> Self {
        Self {
            hs_lambda: 100.0,
            iterations_per_level: 200,
            pyramid_levels: 3,
            convergence_eps: 1e-4,
        }
    }
}

impl HsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.hs_lambda > 0.0 && self.hs_lambda.is_finite()) {
            return Err(Error::param("hs_lambda", "must be positive and finite"));
        }
        if self.iterations_per_level == 0 {
            return Err(Error::param("iterations_per_level", "must be at least 1"));
        }
        if self.pyramid_levels == 0 {
            return Err(Error::param("pyramid_levels", "must be at least 1"));
        }
        if !(self.convergence_eps >= 0.0) {
            return Err(Error::param("convergence_eps", "must be non-negative"));
        }
        Ok(())
    }

    pub fn alpha_sq(&self) -> f64 {
        1.0 / self.hs_lambda
    }
}

/// One lexicographic Gauss–Seidel pass in place; returns the mean absolute
/// change of `(u, v)` over all pixels.
pub fn gauss_seidel_sweep(flow: &mut FlowField, g: &GradientField, hs_lambda: f64) -> Result<f64> {
    flow.u.same_shape(&g.ix)?;
    flow.v.same_shape(&g.ix)?;
    let alpha_sq = 1.0 / hs_lambda;
    let (w, h) = flow.dims();
    let (ix, iy, it) = (g.ix.data(), g.iy.data(), g.it.data());
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (mut su, mut sv, mut n) = (0.0, 0.0, 0.0);
            let mut add = |j: usize| {
                su += flow.u.data()[j];
                sv += flow.v.data()[j];
                n += 1.0;
            };
            if x > 0 {
                add(i - 1);
            }
            if x + 1 < w {
                add(i + 1);
            }
            if y > 0 {
                add(i - w);
            }
            if y + 1 < h {
                add(i + w);
            }
            let (ubar, vbar) = if n > 0.0 { (su / n, sv / n) } else { (0.0, 0.0) };
            let (gx, gy) = (ix[i], iy[i]);
            let denom = alpha_sq * n / 4.0 + gx * gx + gy * gy;
            let (nu, nv) = if denom > 0.0 {
                let r = (gx * ubar + gy * vbar + it[i]) / denom;
                (ubar - gx * r, vbar - gy * r)
            } else {
                (ubar, vbar)
            };
            total += (nu - flow.u.data()[i]).abs() + (nv - flow.v.data()[i]).abs();
            flow.u.data_mut()[i] = nu;
            flow.v.data_mut()[i] = nv;
        }
    }
    Ok(total / (w * h) as f64)
}

/// The discrete energy that [`gauss_seidel_sweep`] descends.
pub fn hs_energy(flow: &FlowField, g: &GradientField, hs_lambda: f64) -> f64 {
    let (w, h) = flow.dims();
    let smooth_w = 0.25 / hs_lambda;
    let (u, v) = (flow.u.data(), flow.v.data());
    let mut data = 0.0;
    let mut smooth = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let r = g.ix.data()[i] * u[i] + g.iy.data()[i] * v[i] + g.it.data()[i];
            data += r * r;
            if x + 1 < w {
                smooth += (u[i + 1] - u[i]).powi(2) + (v[i + 1] - v[i]).powi(2);
            }
            if y + 1 < h {
                smooth += (u[i + w] - u[i]).powi(2) + (v[i + w] - v[i]).powi(2);
            }
        }
    }
    data + smooth_w * smooth
}

/// Per-level solver trace, for diagnostics and energy checks.
#[derive(Debug, Clone, Default)]
pub struct LevelTrace {
    pub width: usize,
    pub height: usize,
    pub sweeps: usize,
    /// Energy before the first sweep and after every sweep.
    pub energies: Vec<f64>,
}

pub fn horn_schunck_pyramidal(f1: &Frame, f2: &Frame, p: &HsParams) -> Result<FlowField> {
    horn_schunck_traced(f1, f2, p, false).map(|(flow, _)| flow)
}

/// Coarse-to-fine solve. The coarsest level starts from zero flow; each finer
/// level starts from the upsampled (and doubled) coarser result, and its
/// derivatives are taken against the second frame resampled along that
/// initial flow, so every level only has to resolve a sub-pixel residual.
pub fn horn_schunck_traced(
    f1: &Frame,
    f2: &Frame,
    p: &HsParams,
    record_energy: bool,
) -> Result<(FlowField, Vec<LevelTrace>)> {
    p.validate()?;
    f1.same_shape(f2)?;
    check_pyramid_fits(f1.width(), f1.height(), p.pyramid_levels)?;
    let pyr1 = build_pyramid(f1, p.pyramid_levels)?;
    let pyr2 = build_pyramid(f2, p.pyramid_levels)?;
    let mut traces = Vec::with_capacity(p.pyramid_levels);
    let mut flow: Option<FlowField> = None;
    for level in (0..p.pyramid_levels).rev() {
        let (a, b) = (pyr1.level(level), pyr2.level(level));
        let (w, h) = a.dims();
        let (g, mut current) = match flow.take() {
            None => (gradients(a, b)?, FlowField::zeros(w, h)),
            Some(coarse) => {
                let centered = coarse.upsample_to(w, h);
                let corners = centered.centers_to_corners();
                (linearize_about(a, b, &centered, &corners)?, corners)
            }
        };
        let mut trace = LevelTrace {
            width: w,
            height: h,
            ..Default::default()
        };
        if record_energy {
            trace.energies.push(hs_energy(&current, &g, p.hs_lambda));
        }
        for _ in 0..p.iterations_per_level {
            let delta = gauss_seidel_sweep(&mut current, &g, p.hs_lambda)?;
            trace.sweeps += 1;
            if record_energy {
                trace.energies.push(hs_energy(&current, &g, p.hs_lambda));
            }
            if delta < p.convergence_eps {
                break;
            }
        }
        traces.push(trace);
        flow = Some(current.corners_to_centers());
    }
    Ok((flow.expect("at least one level"), traces))
}

/// Derivatives for solving the total flow about an initial estimate `init`:
/// `b` is sampled at `x + init(x)`, and the temporal term absorbs the
/// linearization point so the data residual stays `Ix·u + Iy·v + It`.
/// Warps `b` by the pixel-centered flow, then folds the corner-sampled
/// initial flow back into `It` so the relaxation still solves for total flow.
fn linearize_about(
    a: &Frame,
    b: &Frame,
    centered: &FlowField,
    corners: &FlowField,
) -> Result<GradientField> {
    let (w, h) = a.dims();
    let warped = Frame::from_fn(w, h, |x, y| {
        b.sample_bilinear(
            x as f64 + centered.u.get(x, y),
            y as f64 + centered.v.get(x, y),
        )
    });
    let mut g = gradients(a, &warped)?;
    for i in 0..w * h {
        let shift = g.ix.data()[i] * corners.u.data()[i] + g.iy.data()[i] * corners.v.data()[i];
        g.it.data_mut()[i] -= shift;
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedMap {
    pub data: Frame,
    pub threshold: f64,
    pub sigma: f64,
}

impl SpeedMap {
    pub fn dims(&self) -> (usize, usize) {
        self.data.dims()
    }
}

pub const DEFAULT_SPEED_THRESHOLD: f64 = 0.5;
pub const DEFAULT_SPEED_SIGMA: f64 = 1.5;

/// `|flow|`, zeroed below `threshold`, then Gaussian-smoothed.
pub fn speed_map(flow: &FlowField, threshold: f64, sigma: f64) -> Result<SpeedMap> {
    if !(threshold >= 0.0) {
        return Err(Error::param("speed_threshold", "must be non-negative"));
    }
    let raw = flow.magnitude().map(|s| if s < threshold { 0.0 } else { s });
    let data = gaussian_blur(&raw, sigma)?.map(|s| s.max(0.0));
    Ok(SpeedMap {
        data,
        threshold,
        sigma,
    })
}

const FLOW_MAGIC: &[u8; 8] = b"MAVFLOW1";

/// Debug dump: 8-byte magic, u32 width, u32 height (little-endian), then the
/// `u` plane and the `v` plane as little-endian f32, row-major.
pub fn write_flow<W: Write>(mut out: W, flow: &FlowField) -> Result<()> {
    let (w, h) = flow.dims();
    out.write_all(FLOW_MAGIC)?;
    out.write_all(&(w as u32).to_le_bytes())?;
    out.write_all(&(h as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * w * h);
    for plane in [&flow.u, &flow.v] {
        for &s in plane.data() {
            buf.extend_from_slice(&(s as f32).to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_flow<R: Read>(mut r: R) -> Result<FlowField> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[..8] != FLOW_MAGIC {
        return Err(Error::Parse("not a flow dump (bad magic)".into()));
    }
    let w = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let mut body = vec![0u8; 8 * w * h];
    r.read_exact(&mut body)?;
    let mut planes = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    let u: Vec<f64> = planes.by_ref().take(w * h).collect();
    let v: Vec<f64> = planes.collect();
    Ok(FlowField {
        u: Frame::new(w, h, u)?,
        v: Frame::new(w, h, v)?,
    })
}
