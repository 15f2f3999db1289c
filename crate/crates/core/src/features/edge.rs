use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::features::spectral::fft2;
use crate::features::{l1_normalize, DescriptorId, FeatureVector, RegionClass};
use crate::imgcore::{edge_map, Frame};

const SPECTRUM_ROWS: usize = 16;
const SPECTRUM_COLS: usize = 32;

fn require(f: &Frame, min: usize) -> Result<()> {
    let (w, h) = f.dims();
    if w < min || h < min {
        return Err(Error::FrameTooSmall {
            width: w,
            height: h,
            min_width: min,
            min_height: min,
        });
    }
    Ok(())
}

/// Weights of source cells `[0, n)` covering target bin `b` of `bins` by
/// fractional overlap.
fn overlap_weights(n: usize, bins: usize, b: usize) -> Vec<(usize, f64)> {
    let scale = n as f64 / bins as f64;
    let (lo, hi) = (b as f64 * scale, (b + 1) as f64 * scale);
    (lo.floor() as usize..(hi.ceil() as usize).min(n))
        .filter_map(|i| {
            let w = hi.min(i as f64 + 1.0) - lo.max(i as f64);
            (w > 0.0).then_some((i, w))
        })
        .collect()
}

/// Amplitude spectrum of the binarized edge image, reduced to 16 rows of
/// non-negative vertical frequency by 32 centered horizontal-frequency columns.
pub fn fourier_edge(f: &Frame) -> Result<FeatureVector> {
    require(f, 32)?;
    let (w, h) = f.dims();
    let edges = edge_map(f);
    let dc_bin = (w / 2) * SPECTRUM_COLS / w;
    let on = edges.count_nonzero();
    if on == 0 || on == edges.len() {
        let mut v = vec![0.0; SPECTRUM_ROWS * SPECTRUM_COLS];
        v[dc_bin] = 1.0;
        return FeatureVector::new(DescriptorId::FourierEdge, RegionClass::KeyFrame, v);
    }

    let mut spec: Vec<Complex64> = edges.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut spec, w, h, false);
    let amp: Vec<f64> = spec.iter().map(|z| z.norm()).collect();

    let mut smooth = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for dy in [h - 1, 0, 1] {
                for dx in [w - 1, 0, 1] {
                    s += amp[((y + dy) % h) * w + (x + dx) % w];
                }
            }
            smooth[y * w + x] = s / 9.0;
        }
    }

    // Rows ky = 0..=h/2; columns reordered so kx = 0 sits at w/2.
    let rows = h / 2 + 1;
    let half = w / 2;
    let sample = |r: usize, c: usize| smooth[r * w + (c + w - half) % w];
    let row_w: Vec<_> = (0..SPECTRUM_ROWS).map(|b| overlap_weights(rows, SPECTRUM_ROWS, b)).collect();
    let col_w: Vec<_> = (0..SPECTRUM_COLS).map(|b| overlap_weights(w, SPECTRUM_COLS, b)).collect();
    let mut v = Vec::with_capacity(SPECTRUM_ROWS * SPECTRUM_COLS);
    for rw in &row_w {
        for cw in &col_w {
            let (mut s, mut a) = (0.0, 0.0);
            for &(r, wr) in rw {
                for &(c, wc) in cw {
                    s += wr * wc * sample(r, c);
                    a += wr * wc;
                }
            }
            v.push(s / a);
        }
    }
    l1_normalize(&mut v);
    FeatureVector::new(DescriptorId::FourierEdge, RegionClass::KeyFrame, v)
}

pub const HOUGH_THETA_BINS: usize = 36;
pub const HOUGH_RHO_BINS: usize = 64;

/// Vote counts indexed `[theta * HOUGH_RHO_BINS + rho]`. Angles are `k·5°`;
/// ρ is measured from the image center and spans ± half the diagonal.
pub fn hough_accumulator(edges: &Frame) -> Vec<f64> {
    let (w, h) = edges.dims();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let r_max = 0.5 * (w as f64).hypot(h as f64);
    let trig: Vec<(f64, f64)> = (0..HOUGH_THETA_BINS)
        .map(|k| (k as f64 * PI / HOUGH_THETA_BINS as f64).sin_cos())
        .collect();
    let mut acc = vec![0.0; HOUGH_THETA_BINS * HOUGH_RHO_BINS];
    for y in 0..h {
        for x in 0..w {
            if edges.get(x, y) == 0.0 {
                continue;
            }
            let (px, py) = (x as f64 - cx, y as f64 - cy);
            for (t, &(s, c)) in trig.iter().enumerate() {
                let rho = px * c + py * s;
                let bin = (((rho + r_max) / (2.0 * r_max)) * HOUGH_RHO_BINS as f64) as usize;
                acc[t * HOUGH_RHO_BINS + bin.min(HOUGH_RHO_BINS - 1)] += 1.0;
            }
        }
    }
    acc
}

/// Keeps accumulator cells that are 3×3 local maxima and at least half the
/// global peak; everything else is zeroed.
fn suppress_non_peaks(acc: &[f64]) -> Vec<f64> {
    let peak = acc.iter().cloned().fold(0.0, f64::max);
    let (nt, nr) = (HOUGH_THETA_BINS as isize, HOUGH_RHO_BINS as isize);
    let mut out = vec![0.0; acc.len()];
    for t in 0..nt {
        for r in 0..nr {
            let v = acc[(t * nr + r) as usize];
            if v <= 0.0 || v < 0.5 * peak {
                continue;
            }
            let is_max = (-1..=1).all(|dt| {
                (-1..=1).all(|dr| {
                    let (tt, rr) = (t + dt, r + dr);
                    tt < 0 || tt >= nt || rr < 0 || rr >= nr || acc[(tt * nr + rr) as usize] <= v
                })
            });
            if is_max {
                out[(t * nr + r) as usize] = v;
            }
        }
    }
    out
}

/// Per-angle strength of the dominant lines in the edge image, L1-normalized.
/// An image without edges gives the zero vector.
pub fn hough_hist(f: &Frame) -> Result<FeatureVector> {
    require(f, 16)?;
    let peaks = suppress_non_peaks(&hough_accumulator(&edge_map(f)));
    let mut v: Vec<f64> = peaks
        .chunks(HOUGH_RHO_BINS)
        .map(|row| row.iter().cloned().fold(0.0, f64::max))
        .collect();
    l1_normalize(&mut v);
    FeatureVector::new(DescriptorId::HoughHist, RegionClass::KeyFrame, v)
}
