use crate::error::{Error, Result};
use crate::imgcore::Frame;

/// Symmetric reflection of an index into `[0, n)`: `... c b a | a b c ... | c b a ...`.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Normalized 1-D Gaussian taps with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    Ok(taps)
}

/// Separable convolution with an odd-length kernel, reflected boundary.
pub fn convolve_separable(f: &Frame, kx: &[f64], ky: &[f64]) -> Frame {
    let (w, h) = f.dims();
    let rx = (kx.len() / 2) as isize;
    let ry = (ky.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &f.data()[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &t) in kx.iter().enumerate() {
                acc += t * row[reflect(x as isize + k as isize - rx, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &t) in ky.iter().enumerate() {
                acc += t * tmp[reflect(y as isize + k as isize - ry, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    Frame::from_fn(w, h, |x, y| out[y * w + x])
}

pub fn gaussian_blur(f: &Frame, sigma: f64) -> Result<Frame> {
    let k = gaussian_kernel(sigma)?;
    Ok(convolve_separable(f, &k, &k))
}

/// Sobel gradient magnitude with replicated borders.
pub fn sobel_magnitude(f: &Frame) -> Frame {
    Frame::from_fn(f.width(), f.height(), |x, y| {
        let (x, y) = (x as isize, y as isize);
        let p = |dx: isize, dy: isize| f.get_clamped(x + dx, y + dy);
        let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
        let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
        (gx * gx + gy * gy).sqrt()
    })
}

/// Otsu threshold over a 256-bin histogram spanning `[min, max]` of the samples.
///
/// Returns `None` for constant input, where no split exists.
pub fn otsu_threshold(values: &[f64]) -> Option<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if !(hi > lo) {
        return None;
    }
    const BINS: usize = 256;
    let scale = (BINS - 1) as f64 / (hi - lo);
    let mut hist = [0usize; BINS];
    for &v in values {
        hist[((v - lo) * scale).round() as usize] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_var) = (0usize, -1.0);
    for (t, &c) in hist.iter().enumerate().take(BINS - 1) {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best_var {
            best_var = between;
            best = t;
        }
    }
    // Threshold sits between bin `best` and `best + 1`.
    Some(lo + (best as f64 + 0.5) / scale)
}

/// Binary edge map: Sobel magnitude above its Otsu threshold.
pub fn edge_map(f: &Frame) -> Frame {
    let mag = sobel_magnitude(f);
    match otsu_threshold(mag.data()) {
        Some(t) => mag.map(|v| if v > t { 1.0 } else { 0.0 }),
        None => Frame::zeros(f.width(), f.height()),
    }
}
