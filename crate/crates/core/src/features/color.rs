use crate::error::{Error, Result};
use crate::features::{l1_normalize, l2_normalize, DescriptorId, FeatureVector, RegionClass};
use crate::imgcore::{ColorFrame, Frame};

/// RGB in [0,1] to (hue in degrees [0,360), saturation, value).
pub fn rgb_to_hsv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    [h.rem_euclid(360.0), s, max]
}

const H_BINS: usize = 8;
const S_BINS: usize = 4;
const V_BINS: usize = 4;

fn hsv_bin(px: [f64; 3]) -> usize {
    let [h, s, v] = rgb_to_hsv(px);
    let hb = ((h / 360.0 * H_BINS as f64) as usize).min(H_BINS - 1);
    let sb = ((s * S_BINS as f64) as usize).min(S_BINS - 1);
    let vb = ((v * V_BINS as f64) as usize).min(V_BINS - 1);
    (hb * S_BINS + sb) * V_BINS + vb
}

/// 8×4×4 HSV histogram over the nonzero pixels of `mask` (or the whole frame).
pub fn color_hist_hsv(c: &ColorFrame, mask: Option<&Frame>) -> Result<FeatureVector> {
    if let Some(m) = mask {
        if m.dims() != c.dims() {
            return Err(Error::ShapeMismatch {
                expected: c.dims(),
                got: m.dims(),
            });
        }
    }
    let mut hist = vec![0.0; H_BINS * S_BINS * V_BINS];
    let n = c.width() * c.height();
    let mut count = 0usize;
    for i in 0..n {
        if mask.is_some_and(|m| m.data()[i] == 0.0) {
            continue;
        }
        hist[hsv_bin(c.pixel_at(i))] += 1.0;
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyRegion("color histogram mask"));
    }
    l1_normalize(&mut hist);
    FeatureVector::new(DescriptorId::ColorHistHsv, RegionClass::KeyFrame, hist)
}

const WHITE_D65: [f64; 3] = [0.95047, 1.0, 1.08883];

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// sRGB in [0,1] to CIE L*a*b* under a D65 white point.
pub fn rgb_to_lab(px: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = px.map(srgb_to_linear);
    let xyz = [
        0.4124564 * r + 0.3575761 * g + 0.1804375 * b,
        0.2126729 * r + 0.7151522 * g + 0.0721750 * b,
        0.0193339 * r + 0.1191920 * g + 0.9503041 * b,
    ];
    const DELTA: f64 = 6.0 / 29.0;
    let f = |t: f64| {
        if t > DELTA * DELTA * DELTA {
            t.cbrt()
        } else {
            t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
        }
    };
    let [fx, fy, fz] = [0, 1, 2].map(|k| f(xyz[k] / WHITE_D65[k]));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Mean, population standard deviation and cube root of the third central moment.
pub(crate) fn moments(values: &[f64]) -> [f64; 3] {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    [mean, m2.sqrt(), m3.cbrt()]
}

/// Unnormalized Lab moments: 3×3 grid cells in row-major order, each holding
/// (L, a, b) × (mean, std, skew).
pub fn lab_moments_raw(c: &ColorFrame) -> Result<Vec<f64>> {
    let (w, h) = c.dims();
    if w < 3 || h < 3 {
        return Err(Error::FrameTooSmall {
            width: w,
            height: h,
            min_width: 3,
            min_height: 3,
        });
    }
    let lab: Vec<[f64; 3]> = (0..w * h).map(|i| rgb_to_lab(c.pixel_at(i))).collect();
    let mut out = Vec::with_capacity(81);
    let mut channel = Vec::new();
    for gy in 0..3 {
        for gx in 0..3 {
            let (x0, x1) = (gx * w / 3, (gx + 1) * w / 3);
            let (y0, y1) = (gy * h / 3, (gy + 1) * h / 3);
            for k in 0..3 {
                channel.clear();
                for y in y0..y1 {
                    channel.extend((x0..x1).map(|x| lab[y * w + x][k]));
                }
                out.extend(moments(&channel));
            }
        }
    }
    Ok(out)
}

pub fn color_moments_lab(c: &ColorFrame) -> Result<FeatureVector> {
    let mut v = lab_moments_raw(c)?;
    l2_normalize(&mut v);
    FeatureVector::new(DescriptorId::ColorMomentsLab, RegionClass::KeyFrame, v)
}
