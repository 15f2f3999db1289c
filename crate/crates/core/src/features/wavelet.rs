use crate::error::{Error, Result};
use crate::features::{l1_normalize, DescriptorId, FeatureVector, RegionClass};
use crate::imgcore::{reflect, Frame};
use crate::optflow::FlowField;

const SQRT3: f64 = 1.732_050_807_568_877_2;
const NORM: f64 = 4.0 * std::f64::consts::SQRT_2;

/// Orthonormal Daubechies lowpass with two vanishing moments.
pub const DB2_LOWPASS: [f64; 4] = [
    (1.0 + SQRT3) / NORM,
    (3.0 + SQRT3) / NORM,
    (3.0 - SQRT3) / NORM,
    (1.0 - SQRT3) / NORM,
];

pub const WAVELET_LEVELS: usize = 3;

fn highpass() -> [f64; 4] {
    let h = DB2_LOWPASS;
    [h[3], -h[2], h[1], -h[0]]
}

/// One periodic analysis step: `src` of even length into low half then high half.
fn analyze(src: &[f64], dst: &mut [f64]) {
    let n = src.len();
    let half = n / 2;
    let g = highpass();
    for k in 0..half {
        let (mut a, mut d) = (0.0, 0.0);
        for t in 0..4 {
            let x = src[(2 * k + t) % n];
            a += DB2_LOWPASS[t] * x;
            d += g[t] * x;
        }
        dst[k] = a;
        dst[half + k] = d;
    }
}

/// Detail bands of one level. The first letter is the horizontal filter.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailBands {
    /// Horizontal lowpass, vertical highpass.
    pub lh: Frame,
    pub hl: Frame,
    pub hh: Frame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subbands {
    pub ll: Frame,
    /// Finest level first.
    pub details: Vec<DetailBands>,
}

impl Subbands {
    /// Sum of squared coefficients over every band.
    pub fn total_energy(&self) -> f64 {
        let sq = |f: &Frame| f.data().iter().map(|v| v * v).sum::<f64>();
        sq(&self.ll) + self.details.iter().map(|d| sq(&d.lh) + sq(&d.hl) + sq(&d.hh)).sum::<f64>()
    }
}

/// Separable periodic transform. Both sides must be divisible by `2^levels`.
pub fn dwt2(f: &Frame, levels: usize) -> Result<Subbands> {
    let (w, h) = f.dims();
    let block = 1usize << levels;
    if levels == 0 || w % block != 0 || h % block != 0 || w < 2 * block || h < 2 * block {
        return Err(Error::param(
            "levels",
            format!("{w}x{h} does not split into {levels} dyadic levels"),
        ));
    }
    let mut cur = f.clone();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (cw, ch) = cur.dims();
        let mut rows = vec![0.0; cw * ch];
        for y in 0..ch {
            analyze(&cur.data()[y * cw..(y + 1) * cw], &mut rows[y * cw..(y + 1) * cw]);
        }
        let mut out = vec![0.0; cw * ch];
        let mut col = vec![0.0; ch];
        let mut res = vec![0.0; ch];
        for x in 0..cw {
            for y in 0..ch {
                col[y] = rows[y * cw + x];
            }
            analyze(&col, &mut res);
            for y in 0..ch {
                out[y * cw + x] = res[y];
            }
        }
        let (hw, hh) = (cw / 2, ch / 2);
        let band = |x0: usize, y0: usize| Frame::from_fn(hw, hh, |x, y| out[(y0 + y) * cw + x0 + x]);
        details.push(DetailBands {
            lh: band(0, hh),
            hl: band(hw, 0),
            hh: band(hw, hh),
        });
        cur = band(0, 0);
    }
    Ok(Subbands { ll: cur, details })
}

/// Mean squared coefficient per band in the order LL3, then LH, HL, HH from
/// the coarsest level to the finest.
fn band_energies(s: &Subbands) -> Vec<f64> {
    let mean_sq = |f: &Frame| f.data().iter().map(|v| v * v).sum::<f64>() / f.len() as f64;
    let mut out = vec![mean_sq(&s.ll)];
    for d in s.details.iter().rev() {
        out.extend([mean_sq(&d.lh), mean_sq(&d.hl), mean_sq(&d.hh)]);
    }
    out
}

/// Reflects the right and bottom edges out to the next multiple of `m`.
fn pad_to_multiple(f: &Frame, m: usize) -> Frame {
    let (w, h) = f.dims();
    let (pw, ph) = (w.div_ceil(m) * m, h.div_ceil(m) * m);
    if (pw, ph) == (w, h) {
        return f.clone();
    }
    Frame::from_fn(pw, ph, |x, y| f.get(reflect(x as isize, w), reflect(y as isize, h)))
}

/// Ten subband energies of a three-level transform, L1-normalized. A zero image
/// gives the zero vector.
pub fn wavelet_energy(f: &Frame) -> Result<FeatureVector> {
    let (w, h) = f.dims();
    if w < 16 || h < 16 {
        return Err(Error::FrameTooSmall {
            width: w,
            height: h,
            min_width: 16,
            min_height: 16,
        });
    }
    let padded = pad_to_multiple(f, 1 << WAVELET_LEVELS);
    let mut v = band_energies(&dwt2(&padded, WAVELET_LEVELS)?);
    l1_normalize(&mut v);
    FeatureVector::new(DescriptorId::WaveletEnergy, RegionClass::KeyFrame, v)
}

/// Subband energies of the flow speed `sqrt(u² + v²)`.
pub fn motion_activity(flow: &FlowField) -> Result<FeatureVector> {
    let v = wavelet_energy(&flow.magnitude())?;
    FeatureVector::new(DescriptorId::MotionActivity, RegionClass::KeyFrame, v.values)
}
