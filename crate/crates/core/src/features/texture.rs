use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::features::spectral::{fft2, frequency};
use crate::features::{l2_normalize, DescriptorId, FeatureVector, RegionClass};
use crate::imgcore::{reflect, Frame};

pub const GLCM_LEVELS: usize = 32;

/// Unit steps of the eight neighbor directions, counter-clockwise from +x.
const DIRECTIONS: [(isize, isize); 8] = [
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];
const DISTANCES: [isize; 3] = [1, 2, 3];

fn quantize(v: f64) -> usize {
    ((v.clamp(0.0, 1.0) * 255.0).floor() as usize) >> 3
}

/// Symmetric normalized co-occurrence matrix for one offset, or `None` when no
/// pixel pair at that offset lies inside the mask.
fn cooccurrence(q: &[usize], sel: &[bool], w: usize, h: usize, dx: isize, dy: isize) -> Option<Vec<f64>> {
    let mut m = vec![0.0; GLCM_LEVELS * GLCM_LEVELS];
    let mut pairs = 0usize;
    for y in 0..h {
        let ny = y as isize + dy;
        if ny < 0 || ny >= h as isize {
            continue;
        }
        for x in 0..w {
            let nx = x as isize + dx;
            if nx < 0 || nx >= w as isize {
                continue;
            }
            let (i, j) = (y * w + x, ny as usize * w + nx as usize);
            if !(sel[i] && sel[j]) {
                continue;
            }
            m[q[i] * GLCM_LEVELS + q[j]] += 1.0;
            m[q[j] * GLCM_LEVELS + q[i]] += 1.0;
            pairs += 1;
        }
    }
    if pairs == 0 {
        return None;
    }
    let total = 2.0 * pairs as f64;
    m.iter_mut().for_each(|c| *c /= total);
    Some(m)
}

/// [entropy, energy, contrast, homogeneity]
fn glcm_features(m: &[f64]) -> [f64; 4] {
    let mut s = [0.0; 4];
    for i in 0..GLCM_LEVELS {
        for j in 0..GLCM_LEVELS {
            let p = m[i * GLCM_LEVELS + j];
            if p == 0.0 {
                continue;
            }
            let d2 = ((i as f64) - (j as f64)).powi(2);
            s[0] -= p * p.ln();
            s[1] += p * p;
            s[2] += p * d2;
            s[3] += p / (1.0 + d2);
        }
    }
    s
}

/// Co-occurrence statistics over 24 offsets (8 directions × distances 1..3),
/// four values per offset. Offsets with no valid pair contribute zeros.
pub fn glcm_stats(f: &Frame, mask: Option<&Frame>) -> Result<FeatureVector> {
    let (w, h) = f.dims();
    let sel: Vec<bool> = match mask {
        Some(m) => {
            f.same_shape(m)?;
            m.data().iter().map(|&v| v != 0.0).collect()
        }
        None => vec![true; w * h],
    };
    if sel.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::EmptyRegion("co-occurrence mask"));
    }
    let q: Vec<usize> = f.data().iter().map(|&v| quantize(v)).collect();
    let mut out = Vec::with_capacity(96);
    for (dx, dy) in DIRECTIONS {
        for d in DISTANCES {
            match cooccurrence(&q, &sel, w, h, dx * d, dy * d) {
                Some(m) => out.extend(glcm_features(&m)),
                None => out.extend([0.0; 4]),
            }
        }
    }
    FeatureVector::new(DescriptorId::CooccurrenceTexture, RegionClass::KeyFrame, out)
}

/// Center frequencies in cycles per pixel, one octave apart.
pub const GABOR_FREQUENCIES: [f64; 4] = [0.05, 0.1, 0.2, 0.4];
pub const GABOR_ORIENTATIONS: usize = 6;

/// Radial Gaussian width relative to the center frequency for a one-octave
/// half-magnitude bandwidth.
fn radial_sigma(f0: f64) -> f64 {
    f0 * (1.0 / 3.0) / (2.0 * 2f64.ln()).sqrt()
}

/// Angular width giving half magnitude 15° off axis, so neighbors at 30° meet there.
fn angular_sigma(f0: f64) -> f64 {
    f0 * (15f64.to_radians()).tan() / (2.0 * 2f64.ln()).sqrt()
}

/// Transfer function of one filter at frequency `(fx, fy)`; only the half
/// plane facing `theta` is passed, so responses are analytic.
pub(crate) fn gabor_transfer(f0: f64, theta: f64, fx: f64, fy: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let along = fx * c + fy * s;
    let across = -fx * s + fy * c;
    if along <= 0.0 {
        return 0.0;
    }
    let (sr, sa) = (radial_sigma(f0), angular_sigma(f0));
    (-(along - f0).powi(2) / (2.0 * sr * sr) - across * across / (2.0 * sa * sa)).exp()
}

/// Response magnitudes of the 24 filters, scale-major, each cropped to the
/// input size. The image mean is removed and the frame reflected to twice its
/// size before filtering.
pub fn gabor_responses(f: &Frame) -> Result<Vec<Frame>> {
    let (w, h) = f.dims();
    if w < 16 || h < 16 {
        return Err(Error::FrameTooSmall {
            width: w,
            height: h,
            min_width: 16,
            min_height: 16,
        });
    }
    let mean = f.sum() / f.len() as f64;
    let (pw, ph) = (2 * w, 2 * h);
    let ox = (w / 2) as isize;
    let oy = (h / 2) as isize;
    let mut spectrum: Vec<Complex64> = (0..pw * ph)
        .map(|i| {
            let x = reflect((i % pw) as isize - ox, w);
            let y = reflect((i / pw) as isize - oy, h);
            Complex64::new(f.get(x, y) - mean, 0.0)
        })
        .collect();
    fft2(&mut spectrum, pw, ph, false);

    let mut out = Vec::with_capacity(GABOR_FREQUENCIES.len() * GABOR_ORIENTATIONS);
    let mut buf = vec![Complex64::default(); pw * ph];
    for &f0 in &GABOR_FREQUENCIES {
        for k in 0..GABOR_ORIENTATIONS {
            let theta = k as f64 * PI / GABOR_ORIENTATIONS as f64;
            for ky in 0..ph {
                let fy = frequency(ky, ph);
                for kx in 0..pw {
                    let g = gabor_transfer(f0, theta, frequency(kx, pw), fy);
                    buf[ky * pw + kx] = spectrum[ky * pw + kx] * g;
                }
            }
            fft2(&mut buf, pw, ph, true);
            out.push(Frame::from_fn(w, h, |x, y| {
                buf[(y + oy as usize) * pw + x + ox as usize].norm()
            }));
        }
    }
    Ok(out)
}

/// Mean and standard deviation of each filter's magnitude, L2-normalized. A
/// flat image gives the zero vector.
pub fn gabor_bank(f: &Frame) -> Result<FeatureVector> {
    let mut v = Vec::with_capacity(48);
    for r in gabor_responses(f)? {
        let n = r.len() as f64;
        let m = r.sum() / n;
        let var = r.data().iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        v.push(m);
        v.push(var.sqrt());
    }
    // Round-off residue on a flat image is not texture.
    if v.iter().all(|x| x.abs() < 1e-12) {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
    l2_normalize(&mut v);
    FeatureVector::new(DescriptorId::GaborTexture, RegionClass::KeyFrame, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(w: usize, h: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Frame::from_fn(w, h, |_, _| rng.random::<f64>())
    }

    #[test]
    fn constant_image_glcm() {
        let f = Frame::filled(12, 12, 0.37);
        let v = glcm_stats(&f, None).unwrap().values;
        for s in v.chunks(4) {
            assert_eq!(s, &[0.0, 1.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn checkerboard_horizontal_neighbors() {
        let (lo, hi) = (0.2, 0.8);
        let f = Frame::from_fn(10, 10, |x, y| if (x + y) % 2 == 0 { lo } else { hi });
        let v = glcm_stats(&f, None).unwrap().values;

        // Enumerate the distance-1 horizontal pairs directly.
        let q = |v: f64| (v * 255.0).floor() as i64 / 8;
        let mut counts = std::collections::BTreeMap::new();
        for y in 0..10 {
            for x in 0..9 {
                let (a, b) = (q(f.get(x, y)), q(f.get(x + 1, y)));
                *counts.entry((a, b)).or_insert(0.0) += 1.0;
                *counts.entry((b, a)).or_insert(0.0) += 1.0;
            }
        }
        let total: f64 = counts.values().sum();
        let energy: f64 = counts.values().map(|c| (c / total).powi(2)).sum();
        let gap = (q(hi) - q(lo)) as f64;
        assert_eq!(counts.len(), 2);
        assert!((v[1] - energy).abs() < 1e-12 && (energy - 0.5).abs() < 1e-12);
        assert!((v[2] - gap * gap).abs() < 1e-9);
        assert!((v[0] - 2f64.ln()).abs() < 1e-12);
        assert!((v[3] - 1.0 / (1.0 + gap * gap)).abs() < 1e-12);
    }

    #[test]
    fn glcm_mask_rules() {
        let f = random_frame(8, 8, 3);
        let mut m = Frame::zeros(8, 8);
        m.set(2, 2, 1.0);
        assert!(glcm_stats(&f, Some(&m)).is_err());
        m.set(3, 2, 1.0);
        let v = glcm_stats(&f, Some(&m)).unwrap().values;
        // Only the horizontal distance-1 offsets (both signs) see a pair.
        let live: Vec<usize> = (0..24).filter(|o| v[4 * o + 1] > 0.0).collect();
        assert_eq!(live, vec![0, 12]);
    }

    proptest! {
        #[test]
        fn glcm_bounds(seed in 0u64..500) {
            let v = glcm_stats(&random_frame(9, 7, seed), None).unwrap().values;
            for s in v.chunks(4) {
                prop_assert!(s[0] >= 0.0);
                prop_assert!(s[1] > 0.0 && s[1] <= 1.0);
                prop_assert!(s[2] >= 0.0);
                prop_assert!(s[3] > 0.0 && s[3] <= 1.0);
            }
        }
    }

    #[test]
    fn flat_image_gives_zero_gabor_vector() {
        let v = gabor_bank(&Frame::filled(20, 20, 0.6)).unwrap().values;
        assert_eq!(v.len(), 48);
        assert!(v.iter().all(|&x| x == 0.0));
        assert!(gabor_bank(&Frame::zeros(15, 30)).is_err());
    }

    /// Spatial-domain response of the filter at one pixel of a periodic
    /// horizontal sinusoid: the filter passes only the positive tone, so the
    /// magnitude is half the amplitude times the transfer at that tone.
    fn sinusoid_response(f0: f64, theta: f64, tone: f64) -> f64 {
        0.5 * gabor_transfer(f0, theta, tone, 0.0)
    }

    #[test]
    fn sinusoid_selects_matching_orientation() {
        for (s, &f0) in GABOR_FREQUENCIES.iter().enumerate() {
            let img = Frame::from_fn(64, 64, |x, _| 0.5 + 0.4 * (2.0 * PI * f0 * x as f64).cos());
            let r = gabor_responses(&img).unwrap();
            let means: Vec<f64> = r.iter().map(|f| f.sum() / f.len() as f64).collect();
            assert!(means.iter().all(|&m| m >= 0.0));
            let matched = means[s * 6];
            for k in 2..=4 {
                for t in 0..4 {
                    assert!(matched > means[t * 6 + k], "scale {s}: {matched} vs ({t},{k})");
                }
            }
            let expect = 0.4 * sinusoid_response(f0, 0.0, f0);
            // Interior pixels avoid the reflection seams.
            let interior: Vec<f64> = (16..48).flat_map(|y| (16..48).map(move |x| (x, y))).map(|(x, y)| r[s * 6].get(x, y)).collect();
            let mean_in = interior.iter().sum::<f64>() / interior.len() as f64;
            assert!((mean_in - expect).abs() < 0.1 * expect, "scale {s}: {mean_in} vs {expect}");
        }
    }

    #[test]
    fn gabor_output_is_unit_length() {
        let v = gabor_bank(&random_frame(24, 20, 9)).unwrap().values;
        assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(v.iter().step_by(2).all(|&m| m >= 0.0));
    }
}
