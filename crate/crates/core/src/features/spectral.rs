use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place 2-D DFT of a row-major `w`x`h` buffer. The inverse is scaled by `1/(w h)`.
pub(crate) fn fft2(data: &mut [Complex64], w: usize, h: usize, inverse: bool) {
    debug_assert_eq!(data.len(), w * h);
    let mut planner = FftPlanner::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    row.process(data);
    let mut column = vec![Complex64::default(); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = data[y * w + x];
        }
        col.process(&mut column);
        for y in 0..h {
            data[y * w + x] = column[y];
        }
    }
    if inverse {
        let s = 1.0 / (w * h) as f64;
        data.iter_mut().for_each(|z| *z *= s);
    }
}

/// Signed frequency in cycles per sample of DFT index `k` out of `n`.
pub(crate) fn frequency(k: usize, n: usize) -> f64 {
    let k = k as isize;
    let n = n as isize;
    let s = if 2 * k >= n { k - n } else { k };
    s as f64 / n as f64
}
