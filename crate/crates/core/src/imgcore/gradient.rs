use crate::error::Result;
use crate::imgcore::Frame;

/// Spatio-temporal intensity derivatives between two consecutive frames.
#[derive(Debug, Clone)]
pub struct GradientField {
    pub ix: Frame,
    pub iy: Frame,
    pub it: Frame,
}

impl GradientField {
    pub fn dims(&self) -> (usize, usize) {
        self.ix.dims()
    }
}

/// Horn–Schunck derivative estimates: forward differences averaged over the
/// 2x2x2 cube spanned by `(x, y)`, `(x+1, y+1)` and the two frames.
/// Samples past the right/bottom edge replicate the border.
pub fn gradients(f1: &Frame, f2: &Frame) -> Result<GradientField> {
    f1.same_shape(f2)?;
    let (w, h) = f1.dims();
    let mut ix = Vec::with_capacity(w * h);
    let mut iy = Vec::with_capacity(w * h);
    let mut it = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let a = |f: &Frame, dx: isize, dy: isize| f.get_clamped(x + dx, y + dy);
            let dx = 0.25
                * ((a(f1, 1, 0) - a(f1, 0, 0))
                    + (a(f1, 1, 1) - a(f1, 0, 1))
                    + (a(f2, 1, 0) - a(f2, 0, 0))
                    + (a(f2, 1, 1) - a(f2, 0, 1)));
            let dy = 0.25
                * ((a(f1, 0, 1) - a(f1, 0, 0))
                    + (a(f1, 1, 1) - a(f1, 1, 0))
                    + (a(f2, 0, 1) - a(f2, 0, 0))
                    + (a(f2, 1, 1) - a(f2, 1, 0)));
            let dt = 0.25
                * ((a(f2, 0, 0) - a(f1, 0, 0))
                    + (a(f2, 1, 0) - a(f1, 1, 0))
                    + (a(f2, 0, 1) - a(f1, 0, 1))
                    + (a(f2, 1, 1) - a(f1, 1, 1)));
            ix.push(dx);
            iy.push(dy);
            it.push(dt);
        }
    }
    Ok(GradientField {
        ix: Frame::new(w, h, ix)?,
        iy: Frame::new(w, h, iy)?,
        it: Frame::new(w, h, it)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_pair_has_zero_derivatives() {
        let f = Frame::filled(8, 6, 0.3);
        let g = gradients(&f, &f).unwrap();
        for plane in [&g.ix, &g.iy, &g.it] {
            assert!(plane.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn pure_temporal_step() {
        let g = gradients(&Frame::zeros(5, 5), &Frame::filled(5, 5, 1.0)).unwrap();
        assert!(g.it.data().iter().all(|&v| v == 1.0));
        assert!(g.ix.data().iter().all(|&v| v == 0.0));
        assert!(g.iy.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn horizontal_ramp() {
        let w = 16;
        let f = Frame::from_fn(w, 8, |x, _| x as f64 / w as f64);
        let g = gradients(&f, &f).unwrap();
        for y in 0..8 {
            for x in 0..w - 1 {
                assert!((g.ix.get(x, y) - 1.0 / w as f64).abs() < 1e-15);
                assert_eq!(g.iy.get(x, y), 0.0);
            }
        }
        assert!(g.it.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch() {
        assert!(gradients(&Frame::zeros(4, 4), &Frame::zeros(4, 5)).is_err());
    }

    proptest! {
        #[test]
        fn identical_frames_have_zero_it(data in proptest::collection::vec(0.0f64..1.0, 48)) {
            let f = Frame::new(8, 6, data).unwrap();
            let g = gradients(&f, &f).unwrap();
            prop_assert!(g.it.data().iter().all(|&v| v == 0.0));
        }
    }
}
