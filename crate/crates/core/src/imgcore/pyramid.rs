use crate::error::{Error, Result};
use crate::imgcore::{gaussian_blur, Frame};

/// Smallest side allowed at the coarsest pyramid level.
pub const MIN_LEVEL_SIDE: usize = 8;

/// Gaussian pyramid; level 0 is full resolution, each level halves (ceil) the previous.
#[derive(Debug, Clone)]
pub struct Pyramid {
    levels: Vec<Frame>,
}

impl Pyramid {
    pub fn levels(&self) -> &[Frame] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> &Frame {
        &self.levels[k]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn coarsest(&self) -> &Frame {
        self.levels.last().expect("pyramid has at least one level")
    }
}

/// Dimension of pyramid level `k` for a side of length `n`.
pub fn level_side(n: usize, k: usize) -> usize {
    (0..k).fold(n, |s, _| s.div_ceil(2))
}

pub fn check_pyramid_fits(width: usize, height: usize, levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::param("pyramid_levels", "must be at least 1"));
    }
    let (cw, ch) = (level_side(width, levels - 1), level_side(height, levels - 1));
    if cw < MIN_LEVEL_SIDE || ch < MIN_LEVEL_SIDE {
        return Err(Error::FrameTooSmall {
            width,
            height,
            min_width: MIN_LEVEL_SIDE << (levels - 1),
            min_height: MIN_LEVEL_SIDE << (levels - 1),
        });
    }
    Ok(())
}

/// Blur with sigma 1 then keep even rows and columns, per level.
pub fn build_pyramid(f: &Frame, levels: usize) -> Result<Pyramid> {
    check_pyramid_fits(f.width(), f.height(), levels)?;
    let mut out = Vec::with_capacity(levels);
    out.push(f.clone());
    for _ in 1..levels {
        let prev = out.last().unwrap();
        let blurred = gaussian_blur(prev, 1.0)?;
        let (w, h) = (prev.width().div_ceil(2), prev.height().div_ceil(2));
        out.push(Frame::from_fn(w, h, |x, y| blurred.get(2 * x, 2 * y)));
    }
    Ok(Pyramid { levels: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halving_sizes() {
        let p = build_pyramid(&Frame::zeros(64, 64), 3).unwrap();
        let dims: Vec<_> = p.levels().iter().map(|l| l.dims()).collect();
        assert_eq!(dims, vec![(64, 64), (32, 32), (16, 16)]);
    }

    #[test]
    fn single_level_is_identity() {
        let f = Frame::from_fn(10, 9, |x, y| (x * y) as f64 / 90.0);
        let p = build_pyramid(&f, 1).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.level(0), &f);
    }

    #[test]
    fn ceil_rule() {
        let p = build_pyramid(&Frame::zeros(17, 17), 2).unwrap();
        assert_eq!(p.level(1).dims(), (9, 9));
    }

    #[test]
    fn too_many_levels() {
        assert!(build_pyramid(&Frame::zeros(32, 32), 3).is_ok());
        assert!(matches!(
            build_pyramid(&Frame::zeros(32, 32), 4),
            Err(Error::FrameTooSmall { .. })
        ));
        assert!(build_pyramid(&Frame::zeros(32, 32), 0).is_err());
    }

    #[test]
    fn area_shrinks_by_four() {
        let p = build_pyramid(&Frame::zeros(101, 77), 4).unwrap();
        for k in 1..p.len() {
            let (pw, ph) = p.level(k - 1).dims();
            let (w, h) = p.level(k).dims();
            assert!(w * h <= pw * ph / 4 + (pw + ph) / 2 + 1);
        }
    }
}
