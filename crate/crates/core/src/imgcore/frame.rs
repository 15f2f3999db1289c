use crate::error::{Error, Result};

/// A single-plane raster of finite samples, row-major.
///
/// Intensity frames hold values in `[0, 1]`; the same container also carries
/// derived planes (derivatives, speeds, level-set values) where only
/// finiteness is guaranteed.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::InvalidData(format!(
                "frame {width}x{height} needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds a frame from a per-pixel function; panics on zero dimensions.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "frame dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    /// Sample with edge replication outside the raster.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    /// Bilinear sample at a real-valued position, replicated outside the raster.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let a = self.get_clamped(xi, yi);
        let b = self.get_clamped(xi + 1, yi);
        let c = self.get_clamped(xi, yi + 1);
        let d = self.get_clamped(xi + 1, yi + 1);
        (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Frame {
        Frame {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn crop(&self, bbox: &BBox) -> Result<Frame> {
        bbox.check_within(self.width, self.height)?;
        Ok(Frame::from_fn(bbox.width, bbox.height, |x, y| {
            self.get(bbox.x + x, bbox.y + y)
        }))
    }

    pub fn same_shape(&self, other: &Frame) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::ShapeMismatch {
                expected: self.dims(),
                got: other.dims(),
            });
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// True when every sample is exactly 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }
}

/// Three-plane RGB raster with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorFrame {
    width: usize,
    height: usize,
    planes: [Vec<f64>; 3],
}

impl ColorFrame {
    pub fn new(width: usize, height: usize, planes: [Vec<f64>; 3]) -> Result<Self> {
        check_dims(width, height)?;
        for plane in &planes {
            if plane.len() != width * height {
                return Err(Error::InvalidData(format!(
                    "color plane needs {} samples, got {}",
                    width * height,
                    plane.len()
                )));
            }
            if plane.iter().any(|v| !v.is_finite() || !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidData(
                    "color sample outside [0, 1] or non-finite".into(),
                ));
            }
        }
        Ok(Self {
            width,
            height,
            planes,
        })
    }

    /// Builds a frame from a per-pixel RGB function. Samples are clamped to `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Self {
        assert!(width > 0 && height > 0, "frame dimensions must be positive");
        let n = width * height;
        let mut planes = [
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        ];
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                for c in 0..3 {
                    planes[c].push(px[c].clamp(0.0, 1.0));
                }
            }
        }
        Self {
            width,
            height,
            planes,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        &self.planes[c]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = y * self.width + x;
        [self.planes[0][i], self.planes[1][i], self.planes[2][i]]
    }

    #[inline]
    pub fn pixel_at(&self, i: usize) -> [f64; 3] {
        [self.planes[0][i], self.planes[1][i], self.planes[2][i]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, px: [f64; 3]) {
        let i = y * self.width + x;
        for c in 0..3 {
            self.planes[c][i] = px[c].clamp(0.0, 1.0);
        }
    }

    pub fn crop(&self, bbox: &BBox) -> Result<ColorFrame> {
        bbox.check_within(self.width, self.height)?;
        Ok(ColorFrame::from_fn(bbox.width, bbox.height, |x, y| {
            self.pixel(bbox.x + x, bbox.y + y)
        }))
    }

    /// ITU-R BT.601 luma.
    pub fn to_grayscale(&self) -> Frame {
        let data = (0..self.width * self.height)
            .map(|i| {
                let [r, g, b] = self.pixel_at(i);
                (0.299 * r + 0.587 * g + 0.114 * b).clamp(0.0, 1.0)
            })
            .collect();
        Frame {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// Axis-aligned pixel rectangle; `x`, `y` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl BBox {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::new(0, 0, width, height)
    }

    pub fn right(&self) -> usize {
        self.x + self.width
    }

    pub fn bottom(&self) -> usize {
        self.y + self.height
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }

    pub fn union(&self, other: &BBox) -> BBox {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        BBox::new(
            x,
            y,
            self.right().max(other.right()) - x,
            self.bottom().max(other.bottom()) - y,
        )
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = self.right().min(other.right()).saturating_sub(self.x.max(other.x));
        let iy = self
            .bottom()
            .min(other.bottom())
            .saturating_sub(self.y.max(other.y));
        let inter = (ix * iy) as f64;
        let union = (self.area() + other.area()) as f64 - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }

    /// Grows the box symmetrically to at least `min_w`x`min_h`, shifted to stay
    /// inside a `frame_w`x`frame_h` raster.
    pub fn expanded_to(&self, min_w: usize, min_h: usize, frame_w: usize, frame_h: usize) -> BBox {
        fn grow(start: usize, len: usize, min_len: usize, limit: usize) -> (usize, usize) {
            let target = len.max(min_len).min(limit);
            let extra = target - len.min(target);
            let mut s = start.saturating_sub(extra / 2);
            if s + target > limit {
                s = limit - target;
            }
            (s, target)
        }
        let (x, w) = grow(self.x, self.width, min_w, frame_w);
        let (y, h) = grow(self.y, self.height, min_h, frame_h);
        BBox::new(x, y, w, h)
    }

    fn check_within(&self, width: usize, height: usize) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.right() > width || self.bottom() > height {
            return Err(Error::InvalidData(format!(
                "bbox {self:?} outside {width}x{height} frame"
            )));
        }
        Ok(())
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidData(format!(
            "frame dimensions must be positive, got {width}x{height}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grayscale_black_and_white() {
        let black = ColorFrame::from_fn(4, 3, |_, _| [0.0; 3]);
        assert!(black.to_grayscale().data().iter().all(|&v| v == 0.0));
        let white = ColorFrame::from_fn(4, 3, |_, _| [1.0; 3]);
        for &v in white.to_grayscale().data() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grayscale_red_pixel() {
        let c = ColorFrame::from_fn(3, 3, |x, y| {
            if (x, y) == (1, 2) {
                [1.0, 0.0, 0.0]
            } else {
                [0.0; 3]
            }
        });
        let g = c.to_grayscale();
        assert_eq!(g.get(1, 2), 0.299);
        assert_eq!(g.get(0, 0), 0.0);
    }

    #[test]
    fn rejects_bad_frames() {
        assert!(Frame::new(0, 3, vec![]).is_err());
        assert!(Frame::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Frame::new(1, 1, vec![f64::NAN]).is_err());
        assert!(ColorFrame::new(1, 1, [vec![1.5], vec![0.0], vec![0.0]]).is_err());
    }

    #[test]
    fn bbox_expansion_stays_inside() {
        let b = BBox::new(60, 2, 4, 4).expanded_to(32, 32, 64, 64);
        assert_eq!(b, BBox::new(32, 0, 32, 32));
        let c = BBox::new(20, 20, 40, 8).expanded_to(16, 16, 64, 64);
        assert_eq!((c.width, c.height), (40, 16));
        assert!(c.right() <= 64 && c.bottom() <= 64);
    }

    #[test]
    fn bbox_iou() {
        let a = BBox::new(0, 0, 10, 10);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&BBox::new(20, 20, 5, 5)), 0.0);
        assert!((a.iou(&BBox::new(5, 0, 10, 10)) - 50.0 / 150.0).abs() < 1e-12);
    }
}
