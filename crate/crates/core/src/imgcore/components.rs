use crate::imgcore::{BBox, Frame};

/// Components smaller than this are treated as flow noise.
pub const DEFAULT_MIN_AREA: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub id: usize,
    /// Row-major pixel indices into the source mask, ascending.
    pub pixels: Vec<usize>,
    pub bbox: BBox,
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

/// 8-connected labeling of the nonzero pixels of `mask`.
///
/// Components with fewer than `min_area` pixels are dropped. The rest are
/// sorted by area (descending, ties by first pixel) and numbered from 0.
pub fn connected_components(mask: &Frame, min_area: usize) -> Vec<Component> {
    let (w, h) = mask.dims();
    let on = |i: usize| mask.data()[i] != 0.0;
    let mut seen = vec![false; w * h];
    let mut found = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if seen[start] || !on(start) {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(i) = stack.pop() {
            pixels.push(i);
            let (x, y) = (i % w, i / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if !seen[j] && on(j) {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if pixels.len() < min_area {
            continue;
        }
        pixels.sort_unstable();
        found.push(Component {
            id: 0,
            pixels,
            bbox: BBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1),
        });
    }
    found.sort_by(|a, b| b.area().cmp(&a.area()).then(a.pixels[0].cmp(&b.pixels[0])));
    for (id, c) in found.iter_mut().enumerate() {
        c.id = id;
    }
    found
}
