use crate::error::{Error, Result};
use crate::features::{
    color_hist_hsv, color_moments_lab, fourier_edge, gabor_bank, glcm_stats, hough_hist, motion_activity,
    sift_gabor, sift_region, wavelet_energy, DescriptorId, FeatureVector, RegionClass,
};
use crate::imgcore::{BBox, ColorFrame, Frame};
use crate::optflow::FlowField;
use crate::segment::SegmentationResult;

/// Side below which the inside crop is grown, so every descriptor's minimum
/// frame size is met.
pub const MIN_INSIDE_SIDE: usize = 32;

/// What the rectangular descriptors see of the background.
#[derive(Debug, Clone, Default)]
pub enum OutsideSource {
    /// The key frame with the moving pixels painted in the mean background color.
    #[default]
    MeanFill,
    /// A separately estimated background image of the key frame's size.
    Background(ColorFrame),
}

#[derive(Debug, Clone, Default)]
pub struct ExtractOptions {
    pub outside: OutsideSource,
}

/// Every applicable descriptor for the three region classes, ordered by
/// region then descriptor. Regions that are empty produce no vectors.
pub fn extract_all(key: &ColorFrame, seg: &SegmentationResult, flow: &FlowField) -> Result<Vec<FeatureVector>> {
    extract_all_with(key, seg, flow, &ExtractOptions::default())
}

pub fn extract_all_with(
    key: &ColorFrame,
    seg: &SegmentationResult,
    flow: &FlowField,
    opts: &ExtractOptions,
) -> Result<Vec<FeatureVector>> {
    let (w, h) = key.dims();
    for got in [seg.mask.dims(), flow.dims()] {
        if got != (w, h) {
            return Err(Error::ShapeMismatch { expected: (w, h), got });
        }
    }
    if w < MIN_INSIDE_SIDE || h < MIN_INSIDE_SIDE {
        return Err(Error::FrameTooSmall {
            width: w,
            height: h,
            min_width: MIN_INSIDE_SIDE,
            min_height: MIN_INSIDE_SIDE,
        });
    }
    let mut out = Vec::with_capacity(29);

    if let Some(bbox) = seg.objects.iter().map(|o| o.bbox).reduce(|a, b| a.union(&b)) {
        let crop_box = bbox.expanded_to(MIN_INSIDE_SIDE, MIN_INSIDE_SIDE, w, h);
        let sift_box = bbox.expanded_to(8, 8, w, h);
        let gray = key.to_grayscale();
        let crop = key.crop(&crop_box)?;
        let crop_flow = FlowField {
            u: flow.u.crop(&crop_box)?,
            v: flow.v.crop(&crop_box)?,
        };
        let region = Region {
            color: &crop,
            gray: &crop.to_grayscale(),
            full_gray: &gray,
            mask: Some(&seg.mask),
            full_color: key,
            sift_box,
        };
        region.push_all(RegionClass::Inside, Some(&crop_flow), &mut out)?;
    }

    let outside = seg.mask.map(|m| if m == 0.0 { 1.0 } else { 0.0 });
    if outside.count_nonzero() > 0 {
        let filled = match &opts.outside {
            OutsideSource::MeanFill => fill_inside(key, &seg.mask),
            OutsideSource::Background(bg) => {
                if bg.dims() != (w, h) {
                    return Err(Error::ShapeMismatch { expected: (w, h), got: bg.dims() });
                }
                bg.clone()
            }
        };
        let gray = filled.to_grayscale();
        let region = Region {
            color: &filled,
            gray: &gray,
            full_gray: &gray,
            mask: Some(&outside),
            full_color: key,
            sift_box: BBox::full(w, h),
        };
        region.push_all(RegionClass::Outside, None, &mut out)?;
    }

    let gray = key.to_grayscale();
    let region = Region {
        color: key,
        gray: &gray,
        full_gray: &gray,
        mask: None,
        full_color: key,
        sift_box: BBox::full(w, h),
    };
    region.push_all(RegionClass::KeyFrame, Some(flow), &mut out)?;
    Ok(out)
}

struct Region<'a> {
    /// Rectangular image for the descriptors that cannot take a mask.
    color: &'a ColorFrame,
    gray: &'a Frame,
    /// Full-size gray frame that `sift_box` indexes into.
    full_gray: &'a Frame,
    /// Full-size selection for the mask-aware descriptors.
    mask: Option<&'a Frame>,
    full_color: &'a ColorFrame,
    sift_box: BBox,
}

impl Region<'_> {
    fn push_all(&self, class: RegionClass, flow: Option<&FlowField>, out: &mut Vec<FeatureVector>) -> Result<()> {
        let full_gray_masked;
        let (hist_src, glcm_src) = match self.mask {
            Some(_) => {
                full_gray_masked = self.full_color.to_grayscale();
                (self.full_color, &full_gray_masked)
            }
            None => (self.color, self.gray),
        };
        for id in DescriptorId::ALL {
            let v = match id {
                DescriptorId::ColorHistHsv => color_hist_hsv(hist_src, self.mask)?,
                DescriptorId::ColorMomentsLab => color_moments_lab(self.color)?,
                DescriptorId::CooccurrenceTexture => glcm_stats(glcm_src, self.mask)?,
                DescriptorId::GaborTexture => gabor_bank(self.gray)?,
                DescriptorId::FourierEdge => fourier_edge(self.gray)?,
                DescriptorId::Sift => sift_region(self.full_gray, &self.sift_box)?,
                DescriptorId::SiftGabor => sift_gabor(self.full_gray, &self.sift_box)?,
                DescriptorId::WaveletEnergy => wavelet_energy(self.gray)?,
                DescriptorId::HoughHist => hough_hist(self.gray)?,
                DescriptorId::MotionActivity => match flow {
                    Some(f) => motion_activity(f)?,
                    None => continue,
                },
            };
            out.push(v.relabel(class));
        }
        Ok(())
    }
}

/// Key frame with every nonzero-mask pixel replaced by the mean color of the rest.
fn fill_inside(key: &ColorFrame, mask: &Frame) -> ColorFrame {
    let mut sum = [0.0; 3];
    let mut n = 0.0;
    for (i, &m) in mask.data().iter().enumerate() {
        if m == 0.0 {
            let p = key.pixel_at(i);
            (0..3).for_each(|c| sum[c] += p[c]);
            n += 1.0;
        }
    }
    let mean = sum.map(|s| s / n);
    let mut out = key.clone();
    for y in 0..key.height() {
        for x in 0..key.width() {
            if mask.get(x, y) != 0.0 {
                out.set_pixel(x, y, mean);
            }
        }
    }
    out
}
