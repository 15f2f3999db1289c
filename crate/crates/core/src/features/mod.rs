//! Visual descriptor bank computed over three region classes of a key frame:
//! the moving objects, the background and the whole frame.

mod color;
mod edge;
mod extract;
mod sift;
mod spectral;
mod texture;
mod wavelet;

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use color::{color_hist_hsv, color_moments_lab, lab_moments_raw, rgb_to_hsv, rgb_to_lab};
pub use edge::{fourier_edge, hough_accumulator, hough_hist, HOUGH_RHO_BINS, HOUGH_THETA_BINS};
pub use extract::{extract_all, extract_all_with, ExtractOptions, OutsideSource, MIN_INSIDE_SIDE};
pub use sift::{sift_gabor, sift_region, MIN_SIFT_SIDE};
pub use texture::{
    gabor_bank, gabor_responses, glcm_stats, GABOR_FREQUENCIES, GABOR_ORIENTATIONS, GLCM_LEVELS,
};
pub use wavelet::{
    dwt2, motion_activity, wavelet_energy, DetailBands, Subbands, DB2_LOWPASS, WAVELET_LEVELS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DescriptorId {
    ColorHistHsv,
    ColorMomentsLab,
    CooccurrenceTexture,
    GaborTexture,
    FourierEdge,
    Sift,
    SiftGabor,
    WaveletEnergy,
    HoughHist,
    MotionActivity,
}

impl DescriptorId {
    pub const ALL: [DescriptorId; 10] = [
        DescriptorId::ColorHistHsv,
        DescriptorId::ColorMomentsLab,
        DescriptorId::CooccurrenceTexture,
        DescriptorId::GaborTexture,
        DescriptorId::FourierEdge,
        DescriptorId::Sift,
        DescriptorId::SiftGabor,
        DescriptorId::WaveletEnergy,
        DescriptorId::HoughHist,
        DescriptorId::MotionActivity,
    ];

    pub fn dim(self) -> usize {
        match self {
            DescriptorId::ColorHistHsv => 128,
            DescriptorId::ColorMomentsLab => 81,
            DescriptorId::CooccurrenceTexture => 96,
            DescriptorId::GaborTexture => 48,
            DescriptorId::FourierEdge => 512,
            DescriptorId::Sift => 128,
            DescriptorId::SiftGabor => 176,
            DescriptorId::WaveletEnergy => 10,
            DescriptorId::HoughHist => 36,
            DescriptorId::MotionActivity => 10,
        }
    }

    /// Histogram-type descriptors are L1-normalized.
    pub fn is_histogram(self) -> bool {
        matches!(
            self,
            DescriptorId::ColorHistHsv
                | DescriptorId::FourierEdge
                | DescriptorId::WaveletEnergy
                | DescriptorId::HoughHist
                | DescriptorId::MotionActivity
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            DescriptorId::ColorHistHsv => "color_hist_hsv",
            DescriptorId::ColorMomentsLab => "color_moments_lab",
            DescriptorId::CooccurrenceTexture => "cooccurrence_texture",
            DescriptorId::GaborTexture => "gabor_texture",
            DescriptorId::FourierEdge => "fourier_edge",
            DescriptorId::Sift => "sift",
            DescriptorId::SiftGabor => "sift_gabor",
            DescriptorId::WaveletEnergy => "wavelet_energy",
            DescriptorId::HoughHist => "hough_hist",
            DescriptorId::MotionActivity => "motion_activity",
        }
    }

    /// Stable small integer used in binary formats.
    pub fn code(self) -> u8 {
        Self::ALL.iter().position(|&d| d == self).unwrap() as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for DescriptorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DescriptorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown descriptor `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegionClass {
    /// The moving objects.
    Inside,
    /// Everything but the moving objects.
    Outside,
    KeyFrame,
}

impl RegionClass {
    pub const ALL: [RegionClass; 3] = [RegionClass::Inside, RegionClass::Outside, RegionClass::KeyFrame];

    pub fn name(self) -> &'static str {
        match self {
            RegionClass::Inside => "inside",
            RegionClass::Outside => "outside",
            RegionClass::KeyFrame => "keyframe",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for RegionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown region class `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub id: DescriptorId,
    pub region: RegionClass,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(id: DescriptorId, region: RegionClass, values: Vec<f64>) -> Result<Self> {
        if values.len() != id.dim() {
            return Err(Error::DimensionMismatch {
                expected: id.dim(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("{id} has non-finite values")));
        }
        Ok(Self { id, region, values })
    }

    /// Same values under another region label.
    pub fn relabel(mut self, region: RegionClass) -> Self {
        self.region = region;
        self
    }
}

/// Divides by the sum; all-zero input stays all-zero.
pub(crate) fn l1_normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

/// Divides by the Euclidean norm; all-zero input stays all-zero.
pub(crate) fn l2_normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// One record of a feature dump.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub frame: usize,
    pub vector: FeatureVector,
}

/// Tab-separated text: descriptor, region, frame index, then the values.
pub fn write_feature_dump<W: Write>(mut out: W, records: &[FeatureRecord]) -> Result<()> {
    for r in records {
        write!(out, "{}\t{}\t{}", r.vector.id, r.vector.region, r.frame)?;
        for v in &r.vector.values {
            // `{:?}` prints the shortest string that parses back to the same f64.
            write!(out, "\t{v:?}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_feature_dump<R: BufRead>(r: R) -> Result<Vec<FeatureRecord>> {
    let mut records = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Parse(format!("feature dump line {}: {what}", n + 1));
        let mut fields = line.split('\t');
        let id: DescriptorId = fields.next().ok_or_else(|| bad("missing descriptor"))?.parse()?;
        let region: RegionClass = fields.next().ok_or_else(|| bad("missing region"))?.parse()?;
        let frame = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad frame index"))?;
        let values = fields
            .map(|s| s.parse::<f64>().map_err(|_| bad("bad value")))
            .collect::<Result<Vec<_>>>()?;
        records.push(FeatureRecord {
            frame,
            vector: FeatureVector::new(id, region, values)?,
        });
    }
    Ok(records)
}
