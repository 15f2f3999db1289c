//! Vector quantization of descriptor channels into label alphabets, and the
//! fixed-length label-histogram signature of a shot.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{DescriptorId, FeatureVector, RegionClass};

pub const DEFAULT_K: usize = 32;
pub const MAX_ITERATIONS: usize = 100;
pub const INERTIA_TOL: f64 = 1e-4;
const MAGIC: &[u8; 7] = b"MAVCB01";

/// One (descriptor, region) stream of vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Channel {
    pub descriptor: DescriptorId,
    pub region: RegionClass,
}

impl Channel {
    pub fn new(descriptor: DescriptorId, region: RegionClass) -> Self {
        Self { descriptor, region }
    }

    pub fn of(v: &FeatureVector) -> Self {
        Self::new(v.id, v.region)
    }

    /// Every channel `extract_all` can produce, in signature order.
    pub fn all() -> Vec<Channel> {
        let mut out = Vec::new();
        for descriptor in DescriptorId::ALL {
            for region in RegionClass::ALL {
                if !(descriptor == DescriptorId::MotionActivity && region == RegionClass::Outside) {
                    out.push(Channel::new(descriptor, region));
                }
            }
        }
        out
    }

    /// File-name friendly form, e.g. `sift_inside`.
    pub fn slug(&self) -> String {
        format!("{}_{}", self.descriptor, self.region)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    pub seed: u64,
    pub iterations: usize,
    /// Inertia after every assignment step.
    pub inertia: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub channel: Channel,
    pub centroids: Vec<Vec<f64>>,
    pub meta: TrainingMeta,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid and its squared distance; ties go to the lower index.
fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn seed_plus_plus(data: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut centroids = vec![data[rng.random_range(0..n)].to_vec()];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && r < d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            // Guard against round-off landing on a zero-weight tail.
            if d2[idx] == 0.0 {
                idx = d2.iter().rposition(|&d| d > 0.0).unwrap_or(idx);
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = data[pick].to_vec();
        for (i, x) in data.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(x, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd iterations from k-means++ seeds. Stops after [`MAX_ITERATIONS`], when
/// assignments stop changing, or when inertia improves by less than
/// [`INERTIA_TOL`] relative.
pub fn train_codebook(vectors: &[FeatureVector], k: usize, seed: u64) -> Result<Codebook> {
    if k < 2 {
        return Err(Error::param("k", format!("must be at least 2, got {k}")));
    }
    let channel = match vectors.first() {
        Some(v) => Channel::of(v),
        None => return Err(Error::InvalidData("no vectors to train a codebook".into())),
    };
    if vectors.iter().any(|v| Channel::of(v) != channel) {
        return Err(Error::InvalidData("codebook training vectors mix channels".into()));
    }
    if vectors.len() < k {
        return Err(Error::InvalidData(format!(
            "{} vectors for {} cannot train k = {k}",
            vectors.len(),
            channel.slug()
        )));
    }
    let data: Vec<&[f64]> = vectors.iter().map(|v| v.values.as_slice()).collect();
    let dim = channel.descriptor.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(&data, k, &mut rng);

    let mut labels = vec![usize::MAX; data.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let assigned: Vec<(usize, f64)> = data.par_iter().map(|x| nearest(&centroids, x)).collect();
        let changed = assigned.iter().zip(&labels).any(|(a, &l)| a.0 != l);
        let inertia: f64 = assigned.iter().map(|a| a.1).sum();
        labels.iter_mut().zip(&assigned).for_each(|(l, a)| *l = a.0);
        let prev = trace.last().copied();
        debug_assert!(prev.is_none_or(|p| inertia <= p * (1.0 + 1e-12) + 1e-20), "inertia rose to {inertia} from {prev:?}");
        trace.push(inertia);
        if !changed {
            break;
        }
        if let Some(p) = prev {
            if p - inertia <= INERTIA_TOL * p {
                break;
            }
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &l) in data.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(x.iter()).for_each(|(s, v)| *s += v);
        }
        let mut cost: Vec<f64> = assigned.iter().map(|a| a.1).collect();
        for c in 0..k {
            if counts[c] > 0 {
                let n = counts[c] as f64;
                centroids[c] = sums[c].iter().map(|s| s / n).collect();
            } else {
                // An empty cluster takes over the worst-served point.
                let (far, _) = cost
                    .iter()
                    .enumerate()
                    .fold((0, -1.0), |b, (i, &d)| if d > b.1 { (i, d) } else { b });
                centroids[c] = data[far].to_vec();
                cost[far] = 0.0;
            }
        }
    }
    Ok(Codebook {
        channel,
        centroids,
        meta: TrainingMeta {
            seed,
            iterations,
            inertia: trace,
        },
    })
}

impl Codebook {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.channel.descriptor.dim()
    }

    pub fn assign(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(nearest(&self.centroids, x).0)
    }

    /// Nearest-centroid label of each vector.
    pub fn assign_labels(&self, vectors: &[FeatureVector]) -> Result<Vec<usize>> {
        vectors
            .par_iter()
            .map(|v| {
                if Channel::of(v) != self.channel {
                    return Err(Error::InvalidData(format!(
                        "vector of {} given to the {} codebook",
                        Channel::of(v).slug(),
                        self.channel.slug()
                    )));
                }
                self.assign(&v.values)
            })
            .collect()
    }

    /// Sum of squared distances to the assigned centroids.
    pub fn inertia(&self, vectors: &[FeatureVector]) -> f64 {
        vectors.iter().map(|v| nearest(&self.centroids, &v.values).1).sum()
    }

    /// Magic, descriptor code, region code, k and dim as u32 LE, centroids as
    /// f64 LE, then the training seed (u64) and iteration count (u32).
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&[self.channel.descriptor.code(), self.channel.region.code()])?;
        out.write_all(&(self.k() as u32).to_le_bytes())?;
        out.write_all(&(self.dim() as u32).to_le_bytes())?;
        for c in &self.centroids {
            for v in c {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.write_all(&self.meta.seed.to_le_bytes())?;
        out.write_all(&(self.meta.iterations as u32).to_le_bytes())?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Parse("not a codebook file".into()));
        }
        let mut ids = [0u8; 2];
        r.read_exact(&mut ids)?;
        let descriptor = DescriptorId::from_code(ids[0])
            .ok_or_else(|| Error::Parse(format!("unknown descriptor code {}", ids[0])))?;
        let region =
            RegionClass::from_code(ids[1]).ok_or_else(|| Error::Parse(format!("unknown region code {}", ids[1])))?;
        let k = read_u32(&mut r)? as usize;
        let dim = read_u32(&mut r)? as usize;
        if dim != descriptor.dim() || k < 2 {
            return Err(Error::Parse(format!("bad codebook header: k {k}, dim {dim} for {descriptor}")));
        }
        let mut centroids = Vec::with_capacity(k);
        for _ in 0..k {
            let mut c = Vec::with_capacity(dim);
            for _ in 0..dim {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                c.push(f64::from_le_bytes(b));
            }
            centroids.push(c);
        }
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        let seed = u64::from_le_bytes(b);
        let iterations = read_u32(&mut r)? as usize;
        Ok(Codebook {
            channel: Channel::new(descriptor, region),
            centroids,
            meta: TrainingMeta {
                seed,
                iterations,
                inertia: Vec::new(),
            },
        })
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Per-channel labels of one shot, one slot per key frame; `None` where the
/// region was absent in that frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelSequence {
    pub shot: String,
    pub channels: BTreeMap<Channel, Vec<Option<usize>>>,
}

impl LabelSequence {
    pub fn new(shot: impl Into<String>) -> Self {
        Self {
            shot: shot.into(),
            channels: BTreeMap::new(),
        }
    }

    pub fn frames(&self) -> usize {
        self.channels.values().map(|v| v.len()).max().unwrap_or(0)
    }
}

/// Codebooks keyed by channel; iteration order is the signature order.
#[derive(Debug, Clone, Default)]
pub struct CodebookSet {
    pub books: BTreeMap<Channel, Codebook>,
}

impl CodebookSet {
    pub fn insert(&mut self, cb: Codebook) {
        self.books.insert(cb.channel, cb);
    }

    pub fn signature_len(&self) -> usize {
        self.books.values().map(|b| b.k()).sum()
    }

    /// Labels for the vectors of each frame. Every frame gets a slot in every
    /// channel of the set.
    pub fn label_frames(&self, shot: &str, frames: &[Vec<FeatureVector>]) -> Result<LabelSequence> {
        let mut seq = LabelSequence::new(shot);
        for ch in self.books.keys() {
            seq.channels.insert(*ch, vec![None; frames.len()]);
        }
        for (t, vectors) in frames.iter().enumerate() {
            for v in vectors {
                let ch = Channel::of(v);
                if let Some(cb) = self.books.get(&ch) {
                    let label = cb.assign(&v.values)?;
                    seq.channels.get_mut(&ch).unwrap()[t] = Some(label);
                }
            }
        }
        Ok(seq)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotSignature {
    pub shot: String,
    pub values: Vec<f64>,
}

/// Concatenated per-channel label histograms, each summing to one. A channel
/// with no label in the whole shot contributes a uniform block.
pub fn shot_signature(seq: &LabelSequence, books: &CodebookSet) -> Result<ShotSignature> {
    if seq.frames() == 0 {
        return Err(Error::InvalidData(format!("shot `{}` has no key frames", seq.shot)));
    }
    let mut values = Vec::with_capacity(books.signature_len());
    for (ch, cb) in &books.books {
        let k = cb.k();
        let mut hist = vec![0.0; k];
        let mut n = 0.0;
        for l in seq.channels.get(ch).into_iter().flatten().flatten() {
            if *l >= k {
                return Err(Error::InvalidData(format!("label {l} outside [0, {k}) in {}", ch.slug())));
            }
            hist[*l] += 1.0;
            n += 1.0;
        }
        if n > 0.0 {
            hist.iter_mut().for_each(|h| *h /= n);
        } else {
            hist.iter_mut().for_each(|h| *h = 1.0 / k as f64);
        }
        values.extend(hist);
    }
    Ok(ShotSignature {
        shot: seq.shot.clone(),
        values,
    })
}
