//! End-to-end indexing: key-frame analysis, codebooks, per-target ensembles,
//! scoring and evaluation against a ground-truth table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::codebook::{shot_signature, train_codebook, Channel, Codebook, CodebookSet};
use crate::config::PipelineConfig;
use crate::ensemble::{learnpp_predict, learnpp_train_batch, EnsembleModel};
use crate::error::{Error, Result};
use crate::evalmetrics::{group_detections, EvalReport, EventLine, Interval, RankedEntry, RankedList};
use crate::features::{extract_all, FeatureVector};
use crate::imgcore::io::{read_y4m, Video};
use crate::imgcore::{connected_components, ColorFrame};
use crate::optflow::{horn_schunck_pyramidal, speed_map, FlowField, SpeedMap};
use crate::segment::{segment_moving, SegmentationResult};
use crate::store::{
    combine_concepts, lookup_target, trainable_targets, KeyFrameRecord, ObjectRecord, ShotIndex, ShotRecord,
    TargetKind, TARGETS,
};

pub const TRUTH_FILE: &str = "truth.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotTruth {
    pub split: Split,
    /// Keys of the targets present in the shot.
    pub positives: BTreeSet<String>,
}

/// Ground truth, one line per shot: `id train|test [target ...]`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TruthTable {
    pub shots: BTreeMap<String, ShotTruth>,
}

impl TruthTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut t = Self::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut f = line.split_whitespace();
            let id = f.next().unwrap();
            let split = match f.next() {
                Some("train") => Split::Train,
                Some("test") => Split::Test,
                _ => return Err(Error::Parse(format!("truth line {}: expected `id train|test ...`", no + 1))),
            };
            let positives = f
                .map(|k| lookup_target(k).map(|t| t.key.to_string()))
                .collect::<Result<BTreeSet<_>>>()?;
            if t.shots.insert(id.to_string(), ShotTruth { split, positives }).is_some() {
                return Err(Error::Parse(format!("truth lists shot `{id}` twice")));
            }
        }
        Ok(t)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (id, t) in &self.shots {
            s.push_str(id);
            s.push_str(if t.split == Split::Train { " train" } else { " test" });
            for p in &t.positives {
                s.push(' ');
                s.push_str(p);
            }
            s.push('\n');
        }
        s
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn ids(&self, split: Split) -> impl Iterator<Item = &str> {
        self.shots.iter().filter(move |(_, t)| t.split == split).map(|(id, _)| id.as_str())
    }

    pub fn label(&self, id: &str, target: &str) -> bool {
        self.shots.get(id).is_some_and(|t| t.positives.contains(target))
    }
}

/// Runs `f` on a worker pool of the configured size.
pub fn with_pool<T: Send>(cfg: &PipelineConfig, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Frames `0, step, 2·step, …` that have a successor.
pub fn keyframe_indices(frames: usize, step: usize) -> Vec<usize> {
    (0..frames.saturating_sub(1)).step_by(step.max(1)).collect()
}

#[derive(Debug, Clone)]
pub struct FrameAnalysis {
    pub flow: FlowField,
    pub speed: SpeedMap,
    pub segmentation: SegmentationResult,
    pub features: Vec<FeatureVector>,
    pub objects: Vec<ObjectRecord>,
}

/// Flow, moving-region segmentation and descriptors of frame `f0` against
/// its successor `f1`.
pub fn analyze_pair(f0: &ColorFrame, f1: &ColorFrame, cfg: &PipelineConfig) -> Result<FrameAnalysis> {
    let flow = horn_schunck_pyramidal(&f0.to_grayscale(), &f1.to_grayscale(), &cfg.hs_params())?;
    let speed = speed_map(&flow, cfg.flow.speed_threshold, cfg.flow.sigma)?;
    let segmentation = restrict_to_motion(segment_moving(&speed, &cfg.cv_params())?, &speed, cfg.segment.min_area);
    let features = extract_all(f0, &segmentation, &flow)?;
    let magnitude = flow.magnitude();
    let objects = segmentation
        .objects
        .iter()
        .map(|c| ObjectRecord {
            bbox: c.bbox,
            area: c.area(),
            mean_speed: c.pixels.iter().map(|&i| magnitude.data()[i]).sum::<f64>() / c.area() as f64,
        })
        .collect();
    Ok(FrameAnalysis {
        flow,
        speed,
        segmentation,
        features,
        objects,
    })
}

/// Drops inside pixels where the speed map is zero and relabels the rest.
/// The evolution can stall with checkerboard islands in static areas; those
/// islands carry no motion.
pub fn restrict_to_motion(mut seg: SegmentationResult, speed: &SpeedMap, min_area: usize) -> SegmentationResult {
    for (m, &s) in seg.mask.data_mut().iter_mut().zip(speed.data.data()) {
        if s <= 0.0 {
            *m = 0.0;
        }
    }
    seg.objects = connected_components(&seg.mask, min_area);
    seg
}

pub fn analyze_shot(id: &str, source: &str, video: &Video, cfg: &PipelineConfig) -> Result<ShotRecord> {
    let n = video.frames.len();
    if n < 2 {
        return Err(Error::InvalidData(format!("shot `{id}` needs at least two frames, has {n}")));
    }
    let mut rec = ShotRecord::new(id, source, (0, n));
    rec.fps = video.fps_f64();
    for t in keyframe_indices(n, cfg.keyframes.step) {
        let a = analyze_pair(&video.frames[t], &video.frames[t + 1], cfg)?;
        rec.keyframes.push(KeyFrameRecord {
            index: t,
            objects: a.objects,
            descriptors: a.features,
        });
    }
    Ok(rec)
}

pub fn read_video(path: &Path) -> Result<Video> {
    read_y4m(BufReader::new(fs::File::open(path)?))
}

/// Y4M files of a directory in name order.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "y4m"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidData(format!("no .y4m clips in {}", dir.display())));
    }
    Ok(files)
}

/// Analyzes every clip of a directory; shot ids are the file stems.
pub fn ingest_corpus(dir: &Path, cfg: &PipelineConfig) -> Result<ShotIndex> {
    let files = corpus_files(dir)?;
    let records: Vec<ShotRecord> = with_pool(cfg, || {
        files
            .par_iter()
            .map(|p| {
                let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                let video = read_video(p)?;
                let name = p.file_name().and_then(|s| s.to_str()).unwrap_or_default();
                analyze_shot(id, name, &video, cfg)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut index = ShotIndex::new();
    for r in records {
        index.insert(r)?;
    }
    Ok(index)
}

fn training_records<'a>(index: &'a ShotIndex, truth: &TruthTable) -> Result<Vec<&'a ShotRecord>> {
    let recs: Vec<&ShotRecord> = truth
        .ids(Split::Train)
        .map(|id| index.get(id).ok_or_else(|| Error::InvalidData(format!("training shot `{id}` is not indexed"))))
        .collect::<Result<_>>()?;
    if recs.is_empty() {
        return Err(Error::InvalidData("the truth table has no training shots".into()));
    }
    Ok(recs)
}

/// One codebook per channel seen in the training shots. Channels with fewer
/// vectors than `k` get one codeword per vector.
pub fn train_codebooks(index: &ShotIndex, truth: &TruthTable, cfg: &PipelineConfig) -> Result<CodebookSet> {
    let mut by_channel: BTreeMap<Channel, Vec<FeatureVector>> = BTreeMap::new();
    for r in training_records(index, truth)? {
        for kf in &r.keyframes {
            for v in &kf.descriptors {
                by_channel.entry(Channel::of(v)).or_default().push(v.clone());
            }
        }
    }
    let jobs: Vec<(Channel, Vec<FeatureVector>)> = by_channel.into_iter().filter(|(_, v)| v.len() >= 2).collect();
    let books: Vec<Codebook> = with_pool(cfg, || {
        jobs.par_iter()
            .map(|(ch, vs)| {
                let k = cfg.codebook.k.min(vs.len());
                let seed = cfg.codebook.seed.wrapping_mul(131).wrapping_add(ch.descriptor.code() as u64 * 8 + ch.region.code() as u64);
                train_codebook(vs, k, seed)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut set = CodebookSet::default();
    books.into_iter().for_each(|b| set.insert(b));
    Ok(set)
}

pub fn save_codebooks(dir: &Path, books: &CodebookSet) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    for (ch, cb) in &books.books {
        let file = format!("{}.cb", ch.slug());
        cb.write(BufWriter::new(fs::File::create(dir.join(&file))?))?;
        manifest.push_str(&file);
        manifest.push('\n');
    }
    fs::write(dir.join("codebooks.txt"), manifest)?;
    Ok(())
}

pub fn load_codebooks(dir: &Path) -> Result<CodebookSet> {
    let mut set = CodebookSet::default();
    for file in fs::read_to_string(dir.join("codebooks.txt"))?.lines().filter(|l| !l.trim().is_empty()) {
        set.insert(Codebook::read(BufReader::new(fs::File::open(dir.join(file.trim()))?))?);
    }
    if set.books.is_empty() {
        return Err(Error::InvalidData(format!("no codebooks in {}", dir.display())));
    }
    Ok(set)
}

/// Stores every shot's signature under the given codebooks.
pub fn attach_signatures(index: &mut ShotIndex, books: &CodebookSet) -> Result<()> {
    let ids: Vec<String> = index.records().map(|r| r.id.clone()).collect();
    for id in ids {
        let rec = index.get_mut(&id).unwrap();
        let frames: Vec<Vec<FeatureVector>> = rec.keyframes.iter().map(|k| k.descriptors.clone()).collect();
        let seq = books.label_frames(&id, &frames)?;
        rec.signature = Some(shot_signature(&seq, books)?.values);
    }
    Ok(())
}

fn signature_of(rec: &ShotRecord) -> Result<&[f64]> {
    rec.signature
        .as_deref()
        .ok_or_else(|| Error::InvalidData(format!("shot `{}` has no signature; train codebooks first", rec.id)))
}

/// A Learn++ ensemble per trainable target, fed the training shots in
/// `ensemble.batches` consecutive batches. Batches holding a single class for
/// a target are skipped for it; targets never seen in both classes get no
/// model.
pub fn train_models(index: &ShotIndex, truth: &TruthTable, cfg: &PipelineConfig) -> Result<Vec<EnsembleModel>> {
    let recs = training_records(index, truth)?;
    let xs: Vec<Vec<f64>> = recs.iter().map(|r| signature_of(r).map(<[f64]>::to_vec)).collect::<Result<_>>()?;
    let nb = cfg.ensemble.batches.min(xs.len());
    let bounds: Vec<(usize, usize)> = (0..nb).map(|b| (b * xs.len() / nb, (b + 1) * xs.len() / nb)).collect();
    let params = cfg.train_params();
    let targets: Vec<&str> = trainable_targets().map(|t| t.key).collect();
    let models = with_pool(cfg, || {
        targets
            .par_iter()
            .map(|&target| {
                let ys: Vec<i8> = recs.iter().map(|r| if truth.label(&r.id, target) { 1 } else { -1 }).collect();
                let mut ens = EnsembleModel::new(target);
                for &(a, b) in &bounds {
                    let y = &ys[a..b];
                    if y.contains(&1) && y.contains(&-1) {
                        learnpp_train_batch(&mut ens, &xs[a..b], y, &params)?;
                    }
                }
                Ok((!ens.hypotheses.is_empty()).then_some(ens))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(models.into_iter().flatten().collect())
}

/// Scores every shot with every model and derives the combined concept.
pub fn classify_index(index: &mut ShotIndex, models: &[EnsembleModel]) -> Result<()> {
    let ids: Vec<String> = index.records().map(|r| r.id.clone()).collect();
    for id in ids {
        let rec = index.get_mut(&id).unwrap();
        let x = signature_of(rec)?.to_vec();
        for m in models {
            let (_, score) = learnpp_predict(m, &x)?;
            rec.scores.insert(m.target.clone(), score);
        }
        combine_concepts(&mut rec.scores);
    }
    Ok(())
}

/// Event detections of the test shots laid end to end in id order: one
/// detection per scored shot with its score as confidence, and one reference
/// per shot holding the event. Returns the lines and the total hours.
pub fn event_lines(index: &ShotIndex, truth: &TruthTable) -> Result<(Vec<EventLine>, Vec<EventLine>, f64)> {
    let mut dets = Vec::new();
    let mut refs = Vec::new();
    let mut t0 = 0.0;
    for id in truth.ids(Split::Test) {
        let rec = index
            .get(id)
            .ok_or_else(|| Error::InvalidData(format!("test shot `{id}` is not indexed")))?;
        let len = (rec.span.1 - rec.span.0) as f64 / rec.fps;
        let interval = Interval::new(t0, t0 + len)?;
        for t in TARGETS.iter().filter(|t| t.kind == TargetKind::Event) {
            if let Some(&s) = rec.scores.get(t.key) {
                dets.push(EventLine { event: t.key.to_string(), interval, confidence: Some(s) });
            }
            if truth.label(id, t.key) {
                refs.push(EventLine { event: t.key.to_string(), interval, confidence: None });
            }
        }
        t0 += len;
    }
    if t0 == 0.0 {
        return Err(Error::InvalidData("the truth table has no test shots".into()));
    }
    Ok((dets, refs, t0 / 3600.0))
}

/// Ranked test shots per concept with their relevance.
pub fn concept_lists(index: &ShotIndex, truth: &TruthTable) -> Result<Vec<RankedList>> {
    let test: BTreeSet<&str> = truth.ids(Split::Test).collect();
    let mut out = Vec::new();
    for t in TARGETS.iter().filter(|t| t.kind == TargetKind::Concept) {
        let entries: Vec<RankedEntry> = index
            .query(t.key, usize::MAX)?
            .entries
            .into_iter()
            .filter(|e| test.contains(e.shot.as_str()))
            .map(|e| RankedEntry { relevant: truth.label(&e.shot, t.key), ..e })
            .collect();
        if entries.iter().any(|e| e.relevant) {
            out.push(RankedList::new(t.key, entries)?);
        }
    }
    Ok(out)
}

/// AP per concept and actual/minimum NDCR per event over the test shots.
/// Targets without any positive test shot are left out.
pub fn evaluate(index: &ShotIndex, truth: &TruthTable, cfg: &PipelineConfig) -> Result<EvalReport> {
    let lists = concept_lists(index, truth)?;
    let (dets, refs, hours) = event_lines(index, truth)?;
    let sets: Vec<_> = group_detections(&dets, &refs, hours)?
        .into_iter()
        .filter(|s| !s.references.is_empty())
        .collect();
    EvalReport::compute(&lists, &sets, cfg.costs(), cfg.eval.threshold)
}

/// Every stage from clips to report, with the index left in `work`.
pub fn run_all(corpus: &Path, work: &Path, cfg: &PipelineConfig) -> Result<(ShotIndex, EvalReport)> {
    let truth = TruthTable::read(&corpus.join(TRUTH_FILE))?;
    let mut index = ingest_corpus(corpus, cfg)?;
    let books = train_codebooks(&index, &truth, cfg)?;
    attach_signatures(&mut index, &books)?;
    let models = train_models(&index, &truth, cfg)?;
    classify_index(&mut index, &models)?;
    save_codebooks(&work.join("codebooks"), &books)?;
    crate::ensemble::save_models(&work.join("models"), &models)?;
    index.save(&work.join("index"))?;
    let report = evaluate(&index, &truth, cfg)?;
    Ok((index, report))
}

/// Short human summary of an index.
pub fn describe_index(index: &ShotIndex) -> String {
    let mut s = String::new();
    let objects: usize = index.records().map(|r| r.object_count()).sum();
    let keyframes: usize = index.records().map(|r| r.keyframes.len()).sum();
    let _ = write!(s, "{} shots, {keyframes} key frames, {objects} objects", index.len());
    s
}
