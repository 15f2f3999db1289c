//! Target registry, per-shot XML metadata records and the on-disk shot index.

use std::collections::BTreeMap;
use std::fs;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use quick_xml::events::{BytesDecl, BytesStart, BytesText, Event};
use quick_xml::{Reader, Writer};

use crate::error::{Error, Result};
use crate::evalmetrics::{RankedEntry, RankedList};
use crate::features::{DescriptorId, FeatureVector, RegionClass};
use crate::imgcore::BBox;

/// DTD for exported shot records.
pub const SHOT_DTD: &str = include_str!("../../../docs/shot.dtd");

const MANIFEST: &str = "manifest.txt";
const MANIFEST_HEADER: &str = "survidx-index 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TargetKind {
    Concept,
    Event,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Target {
    /// Short key used in score tables and on the command line.
    pub key: &'static str,
    /// Canonical name; the id is derived from it.
    pub name: &'static str,
    pub kind: TargetKind,
}

impl Target {
    /// 64-bit FNV-1a of the canonical name.
    pub fn id(&self) -> u64 {
        let mut h = FnvHasher::default();
        h.write(self.name.as_bytes());
        h.finish()
    }
}

pub const TARGETS: [Target; 11] = [
    Target { key: "C1", name: "approaching vehicle", kind: TargetKind::Concept },
    Target { key: "C2", name: "moving vehicles", kind: TargetKind::Concept },
    Target { key: "C3", name: "approaching pedestrian", kind: TargetKind::Concept },
    Target { key: "C4", name: "moving pedestrians", kind: TargetKind::Concept },
    Target { key: "C5", name: "combined concept", kind: TargetKind::Concept },
    Target { key: "Embrace", name: "embrace", kind: TargetKind::Event },
    Target { key: "PeopleSplitUp", name: "people split up", kind: TargetKind::Event },
    Target { key: "ElevatorNoEntry", name: "elevator no entry", kind: TargetKind::Event },
    Target { key: "ObjectPut", name: "object put", kind: TargetKind::Event },
    Target { key: "PersonRuns", name: "person runs", kind: TargetKind::Event },
    Target { key: "OpposingFlow", name: "opposing flow", kind: TargetKind::Event },
];

/// The concept whose score is the maximum of the other four.
pub const COMBINED_CONCEPT: &str = "C5";

/// Looks a target up by key or canonical name, ignoring case.
pub fn lookup_target(s: &str) -> Result<Target> {
    TARGETS
        .iter()
        .find(|t| t.key.eq_ignore_ascii_case(s) || t.name.eq_ignore_ascii_case(s))
        .copied()
        .ok_or_else(|| Error::UnknownTarget(s.to_string()))
}

/// Targets a classifier is trained for; the combined concept is derived.
pub fn trainable_targets() -> impl Iterator<Item = Target> {
    TARGETS.into_iter().filter(|t| t.key != COMBINED_CONCEPT)
}

/// Sets the combined concept to the largest of the present concept scores.
pub fn combine_concepts(scores: &mut BTreeMap<String, f64>) {
    let best = TARGETS
        .iter()
        .filter(|t| t.kind == TargetKind::Concept && t.key != COMBINED_CONCEPT)
        .filter_map(|t| scores.get(t.key).copied())
        .reduce(f64::max);
    if let Some(b) = best {
        scores.insert(COMBINED_CONCEPT.to_string(), b);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectRecord {
    pub bbox: BBox,
    pub area: usize,
    pub mean_speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyFrameRecord {
    pub index: usize,
    pub objects: Vec<ObjectRecord>,
    pub descriptors: Vec<FeatureVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotRecord {
    pub id: String,
    pub source: String,
    /// First frame and one past the last.
    pub span: (usize, usize),
    /// Frames per second of the source.
    pub fps: f64,
    pub keyframes: Vec<KeyFrameRecord>,
    pub signature: Option<Vec<f64>>,
    /// Ensemble score per target key.
    pub scores: BTreeMap<String, f64>,
}

impl ShotRecord {
    /// Empty record at 25 frames per second.
    pub fn new(id: impl Into<String>, source: impl Into<String>, span: (usize, usize)) -> Self {
        Self {
            id: id.into(),
            source: source.into(),
            span,
            fps: 25.0,
            keyframes: Vec::new(),
            signature: None,
            scores: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidData(format!("shot `{}`: {m}", self.id)));
        if self.id.is_empty() || !self.id.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)) {
            return bad("id must be nonempty and use only letters, digits, `_`, `-` and `.`".into());
        }
        if self.span.0 >= self.span.1 {
            return bad(format!("empty frame span {:?}", self.span));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("frame rate {} is not positive", self.fps));
        }
        for kf in &self.keyframes {
            if !(self.span.0..self.span.1).contains(&kf.index) {
                return bad(format!("key frame {} outside span {:?}", kf.index, self.span));
            }
        }
        for (t, &s) in &self.scores {
            lookup_target(t)?;
            if !(-1.0..=1.0).contains(&s) {
                return bad(format!("score {s} for {t} outside [-1, 1]"));
            }
        }
        Ok(())
    }

    pub fn object_count(&self) -> usize {
        self.keyframes.iter().map(|k| k.objects.len()).sum()
    }
}

fn join(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 20);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        // Debug prints the shortest string that parses back to the same value.
        s.push_str(&format!("{v:?}"));
    }
    s
}

fn split(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split_ascii_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{t}` in {what}"))))
        .collect()
}

fn xml_err(e: impl std::fmt::Display) -> Error {
    Error::Parse(format!("XML: {e}"))
}

pub fn export_xml(rec: &ShotRecord) -> Result<String> {
    rec.validate()?;
    let mut w = Writer::new_with_indent(Vec::new(), b' ', 2);
    w.write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)))?;
    w.write_event(Event::DocType(BytesText::from_escaped(r#"shot SYSTEM "shot.dtd""#)))?;
    let span = (rec.span.0.to_string(), rec.span.1.to_string());
    let fps = format!("{:?}", rec.fps);
    w.create_element("shot")
        .with_attributes([
            ("id", rec.id.as_str()),
            ("source", rec.source.as_str()),
            ("start", span.0.as_str()),
            ("end", span.1.as_str()),
            ("fps", fps.as_str()),
        ])
        .write_inner_content(|w| {
            for kf in &rec.keyframes {
                w.create_element("keyframe")
                    .with_attribute(("idx", kf.index.to_string().as_str()))
                    .write_inner_content(|w| {
                        for o in &kf.objects {
                            let b = o.bbox;
                            w.create_element("object")
                                .with_attributes([
                                    ("bbox", format!("{} {} {} {}", b.x, b.y, b.width, b.height).as_str()),
                                    ("area", o.area.to_string().as_str()),
                                    ("meanspeed", format!("{:?}", o.mean_speed).as_str()),
                                ])
                                .write_empty()?;
                        }
                        for d in &kf.descriptors {
                            w.create_element("descriptor")
                                .with_attributes([
                                    ("id", d.id.name()),
                                    ("region", d.region.name()),
                                    ("dims", d.values.len().to_string().as_str()),
                                ])
                                .write_text_content(BytesText::new(&join(&d.values)))?;
                        }
                        Ok(())
                    })?;
            }
            if let Some(sig) = &rec.signature {
                w.create_element("signature")
                    .with_attribute(("dims", sig.len().to_string().as_str()))
                    .write_text_content(BytesText::new(&join(sig)))?;
            }
            for (t, s) in &rec.scores {
                w.create_element("scores")
                    .with_attributes([("target", t.as_str()), ("value", format!("{s:?}").as_str())])
                    .write_empty()?;
            }
            Ok(())
        })?;
    let mut out = String::from_utf8(w.into_inner()).map_err(xml_err)?;
    out.push('\n');
    Ok(out)
}

fn attrs(e: &BytesStart) -> Result<BTreeMap<String, String>> {
    let mut m = BTreeMap::new();
    for a in e.attributes() {
        let a = a.map_err(xml_err)?;
        let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
        m.insert(key, a.unescape_value().map_err(xml_err)?.into_owned());
    }
    Ok(m)
}

fn req<'a>(m: &'a BTreeMap<String, String>, key: &str, elem: &str) -> Result<&'a str> {
    m.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Parse(format!("<{elem}> lacks `{key}`")))
}

fn num<T: std::str::FromStr>(m: &BTreeMap<String, String>, key: &str, elem: &str) -> Result<T> {
    let s = req(m, key, elem)?;
    s.parse().map_err(|_| Error::Parse(format!("<{elem} {key}=\"{s}\"> is not a number")))
}

/// Text-bearing element currently open.
enum Open {
    Descriptor(DescriptorId, RegionClass, usize),
    Signature(usize),
}

pub fn import_xml(xml: &str) -> Result<ShotRecord> {
    let mut r = Reader::from_str(xml);
    r.config_mut().trim_text(true);
    let mut rec: Option<ShotRecord> = None;
    let mut open: Option<Open> = None;
    let mut text = String::new();
    loop {
        let ev = r.read_event().map_err(xml_err)?;
        let (e, empty) = match &ev {
            Event::Start(e) => (Some(e), false),
            Event::Empty(e) => (Some(e), true),
            _ => (None, false),
        };
        if let Some(e) = e {
            let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
            let a = attrs(e)?;
            if name == "shot" {
                let mut r = ShotRecord::new(
                    req(&a, "id", "shot")?,
                    req(&a, "source", "shot")?,
                    (num(&a, "start", "shot")?, num(&a, "end", "shot")?),
                );
                r.fps = num(&a, "fps", "shot")?;
                rec = Some(r);
                continue;
            }
            let rec = rec.as_mut().ok_or_else(|| Error::Parse(format!("<{name}> outside <shot>")))?;
            match name.as_str() {
                "keyframe" => rec.keyframes.push(KeyFrameRecord {
                    index: num(&a, "idx", "keyframe")?,
                    objects: Vec::new(),
                    descriptors: Vec::new(),
                }),
                "object" => {
                    let b: Vec<usize> = req(&a, "bbox", "object")?
                        .split_ascii_whitespace()
                        .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad bbox value `{t}`"))))
                        .collect::<Result<_>>()?;
                    let [x, y, w, h] = b[..] else {
                        return Err(Error::Parse("object bbox needs four values".into()));
                    };
                    let kf = rec.keyframes.last_mut().ok_or_else(|| Error::Parse("<object> outside <keyframe>".into()))?;
                    kf.objects.push(ObjectRecord {
                        bbox: BBox::new(x, y, w, h),
                        area: num(&a, "area", "object")?,
                        mean_speed: num(&a, "meanspeed", "object")?,
                    });
                }
                "descriptor" => {
                    let id: DescriptorId = req(&a, "id", "descriptor")?.parse()?;
                    let region: RegionClass = req(&a, "region", "descriptor")?.parse()?;
                    open = Some(Open::Descriptor(id, region, num(&a, "dims", "descriptor")?));
                }
                "signature" => open = Some(Open::Signature(num(&a, "dims", "signature")?)),
                "scores" => {
                    let value: f64 = num(&a, "value", "scores")?;
                    rec.scores.insert(req(&a, "target", "scores")?.to_string(), value);
                }
                other => return Err(Error::Parse(format!("unexpected element <{other}>"))),
            }
            if empty && open.is_some() {
                text.clear();
                close_text(rec, open.take().unwrap(), &text)?;
            }
            continue;
        }
        match ev {
            Event::Text(t) => text = t.unescape().map_err(xml_err)?.into_owned(),
            Event::End(_) => {
                if let (Some(o), Some(rec)) = (open.take(), rec.as_mut()) {
                    close_text(rec, o, &text)?;
                }
                text.clear();
            }
            Event::Eof => break,
            _ => {}
        }
    }
    let rec = rec.ok_or_else(|| Error::Parse("no <shot> element".into()))?;
    rec.validate()?;
    Ok(rec)
}

fn close_text(rec: &mut ShotRecord, o: Open, text: &str) -> Result<()> {
    match o {
        Open::Descriptor(id, region, dims) => {
            let values = split(text, id.name())?;
            if values.len() != dims {
                return Err(Error::DimensionMismatch { expected: dims, got: values.len() });
            }
            let kf = rec
                .keyframes
                .last_mut()
                .ok_or_else(|| Error::Parse("<descriptor> outside <keyframe>".into()))?;
            kf.descriptors.push(FeatureVector::new(id, region, values)?);
        }
        Open::Signature(dims) => {
            let values = split(text, "signature")?;
            if values.len() != dims {
                return Err(Error::DimensionMismatch { expected: dims, got: values.len() });
            }
            rec.signature = Some(values);
        }
    }
    Ok(())
}

/// Shot records keyed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ShotIndex {
    records: BTreeMap<String, ShotRecord>,
}

impl ShotIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a record, replacing any with the same id.
    pub fn insert(&mut self, rec: ShotRecord) -> Result<()> {
        rec.validate()?;
        self.records.insert(rec.id.clone(), rec);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ShotRecord> {
        self.records.get(id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut ShotRecord> {
        self.records.get_mut(id)
    }

    /// Records in id order.
    pub fn records(&self) -> impl Iterator<Item = &ShotRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Shots holding a score for the target, best first, ties by shot id.
    /// Relevance flags are left unset.
    pub fn query(&self, target: &str, top_n: usize) -> Result<RankedList> {
        let t = lookup_target(target)?;
        if self.is_empty() {
            return Err(Error::InvalidData("the index is empty".into()));
        }
        let entries = self
            .records()
            .filter_map(|r| {
                r.scores.get(t.key).map(|&score| RankedEntry {
                    shot: r.id.clone(),
                    score,
                    relevant: false,
                })
            })
            .collect();
        let mut list = RankedList::from_unsorted(t.key, entries)?;
        list.entries.truncate(top_n);
        Ok(list)
    }

    /// One XML file per shot, the DTD, and a manifest listing the files.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("shot.dtd"), SHOT_DTD)?;
        let mut manifest = format!("{MANIFEST_HEADER}\n");
        for r in self.records() {
            let file = format!("{}.xml", r.id);
            fs::write(dir.join(&file), export_xml(r)?)?;
            manifest.push_str(&format!("{}\t{file}\n", r.id));
        }
        fs::write(dir.join(MANIFEST), manifest)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = fs::read_to_string(dir.join(MANIFEST))?;
        let mut lines = manifest.lines();
        if lines.next() != Some(MANIFEST_HEADER) {
            return Err(Error::Parse(format!("{} is not an index manifest", dir.join(MANIFEST).display())));
        }
        let mut index = Self::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (id, file) = line
                .split_once('\t')
                .ok_or_else(|| Error::Parse(format!("bad manifest line `{line}`")))?;
            let rec = import_xml(&fs::read_to_string(dir.join(file))?)?;
            if rec.id != id {
                return Err(Error::Parse(format!("{file} holds shot `{}`, manifest says `{id}`", rec.id)));
            }
            index.insert(rec)?;
        }
        Ok(index)
    }
}
