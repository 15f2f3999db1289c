//! Retrieval and detection scores: average precision over ranked shot lists,
//! and normalized detection cost rate for timed event detections.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width, in seconds, of the window within which a detection's midpoint
/// must fall from a reference's midpoint to count as a hit.
pub const MATCH_WINDOW_S: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry {
    pub shot: String,
    pub score: f64,
    pub relevant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub target: String,
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    /// Checks that scores never increase down the list.
    pub fn new(target: impl Into<String>, entries: Vec<RankedEntry>) -> Result<Self> {
        if let Some(w) = entries.windows(2).find(|w| !(w[1].score <= w[0].score)) {
            return Err(Error::InvalidData(format!(
                "ranked list not sorted: `{}` ({}) after `{}` ({})",
                w[1].shot, w[1].score, w[0].shot, w[0].score
            )));
        }
        Ok(Self {
            target: target.into(),
            entries,
        })
    }

    /// Sorts by score, highest first, breaking ties by shot id.
    pub fn from_unsorted(target: impl Into<String>, mut entries: Vec<RankedEntry>) -> Result<Self> {
        if let Some(e) = entries.iter().find(|e| e.score.is_nan()) {
            return Err(Error::InvalidData(format!("shot `{}` has a NaN score", e.shot)));
        }
        entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.shot.cmp(&b.shot)));
        Self::new(target, entries)
    }
}

/// Mean of precision-at-rank over the ranks holding relevant shots.
pub fn average_precision(r: &RankedList) -> Result<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, e) in r.entries.iter().enumerate() {
        if e.relevant {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(Error::UndefinedMetric("average precision needs at least one relevant shot"));
    }
    Ok(sum / hits as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && start < end) {
            return Err(Error::InvalidData(format!("bad interval [{start}, {end}]")));
        }
        Ok(Self { start, end })
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.start + self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub interval: Interval,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    pub event: String,
    pub detections: Vec<Detection>,
    pub references: Vec<Interval>,
    pub duration_hours: f64,
}

impl DetectionSet {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_hours > 0.0 && self.duration_hours.is_finite()) {
            return Err(Error::InvalidData(format!(
                "source duration must be positive, got {} h",
                self.duration_hours
            )));
        }
        let intervals = self.references.iter().chain(self.detections.iter().map(|d| &d.interval));
        for iv in intervals {
            Interval::new(iv.start, iv.end)?;
        }
        if let Some(d) = self.detections.iter().find(|d| d.confidence.is_nan()) {
            return Err(Error::InvalidData(format!(
                "detection at {}s has a NaN confidence",
                d.interval.start
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NdcrCosts {
    pub cost_miss: f64,
    pub cost_fa: f64,
    /// Expected target events per hour.
    pub r_target: f64,
}

impl Default for NdcrCosts {
    fn default() -> Self {
        Self {
            cost_miss: 10.0,
            cost_fa: 1.0,
            r_target: 20.0,
        }
    }
}

impl NdcrCosts {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("cost_miss", self.cost_miss),
            ("cost_fa", self.cost_fa),
            ("r_target", self.r_target),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn fa_weight(&self) -> f64 {
        self.cost_fa / (self.cost_miss * self.r_target)
    }
}

/// One operating point of a detection system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NdcrPoint {
    pub threshold: f64,
    pub hits: usize,
    pub misses: usize,
    pub false_alarms: usize,
    pub p_miss: f64,
    /// False alarms per hour.
    pub r_fa: f64,
    pub ndcr: f64,
}

/// Pairs detections with references one-to-one, closest midpoints first.
/// Returns the number of matched pairs.
fn match_count(dets: &[&Detection], refs: &[Interval]) -> usize {
    let mut pairs = Vec::new();
    for (i, d) in dets.iter().enumerate() {
        for (j, r) in refs.iter().enumerate() {
            let dist = (d.interval.midpoint() - r.midpoint()).abs();
            if dist <= MATCH_WINDOW_S {
                pairs.push((dist, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_d = vec![false; dets.len()];
    let mut used_r = vec![false; refs.len()];
    let mut n = 0;
    for (_, i, j) in pairs {
        if !used_d[i] && !used_r[j] {
            used_d[i] = true;
            used_r[j] = true;
            n += 1;
        }
    }
    n
}

pub fn ndcr_point(d: &DetectionSet, threshold: f64, c: &NdcrCosts) -> Result<NdcrPoint> {
    d.validate()?;
    c.validate()?;
    if d.references.is_empty() {
        return Err(Error::UndefinedMetric("NDCR needs at least one reference event"));
    }
    let kept: Vec<&Detection> = d.detections.iter().filter(|x| x.confidence >= threshold).collect();
    let hits = match_count(&kept, &d.references);
    let misses = d.references.len() - hits;
    let false_alarms = kept.len() - hits;
    let p_miss = misses as f64 / d.references.len() as f64;
    let r_fa = false_alarms as f64 / d.duration_hours;
    Ok(NdcrPoint {
        threshold,
        hits,
        misses,
        false_alarms,
        p_miss,
        r_fa,
        ndcr: p_miss + c.fa_weight() * r_fa,
    })
}

pub fn ndcr(d: &DetectionSet, threshold: f64, c: &NdcrCosts) -> Result<f64> {
    Ok(ndcr_point(d, threshold, c)?.ndcr)
}

/// Operating points at +∞ and at every distinct confidence, from the highest
/// threshold down.
pub fn ndcr_sweep(d: &DetectionSet, c: &NdcrCosts) -> Result<Vec<NdcrPoint>> {
    let mut thresholds: Vec<f64> = d.detections.iter().map(|x| x.confidence).collect();
    thresholds.push(f64::INFINITY);
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    thresholds.into_iter().map(|t| ndcr_point(d, t, c)).collect()
}

/// Lowest cost over the sweep; among equal costs the higher threshold wins.
pub fn minimum_ndcr(d: &DetectionSet, c: &NdcrCosts) -> Result<(f64, f64)> {
    let sweep = ndcr_sweep(d, c)?;
    let mut best = sweep[0];
    for p in &sweep[1..] {
        if p.ndcr < best.ndcr {
            best = *p;
        }
    }
    Ok((best.threshold, best.ndcr))
}

/// One line of a detection or reference file.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLine {
    pub event: String,
    pub interval: Interval,
    pub confidence: Option<f64>,
}

/// Parses `event start end [confidence]` lines; blank lines and `#` comments
/// are skipped.
pub fn parse_event_lines(text: &str) -> Result<Vec<EventLine>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Parse(format!("line {}: {what}: `{raw}`", no + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(bad("expected `event start end [confidence]`"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("not a number"));
        let interval = Interval::new(num(fields[1])?, num(fields[2])?).map_err(|_| bad("bad interval"))?;
        let confidence = fields.get(3).map(|s| num(s)).transpose()?;
        out.push(EventLine {
            event: fields[0].to_string(),
            interval,
            confidence,
        });
    }
    Ok(out)
}

pub fn format_event_lines(lines: &[EventLine]) -> String {
    let mut s = String::new();
    for l in lines {
        let _ = write!(s, "{} {} {}", l.event, l.interval.start, l.interval.end);
        if let Some(c) = l.confidence {
            let _ = write!(s, " {c}");
        }
        s.push('\n');
    }
    s
}

/// Groups detections and references by event. Every event with references
/// gets a set, even if the system reported nothing for it.
pub fn group_detections(
    detections: &[EventLine],
    references: &[EventLine],
    duration_hours: f64,
) -> Result<Vec<DetectionSet>> {
    let mut sets: BTreeMap<String, DetectionSet> = BTreeMap::new();
    let empty = |ev: &str| DetectionSet {
        event: ev.to_string(),
        detections: Vec::new(),
        references: Vec::new(),
        duration_hours,
    };
    for r in references {
        sets.entry(r.event.clone()).or_insert_with(|| empty(&r.event)).references.push(r.interval);
    }
    for d in detections {
        let confidence = d
            .confidence
            .ok_or_else(|| Error::Parse(format!("detection of `{}` lacks a confidence", d.event)))?;
        sets.entry(d.event.clone()).or_insert_with(|| empty(&d.event)).detections.push(Detection {
            interval: d.interval,
            confidence,
        });
    }
    let out: Vec<DetectionSet> = sets.into_values().collect();
    for s in &out {
        s.validate()?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptRow {
    pub target: String,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRow {
    pub event: String,
    pub actual: f64,
    pub minimum: f64,
    pub min_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub concepts: Vec<ConceptRow>,
    pub events: Vec<EventRow>,
    pub costs: NdcrCosts,
    /// Threshold at which the actual NDCR is taken.
    pub operating_threshold: f64,
}

impl EvalReport {
    /// Scores every ranked list and every detection set.
    pub fn compute(lists: &[RankedList], sets: &[DetectionSet], costs: NdcrCosts, operating_threshold: f64) -> Result<Self> {
        let concepts = lists
            .iter()
            .map(|l| {
                Ok(ConceptRow {
                    target: l.target.clone(),
                    ap: average_precision(l)?,
                })
            })
            .collect::<Result<_>>()?;
        let events = sets
            .iter()
            .map(|s| {
                let (min_threshold, minimum) = minimum_ndcr(s, &costs)?;
                Ok(EventRow {
                    event: s.event.clone(),
                    actual: ndcr(s, operating_threshold, &costs)?,
                    minimum,
                    min_threshold,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            concepts,
            events,
            costs,
            operating_threshold,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if !self.concepts.is_empty() {
            let w = self.concepts.iter().map(|c| c.target.len()).max().unwrap_or(0).max(7);
            let _ = writeln!(s, "{:<w$}  {:>6}", "Concept", "AP");
            for c in &self.concepts {
                let _ = writeln!(s, "{:<w$}  {:>6.4}", c.target, c.ap);
            }
        }
        if !self.events.is_empty() {
            if !s.is_empty() {
                s.push('\n');
            }
            let w = self.events.iter().map(|e| e.event.len()).max().unwrap_or(0).max(5);
            let _ = writeln!(s, "{:<w$}  {:>7}  {:>7}", "Event", "A.NDCR", "M.NDCR");
            for e in &self.events {
                let _ = writeln!(s, "{:<w$}  {:>7.4}  {:>7.4}", e.event, e.actual, e.minimum);
            }
            let c = &self.costs;
            let _ = writeln!(
                s,
                "costs: miss {} fa {} rate {}/h; operating threshold {}",
                c.cost_miss, c.cost_fa, c.r_target, self.operating_threshold
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,target,metric,value\n");
        for c in &self.concepts {
            let _ = writeln!(s, "concept,{},ap,{}", c.target, c.ap);
        }
        for e in &self.events {
            let _ = writeln!(s, "event,{},actual_ndcr,{}", e.event, e.actual);
            let _ = writeln!(s, "event,{},min_ndcr,{}", e.event, e.minimum);
            let _ = writeln!(s, "event,{},min_threshold,{}", e.event, e.min_threshold);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn list(rel: &[bool]) -> RankedList {
        let n = rel.len();
        let entries = rel
            .iter()
            .enumerate()
            .map(|(i, &r)| RankedEntry {
                shot: format!("s{i:02}"),
                score: (n - i) as f64,
                relevant: r,
            })
            .collect();
        RankedList::new("t", entries).unwrap()
    }

    #[test]
    fn ap_values() {
        assert_eq!(average_precision(&list(&[true, true, true])).unwrap(), 1.0);
        let ap = average_precision(&list(&[true, false, true])).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((ap - 0.8333).abs() < 1e-4);
        assert!(average_precision(&list(&[false, false])).is_err());
    }

    #[test]
    fn reversing_a_top_heavy_list_lowers_ap() {
        let top = [true, true, false, false, false];
        let mut rev = top;
        rev.reverse();
        assert!(average_precision(&list(&rev)).unwrap() < average_precision(&list(&top)).unwrap());
    }

    #[test]
    fn unsorted_lists_rejected_and_sorted() {
        let e = |s: &str, score| RankedEntry {
            shot: s.into(),
            score,
            relevant: false,
        };
        assert!(RankedList::new("t", vec![e("a", 0.1), e("b", 0.9)]).is_err());
        let l = RankedList::from_unsorted("t", vec![e("b", 0.5), e("c", 0.9), e("a", 0.5)]).unwrap();
        let order: Vec<&str> = l.entries.iter().map(|x| x.shot.as_str()).collect();
        assert_eq!(order, ["c", "a", "b"]);
    }

    proptest! {
        #[test]
        fn ap_depends_only_on_ranks(scores in proptest::collection::vec(-5.0f64..5.0, 2..30), seed in 0u64..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rel: Vec<bool> = scores.iter().map(|_| rng.random_bool(0.4)).collect();
            rel[0] = true;
            let make = |f: &dyn Fn(f64) -> f64| {
                let entries = scores.iter().zip(&rel).enumerate().map(|(i, (&s, &r))| RankedEntry {
                    shot: format!("s{i:03}"), score: f(s), relevant: r,
                }).collect();
                RankedList::from_unsorted("t", entries).unwrap()
            };
            let a = average_precision(&make(&|s| s)).unwrap();
            let b = average_precision(&make(&|s| (0.7 * s).exp() + 3.0)).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a > 0.0 && a <= 1.0);
        }
    }

    fn iv(a: f64, b: f64) -> Interval {
        Interval::new(a, b).unwrap()
    }

    fn det(a: f64, b: f64, confidence: f64) -> Detection {
        Detection {
            interval: iv(a, b),
            confidence,
        }
    }

    #[test]
    fn ndcr_worked_example() {
        // Two references, one found, two false alarms over one hour.
        let d = DetectionSet {
            event: "Embrace".into(),
            detections: vec![det(10.0, 12.0, 0.9), det(100.0, 101.0, 0.8), det(300.0, 302.0, 0.7)],
            references: vec![iv(10.2, 12.2), iv(200.0, 205.0)],
            duration_hours: 1.0,
        };
        let p = ndcr_point(&d, 0.5, &NdcrCosts::default()).unwrap();
        assert_eq!((p.hits, p.misses, p.false_alarms), (1, 1, 2));
        assert_eq!(p.ndcr, 0.51);
    }

    #[test]
    fn ndcr_endpoints() {
        let refs = vec![iv(5.0, 6.0), iv(50.0, 52.0)];
        let perfect = DetectionSet {
            event: "e".into(),
            detections: vec![det(5.1, 6.1, 0.8), det(50.0, 52.0, 0.6)],
            references: refs.clone(),
            duration_hours: 2.0,
        };
        let c = NdcrCosts::default();
        assert_eq!(ndcr(&perfect, 0.0, &c).unwrap(), 0.0);
        assert_eq!(ndcr(&perfect, 0.95, &c).unwrap(), 1.0);
        assert_eq!(ndcr(&perfect, f64::INFINITY, &c).unwrap(), 1.0);
        let none = DetectionSet {
            references: vec![],
            ..perfect.clone()
        };
        assert!(matches!(ndcr(&none, 0.0, &c), Err(Error::UndefinedMetric(_))));
        let bad = DetectionSet {
            duration_hours: 0.0,
            ..perfect
        };
        assert!(ndcr(&bad, 0.0, &c).is_err());
    }

    #[test]
    fn one_detection_claims_one_reference() {
        // Both references lie within the window of one detection; the closer wins.
        let d = DetectionSet {
            event: "e".into(),
            detections: vec![det(9.0, 11.0, 1.0)],
            references: vec![iv(9.6, 10.6), iv(9.2, 11.0)],
            duration_hours: 1.0,
        };
        let p = ndcr_point(&d, 0.0, &NdcrCosts::default()).unwrap();
        assert_eq!((p.hits, p.misses, p.false_alarms), (1, 1, 0));
        let far = DetectionSet {
            detections: vec![det(10.6, 11.6, 1.0)],
            references: vec![iv(10.0, 11.0)],
            ..d
        };
        assert_eq!(ndcr_point(&far, 0.0, &NdcrCosts::default()).unwrap().hits, 0);
    }

    #[test]
    fn separable_confidences_reach_zero() {
        let d = DetectionSet {
            event: "e".into(),
            detections: vec![det(1.0, 2.0, 0.9), det(30.0, 31.0, 0.8), det(60.0, 61.0, 0.2)],
            references: vec![iv(1.0, 2.0), iv(30.0, 31.0)],
            duration_hours: 0.5,
        };
        let (t, v) = minimum_ndcr(&d, &NdcrCosts::default()).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(t, 0.8);
    }

    /// References spaced far apart so each detection can hit at most one of
    /// them and matching reduces to counting.
    fn random_set(rng: &mut ChaCha8Rng) -> DetectionSet {
        let n_ref = rng.random_range(1..6);
        let references: Vec<Interval> = (0..n_ref).map(|k| iv(20.0 * k as f64, 20.0 * k as f64 + 2.0)).collect();
        let mut detections = Vec::new();
        for _ in 0..rng.random_range(0..12) {
            let conf = (rng.random_range(0..100) as f64) / 100.0;
            let k = rng.random_range(0..n_ref) as f64;
            let start = if rng.random_bool(0.5) { 20.0 * k + rng.random_range(-0.3..0.3) } else { 20.0 * k + 8.0 };
            detections.push(det(start, start + 2.0, conf));
        }
        DetectionSet {
            event: "e".into(),
            detections,
            references,
            duration_hours: rng.random_range(0.2..3.0),
        }
    }

    fn counting_oracle(d: &DetectionSet, t: f64, c: &NdcrCosts) -> f64 {
        let mut hit_refs = vec![false; d.references.len()];
        let mut fa = 0;
        for x in d.detections.iter().filter(|x| x.confidence >= t) {
            let near = d.references.iter().position(|r| (r.midpoint() - x.interval.midpoint()).abs() <= 0.5);
            match near {
                Some(j) if !hit_refs[j] => hit_refs[j] = true,
                _ => fa += 1,
            }
        }
        let misses = hit_refs.iter().filter(|h| !**h).count() as f64;
        misses / d.references.len() as f64 + c.cost_fa / (c.cost_miss * c.r_target) * fa as f64 / d.duration_hours
    }

    #[test]
    fn minimum_matches_exhaustive_sweep() {
        let c = NdcrCosts::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let d = random_set(&mut rng);
            let mut best = counting_oracle(&d, f64::INFINITY, &c);
            for k in 0..=200 {
                best = best.min(counting_oracle(&d, k as f64 / 200.0, &c));
            }
            let (t, v) = minimum_ndcr(&d, &c).unwrap();
            assert!((v - best).abs() < 1e-12, "{v} vs {best}");
            assert!((ndcr(&d, t, &c).unwrap() - v).abs() < 1e-15);
            for p in ndcr_sweep(&d, &c).unwrap() {
                assert!(v <= p.ndcr);
                assert!((p.ndcr - counting_oracle(&d, p.threshold, &c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn event_file_round_trip() {
        let text = "# system output\nEmbrace 1.5 3 0.75\n\nPersonRuns 10 12.25 0.5  # late\n";
        let lines = parse_event_lines(text).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].confidence, Some(0.5));
        assert_eq!(parse_event_lines(&format_event_lines(&lines)).unwrap(), lines);
        assert!(parse_event_lines("Embrace 3 1 0.5").is_err());
        assert!(parse_event_lines("Embrace x 1").is_err());

        let refs = parse_event_lines("Embrace 1.4 3\nObjectPut 5 6\n").unwrap();
        let sets = group_detections(&lines, &refs, 1.0).unwrap();
        let names: Vec<&str> = sets.iter().map(|s| s.event.as_str()).collect();
        assert_eq!(names, ["Embrace", "ObjectPut", "PersonRuns"]);
        assert!(group_detections(&refs, &refs, 1.0).is_err());
    }

    #[test]
    fn report_layout() {
        let r = EvalReport::compute(
            &[list(&[true, false, true])],
            &[DetectionSet {
                event: "Embrace".into(),
                detections: vec![det(1.0, 2.0, 0.9)],
                references: vec![iv(1.0, 2.0)],
                duration_hours: 1.0,
            }],
            NdcrCosts::default(),
            0.5,
        )
        .unwrap();
        let text = r.to_text();
        assert!(text.contains("A.NDCR") && text.contains("0.8333"));
        let csv = r.to_csv();
        assert!(csv.lines().any(|l| l == "event,Embrace,actual_ndcr,0"));
        assert_eq!(csv.lines().count(), 5);
    }
}
