//! Detector evaluation: IoU matching, precision/recall, AP, threshold sweeps,
//! anchor clustering and detection-opportunity statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::geometry::DriBin;
use crate::types::{iou, Millis, Rect, TargetClass};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtObject {
    pub class: TargetClass,
    pub bbox: Rect<f64>,
    pub bin: Option<DriBin>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruthFrame {
    pub frame: u64,
    pub objects: Vec<GtObject>,
}

impl GroundTruthFrame {
    /// Distance bin of the frame, taken from its first annotated object.
    pub fn bin(&self) -> Option<DriBin> {
        self.objects.iter().find_map(|o| o.bin)
    }
}

/// A detector output scored against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub frame: u64,
    pub class: TargetClass,
    pub confidence: f64,
    pub bbox: Rect<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1; an empty denominator gives 0.
pub fn prf(c: Counts) -> Prf {
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Prf {
        precision,
        recall,
        f1,
    }
}

fn canonical_order(a: &ScoredBox, b: &ScoredBox) -> std::cmp::Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.class.cmp(&b.class))
        .then(a.bbox.x.total_cmp(&b.bbox.x))
        .then(a.bbox.y.total_cmp(&b.bbox.y))
        .then(a.bbox.w.total_cmp(&b.bbox.w))
        .then(a.bbox.h.total_cmp(&b.bbox.h))
}

/// Outcome of matching one frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameMatch {
    pub counts: BTreeMap<TargetClass, Counts>,
    /// Kept detections in canonical order with their TP flag.
    pub outcomes: Vec<(ScoredBox, bool)>,
}

/// Matches one frame's detections to its ground truth.
///
/// Each truth box takes the strongest unmatched same-class detection with
/// IoU at or above `iou_thr`; leftover detections are false positives.
pub fn match_detections(dets: &[ScoredBox], gt: &GroundTruthFrame, iou_thr: f64, conf_thr: f64) -> FrameMatch {
    let mut kept: Vec<ScoredBox> = dets.iter().filter(|d| d.confidence >= conf_thr).copied().collect();
    kept.sort_by(canonical_order);
    let mut matched = vec![false; kept.len()];
    let mut out = FrameMatch::default();
    for obj in &gt.objects {
        let hit = kept
            .iter()
            .enumerate()
            .position(|(i, d)| !matched[i] && d.class == obj.class && iou(&d.bbox, &obj.bbox) >= iou_thr);
        let c = out.counts.entry(obj.class).or_default();
        match hit {
            Some(i) => {
                matched[i] = true;
                c.tp += 1;
            }
            None => c.fn_ += 1,
        }
    }
    for (d, m) in kept.iter().zip(&matched) {
        if !m {
            out.counts.entry(d.class).or_default().fp += 1;
        }
    }
    out.outcomes = kept.into_iter().zip(matched).collect();
    out
}

fn frames_by_id(dets: &[ScoredBox]) -> BTreeMap<u64, Vec<ScoredBox>> {
    let mut m: BTreeMap<u64, Vec<ScoredBox>> = BTreeMap::new();
    for d in dets {
        m.entry(d.frame).or_default().push(*d);
    }
    m
}

/// Per-class and per-(bin, class) counts over a dataset. Detections on frames
/// without annotations are false positives with no bin.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetCounts {
    pub per_class: BTreeMap<TargetClass, Counts>,
    pub per_bin: BTreeMap<(DriBin, TargetClass), Counts>,
    /// (confidence, tp) for every kept detection, per class.
    pub scored: BTreeMap<TargetClass, Vec<(f64, bool)>>,
    pub truths: BTreeMap<TargetClass, u64>,
}

pub fn match_dataset(dets: &[ScoredBox], gts: &[GroundTruthFrame], iou_thr: f64, conf_thr: f64) -> DatasetCounts {
    let mut by_frame = frames_by_id(dets);
    let mut out = DatasetCounts::default();
    let empty = GroundTruthFrame::default();
    let mut frames: Vec<(&GroundTruthFrame, Vec<ScoredBox>)> = gts
        .iter()
        .map(|g| (g, by_frame.remove(&g.frame).unwrap_or_default()))
        .collect();
    frames.extend(by_frame.into_values().map(|d| (&empty, d)));
    for (g, d) in frames {
        let fm = match_detections(&d, g, iou_thr, conf_thr);
        for (class, c) in &fm.counts {
            *out.per_class.entry(*class).or_default() += *c;
            if let Some(bin) = g.bin() {
                *out.per_bin.entry((bin, *class)).or_default() += *c;
            }
        }
        for (d, tp) in fm.outcomes {
            out.scored.entry(d.class).or_default().push((d.confidence, tp));
        }
        for o in &g.objects {
            *out.truths.entry(o.class).or_default() += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

/// Cumulative precision/recall over detections in descending confidence and
/// the all-point AP: the sum of precision at each recall increment times the
/// increment.
pub fn pr_curve_and_ap(scored: &[(f64, bool)], num_truths: u64) -> (PrCurve, f64) {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0).then(a.cmp(&b)));
    let mut curve = PrCurve::default();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut ap = 0.0;
    for i in order {
        let (conf, hit) = scored[i];
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = if num_truths == 0 { 0.0 } else { tp as f64 / num_truths as f64 };
        if hit && num_truths > 0 {
            ap += precision / num_truths as f64;
        }
        curve.points.push(PrPoint {
            threshold: conf,
            recall,
            precision,
        });
    }
    (curve, ap)
}

/// Unweighted mean of per-class APs.
pub fn map_over_classes(aps: &[f64]) -> Result<f64> {
    if aps.is_empty() {
        return param("mAP needs at least one class");
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn default_thresholds() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 10.0).collect()
}

/// Pooled precision/recall/F1 at each confidence threshold.
pub fn threshold_sweep(dets: &[ScoredBox], gts: &[GroundTruthFrame], thresholds: &[f64], iou_thr: f64) -> Vec<SweepPoint> {
    thresholds
        .iter()
        .map(|&thr| {
            let dc = match_dataset(dets, gts, iou_thr, thr);
            let mut total = Counts::default();
            for c in dc.per_class.values() {
                total += *c;
            }
            let p = prf(total);
            SweepPoint {
                threshold: thr,
                counts: total,
                precision: p.precision,
                recall: p.recall,
                f1: p.f1,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: TargetClass,
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub bin: DriBin,
    pub class: TargetClass,
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub confidence_threshold: f64,
    pub classes: Vec<ClassReport>,
    pub bins: Vec<BinReport>,
    pub map: Option<f64>,
    pub sweep: Vec<SweepPoint>,
    #[serde(skip)]
    pub curves: BTreeMap<TargetClass, PrCurve>,
}

/// Full evaluation: counts at `conf_thr`, AP over all detections, and a sweep.
pub fn evaluate(dets: &[ScoredBox], gts: &[GroundTruthFrame], iou_thr: f64, conf_thr: f64) -> Result<EvalReport> {
    if !(0.0..=1.0).contains(&iou_thr) || !(0.0..=1.0).contains(&conf_thr) {
        return param("thresholds must lie in [0, 1]");
    }
    let at_thr = match_dataset(dets, gts, iou_thr, conf_thr);
    let all = match_dataset(dets, gts, iou_thr, 0.0);
    let mut classes = Vec::new();
    let mut curves = BTreeMap::new();
    for class in TargetClass::FUSED {
        let truths = all.truths.get(&class).copied().unwrap_or(0);
        let scored = all.scored.get(&class).map(Vec::as_slice).unwrap_or(&[]);
        if truths == 0 && scored.is_empty() {
            continue;
        }
        let (curve, ap) = pr_curve_and_ap(scored, truths);
        curves.insert(class, curve);
        let counts = at_thr.per_class.get(&class).copied().unwrap_or_default();
        let p = prf(counts);
        classes.push(ClassReport {
            class,
            counts,
            precision: p.precision,
            recall: p.recall,
            f1: p.f1,
            ap,
        });
    }
    let bins = at_thr
        .per_bin
        .iter()
        .map(|(&(bin, class), &counts)| {
            let p = prf(counts);
            BinReport {
                bin,
                class,
                counts,
                precision: p.precision,
                recall: p.recall,
                f1: p.f1,
            }
        })
        .collect();
    let aps: Vec<f64> = classes.iter().filter(|c| all.truths.contains_key(&c.class)).map(|c| c.ap).collect();
    Ok(EvalReport {
        iou_threshold: iou_thr,
        confidence_threshold: conf_thr,
        classes,
        bins,
        map: map_over_classes(&aps).ok(),
        sweep: threshold_sweep(dets, gts, &default_thresholds(), iou_thr),
        curves,
    })
}

/// IoU of two boxes sharing a corner.
pub fn aligned_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = a.0.min(b.0) * a.1.min(b.1);
    inter / (a.0 * a.1 + b.0 * b.1 - inter)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorResult {
    pub anchors: Vec<(f64, f64)>,
    pub mean_iou: f64,
}

fn mean_best_iou(boxes: &[(f64, f64)], anchors: &[(f64, f64)]) -> f64 {
    boxes
        .iter()
        .map(|b| anchors.iter().map(|a| aligned_iou(*b, *a)).fold(0.0, f64::max))
        .sum::<f64>()
        / boxes.len() as f64
}

const KMEANS_RESTARTS: usize = 10;
const KMEANS_ITERS: usize = 100;

/// Lloyd iterations under 1 − IoU, keeping the best solution seen.
fn lloyd(boxes: &[(f64, f64)], mut anchors: Vec<(f64, f64)>) -> AnchorResult {
    let mut best = AnchorResult {
        mean_iou: mean_best_iou(boxes, &anchors),
        anchors: anchors.clone(),
    };
    for _ in 0..KMEANS_ITERS {
        let mut sums = vec![(0.0, 0.0, 0usize); anchors.len()];
        for b in boxes {
            let (j, _) = anchors
                .iter()
                .enumerate()
                .map(|(j, a)| (j, aligned_iou(*b, *a)))
                .fold((0, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
            sums[j].0 += b.0;
            sums[j].1 += b.1;
            sums[j].2 += 1;
        }
        let next: Vec<(f64, f64)> = sums
            .iter()
            .zip(&anchors)
            .map(|(s, a)| if s.2 == 0 { *a } else { (s.0 / s.2 as f64, s.1 / s.2 as f64) })
            .collect();
        if next == anchors {
            break;
        }
        anchors = next;
        let m = mean_best_iou(boxes, &anchors);
        if m > best.mean_iou {
            best = AnchorResult {
                anchors: anchors.clone(),
                mean_iou: m,
            };
        }
    }
    best
}

fn farthest_point_seed(boxes: &[(f64, f64)], k: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let mut anchors = vec![boxes[rng.random_range(0..boxes.len())]];
    while anchors.len() < k {
        let far = boxes
            .iter()
            .map(|b| (b, 1.0 - anchors.iter().map(|a| aligned_iou(*b, *a)).fold(0.0, f64::max)))
            .fold((&boxes[0], f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
        anchors.push(*far.0);
    }
    anchors
}

/// Anchor boxes by k-means with distance 1 − IoU of corner-aligned boxes.
///
/// Solutions are built for every cluster count up to `k`, each warm-started
/// from the previous one, so mean IoU never decreases with `k`.
pub fn anchor_kmeans(boxes: &[(f64, f64)], k: usize, seed: u64) -> Result<AnchorResult> {
    if boxes.iter().any(|b| !(b.0 > 0.0 && b.1 > 0.0 && b.0.is_finite() && b.1.is_finite())) {
        return param("anchor boxes need positive finite sizes");
    }
    let mut distinct = boxes.to_vec();
    distinct.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    distinct.dedup();
    if k == 0 || k > distinct.len() {
        return param(format!("k = {k} outside 1..={}", distinct.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prev: Option<AnchorResult> = None;
    for kk in 1..=k {
        let mut best: Option<AnchorResult> = None;
        let mut consider = |r: AnchorResult| {
            if best.as_ref().is_none_or(|b| r.mean_iou > b.mean_iou) {
                best = Some(r);
            }
        };
        if let Some(p) = &prev {
            let mut warm = p.anchors.clone();
            let far = distinct
                .iter()
                .map(|b| (b, warm.iter().map(|a| aligned_iou(*b, *a)).fold(0.0, f64::max)))
                .fold((&distinct[0], f64::MAX), |acc, x| if x.1 < acc.1 { x } else { acc });
            warm.push(*far.0);
            consider(lloyd(boxes, warm));
        }
        for _ in 0..KMEANS_RESTARTS {
            consider(lloyd(boxes, farthest_point_seed(&distinct, kk, &mut rng)));
        }
        prev = best;
    }
    let mut out = prev.expect("k >= 1");
    out.anchors.sort_by(|a, b| (a.0 * a.1).total_cmp(&(b.0 * b.1)));
    Ok(out)
}

/// One tick of an opportunity: each source's output class, if any.
/// The fused output is keyed `System`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OpportunityTick {
    pub t: Millis,
    pub outputs: BTreeMap<String, TargetClass>,
}

/// An interval in which the target was continuously observable.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Opportunity {
    pub start: Millis,
    pub end: Millis,
    pub ticks: Vec<OpportunityTick>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OpportunityLog {
    pub sources: Vec<String>,
    pub intervals: Vec<Opportunity>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OpportunityStats {
    pub opportunities: usize,
    pub successes: BTreeMap<String, usize>,
    pub fractions: BTreeMap<String, f64>,
}

/// Per source, the fraction of opportunities with at least one tick classified as `class`.
pub fn opportunity_analysis(log: &OpportunityLog, class: TargetClass) -> Result<OpportunityStats> {
    let mut sorted: Vec<&Opportunity> = log.intervals.iter().collect();
    sorted.sort_by_key(|o| o.start);
    if sorted.iter().any(|o| o.end < o.start) || sorted.windows(2).any(|w| w[1].start < w[0].end) {
        return param("opportunity intervals must be well formed and non-overlapping");
    }
    let n = log.intervals.len();
    let mut successes = BTreeMap::new();
    for s in &log.sources {
        let hits = log
            .intervals
            .iter()
            .filter(|o| o.ticks.iter().any(|t| t.outputs.get(s) == Some(&class)))
            .count();
        successes.insert(s.clone(), hits);
    }
    let fractions = successes
        .iter()
        .map(|(s, &h)| (s.clone(), if n == 0 { 0.0 } else { h as f64 / n as f64 }))
        .collect();
    Ok(OpportunityStats {
        opportunities: n,
        successes,
        fractions,
    })
}

/// Number of separate detection events in a per-tick flag sequence; runs
/// separated by at most `merge_gap` quiet ticks count as one event.
pub fn count_events(flags: &[bool], merge_gap: usize) -> usize {
    let mut events = 0;
    let mut quiet = usize::MAX;
    for &f in flags {
        if f {
            if quiet > merge_gap {
                events += 1;
            }
            quiet = 0;
        } else {
            quiet = quiet.saturating_add(1);
        }
    }
    events
}

#[derive(Debug, Deserialize, Serialize)]
struct GtRecord {
    frame: u64,
    class: TargetClass,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    #[serde(default)]
    bin: Option<DriBin>,
}

#[derive(Debug, Deserialize, Serialize)]
struct DetRecord {
    frame: u64,
    class: TargetClass,
    confidence: f64,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Malformed(e.to_string())
}

/// Reads `frame,class,x,y,w,h,bin` rows; an empty class-less row is not allowed,
/// frames appear in first-seen order.
pub fn read_ground_truth_csv<R: Read>(r: R) -> Result<Vec<GroundTruthFrame>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut frames: Vec<GroundTruthFrame> = Vec::new();
    let mut index: BTreeMap<u64, usize> = BTreeMap::new();
    for rec in rdr.deserialize::<GtRecord>() {
        let rec = rec.map_err(csv_err)?;
        let bbox = Rect::new(rec.x, rec.y, rec.w, rec.h)?;
        let i = *index.entry(rec.frame).or_insert_with(|| {
            frames.push(GroundTruthFrame {
                frame: rec.frame,
                objects: Vec::new(),
            });
            frames.len() - 1
        });
        frames[i].objects.push(GtObject {
            class: rec.class,
            bbox,
            bin: rec.bin,
        });
    }
    Ok(frames)
}

/// Reads `frame,class,confidence,x,y,w,h` rows.
pub fn read_detections_csv<R: Read>(r: R) -> Result<Vec<ScoredBox>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    rdr.deserialize::<DetRecord>()
        .map(|rec| {
            let rec = rec.map_err(csv_err)?;
            if !(0.0..=1.0).contains(&rec.confidence) {
                return param(format!("confidence {} outside [0, 1]", rec.confidence));
            }
            Ok(ScoredBox {
                frame: rec.frame,
                class: rec.class,
                confidence: rec.confidence,
                bbox: Rect::new(rec.x, rec.y, rec.w, rec.h)?,
            })
        })
        .collect()
}

pub fn write_ground_truth_csv<W: Write>(w: W, frames: &[GroundTruthFrame]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for f in frames {
        for o in &f.objects {
            wr.serialize(GtRecord {
                frame: f.frame,
                class: o.class,
                x: o.bbox.x,
                y: o.bbox.y,
                w: o.bbox.w,
                h: o.bbox.h,
                bin: o.bin,
            })
            .map_err(csv_err)?;
        }
    }
    wr.flush()?;
    Ok(())
}

pub fn write_detections_csv<W: Write>(w: W, dets: &[ScoredBox]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for d in dets {
        wr.serialize(DetRecord {
            frame: d.frame,
            class: d.class,
            confidence: d.confidence,
            x: d.bbox.x,
            y: d.bbox.y,
            w: d.bbox.w,
            h: d.bbox.h,
        })
        .map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(mut w: W, sweep: &[SweepPoint]) -> Result<()> {
    writeln!(w, "threshold,tp,fp,fn,precision,recall,f1")?;
    for p in sweep {
        writeln!(
            w,
            "{:.2},{},{},{},{:.6},{:.6},{:.6}",
            p.threshold, p.counts.tp, p.counts.fp, p.counts.fn_, p.precision, p.recall, p.f1
        )?;
    }
    Ok(())
}

pub fn write_pr_csv<W: Write>(mut w: W, curves: &BTreeMap<TargetClass, PrCurve>) -> Result<()> {
    writeln!(w, "class,threshold,recall,precision")?;
    for (class, c) in curves {
        for p in &c.points {
            writeln!(w, "{class},{:.6},{:.6},{:.6}", p.threshold, p.recall, p.precision)?;
        }
    }
    Ok(())
}

/// Self-contained SVG plot of precision against recall.
pub fn pr_curves_svg(curves: &BTreeMap<TargetClass, PrCurve>) -> String {
    const SIZE: f64 = 400.0;
    const MARGIN: f64 = 50.0;
    let colors = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];
    let mut s = String::new();
    let total = SIZE + 2.0 * MARGIN;
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
    );
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let x = MARGIN + v * SIZE;
        let y = MARGIN + SIZE - v * SIZE;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" font-size="11" text-anchor="middle">{v:.1}</text>"#,
            MARGIN + SIZE + 15.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{v:.1}</text>"#,
            MARGIN - 5.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">Recall</text>"#,
        MARGIN + SIZE / 2.0,
        total - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" font-size="13" text-anchor="middle" transform="rotate(-90 15 {})">Precision</text>"#,
        MARGIN + SIZE / 2.0,
        MARGIN + SIZE / 2.0
    );
    for (i, (class, curve)) in curves.iter().enumerate() {
        let color = colors[i % colors.len()];
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|p| format!("{:.1},{:.1}", MARGIN + p.recall * SIZE, MARGIN + SIZE - p.precision * SIZE))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{class}</text>"#,
            MARGIN + 10.0,
            MARGIN + 18.0 + 16.0 * i as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(x: f64, y: f64, w: f64, h: f64) -> Rect<f64> {
        Rect::new(x, y, w, h).unwrap()
    }

    fn sb(class: TargetClass, conf: f64, bbox: Rect<f64>) -> ScoredBox {
        ScoredBox {
            frame: 0,
            class,
            confidence: conf,
            bbox,
        }
    }

    fn gt(objs: &[(TargetClass, Rect<f64>)]) -> GroundTruthFrame {
        GroundTruthFrame {
            frame: 0,
            objects: objs
                .iter()
                .map(|(c, b)| GtObject {
                    class: *c,
                    bbox: *b,
                    bin: None,
                })
                .collect(),
        }
    }

    #[test]
    fn matching_examples() {
        let b = r(10.0, 10.0, 20.0, 20.0);
        let g = gt(&[(TargetClass::Drone, b)]);
        let m = match_detections(&[sb(TargetClass::Drone, 0.9, b)], &g, 0.5, 0.5);
        assert_eq!(m.counts[&TargetClass::Drone], Counts { tp: 1, fp: 0, fn_: 0 });
        let m = match_detections(
            &[sb(TargetClass::Drone, 0.7, b), sb(TargetClass::Drone, 0.9, b)],
            &g,
            0.5,
            0.5,
        );
        assert_eq!(m.counts[&TargetClass::Drone], Counts { tp: 1, fp: 1, fn_: 0 });
        assert!(m.outcomes[0].1 && m.outcomes[0].0.confidence == 0.9);
        let m = match_detections(&[sb(TargetClass::Bird, 0.9, b)], &g, 0.5, 0.5);
        assert_eq!(m.counts[&TargetClass::Drone], Counts { tp: 0, fp: 0, fn_: 1 });
        assert_eq!(m.counts[&TargetClass::Bird], Counts { tp: 0, fp: 1, fn_: 0 });
        let m = match_detections(&[sb(TargetClass::Drone, 0.4, b)], &g, 0.5, 0.5);
        assert_eq!(m.counts[&TargetClass::Drone], Counts { tp: 0, fp: 0, fn_: 1 });
    }

    #[test]
    fn prf_examples() {
        let p = prf(Counts { tp: 9159, fp: 841, fn_: 1209 });
        assert!((p.precision - 0.9159).abs() < 1e-12);
        assert_eq!(prf(Counts { tp: 5, fp: 0, fn_: 0 }), Prf { precision: 1.0, recall: 1.0, f1: 1.0 });
        assert_eq!(prf(Counts { tp: 0, fp: 0, fn_: 4 }), Prf::default());
    }

    #[test]
    fn ap_examples() {
        let (curve, ap) = pr_curve_and_ap(&[(0.9, true), (0.8, false), (0.7, true)], 2);
        assert!((ap - (0.5 + 2.0 / 3.0 * 0.5)).abs() < 1e-12);
        assert!(curve.points.windows(2).all(|w| w[1].recall >= w[0].recall));
        assert_eq!(pr_curve_and_ap(&[(0.9, true), (0.5, true)], 2).1, 1.0);
        assert_eq!(pr_curve_and_ap(&[(0.9, false), (0.5, false)], 2).1, 0.0);
    }

    #[test]
    fn map_examples() {
        let m = map_over_classes(&[0.8704, 0.7150, 0.5086]).unwrap();
        assert!((m - 2.094 / 3.0).abs() < 1e-12);
        assert_eq!(map_over_classes(&[0.3]).unwrap(), 0.3);
        assert_eq!(map_over_classes(&[1.0, 0.0]).unwrap(), 0.5);
        assert!(map_over_classes(&[]).is_err());
    }

    /// Confidence tracks correctness: TPs in [0.3, 0.9], FPs mostly low.
    fn sweep_fixture() -> (Vec<ScoredBox>, Vec<GroundTruthFrame>) {
        let mut dets = Vec::new();
        let mut gts = Vec::new();
        for f in 0..100u64 {
            let b = r(50.0, 50.0, 20.0, 20.0);
            gts.push(GroundTruthFrame {
                frame: f,
                objects: vec![GtObject { class: TargetClass::Drone, bbox: b, bin: Some(DriBin::Medium) }],
            });
            let conf = 0.3 + 0.6 * (f as f64 / 99.0);
            dets.push(ScoredBox { frame: f, class: TargetClass::Drone, confidence: conf, bbox: b });
            let fp_conf = 0.05 + 0.4 * ((f * 37 % 100) as f64 / 99.0);
            dets.push(ScoredBox { frame: f, class: TargetClass::Drone, confidence: fp_conf, bbox: r(200.0, 200.0, 10.0, 10.0) });
        }
        (dets, gts)
    }

    #[test]
    fn sweep_shape() {
        let (dets, gts) = sweep_fixture();
        let sweep = threshold_sweep(&dets, &gts, &default_thresholds(), 0.5);
        assert!(sweep.windows(2).all(|w| w[1].recall <= w[0].recall));
        let f1: Vec<f64> = sweep.iter().map(|p| p.f1).collect();
        let (imax, _) = f1.iter().enumerate().fold((0, f64::MIN), |a, (i, v)| if *v > a.1 { (i, *v) } else { a });
        assert!(imax > 0 && imax < f1.len() - 1, "{f1:?}");
        assert!(f1[..=imax].windows(2).all(|w| w[1] >= w[0]));
        assert!(f1[imax..].windows(2).all(|w| w[1] <= w[0]));
        let zero = threshold_sweep(&dets, &gts, &[0.0], 0.5);
        assert!(zero[0].recall >= sweep[0].recall);
        assert_eq!(sweep.last().unwrap().counts.tp, 0);
    }

    #[test]
    fn evaluate_report_and_bins() {
        let (dets, gts) = sweep_fixture();
        let rep = evaluate(&dets, &gts, 0.5, 0.5).unwrap();
        assert_eq!(rep.classes.len(), 1);
        assert_eq!(rep.bins.len(), 1);
        assert_eq!(rep.bins[0].bin, DriBin::Medium);
        assert!(rep.map.unwrap() > 0.5);
        let svg = pr_curves_svg(&rep.curves);
        assert!(svg.starts_with("<svg") && svg.contains("polyline"));
    }

    #[test]
    fn kmeans_examples() {
        let same = vec![(10.0, 20.0); 5];
        let a = anchor_kmeans(&same, 1, 1).unwrap();
        assert_eq!(a.anchors, vec![(10.0, 20.0)]);
        assert!((a.mean_iou - 1.0).abs() < 1e-12);
        let two = vec![(10.0, 10.0), (10.0, 10.0), (40.0, 30.0), (40.0, 30.0)];
        let a = anchor_kmeans(&two, 2, 1).unwrap();
        assert_eq!(a.anchors, vec![(10.0, 10.0), (40.0, 30.0)]);
        assert!((a.mean_iou - 1.0).abs() < 1e-12);
        assert!(anchor_kmeans(&two, 3, 1).is_err());
        assert!(anchor_kmeans(&two, 0, 1).is_err());
    }

    #[test]
    fn opportunity_fixture() {
        let mut log = OpportunityLog {
            sources: vec!["System".into(), "Vcam".into()],
            intervals: Vec::new(),
        };
        for k in 0..73u64 {
            let mut tick = OpportunityTick { t: k * 1000, ..Default::default() };
            if k < 57 {
                tick.outputs.insert("System".into(), TargetClass::Drone);
            }
            if k < 49 {
                tick.outputs.insert("Vcam".into(), TargetClass::Drone);
            }
            log.intervals.push(Opportunity { start: k * 1000, end: k * 1000 + 500, ticks: vec![tick] });
        }
        let st = opportunity_analysis(&log, TargetClass::Drone).unwrap();
        assert_eq!((st.fractions["System"] * 100.0).round(), 78.0);
        assert_eq!((st.fractions["Vcam"] * 100.0).round(), 67.0);
        let empty = OpportunityLog { sources: vec!["System".into()], intervals: vec![] };
        assert_eq!(opportunity_analysis(&empty, TargetClass::Drone).unwrap().fractions["System"], 0.0);
        log.intervals[1].start = 100;
        assert!(opportunity_analysis(&log, TargetClass::Drone).is_err());
    }

    #[test]
    fn events_merge_short_gaps() {
        let f = |s: &str| s.chars().map(|c| c == '1').collect::<Vec<_>>();
        assert_eq!(count_events(&f("0000"), 10), 0);
        assert_eq!(count_events(&f("1101"), 10), 1);
        assert_eq!(count_events(&f("10001"), 2), 2);
    }

    #[test]
    fn csv_roundtrip() {
        let (dets, gts) = sweep_fixture();
        let mut buf = Vec::new();
        write_ground_truth_csv(&mut buf, &gts[..3]).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("frame,class,x,y,w,h,bin"));
        assert_eq!(read_ground_truth_csv(&buf[..]).unwrap(), gts[..3].to_vec());
        let mut buf = Vec::new();
        write_detections_csv(&mut buf, &dets[..4]).unwrap();
        assert_eq!(read_detections_csv(&buf[..]).unwrap(), dets[..4].to_vec());
        assert!(read_detections_csv("frame,class,confidence,x,y,w,h\n0,Drone,1.5,0,0,1,1\n".as_bytes()).is_err());
    }

    /// Independent AP: for each TP in rank order, precision of the prefix it ends.
    fn brute_ap(scored: &[(f64, bool)], n: u64) -> f64 {
        let mut idx: Vec<usize> = (0..scored.len()).collect();
        idx.sort_by(|&a, &b| scored[b].0.partial_cmp(&scored[a].0).unwrap().then(a.cmp(&b)));
        let ranked: Vec<bool> = idx.iter().map(|&i| scored[i].1).collect();
        let mut total = 0.0;
        for end in 1..=ranked.len() {
            if ranked[end - 1] {
                let tp = ranked[..end].iter().filter(|x| **x).count() as f64;
                total += (tp / end as f64) * (1.0 / n as f64);
            }
        }
        total
    }

    proptest! {
        #[test]
        fn ap_matches_brute_force(
            scored in proptest::collection::vec((0.0f64..1.0, proptest::bool::ANY), 0..20),
            extra in 0u64..5,
        ) {
            let tps = scored.iter().filter(|s| s.1).count() as u64;
            let n = tps + extra;
            prop_assume!(n > 0);
            let (_, ap) = pr_curve_and_ap(&scored, n);
            prop_assert!((ap - brute_ap(&scored, n)).abs() < 1e-12);
        }

        #[test]
        fn f1_identity(tp in 0u64..1000, fp in 0u64..1000, fn_ in 0u64..1000) {
            let p = prf(Counts { tp, fp, fn_ });
            let pp = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let rr = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
            let f = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
            prop_assert!((p.precision - pp).abs() < 1e-12 && (p.recall - rr).abs() < 1e-12);
            prop_assert!((p.f1 - f).abs() < 1e-12);
        }

        #[test]
        fn matching_order_invariant(
            boxes in proptest::collection::vec((0.0f64..100.0, 0.0f64..100.0, 5.0f64..30.0, 0.05f64..1.0, 0usize..2), 0..8),
            truths in proptest::collection::vec((0.0f64..100.0, 0.0f64..100.0, 5.0f64..30.0, 0usize..2), 0..4),
            seed: u64,
        ) {
            let cls = [TargetClass::Drone, TargetClass::Bird];
            let dets: Vec<ScoredBox> = boxes.iter().map(|(x, y, s, c, k)| sb(cls[*k], *c, r(*x, *y, *s, *s))).collect();
            let g = gt(&truths.iter().map(|(x, y, s, k)| (cls[*k], r(*x, *y, *s, *s))).collect::<Vec<_>>());
            let mut shuffled = dets.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rand::Rng::random_range(&mut rng, 0..=i));
            }
            prop_assert_eq!(match_detections(&dets, &g, 0.3, 0.2), match_detections(&shuffled, &g, 0.3, 0.2));
        }

        #[test]
        fn kmeans_monotone_in_k(boxes in proptest::collection::vec((1.0f64..100.0, 1.0f64..100.0), 6..40), seed: u64) {
            let mut last = 0.0;
            for k in 1..=5 {
                let a = anchor_kmeans(&boxes, k, seed).unwrap();
                prop_assert!(a.mean_iou >= last - 1e-12, "k={} {} < {}", k, a.mean_iou, last);
                prop_assert_eq!(a.anchors.len(), k);
                last = a.mean_iou;
            }
        }
    }
}
