//! Evaluation: branch matching accuracy and localization, CLEAR-MOT style
//! tracking scores, skeleton length agreement and tip consistency, reported
//! per plant, view and growth phase with count-weighted aggregates.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::assignment::hungarian_assign;
use crate::dataset::Sequence;
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::reconstruction::{endpoints, reconstruct_skeleton, skeleton_length, ReconstructionParams};
use crate::types::{ScoreMatrix, TrackSet, MASKED};

pub const METRICS: [&str; 11] = [
    "BMA", "BLE", "MOTA", "IDF1", "FP", "FN", "IDSW", "MT", "ML", "LIoU", "BTC",
];
pub const PHASES: [&str; 3] = ["early", "mid", "late"];

/// Metrics whose aggregate is a sum rather than a weighted mean.
fn is_count_metric(name: &str) -> bool {
    matches!(name, "FP" | "FN" | "IDSW")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    /// Detection match radius in normalized units.
    pub match_radius: f64,
    /// Fraction of its lifetime a ground-truth track must be matched to
    /// count as mostly tracked.
    pub mostly_tracked: f64,
    /// At or below this fraction a track counts as mostly lost.
    pub mostly_lost: f64,
    pub reconstruction: ReconstructionParams,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            match_radius: 0.03,
            mostly_tracked: 0.8,
            mostly_lost: 0.2,
            reconstruction: ReconstructionParams::default(),
        }
    }
}

impl EvalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.match_radius > 0.0) {
            return Err(Error::InvalidConfig("match_radius must be positive".into()));
        }
        if !(0.0 <= self.mostly_lost && self.mostly_lost < self.mostly_tracked && self.mostly_tracked <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "need 0 <= mostly_lost < mostly_tracked <= 1, got {} and {}",
                self.mostly_lost, self.mostly_tracked
            )));
        }
        self.reconstruction.validate()
    }
}

/// Growth phase of the frame at `position` in a sequence of `n` frames:
/// thirds of the sequence.
pub fn phase_of(position: usize, n: usize) -> usize {
    (3 * position / n.max(1)).min(2)
}

/// Fraction of buds whose predicted branch equals the annotated one.
pub fn bma(predicted: &[Option<u32>], truth: &[u32]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("no buds to score".into()));
    }
    let correct = predicted.iter().zip(truth).filter(|(p, t)| **p == Some(**t)).count();
    Ok(correct as f64 / truth.len() as f64)
}

/// Mean distance over matched pairs; `None` without pairs.
pub fn ble(pairs: &[((f64, f64), (f64, f64))]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let sum: f64 = pairs.iter().map(|(a, b)| (a.0 - b.0).hypot(a.1 - b.1)).sum();
    Some(sum / pairs.len() as f64)
}

/// `min / max` of two skeleton lengths. Undefined when both are empty,
/// zero when only one is.
pub fn liou(length_gt: f64, length_pred: f64) -> Option<f64> {
    let (lo, hi) = (length_gt.min(length_pred), length_gt.max(length_pred));
    if hi <= 0.0 {
        None
    } else {
        Some(lo / hi)
    }
}

/// Symmetric mean nearest-neighbour distance between endpoint sets, in
/// pixels; `None` if either set is empty.
pub fn btc(pred: &[(i64, i64)], gt: &[(i64, i64)]) -> Option<f64> {
    if pred.is_empty() || gt.is_empty() {
        return None;
    }
    let directed = |from: &[(i64, i64)], to: &[(i64, i64)]| {
        from.iter()
            .map(|a| {
                to.iter()
                    .map(|b| ((a.0 - b.0) as f64).hypot((a.1 - b.1) as f64))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / from.len() as f64
    };
    Some(0.5 * (directed(pred, gt) + directed(gt, pred)))
}

/// Count-weighted mean of the strata that have a value.
pub fn aggregate(strata: &[(Option<f64>, usize)]) -> Option<f64> {
    let (num, den) = strata.iter().fold((0.0, 0usize), |(n, d), (v, c)| match v {
        Some(v) if *c > 0 => (n + v * *c as f64, d + c),
        _ => (n, d),
    });
    (den > 0).then(|| num / den as f64)
}

/// Raw CLEAR-MOT and identity counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MotCounts {
    pub gt: usize,
    pub fp: usize,
    pub fn_: usize,
    pub idsw: usize,
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
    pub gt_tracks: usize,
    pub mostly_tracked: usize,
    pub mostly_lost: usize,
}

impl MotCounts {
    pub fn mota(&self) -> f64 {
        1.0 - (self.fn_ + self.fp + self.idsw) as f64 / self.gt as f64
    }

    pub fn idf1(&self) -> f64 {
        let den = 2 * self.idtp + self.idfp + self.idfn;
        if den == 0 {
            1.0
        } else {
            2.0 * self.idtp as f64 / den as f64
        }
    }

    pub fn mt(&self) -> f64 {
        self.mostly_tracked as f64 / self.gt_tracks.max(1) as f64
    }

    pub fn ml(&self) -> f64 {
        self.mostly_lost as f64 / self.gt_tracks.max(1) as f64
    }
}

/// Per-frame detections: `(identity, position)`.
type Detections = BTreeMap<usize, Vec<(u32, (f64, f64))>>;

fn detections(tracks: &TrackSet, position: &impl Fn(usize, u32) -> Option<(f64, f64)>) -> Result<Detections> {
    let mut out: Detections = BTreeMap::new();
    for (&id, entries) in &tracks.tracks {
        for &(frame, bud) in entries {
            let p = position(frame, bud).ok_or_else(|| {
                Error::InvalidInput(format!("track {id} references unknown bud {bud} in frame {frame}"))
            })?;
            out.entry(frame).or_default().push((id, p));
        }
    }
    Ok(out)
}

/// Matches predicted to ground-truth detections frame by frame (Hungarian
/// on distance within `radius`, maximizing the number of matches first),
/// then counts errors, identity switches and the identity-level overlap
/// from a global optimal track correspondence.
pub fn mot_metrics(
    pred: &TrackSet,
    gt: &TrackSet,
    position: impl Fn(usize, u32) -> Option<(f64, f64)>,
    radius: f64,
    params: &EvalParams,
) -> Result<MotCounts> {
    if !(radius > 0.0) {
        return Err(Error::InvalidInput("match radius must be positive".into()));
    }
    let gt_det = detections(gt, &position)?;
    let pred_det = detections(pred, &position)?;
    let total_gt: usize = gt_det.values().map(Vec::len).sum();
    if total_gt == 0 {
        return Err(Error::InvalidInput("ground truth has no detections".into()));
    }
    let total_pred: usize = pred_det.values().map(Vec::len).sum();
    let mut counts = MotCounts {
        gt: total_gt,
        ..MotCounts::default()
    };
    let mut last_match: HashMap<u32, u32> = HashMap::new();
    let mut matched_frames: HashMap<u32, usize> = HashMap::new();
    let mut overlap: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    let empty = Vec::new();
    let frames: BTreeSet<usize> = gt_det.keys().chain(pred_det.keys()).copied().collect();
    for f in frames {
        let g = gt_det.get(&f).unwrap_or(&empty);
        let p = pred_det.get(&f).unwrap_or(&empty);
        let bonus = g.len() as f64 + 1.0;
        let scores = ScoreMatrix::from_fn(g.len(), p.len(), |i, j| {
            let (a, b) = (g[i].1, p[j].1);
            let d = (a.0 - b.0).hypot(a.1 - b.1);
            if d <= radius {
                bonus - d / radius
            } else {
                MASKED
            }
        })
        .with_unmatched(0.0);
        let solution = hungarian_assign(&scores);
        let mut used = 0;
        for (i, m) in solution.matches.iter().enumerate() {
            let gid = g[i].0;
            match m {
                Some(j) => {
                    used += 1;
                    let pid = p[*j].0;
                    if let Some(prev) = last_match.insert(gid, pid) {
                        counts.idsw += usize::from(prev != pid);
                    }
                    *matched_frames.entry(gid).or_default() += 1;
                    *overlap.entry((gid, pid)).or_default() += 1;
                }
                None => counts.fn_ += 1,
            }
        }
        counts.fp += p.len() - used;
    }

    // Identity correspondence: one-to-one between ground-truth and predicted
    // identities maximizing total co-matched frames.
    let gids: Vec<u32> = gt.tracks.keys().copied().collect();
    let pids: Vec<u32> = pred.tracks.keys().copied().collect();
    let table = ScoreMatrix::from_fn(gids.len(), pids.len(), |i, j| {
        overlap.get(&(gids[i], pids[j])).map_or(0.0, |&c| c as f64)
    })
    .with_unmatched(0.0);
    let idtp: usize = hungarian_assign(&table)
        .matches
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|j| overlap.get(&(gids[i], pids[j])).copied().unwrap_or(0)))
        .sum();
    counts.idtp = idtp;
    counts.idfn = total_gt - idtp;
    counts.idfp = total_pred - idtp;

    for (gid, entries) in &gt.tracks {
        if entries.is_empty() {
            continue;
        }
        counts.gt_tracks += 1;
        let ratio = matched_frames.get(gid).copied().unwrap_or(0) as f64 / entries.len() as f64;
        if ratio >= params.mostly_tracked {
            counts.mostly_tracked += 1;
        } else if ratio <= params.mostly_lost {
            counts.mostly_lost += 1;
        }
    }
    Ok(counts)
}

/// One metric value of one stratum; `count` is its weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub plant: String,
    pub view: String,
    pub phase: String,
    pub metric: String,
    pub value: Option<f64>,
    pub count: usize,
    pub aggregate: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<ReportRow>,
}

impl MetricReport {
    /// Value of an aggregate row; `phase = "all"` for the overall figure.
    pub fn aggregate_value(&self, metric: &str, phase: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.aggregate && r.metric == metric && r.phase == phase)
            .and_then(|r| r.value)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("plant,view,phase,metric,value,count,aggregate\n");
        for r in &self.rows {
            let value = r.value.map(|v| format!("{v}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.plant, r.view, r.phase, r.metric, value, r.count, r.aggregate
            );
        }
        out
    }
}

/// Metric values of one (plant, view, phase) stratum in [`METRICS`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Stratum {
    pub plant: String,
    pub view: String,
    pub phase: usize,
    pub values: [(Option<f64>, usize); 11],
}

fn view_label(angle: f64) -> String {
    format!("{angle}")
}

/// Evaluates predicted identities of one sequence against its annotation.
pub fn evaluate_sequence(seq: &Sequence, pred: &TrackSet, params: &EvalParams) -> Result<Vec<Stratum>> {
    params.validate()?;
    pred.validate()?;
    let n = seq.frames.len();
    let position_of: HashMap<usize, usize> = seq.frames.iter().enumerate().map(|(i, f)| (f.index, i)).collect();
    let lookup = |frame: usize, bud: u32| {
        position_of
            .get(&frame)
            .and_then(|&i| seq.frames[i].bud_by_id(bud))
            .map(|b| (b.cx, b.cy))
    };
    for (id, entries) in &pred.tracks {
        if let Some(&(f, b)) = entries.iter().find(|(f, b)| lookup(*f, *b).is_none()) {
            return Err(Error::InvalidInput(format!(
                "predicted track {id} references bud {b} in frame {f}, which is not in the dataset"
            )));
        }
    }
    let mut predicted_of: HashMap<(usize, u32), u32> = HashMap::new();
    for (&id, entries) in &pred.tracks {
        for &(f, b) in entries {
            predicted_of.insert((f, b), id);
        }
    }
    let gt = seq.ground_truth_tracks();
    let mut out = Vec::with_capacity(3);
    for phase in 0..3 {
        let frames: Vec<usize> = (0..n).filter(|&i| phase_of(i, n) == phase).collect();
        if frames.is_empty() {
            continue;
        }
        let in_phase = |f: usize| position_of.get(&f).is_some_and(|&i| phase_of(i, n) == phase);

        let mut predicted = Vec::new();
        let mut truth = Vec::new();
        let mut pairs = Vec::new();
        for &i in &frames {
            let frame = &seq.frames[i];
            for bud in &frame.buds {
                predicted.push(predicted_of.get(&(frame.index, bud.id)).copied());
                truth.push(bud.gt_order);
                let carrier = frame
                    .buds
                    .iter()
                    .find(|b| predicted_of.get(&(frame.index, b.id)) == Some(&bud.gt_order));
                if let Some(c) = carrier {
                    pairs.push(((bud.cx, bud.cy), (c.cx, c.cy)));
                }
            }
        }
        let bma_value = if truth.is_empty() {
            None
        } else {
            Some(bma(&predicted, &truth)?)
        };

        let gt_phase = gt.filter_frames(in_phase);
        let pred_phase = pred.filter_frames(in_phase);
        let mot = if gt_phase.is_empty() {
            None
        } else {
            Some(mot_metrics(
                &pred_phase,
                &gt_phase,
                lookup,
                params.match_radius,
                params,
            )?)
        };

        let (lious, btcs) = skeleton_scores(seq, &frames, &gt_phase, &pred_phase, &lookup, &params.reconstruction)?;

        let gt_count = mot.map_or(0, |m| m.gt);
        let tracks = mot.map_or(0, |m| m.gt_tracks);
        let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
        let values = [
            (bma_value, truth.len()),
            (ble(&pairs), pairs.len()),
            (mot.map(|m| m.mota()), gt_count),
            (mot.map(|m| m.idf1()), gt_count),
            (mot.map(|m| m.fp as f64), gt_count),
            (mot.map(|m| m.fn_ as f64), gt_count),
            (mot.map(|m| m.idsw as f64), gt_count),
            (mot.map(|m| m.mt()), tracks),
            (mot.map(|m| m.ml()), tracks),
            (mean(&lious), lious.len()),
            (mean(&btcs), btcs.len()),
        ];
        out.push(Stratum {
            plant: seq.plant_id.clone(),
            view: view_label(seq.view_angle_deg),
            phase,
            values,
        });
    }
    Ok(out)
}

/// LIoU and BTC per ground-truth identity: each side's skeleton is the
/// curve from the branch point through that identity's bud positions.
fn skeleton_scores(
    seq: &Sequence,
    frames: &[usize],
    gt: &TrackSet,
    pred: &TrackSet,
    lookup: &impl Fn(usize, u32) -> Option<(f64, f64)>,
    recon: &ReconstructionParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lious = Vec::new();
    let mut btcs = Vec::new();
    for (&order, entries) in &gt.tracks {
        let Some(anchor) = frames
            .iter()
            .find_map(|&i| seq.frames[i].branch_by_order(order).map(|b| (b.x, b.y)))
        else {
            continue;
        };
        let points = |e: &[(usize, u32)]| {
            let mut pts = vec![anchor];
            pts.extend(e.iter().filter_map(|&(f, b)| lookup(f, b)));
            pts
        };
        let gt_skel = reconstruct_skeleton(&points(entries), recon)?;
        let pred_skel = match pred.tracks.get(&order) {
            Some(e) if !e.is_empty() => reconstruct_skeleton(&points(e), recon)?,
            _ => None,
        };
        let Some(gt_skel) = gt_skel else { continue };
        let lg = skeleton_length(&gt_skel);
        let lp = pred_skel.as_ref().map_or(0.0, skeleton_length);
        if let Some(v) = liou(lg, lp) {
            lious.push(v);
        }
        if let Some(ps) = &pred_skel {
            if let Some(v) = btc(&endpoints(ps), &endpoints(&gt_skel)) {
                btcs.push(v);
            }
        }
    }
    Ok((lious, btcs))
}

/// Evaluates every sequence and assembles the report: one row per stratum
/// and metric, then aggregate rows per phase and overall.
pub fn evaluate(
    sequences: &[Sequence],
    predictions: &[TrackSet],
    params: &EvalParams,
    exec: Execution,
) -> Result<MetricReport> {
    if sequences.len() != predictions.len() {
        return Err(Error::Shape(format!(
            "{} sequences but {} prediction sets",
            sequences.len(),
            predictions.len()
        )));
    }
    let pairs: Vec<(&Sequence, &TrackSet)> = sequences.iter().zip(predictions).collect();
    let strata: Vec<Stratum> = exec
        .map(&pairs, |(s, p)| evaluate_sequence(s, p, params))
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(report(&strata))
}

pub fn report(strata: &[Stratum]) -> MetricReport {
    let mut rows = Vec::new();
    for s in strata {
        for (m, (value, count)) in METRICS.iter().zip(&s.values) {
            rows.push(ReportRow {
                plant: s.plant.clone(),
                view: s.view.clone(),
                phase: PHASES[s.phase].to_string(),
                metric: m.to_string(),
                value: *value,
                count: *count,
                aggregate: false,
            });
        }
    }
    let mut push_aggregate = |phase: &str, members: &[&Stratum]| {
        for (k, m) in METRICS.iter().enumerate() {
            let cells: Vec<(Option<f64>, usize)> = members.iter().map(|s| s.values[k]).collect();
            let count = cells.iter().filter(|(v, _)| v.is_some()).map(|(_, c)| c).sum();
            let value = if is_count_metric(m) {
                let present: Vec<f64> = cells.iter().filter_map(|(v, _)| *v).collect();
                (!present.is_empty()).then(|| present.iter().sum())
            } else {
                aggregate(&cells)
            };
            rows.push(ReportRow {
                plant: "*".into(),
                view: "*".into(),
                phase: phase.to_string(),
                metric: m.to_string(),
                value,
                count,
                aggregate: true,
            });
        }
    };
    for (p, name) in PHASES.iter().enumerate() {
        let members: Vec<&Stratum> = strata.iter().filter(|s| s.phase == p).collect();
        push_aggregate(name, &members);
    }
    let all: Vec<&Stratum> = strata.iter().collect();
    push_aggregate("all", &all);
    MetricReport { rows }
}
