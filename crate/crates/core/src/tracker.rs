//! Frame-by-frame identity tracking.
//!
//! Each frame's buds are scored against the visible branch points, the
//! evidence is fused according to the tracking mode, and the Hungarian
//! solution decides which branch every bud belongs to. A matched bud takes
//! the order of its branch as identity, and that identity carries its
//! motion history into the next frame.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assignment::hungarian_assign;
use crate::dataset::Sequence;
use crate::error::{Error, Result};
use crate::fusion::{
    fixed_gate, fuse, gating_features, learned_gate, GateMlp, GateParams, GateWeights, GatingFeatures,
};
use crate::scorer::ScorerNet;
use crate::spatial::{spatial_score_matrix, SpatialParams};
use crate::temporal::{
    apply_gravitropism_penalty, estimate_global_uplift, estimate_motion, order_groups, temporal_score_matrix_elapsed,
    temporal_to_branch, vertical_deviations_scaled, Observation, TemporalParams,
};
use crate::types::{Bud, Frame, MotionState, ScoreMatrix, TrackSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrackMode {
    /// Geometry only; history is ignored.
    Spatial,
    /// Motion evidence wherever a branch has history, geometry elsewhere.
    Temporal,
    FusionFixed,
    FusionLearned,
}

impl TrackMode {
    pub const ALL: [TrackMode; 4] = [
        TrackMode::Spatial,
        TrackMode::Temporal,
        TrackMode::FusionFixed,
        TrackMode::FusionLearned,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrackMode::Spatial => "spatial",
            TrackMode::Temporal => "temporal",
            TrackMode::FusionFixed => "fusion-fixed",
            TrackMode::FusionLearned => "fusion-learned",
        }
    }
}

impl FromStr for TrackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrackMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMode(format!("tracking mode `{s}`")))
    }
}

impl std::fmt::Display for TrackMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerParams {
    pub spatial: SpatialParams,
    pub temporal: TemporalParams,
    pub gate: GateParams,
}

/// Trained component used by [`TrackMode::FusionLearned`].
#[derive(Debug, Clone, PartialEq)]
pub enum LearnedModel {
    /// Learned per-branch gate over analytic evidence.
    Gate { mlp: GateMlp, unmatched_logit: f64 },
    /// Learned spatial and temporal scores, fused with the fixed gate.
    Scorer(ScorerNet),
}

impl LearnedModel {
    pub fn unmatched_logit(&self) -> f64 {
        match self {
            LearnedModel::Gate { unmatched_logit, .. } => *unmatched_logit,
            LearnedModel::Scorer(net) => net.unmatched_logit(),
        }
    }
}

/// A historical bud as seen by the current frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PreviousBud {
    pub bud: Bud,
    /// Identity carried over: predicted at inference, annotated in training.
    pub order: Option<u32>,
    pub motion: MotionState,
    /// Days since this bud was observed.
    pub elapsed: f64,
}

/// Everything the scorers may read about earlier frames: the buds of the
/// preceding frame first, then identities remembered from older frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PreviousContext {
    pub buds: Vec<PreviousBud>,
    /// Interval to the preceding frame.
    pub dt: f64,
    /// How many leading entries of `buds` belong to the preceding frame.
    pub latest: usize,
}

/// Per-frame evidence before gating.
#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    pub m_spatial: ScoreMatrix,
    /// Raw bud-to-previous-bud scores, when a previous frame exists.
    pub m_temporal: Option<ScoreMatrix>,
    /// Branch-level temporal scores after the vertical penalty.
    pub m_tb: ScoreMatrix,
    pub groups: Vec<Vec<usize>>,
    pub deviations: Vec<Vec<Option<f64>>>,
}

impl Evidence {
    pub fn has_history(&self, j: usize) -> bool {
        !self.groups[j].is_empty()
    }

    pub fn gating_features(&self) -> Result<Vec<GatingFeatures>> {
        (0..self.m_spatial.cols())
            .map(|j| gating_features(j, &self.m_spatial, &self.m_tb, &self.deviations, self.has_history(j)))
            .collect()
    }
}

/// Turns spatial and raw temporal matrices into branch-level evidence.
pub fn assemble_evidence(
    frame: &Frame,
    m_spatial: ScoreMatrix,
    m_temporal: Option<ScoreMatrix>,
    previous: Option<&PreviousContext>,
    params: &TemporalParams,
) -> Evidence {
    let rows = frame.buds.len();
    let cols = frame.branch_points.len();
    match (m_temporal, previous) {
        (Some(mt), Some(prev)) if !prev.buds.is_empty() => {
            let prev_orders: Vec<Option<u32>> = prev.buds.iter().map(|p| p.order).collect();
            let branch_orders: Vec<u32> = frame.branch_points.iter().map(|b| b.order).collect();
            let groups = order_groups(&prev_orders, &branch_orders);
            let tb = temporal_to_branch(&mt, &groups, params.beta_absent);
            let prev_buds: Vec<Bud> = prev.buds.iter().map(|p| p.bud.clone()).collect();
            let dy_global = estimate_global_uplift(&frame.buds, &prev_buds[..prev.latest], params.topk_global);
            let frames: Vec<f64> = prev.buds.iter().map(|p| p.elapsed / prev.dt).collect();
            let deviations = vertical_deviations_scaled(&mt, &groups, &frame.buds, &prev_buds, dy_global, &frames);
            let m_tb = apply_gravitropism_penalty(&tb, &deviations, params);
            Evidence {
                m_spatial,
                m_temporal: Some(mt),
                m_tb,
                groups,
                deviations,
            }
        }
        _ => Evidence {
            m_spatial,
            m_temporal: None,
            m_tb: ScoreMatrix::new(rows, cols, params.beta_absent),
            groups: vec![Vec::new(); cols],
            deviations: vec![vec![None; cols]; rows],
        },
    }
}

/// Analytic evidence for one frame.
pub fn analytic_evidence(
    frame: &Frame,
    previous: Option<&PreviousContext>,
    params: &TrackerParams,
) -> Result<Evidence> {
    let m_spatial = spatial_score_matrix(frame, &params.spatial);
    let m_temporal = match previous {
        Some(prev) if !prev.buds.is_empty() && !frame.buds.is_empty() => {
            let buds: Vec<Bud> = prev.buds.iter().map(|p| p.bud.clone()).collect();
            let motion: Vec<MotionState> = prev.buds.iter().map(|p| p.motion).collect();
            let elapsed: Vec<f64> = prev.buds.iter().map(|p| p.elapsed).collect();
            Some(temporal_score_matrix_elapsed(
                &frame.buds,
                &buds,
                &motion,
                &elapsed,
                &params.temporal,
            )?)
        }
        _ => None,
    };
    Ok(assemble_evidence(
        frame,
        m_spatial,
        m_temporal,
        previous,
        &params.temporal,
    ))
}

/// Gate weights per branch column for a mode.
pub fn mode_weights(
    mode: TrackMode,
    evidence: &Evidence,
    params: &TrackerParams,
    gate: Option<&GateMlp>,
) -> Result<Vec<GateWeights>> {
    let cols = evidence.m_spatial.cols();
    Ok(match (mode, gate) {
        (TrackMode::Spatial, _) => vec![GateWeights::spatial(1.0); cols],
        (TrackMode::Temporal, _) => (0..cols)
            .map(|j| GateWeights::spatial(if evidence.has_history(j) { 0.0 } else { 1.0 }))
            .collect(),
        (TrackMode::FusionLearned, Some(mlp)) if evidence.m_spatial.rows() > 0 => evidence
            .gating_features()?
            .iter()
            .map(|h| learned_gate(h, mlp, &params.gate))
            .collect(),
        _ => (0..cols)
            .map(|j| fixed_gate(evidence.has_history(j), &params.gate))
            .collect(),
    })
}

/// Per-identity observations: motion history plus the latest sighting.
#[derive(Debug, Clone, Default)]
pub struct TrackMemory {
    tracks: BTreeMap<u32, Vec<Observation>>,
    last: BTreeMap<u32, (usize, Bud)>,
}

impl TrackMemory {
    pub fn clear(&mut self) {
        self.tracks.clear();
        self.last.clear();
    }

    /// Records `bud` as identity `identity` in the frame at `position`.
    pub fn record(&mut self, identity: u32, position: usize, t: f64, bud: &Bud) {
        self.tracks.entry(identity).or_default().push(Observation {
            t,
            x: bud.cx,
            y: bud.cy,
        });
        self.last.insert(identity, (position, bud.clone()));
    }

    pub fn motion(&self, identity: Option<u32>, fallback: &Bud, window: usize) -> Result<MotionState> {
        match identity.and_then(|id| self.tracks.get(&id)) {
            Some(obs) if !obs.is_empty() => estimate_motion(obs, window),
            _ => Ok(MotionState::at_rest(fallback.cx, fallback.cy)),
        }
    }

    fn last_time(&self, identity: u32) -> Option<f64> {
        self.tracks.get(&identity).and_then(|o| o.last()).map(|o| o.t)
    }

    /// Context for the frame following `prev` (at sequence position
    /// `prev_position`), whose buds carry `identities`. Identities absent from
    /// `prev` but seen within `memory_frames` frames are appended.
    pub fn context(
        &self,
        prev: &Frame,
        prev_position: usize,
        identities: &[Option<u32>],
        now: f64,
        params: &TemporalParams,
    ) -> Result<PreviousContext> {
        let dt = now - prev.timestamp_days;
        let mut buds = prev
            .buds
            .iter()
            .zip(identities)
            .map(|(bud, &order)| {
                Ok(PreviousBud {
                    bud: bud.clone(),
                    order,
                    motion: self.motion(order, bud, params.window)?,
                    elapsed: dt,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let latest = buds.len();
        for (&id, (position, bud)) in &self.last {
            let back = prev_position + 1 - position;
            if identities.contains(&Some(id)) || back > params.memory_frames || back <= 1 {
                continue;
            }
            let seen = self.last_time(id).unwrap_or(prev.timestamp_days);
            buds.push(PreviousBud {
                bud: bud.clone(),
                order: Some(id),
                motion: self.motion(Some(id), bud, params.window)?,
                elapsed: now - seen,
            });
        }
        Ok(PreviousContext { buds, dt, latest })
    }
}

/// Assignment of one frame: the identity given to each bud, in bud order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAssignment {
    pub frame: usize,
    pub buds: Vec<BudAssignment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudAssignment {
    pub bud: u32,
    /// Order of the assigned branch, or `None` when unmatched.
    pub branch_order: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackOutput {
    pub plant_id: String,
    pub view_angle_deg: f64,
    pub mode: String,
    pub assignments: Vec<FrameAssignment>,
    pub tracks: TrackSet,
}

/// Tracks one sequence.
pub fn track_sequence(
    seq: &Sequence,
    mode: TrackMode,
    params: &TrackerParams,
    learned: Option<&LearnedModel>,
) -> Result<TrackOutput> {
    if mode == TrackMode::FusionLearned && learned.is_none() {
        return Err(Error::InvalidInput(
            "fusion-learned mode needs a trained checkpoint".into(),
        ));
    }
    let mut gate_params = params.gate;
    if let (TrackMode::FusionLearned, Some(m)) = (mode, learned) {
        gate_params.unmatched_logit = m.unmatched_logit();
    }
    let mut memory = TrackMemory::default();
    let mut previous: Option<(usize, Vec<Option<u32>>)> = None;
    let mut assignments = Vec::with_capacity(seq.frames.len());
    let mut tracks = TrackSet::default();

    for (fi, frame) in seq.frames.iter().enumerate() {
        if frame.reset_history {
            memory.clear();
            previous = None;
        }
        let context = match (&previous, mode) {
            (_, TrackMode::Spatial) | (None, _) => None,
            (Some((pi, ids)), _) => {
                Some(memory.context(&seq.frames[*pi], *pi, ids, frame.timestamp_days, &params.temporal)?)
            }
        };
        let (evidence, gate) = match (mode, learned) {
            (TrackMode::FusionLearned, Some(LearnedModel::Scorer(net))) => {
                (net.evidence(frame, context.as_ref(), &params.temporal)?, None)
            }
            (TrackMode::FusionLearned, Some(LearnedModel::Gate { mlp, .. })) => {
                (analytic_evidence(frame, context.as_ref(), params)?, Some(mlp))
            }
            _ => (analytic_evidence(frame, context.as_ref(), params)?, None),
        };
        let weights = mode_weights(mode, &evidence, params, gate)?;
        let fused = fuse(&evidence.m_spatial, &evidence.m_tb, &weights, &gate_params)?;
        let solution = hungarian_assign(&fused);

        let ids: Vec<Option<u32>> = solution
            .matches
            .iter()
            .map(|m| m.map(|j| frame.branch_points[j].order))
            .collect();
        let mut order: Vec<usize> = (0..frame.buds.len()).collect();
        order.sort_by_key(|&i| frame.buds[i].id);
        let mut buds = Vec::with_capacity(order.len());
        for i in order {
            let bud = &frame.buds[i];
            buds.push(BudAssignment {
                bud: bud.id,
                branch_order: ids[i],
            });
            if let Some(id) = ids[i] {
                tracks.push(id, frame.index, bud.id);
                memory.record(id, fi, frame.timestamp_days, bud);
            }
        }
        assignments.push(FrameAssignment {
            frame: frame.index,
            buds,
        });
        previous = Some((fi, ids));
    }
    Ok(TrackOutput {
        plant_id: seq.plant_id.clone(),
        view_angle_deg: seq.view_angle_deg,
        mode: mode.name().to_string(),
        assignments,
        tracks,
    })
}

/// Ground-truth context for training: historical buds carry their
/// annotated order and motion from the annotated history.
pub fn ground_truth_contexts(seq: &Sequence, params: &TemporalParams) -> Result<Vec<Option<PreviousContext>>> {
    let mut memory = TrackMemory::default();
    let mut out = Vec::with_capacity(seq.frames.len());
    for (fi, frame) in seq.frames.iter().enumerate() {
        if frame.reset_history {
            memory.clear();
        }
        let ctx = if fi == 0 || frame.reset_history {
            None
        } else {
            let prev = &seq.frames[fi - 1];
            let ids: Vec<Option<u32>> = prev.buds.iter().map(|b| Some(b.gt_order)).collect();
            Some(memory.context(prev, fi - 1, &ids, frame.timestamp_days, params)?)
        };
        out.push(ctx);
        for bud in &frame.buds {
            memory.record(bud.gt_order, fi, frame.timestamp_days, bud);
        }
    }
    Ok(out)
}

/// Label of each bud: the column of its annotated branch, if visible.
pub fn ground_truth_labels(frame: &Frame) -> Vec<Option<usize>> {
    frame
        .buds
        .iter()
        .map(|b| frame.branch_points.iter().position(|bp| bp.order == b.gt_order))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::par::Execution;
    use crate::simulator::{generate_dataset, SimConfig};

    fn quiet() -> SimConfig {
        SimConfig {
            n_plants: 3,
            entanglement: 0.2,
            occlusion: 0.0,
            sway_amplitude: 0.0,
            position_noise: 0.0,
            ..Default::default()
        }
    }

    fn accuracy(seq: &Sequence, out: &TrackOutput) -> f64 {
        let mut ok = 0;
        let mut total = 0;
        for (frame, fa) in seq.frames.iter().zip(&out.assignments) {
            for a in &fa.buds {
                total += 1;
                ok += (frame.bud_by_id(a.bud).map(|b| b.gt_order) == a.branch_order) as usize;
            }
        }
        ok as f64 / total as f64
    }

    #[test]
    fn mode_names_round_trip() {
        for m in TrackMode::ALL {
            assert_eq!(m.name().parse::<TrackMode>().unwrap(), m);
        }
        assert!("kalman".parse::<TrackMode>().is_err());
    }

    #[test]
    fn learned_mode_requires_model() {
        let seq = &generate_dataset(&quiet(), Execution::Sequential).unwrap()[0].sequence;
        assert!(track_sequence(seq, TrackMode::FusionLearned, &TrackerParams::default(), None).is_err());
    }

    #[test]
    fn single_frame_temporal_falls_back_to_spatial() {
        let mut seq = generate_dataset(&quiet(), Execution::Sequential).unwrap()[0]
            .sequence
            .clone();
        seq.frames.truncate(1);
        let p = TrackerParams::default();
        let f = &seq.frames[0];
        let ev = analytic_evidence(f, None, &p).unwrap();
        let w = mode_weights(TrackMode::Temporal, &ev, &p, None).unwrap();
        assert!(w.iter().all(|w| w.w_spatial == 1.0));
        let a = track_sequence(&seq, TrackMode::Temporal, &p, None).unwrap();
        let b = track_sequence(&seq, TrackMode::Spatial, &p, None).unwrap();
        assert_eq!(a.assignments, b.assignments);
    }

    #[test]
    fn fusion_is_perfect_on_noise_free_data() {
        for s in generate_dataset(&quiet(), Execution::Sequential).unwrap() {
            let out = track_sequence(&s.sequence, TrackMode::FusionFixed, &TrackerParams::default(), None).unwrap();
            assert_eq!(accuracy(&s.sequence, &out), 1.0);
            assert_eq!(out.tracks, s.gt_tracks);
        }
    }

    #[test]
    fn tracking_is_repeatable() {
        let s = &generate_dataset(
            &SimConfig {
                n_plants: 1,
                ..Default::default()
            },
            Execution::Sequential,
        )
        .unwrap()[0];
        let p = TrackerParams::default();
        for mode in [TrackMode::Spatial, TrackMode::Temporal, TrackMode::FusionFixed] {
            assert_eq!(
                track_sequence(&s.sequence, mode, &p, None).unwrap(),
                track_sequence(&s.sequence, mode, &p, None).unwrap()
            );
        }
    }

    #[test]
    fn dropped_history_leaves_motion_at_rest() {
        let s = &generate_dataset(&quiet(), Execution::Sequential).unwrap()[0];
        let frames =
            crate::simulator::perturb_for_ablation(&s.sequence.frames, crate::simulator::Perturbation::DropHistory);
        let seq = Sequence {
            frames,
            ..s.sequence.clone()
        };
        let ctx = ground_truth_contexts(&seq, &TemporalParams::default()).unwrap();
        assert!(ctx.iter().all(Option::is_none));
    }

    #[test]
    fn ground_truth_context_has_motion() {
        let s = &generate_dataset(&quiet(), Execution::Sequential).unwrap()[0];
        let ctx = ground_truth_contexts(&s.sequence, &TemporalParams::default()).unwrap();
        assert!(ctx[0].is_none());
        let late = ctx.last().unwrap().as_ref().unwrap();
        assert!(late.buds.iter().any(|b| !b.motion.is_at_rest()));
        assert!(late.buds.iter().all(|b| b.order == Some(b.bud.gt_order)));
    }
}
