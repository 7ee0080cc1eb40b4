//! Shared domain types.
//!
//! Coordinates are normalized to `[0, 1]` with `y` growing downward (image
//! convention), so upward growth shows up as decreasing `y`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagonal of the unit square; normalized distances are divided by it.
pub const DIAGONAL: f64 = std::f64::consts::SQRT_2;

/// Score assigned to forbidden bud/branch pairs.
pub const MASKED: f64 = -1.0e9;

/// Junction where a lateral branch attaches to the stem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub id: u32,
    /// Botanical rank counted from the bottom of the stem, starting at 1.
    pub order: u32,
    pub x: f64,
    pub y: f64,
    /// Initial branch orientation in `(-pi, pi]`.
    pub theta: f64,
    pub first_seen: usize,
    /// Unused slot of the six-value branch encoding; carried through untouched.
    #[serde(default)]
    pub reserved: f64,
}

impl BranchPoint {
    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    /// Unit direction `(cos theta, sin theta)`.
    pub fn direction(&self) -> (f64, f64) {
        (self.theta.cos(), self.theta.sin())
    }

    /// `[order, x, y, sin theta, cos theta, reserved]`.
    pub fn encode(&self) -> [f64; 6] {
        [
            self.order as f64,
            self.x,
            self.y,
            self.theta.sin(),
            self.theta.cos(),
            self.reserved,
        ]
    }
}

/// Floral bud detection at a branch tip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bud {
    pub id: u32,
    /// Annotated branch order. Never fed to a scorer.
    pub gt_order: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub frame: usize,
}

impl Bud {
    pub fn position(&self) -> (f64, f64) {
        (self.cx, self.cy)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// `[order, cx, cy, w, h]`.
    pub fn encode(&self) -> [f64; 5] {
        [self.gt_order as f64, self.cx, self.cy, self.w, self.h]
    }
}

/// Per-bud kinematics in normalized units per day.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MotionState {
    pub px: f64,
    pub py: f64,
    pub vx: f64,
    pub vy: f64,
    pub ax: f64,
    pub ay: f64,
}

impl MotionState {
    pub fn at_rest(px: f64, py: f64) -> Self {
        MotionState {
            px,
            py,
            ..Default::default()
        }
    }

    pub fn is_at_rest(&self) -> bool {
        self.vx == 0.0 && self.vy == 0.0 && self.ax == 0.0 && self.ay == 0.0
    }
}

/// Run-length encoded binary mask of one branch. Runs alternate
/// background/foreground in row-major order, starting with background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub branch_id: u32,
    pub width: usize,
    pub height: usize,
    pub counts: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub index: usize,
    pub timestamp_days: f64,
    pub branch_points: Vec<BranchPoint>,
    pub buds: Vec<Bud>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks: Option<Vec<RleMask>>,
    /// Marks a frame that must be treated as having no predecessor.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reset_history: bool,
}

impl Frame {
    pub fn branch_by_order(&self, order: u32) -> Option<&BranchPoint> {
        self.branch_points.iter().find(|b| b.order == order)
    }

    pub fn bud_by_id(&self, id: u32) -> Option<&Bud> {
        self.buds.iter().find(|b| b.id == id)
    }
}

/// Dense bud-by-column log-domain score matrix. The optional unmatched
/// column is a single logit shared by every row.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    pub unmatched: Option<f64>,
}

impl ScoreMatrix {
    pub fn new(rows: usize, cols: usize, fill: f64) -> Self {
        ScoreMatrix {
            rows,
            cols,
            values: vec![fill; rows * cols],
            unmatched: None,
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged score rows".into()));
        }
        Ok(ScoreMatrix {
            rows: r,
            cols: c,
            values: rows.into_iter().flatten().collect(),
            unmatched: None,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        ScoreMatrix {
            rows,
            cols,
            values,
            unmatched: None,
        }
    }

    pub fn with_unmatched(mut self, logit: f64) -> Self {
        self.unmatched = Some(logit);
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |i| self.get(i, j))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row with the unmatched logit appended, if present.
    pub fn extended_row(&self, i: usize) -> Vec<f64> {
        let mut row = self.row(i).to_vec();
        if let Some(u) = self.unmatched {
            row.push(u);
        }
        row
    }
}

/// Per-bud assignment result, indexed like the score matrix rows. `None`
/// means the bud took its unmatched option.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    pub matches: Vec<Option<usize>>,
}

impl Assignment {
    pub fn unmatched(rows: usize) -> Self {
        Assignment {
            matches: vec![None; rows],
        }
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn matched_count(&self) -> usize {
        self.matches.iter().filter(|m| m.is_some()).count()
    }

    /// Sum of the chosen entries, counting the unmatched logit for
    /// unmatched rows.
    pub fn total_score(&self, scores: &ScoreMatrix) -> f64 {
        let unmatched = scores.unmatched.unwrap_or(MASKED);
        self.matches
            .iter()
            .enumerate()
            .map(|(i, m)| match m {
                Some(j) => scores.get(i, *j),
                None => unmatched,
            })
            .sum()
    }

    pub fn is_one_to_one(&self) -> bool {
        let mut seen = std::collections::BTreeSet::new();
        self.matches.iter().flatten().all(|j| seen.insert(*j))
    }
}

/// Identity trajectories: identity id to `(frame index, bud id)` entries.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrackSet {
    pub tracks: BTreeMap<u32, Vec<(usize, u32)>>,
}

impl TrackSet {
    pub fn push(&mut self, identity: u32, frame: usize, bud: u32) {
        self.tracks.entry(identity).or_default().push((frame, bud));
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn detections(&self) -> usize {
        self.tracks.values().map(Vec::len).sum()
    }

    /// Checks that frames strictly increase within every track.
    pub fn validate(&self) -> Result<()> {
        for (id, entries) in &self.tracks {
            if entries.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(Error::InvalidInput(format!(
                    "track {id} has non-increasing frame indices"
                )));
            }
        }
        Ok(())
    }

    /// Identity of `bud` in `frame`, if any track contains it.
    pub fn identity_of(&self, frame: usize, bud: u32) -> Option<u32> {
        self.tracks
            .iter()
            .find(|(_, e)| e.binary_search(&(frame, bud)).is_ok())
            .map(|(id, _)| *id)
    }

    /// Entries restricted to frames accepted by `keep`.
    pub fn filter_frames(&self, keep: impl Fn(usize) -> bool) -> TrackSet {
        let tracks = self
            .tracks
            .iter()
            .map(|(id, e)| (*id, e.iter().copied().filter(|(f, _)| keep(*f)).collect::<Vec<_>>()))
            .filter(|(_, e)| !e.is_empty())
            .collect();
        TrackSet { tracks }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_score_counts_unmatched_logit() {
        let m = ScoreMatrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]])
            .unwrap()
            .with_unmatched(-6.0);
        let a = Assignment {
            matches: vec![Some(1), None],
        };
        assert_eq!(a.total_score(&m), -4.0);
        assert!(a.is_one_to_one());
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(ScoreMatrix::from_rows(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn track_validation_catches_repeated_frame() {
        let mut t = TrackSet::default();
        t.push(1, 0, 0);
        t.push(1, 0, 1);
        assert!(t.validate().is_err());
    }

    #[test]
    fn branch_encoding_uses_sin_cos() {
        let b = BranchPoint {
            id: 0,
            order: 2,
            x: 0.5,
            y: 0.6,
            theta: std::f64::consts::FRAC_PI_2,
            first_seen: 0,
            reserved: 0.0,
        };
        let e = b.encode();
        assert_eq!(e[0], 2.0);
        assert!((e[3] - 1.0).abs() < 1e-15);
        assert!(e[4].abs() < 1e-15);
    }
}
