//! Dataset schema: one JSON document per plant/view sequence.
//!
//! Key names are listed in `docs/dataset-schema.md` at the repository root.
//! Strict loading rejects unknown keys; lenient loading ignores them.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reconstruction::Mask;
use crate::types::{Frame, RleMask, TrackSet};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    pub schema_version: u32,
    pub plant_id: String,
    pub view_angle_deg: f64,
    pub frames: Vec<Frame>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SchemaMode {
    #[default]
    Strict,
    Lenient,
}

impl Sequence {
    pub fn from_json_str(text: &str, mode: SchemaMode) -> Result<Self> {
        let mut unknown = Vec::new();
        let mut de = serde_json::Deserializer::from_str(text);
        let seq: Sequence = serde_ignored::deserialize(&mut de, |path| unknown.push(path.to_string()))?;
        de.end()?;
        if mode == SchemaMode::Strict && !unknown.is_empty() {
            return Err(Error::Schema(format!("unknown keys: {}", unknown.join(", "))));
        }
        if seq.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                seq.schema_version
            )));
        }
        Ok(seq)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("sequence serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path, mode: SchemaMode) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, mode)
    }

    /// Ground-truth identities: every bud belongs to the track keyed by its
    /// annotated order.
    pub fn ground_truth_tracks(&self) -> TrackSet {
        let mut tracks = TrackSet::default();
        for frame in &self.frames {
            let mut buds: Vec<_> = frame.buds.iter().collect();
            buds.sort_by_key(|b| b.id);
            for bud in buds {
                tracks.push(bud.gt_order, frame.index, bud.id);
            }
        }
        tracks
    }
}

/// One invariant violation found by [`validate_sequence`].
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    OutOfRange {
        frame: usize,
        entity: String,
        field: &'static str,
        value: f64,
    },
    DuplicateOrder {
        frame: usize,
        order: u32,
    },
    DuplicateId {
        frame: usize,
        entity: &'static str,
        id: u32,
    },
    Timestamp {
        frame: usize,
        previous: f64,
        current: f64,
    },
    FrameMismatch {
        frame: usize,
        bud: u32,
        recorded: usize,
    },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::OutOfRange {
                frame,
                entity,
                field,
                value,
            } => write!(f, "frame {frame}: {entity} field `{field}` out of range ({value})"),
            Diagnostic::DuplicateOrder { frame, order } => {
                write!(f, "frame {frame}: branch order {order} appears more than once")
            }
            Diagnostic::DuplicateId { frame, entity, id } => {
                write!(f, "frame {frame}: duplicate {entity} id {id}")
            }
            Diagnostic::Timestamp {
                frame,
                previous,
                current,
            } => write!(
                f,
                "frame {frame}: timestamp {current} does not increase past {previous}"
            ),
            Diagnostic::FrameMismatch { frame, bud, recorded } => {
                write!(f, "frame {frame}: bud {bud} records frame {recorded}")
            }
        }
    }
}

fn in_unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

/// Collects every invariant violation in `frames`; an empty list means valid.
pub fn validate_sequence(frames: &[Frame]) -> Vec<Diagnostic> {
    use std::collections::BTreeSet;
    use std::f64::consts::PI;

    let mut out = Vec::new();
    let mut previous_ts: Option<f64> = None;
    for frame in frames {
        let fi = frame.index;
        if let Some(prev) = previous_ts {
            if !(frame.timestamp_days > prev) {
                out.push(Diagnostic::Timestamp {
                    frame: fi,
                    previous: prev,
                    current: frame.timestamp_days,
                });
            }
        }
        if !(frame.timestamp_days >= 0.0) {
            out.push(Diagnostic::OutOfRange {
                frame: fi,
                entity: "frame".into(),
                field: "timestamp_days",
                value: frame.timestamp_days,
            });
        }
        previous_ts = Some(frame.timestamp_days);

        let mut orders = BTreeSet::new();
        let mut ids = BTreeSet::new();
        for bp in &frame.branch_points {
            let entity = format!("branch point {}", bp.id);
            for (field, value) in [("x", bp.x), ("y", bp.y)] {
                if !in_unit(value) {
                    out.push(Diagnostic::OutOfRange {
                        frame: fi,
                        entity: entity.clone(),
                        field,
                        value,
                    });
                }
            }
            if !(bp.theta > -PI && bp.theta <= PI) {
                out.push(Diagnostic::OutOfRange {
                    frame: fi,
                    entity: entity.clone(),
                    field: "theta",
                    value: bp.theta,
                });
            }
            if bp.order == 0 {
                out.push(Diagnostic::OutOfRange {
                    frame: fi,
                    entity,
                    field: "order",
                    value: 0.0,
                });
            }
            if !orders.insert(bp.order) {
                out.push(Diagnostic::DuplicateOrder {
                    frame: fi,
                    order: bp.order,
                });
            }
            if !ids.insert(bp.id) {
                out.push(Diagnostic::DuplicateId {
                    frame: fi,
                    entity: "branch point",
                    id: bp.id,
                });
            }
        }

        let mut bud_ids = BTreeSet::new();
        for bud in &frame.buds {
            let entity = format!("bud {}", bud.id);
            for (field, value) in [("cx", bud.cx), ("cy", bud.cy)] {
                if !in_unit(value) {
                    out.push(Diagnostic::OutOfRange {
                        frame: fi,
                        entity: entity.clone(),
                        field,
                        value,
                    });
                }
            }
            for (field, value) in [("w", bud.w), ("h", bud.h)] {
                if !(value > 0.0 && value <= 1.0) {
                    out.push(Diagnostic::OutOfRange {
                        frame: fi,
                        entity: entity.clone(),
                        field,
                        value,
                    });
                }
            }
            if bud.frame != fi {
                out.push(Diagnostic::FrameMismatch {
                    frame: fi,
                    bud: bud.id,
                    recorded: bud.frame,
                });
            }
            if !bud_ids.insert(bud.id) {
                out.push(Diagnostic::DuplicateId {
                    frame: fi,
                    entity: "bud",
                    id: bud.id,
                });
            }
        }
    }
    out
}

/// Frame counts for a chronological split. Every split takes
/// `floor(ratio * n)`, the remainder goes to the earliest split, and any
/// empty split borrows one frame from the largest one.
pub fn split_counts(n: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    if ratios.iter().any(|r| !(*r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "split ratios must be positive and sum to 1, got {ratios:?}"
        )));
    }
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "chronological split needs at least 3 frames, got {n}"
        )));
    }
    // The small epsilon absorbs products like 0.7 * 10 = 6.999...
    let mut counts = ratios.map(|r| (r * n as f64 + 1e-9).floor() as usize);
    counts[0] = n - counts[1] - counts[2];
    for k in 0..3 {
        if counts[k] == 0 {
            let largest = (0..3).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).unwrap();
            counts[largest] -= 1;
            counts[k] += 1;
        }
    }
    Ok(counts)
}

/// Contiguous train/validation/test partition of one plant's frames.
pub fn chronological_split(frames: &[Frame], ratios: [f64; 3]) -> Result<(Vec<Frame>, Vec<Frame>, Vec<Frame>)> {
    let [a, b, _] = split_counts(frames.len(), ratios)?;
    Ok((
        frames[..a].to_vec(),
        frames[a..a + b].to_vec(),
        frames[a + b..].to_vec(),
    ))
}

pub fn encode_rle(branch_id: u32, mask: &Mask) -> RleMask {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for &px in mask.pixels() {
        if px == current {
            run += 1;
        } else {
            counts.push(run);
            current = px;
            run = 1;
        }
    }
    counts.push(run);
    RleMask {
        branch_id,
        width: mask.width(),
        height: mask.height(),
        counts,
    }
}

pub fn decode_rle(rle: &RleMask) -> Result<Mask> {
    let total: u64 = rle.counts.iter().map(|&c| c as u64).sum();
    if total != (rle.width * rle.height) as u64 {
        return Err(Error::Schema(format!(
            "mask for branch {} has {total} run pixels, expected {}",
            rle.branch_id,
            rle.width * rle.height
        )));
    }
    let mut data = Vec::with_capacity(rle.width * rle.height);
    for (k, &c) in rle.counts.iter().enumerate() {
        data.extend(std::iter::repeat_n(k % 2 == 1, c as usize));
    }
    Ok(Mask::from_pixels(rle.width, rle.height, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{BranchPoint, Bud};

    fn frame(index: usize, t: f64) -> Frame {
        Frame {
            index,
            timestamp_days: t,
            branch_points: vec![
                BranchPoint {
                    id: 0,
                    order: 1,
                    x: 0.5,
                    y: 0.8,
                    theta: -2.0,
                    first_seen: 0,
                    reserved: 0.0,
                },
                BranchPoint {
                    id: 1,
                    order: 2,
                    x: 0.5,
                    y: 0.6,
                    theta: -1.0,
                    first_seen: 0,
                    reserved: 0.0,
                },
            ],
            buds: vec![Bud {
                id: 0,
                gt_order: 1,
                cx: 0.3,
                cy: 0.5,
                w: 0.02,
                h: 0.03,
                frame: index,
            }],
            masks: None,
            reset_history: false,
        }
    }

    #[test]
    fn well_formed_sequence_has_no_diagnostics() {
        let frames = vec![frame(0, 0.0), frame(1, 2.0), frame(2, 4.0)];
        assert!(validate_sequence(&frames).is_empty());
    }

    #[test]
    fn out_of_range_bud_is_reported() {
        let mut frames = vec![frame(0, 0.0), frame(1, 2.0), frame(2, 4.0)];
        frames[1].buds[0].cx = 1.5;
        let d = validate_sequence(&frames);
        assert_eq!(d.len(), 1);
        match &d[0] {
            Diagnostic::OutOfRange {
                frame, entity, field, ..
            } => {
                assert_eq!(*frame, 1);
                assert_eq!(entity, "bud 0");
                assert_eq!(*field, "cx");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_order_is_reported() {
        let mut frames = vec![frame(0, 0.0)];
        frames[0].branch_points[1].order = 1;
        let d = validate_sequence(&frames);
        assert_eq!(d, vec![Diagnostic::DuplicateOrder { frame: 0, order: 1 }]);
    }

    #[test]
    fn non_increasing_timestamp_is_reported() {
        let frames = vec![frame(0, 1.0), frame(1, 1.0)];
        assert!(matches!(
            validate_sequence(&frames)[0],
            Diagnostic::Timestamp { frame: 1, .. }
        ));
    }

    #[test]
    fn split_counts_follow_documented_rounding() {
        let r = [0.70, 0.15, 0.15];
        assert_eq!(split_counts(20, r).unwrap(), [14, 3, 3]);
        assert_eq!(split_counts(10, r).unwrap(), [8, 1, 1]);
        assert_eq!(split_counts(3, r).unwrap(), [1, 1, 1]);
        assert!(split_counts(2, r).is_err());
        assert!(split_counts(10, [0.5, 0.5, 0.0]).is_err());
    }

    #[test]
    fn split_is_contiguous_and_covering() {
        let frames: Vec<_> = (0..11).map(|i| frame(i, i as f64)).collect();
        let (a, b, c) = chronological_split(&frames, [0.7, 0.15, 0.15]).unwrap();
        let joined: Vec<usize> = a.iter().chain(&b).chain(&c).map(|f| f.index).collect();
        assert_eq!(joined, (0..11).collect::<Vec<_>>());
    }

    #[test]
    fn strict_mode_rejects_unknown_keys() {
        let seq = Sequence {
            schema_version: SCHEMA_VERSION,
            plant_id: "p".into(),
            view_angle_deg: 0.0,
            frames: vec![frame(0, 0.0)],
        };
        let mut value: serde_json::Value = serde_json::from_str(&seq.to_json_string()).unwrap();
        value["frames"][0]["buds"][0]["color"] = serde_json::json!("green");
        let text = value.to_string();
        let err = Sequence::from_json_str(&text, SchemaMode::Strict).unwrap_err();
        assert!(err.to_string().contains("color"), "{err}");
        let lenient = Sequence::from_json_str(&text, SchemaMode::Lenient).unwrap();
        assert_eq!(lenient, seq);
    }

    #[test]
    fn rle_round_trip() {
        let mut m = Mask::new(5, 4);
        m.set(1, 1, true);
        m.set(2, 1, true);
        m.set(4, 3, true);
        let rle = encode_rle(7, &m);
        assert_eq!(rle.counts.iter().sum::<u32>(), 20);
        assert_eq!(decode_rle(&rle).unwrap(), m);
    }

    #[test]
    fn rle_with_wrong_total_is_rejected() {
        let rle = RleMask {
            branch_id: 0,
            width: 2,
            height: 2,
            counts: vec![1, 1],
        };
        assert!(decode_rle(&rle).is_err());
    }
}
