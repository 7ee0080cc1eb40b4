//! Cross-frame evidence: motion estimation and prediction, bud-to-bud
//! association scores, order-based conversion to branch scores, and the
//! upward-growth (negative gravitropism) penalty.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Bud, MotionState, ScoreMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemporalParams {
    /// Softening temperature. Applied once, at fusion time.
    pub tau_temporal: f64,
    /// Log score for a branch with no previous buds.
    pub beta_absent: f64,
    pub lambda_vert: f64,
    pub eps_tol: f64,
    /// Displacement scale for the motion term, normalized units.
    pub sigma_m: f64,
    /// Number of topmost buds averaged for the global uplift.
    pub topk_global: usize,
    /// Finite-difference window in observations.
    pub window: usize,
    /// Frames an unseen identity stays available as history. 1 keeps only
    /// the immediately preceding frame.
    pub memory_frames: usize,
}

impl Default for TemporalParams {
    fn default() -> Self {
        TemporalParams {
            tau_temporal: 1.2,
            beta_absent: -6.0,
            lambda_vert: 6.0,
            eps_tol: 0.0,
            sigma_m: 0.01,
            topk_global: 3,
            window: 3,
            memory_frames: 2,
        }
    }
}

impl TemporalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_m > 0.0) || !(self.tau_temporal > 0.0) || self.lambda_vert < 0.0 || self.eps_tol < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "temporal params need sigma_m > 0, tau_temporal > 0, lambda_vert >= 0, eps_tol >= 0: {self:?}"
            )));
        }
        if self.topk_global == 0 || self.window == 0 || self.memory_frames == 0 {
            return Err(Error::InvalidConfig(
                "topk_global, window and memory_frames must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One timestamped observation of a track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// Finite-difference kinematics from the latest `window` observations.
///
/// Velocity comes from the latest pair. Acceleration is the difference of
/// the latest two velocities divided by the spacing of their midpoints.
pub fn estimate_motion(history: &[Observation], window: usize) -> Result<MotionState> {
    if history.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::InvalidInput(
            "motion history timestamps must strictly increase".into(),
        ));
    }
    let Some(last) = history.last() else {
        return Err(Error::InvalidInput("empty motion history".into()));
    };
    let recent = &history[history.len().saturating_sub(window.max(1))..];
    let mut m = MotionState::at_rest(last.x, last.y);
    let velocity = |a: &Observation, b: &Observation| {
        let dt = b.t - a.t;
        ((b.x - a.x) / dt, (b.y - a.y) / dt)
    };
    let n = recent.len();
    if n >= 2 {
        let (vx, vy) = velocity(&recent[n - 2], &recent[n - 1]);
        m.vx = vx;
        m.vy = vy;
        if n >= 3 {
            let (ux, uy) = velocity(&recent[n - 3], &recent[n - 2]);
            let span = 0.5 * (recent[n - 1].t - recent[n - 3].t);
            m.ax = (vx - ux) / span;
            m.ay = (vy - uy) / span;
        }
    }
    Ok(m)
}

/// Constant-acceleration extrapolation `p + v dt + a dt^2 / 2`.
pub fn predict_position(m: &MotionState, dt: f64) -> (f64, f64) {
    (
        m.px + m.vx * dt + 0.5 * m.ax * dt * dt,
        m.py + m.vy * dt + 0.5 * m.ay * dt * dt,
    )
}

/// Motion term plus a log box-area change penalty.
pub fn temporal_score(current: &Bud, previous: &Bud, motion: &MotionState, dt: f64, params: &TemporalParams) -> f64 {
    let (px, py) = predict_position(motion, dt);
    let d = (current.cx - px).hypot(current.cy - py) / (params.sigma_m * std::f64::consts::SQRT_2);
    -0.5 * d * d - (current.area() / previous.area()).ln().abs()
}

/// Raw `current x previous` association scores. Empty when either frame is.
pub fn temporal_score_matrix(
    current: &[Bud],
    previous: &[Bud],
    motion: &[MotionState],
    dt: f64,
    params: &TemporalParams,
) -> Result<ScoreMatrix> {
    if previous.len() != motion.len() {
        return Err(Error::Shape(format!(
            "{} previous buds but {} motion states",
            previous.len(),
            motion.len()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!(
            "frame interval must be positive, got {dt}"
        )));
    }
    Ok(ScoreMatrix::from_fn(current.len(), previous.len(), |i, k| {
        temporal_score(&current[i], &previous[k], &motion[k], dt, params)
    }))
}

/// Like [`temporal_score_matrix`], with its own elapsed time per previous
/// bud (buds remembered from older frames predict further ahead).
pub fn temporal_score_matrix_elapsed(
    current: &[Bud],
    previous: &[Bud],
    motion: &[MotionState],
    elapsed: &[f64],
    params: &TemporalParams,
) -> Result<ScoreMatrix> {
    if previous.len() != motion.len() || previous.len() != elapsed.len() {
        return Err(Error::Shape(format!(
            "{} previous buds, {} motion states, {} intervals",
            previous.len(),
            motion.len(),
            elapsed.len()
        )));
    }
    if let Some(dt) = elapsed.iter().find(|dt| !(**dt > 0.0)) {
        return Err(Error::InvalidInput(format!("elapsed time must be positive, got {dt}")));
    }
    Ok(ScoreMatrix::from_fn(current.len(), previous.len(), |i, k| {
        temporal_score(&current[i], &previous[k], &motion[k], elapsed[k], params)
    }))
}

/// `S_j`: indices of previous buds whose (propagated) order equals the
/// order of branch `j`.
pub fn order_groups(previous_orders: &[Option<u32>], branch_orders: &[u32]) -> Vec<Vec<usize>> {
    branch_orders
        .iter()
        .map(|&o| {
            previous_orders
                .iter()
                .enumerate()
                .filter(|(_, p)| **p == Some(o))
                .map(|(k, _)| k)
                .collect()
        })
        .collect()
}

/// Numerically stable `ln(sum exp(x))`.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.into_iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Order-based aggregation: mean-normalized LogSumExp over each branch's
/// previous buds, or `beta_absent` when it has none.
pub fn temporal_to_branch(m_temporal: &ScoreMatrix, groups: &[Vec<usize>], beta_absent: f64) -> ScoreMatrix {
    ScoreMatrix::from_fn(m_temporal.rows(), groups.len(), |i, j| {
        let group = &groups[j];
        if group.is_empty() {
            beta_absent
        } else {
            let row = m_temporal.row(i);
            log_sum_exp(group.iter().map(|&k| row[k])) - (group.len() as f64).ln()
        }
    })
}

/// Shift of the mean `y` of the `topk` topmost (smallest `y`) buds between
/// two frames. Zero if either frame has no buds.
pub fn estimate_global_uplift(current: &[Bud], previous: &[Bud], topk: usize) -> f64 {
    fn top_mean(buds: &[Bud], k: usize) -> Option<f64> {
        if buds.is_empty() {
            return None;
        }
        let mut ys: Vec<f64> = buds.iter().map(|b| b.cy).collect();
        ys.sort_by(f64::total_cmp);
        let k = k.clamp(1, ys.len());
        Some(ys[..k].iter().sum::<f64>() / k as f64)
    }
    match (top_mean(current, topk), top_mean(previous, topk)) {
        (Some(c), Some(p)) => c - p,
        _ => 0.0,
    }
}

/// For each `(i, j)` with a non-empty group, the previous bud `k*` that
/// dominates the aggregate (argmax of `m_temporal[i, k]` over the group,
/// lowest index on ties).
pub fn dominant_previous(m_temporal: &ScoreMatrix, groups: &[Vec<usize>]) -> Vec<Vec<Option<usize>>> {
    (0..m_temporal.rows())
        .map(|i| {
            groups
                .iter()
                .map(|g| {
                    g.iter().copied().fold(None, |best: Option<usize>, k| match best {
                        Some(b) if m_temporal.get(i, b) >= m_temporal.get(i, k) => Some(b),
                        _ => Some(k),
                    })
                })
                .collect()
        })
        .collect()
}

/// `dy_{i k*} - dy_global` for every pair with history.
pub fn vertical_deviations(
    m_temporal: &ScoreMatrix,
    groups: &[Vec<usize>],
    current: &[Bud],
    previous: &[Bud],
    dy_global: f64,
) -> Vec<Vec<Option<f64>>> {
    let ones = vec![1.0; previous.len()];
    vertical_deviations_scaled(m_temporal, groups, current, previous, dy_global, &ones)
}

/// [`vertical_deviations`] where previous bud `k` is expected to have risen
/// `frames[k] * dy_global`, for buds last seen several frames ago.
pub fn vertical_deviations_scaled(
    m_temporal: &ScoreMatrix,
    groups: &[Vec<usize>],
    current: &[Bud],
    previous: &[Bud],
    dy_global: f64,
    frames: &[f64],
) -> Vec<Vec<Option<f64>>> {
    dominant_previous(m_temporal, groups)
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            row.into_iter()
                .map(|k| k.map(|k| (current[i].cy - previous[k].cy) - frames[k] * dy_global))
                .collect()
        })
        .collect()
}

/// Subtracts `lambda_vert * max(0, |dy_{i k*} - dy_global| - eps_tol)` from
/// every entry whose branch has history.
pub fn apply_gravitropism_penalty(
    m_tb: &ScoreMatrix,
    deviations: &[Vec<Option<f64>>],
    params: &TemporalParams,
) -> ScoreMatrix {
    let mut out = m_tb.clone();
    if params.lambda_vert == 0.0 {
        return out;
    }
    for (i, row) in deviations.iter().enumerate() {
        for (j, dev) in row.iter().enumerate() {
            if let Some(d) = dev {
                let excess = (d.abs() - params.eps_tol).max(0.0);
                out.set(i, j, m_tb.get(i, j) - params.lambda_vert * excess);
            }
        }
    }
    out
}
