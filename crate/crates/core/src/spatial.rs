//! Current-frame geometric compatibility between buds and branch points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{BranchPoint, Bud, Frame, ScoreMatrix, DIAGONAL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpatialParams {
    /// Distance scale, in diagonal-normalized units.
    pub sigma_d: f64,
    /// Angular scale in radians.
    pub sigma_a: f64,
}

impl Default for SpatialParams {
    fn default() -> Self {
        SpatialParams {
            sigma_d: 0.15,
            sigma_a: std::f64::consts::FRAC_PI_4,
        }
    }
}

impl SpatialParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_d > 0.0 && self.sigma_a > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "spatial scales must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Pairwise descriptors of one bud relative to one branch point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeomFeatures {
    pub dpx: f64,
    pub dpy: f64,
    /// Euclidean distance divided by the unit-square diagonal.
    pub dist: f64,
    /// Angle in `[0, pi]` between the offset and the branch direction.
    pub align: f64,
    pub aspect: f64,
    pub area: f64,
}

pub fn geometric_features(bud: &Bud, bp: &BranchPoint) -> GeomFeatures {
    let dpx = bud.cx - bp.x;
    let dpy = bud.cy - bp.y;
    let (dx, dy) = bp.direction();
    let norm = dpx.hypot(dpy);
    // A bud sitting on the branch point has no direction; call it aligned.
    let align = if norm == 0.0 {
        0.0
    } else {
        let cross = dpx * dy - dpy * dx;
        let dot = dpx * dx + dpy * dy;
        cross.abs().atan2(dot)
    };
    GeomFeatures {
        dpx,
        dpy,
        dist: norm / DIAGONAL,
        align,
        aspect: bud.w / bud.h,
        area: bud.w * bud.h,
    }
}

/// Gaussian-style log score, 0 at perfect placement.
pub fn spatial_score(feats: &GeomFeatures, params: &SpatialParams) -> f64 {
    let d = feats.dist / params.sigma_d;
    let a = feats.align / params.sigma_a;
    -0.5 * d * d - 0.5 * a * a
}

/// Raw `buds x branch points` scores for one frame. Empty when either side
/// is empty.
pub fn spatial_score_matrix(frame: &Frame, params: &SpatialParams) -> ScoreMatrix {
    ScoreMatrix::from_fn(frame.buds.len(), frame.branch_points.len(), |i, j| {
        spatial_score(&geometric_features(&frame.buds[i], &frame.branch_points[j]), params)
    })
}
