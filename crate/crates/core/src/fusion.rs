//! Per-branch gating between spatial and temporal evidence, temperature
//! scaled fusion with an explicit unmatched column, and the training loss.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::temporal::log_sum_exp;
use crate::types::{ScoreMatrix, DIAGONAL};

pub const GATE_INPUTS: usize = 4;
pub const GATE_HIDDEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateParams {
    pub alpha_new: f64,
    pub alpha_exist: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub tau_spatial: f64,
    pub tau_temporal: f64,
    pub unmatched_logit: f64,
}

impl Default for GateParams {
    fn default() -> Self {
        GateParams {
            alpha_new: 0.7,
            alpha_exist: 0.35,
            alpha_min: 0.05,
            alpha_max: 0.95,
            tau_spatial: 1.0,
            tau_temporal: 1.2,
            unmatched_logit: -6.0,
        }
    }
}

impl GateParams {
    pub fn validate(&self) -> Result<()> {
        let ordered = 0.0 <= self.alpha_min
            && self.alpha_min <= self.alpha_exist
            && self.alpha_min <= self.alpha_new
            && self.alpha_exist <= self.alpha_max
            && self.alpha_new <= self.alpha_max
            && self.alpha_max <= 1.0;
        if !ordered {
            return Err(Error::InvalidConfig(format!(
                "gate bounds must satisfy 0 <= alpha_min <= alpha_new, alpha_exist <= alpha_max <= 1: {self:?}"
            )));
        }
        if !(self.tau_spatial > 0.0 && self.tau_temporal > 0.0) {
            return Err(Error::InvalidConfig("temperatures must be positive".into()));
        }
        if !self.unmatched_logit.is_finite() {
            return Err(Error::InvalidConfig("unmatched_logit must be finite".into()));
        }
        Ok(())
    }
}

/// Evidence statistics for one branch column.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GatingFeatures {
    pub mu_spatial: f64,
    pub mu_temporal: f64,
    pub sigma_vert: f64,
    pub has_history: f64,
}

impl GatingFeatures {
    pub fn to_array(&self) -> [f64; GATE_INPUTS] {
        [self.mu_spatial, self.mu_temporal, self.sigma_vert, self.has_history]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateWeights {
    pub w_spatial: f64,
    pub w_temporal: f64,
}

impl GateWeights {
    pub fn spatial(w_spatial: f64) -> Self {
        GateWeights {
            w_spatial,
            w_temporal: 1.0 - w_spatial,
        }
    }
}

pub fn fixed_gate(has_history: bool, params: &GateParams) -> GateWeights {
    GateWeights::spatial(if has_history {
        params.alpha_exist
    } else {
        params.alpha_new
    })
}

/// Column statistics for branch `j`. `deviations[i][j]` holds the vertical
/// deviation of bud `i` when the branch has history.
pub fn gating_features(
    j: usize,
    m_spatial: &ScoreMatrix,
    m_tb: &ScoreMatrix,
    deviations: &[Vec<Option<f64>>],
    has_history: bool,
) -> Result<GatingFeatures> {
    let rows = m_spatial.rows();
    if rows == 0 || j >= m_spatial.cols() {
        return Err(Error::InvalidInput(format!("branch column {j} is empty")));
    }
    if m_tb.rows() != rows || m_tb.cols() != m_spatial.cols() {
        return Err(Error::Shape(format!(
            "spatial {}x{} vs temporal {}x{}",
            rows,
            m_spatial.cols(),
            m_tb.rows(),
            m_tb.cols()
        )));
    }
    let mean = |m: &ScoreMatrix| (0..rows).map(|i| m.get(i, j)).sum::<f64>() / rows as f64;
    let sigma_vert = if has_history {
        let devs: Vec<f64> = deviations
            .iter()
            .filter_map(|row| row.get(j).copied().flatten())
            .collect();
        population_std(&devs) / DIAGONAL
    } else {
        0.0
    };
    Ok(GatingFeatures {
        mu_spatial: mean(m_spatial),
        mu_temporal: mean(m_tb),
        sigma_vert,
        has_history: if has_history { 1.0 } else { 0.0 },
    })
}

fn population_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Two-layer gate network, `4 -> 8 (tanh) -> 1`, followed by a sigmoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateMlp {
    pub w1: Vec<[f64; GATE_INPUTS]>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl GateMlp {
    /// Starts out reproducing the fixed gate for existing branches: output
    /// weights are zero and the bias is `logit(alpha_exist)`.
    pub fn init(params: &GateParams, rng: &mut impl Rng) -> Self {
        GateMlp {
            w1: (0..GATE_HIDDEN)
                .map(|_| std::array::from_fn(|_| rng.gen_range(-0.1..0.1)))
                .collect(),
            b1: vec![0.0; GATE_HIDDEN],
            w2: vec![0.0; GATE_HIDDEN],
            b2: logit(params.alpha_exist),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.w1.len();
        if h == 0 || self.b1.len() != h || self.w2.len() != h {
            return Err(Error::Shape(format!(
                "gate layers disagree: w1 {h}, b1 {}, w2 {}",
                self.b1.len(),
                self.w2.len()
            )));
        }
        Ok(())
    }

    /// Pre-sigmoid output.
    pub fn forward(&self, x: &[f64; GATE_INPUTS]) -> f64 {
        let hidden = self
            .w1
            .iter()
            .zip(&self.b1)
            .map(|(row, b)| (row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b).tanh());
        hidden.zip(&self.w2).map(|(h, w)| h * w).sum::<f64>() + self.b2
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn learned_gate(h: &GatingFeatures, mlp: &GateMlp, params: &GateParams) -> GateWeights {
    let w = sigmoid(mlp.forward(&h.to_array()));
    GateWeights::spatial(w.clamp(params.alpha_min, params.alpha_max))
}

/// `w_s M_s / tau_s + w_t M_tb / tau_t` per column, with the unmatched
/// logit attached as an extra column.
pub fn fuse(
    m_spatial: &ScoreMatrix,
    m_tb: &ScoreMatrix,
    weights: &[GateWeights],
    params: &GateParams,
) -> Result<ScoreMatrix> {
    if m_spatial.rows() != m_tb.rows() || m_spatial.cols() != m_tb.cols() {
        return Err(Error::Shape(format!(
            "spatial {}x{} vs temporal {}x{}",
            m_spatial.rows(),
            m_spatial.cols(),
            m_tb.rows(),
            m_tb.cols()
        )));
    }
    if weights.len() != m_spatial.cols() {
        return Err(Error::Shape(format!(
            "{} gate weights for {} branches",
            weights.len(),
            m_spatial.cols()
        )));
    }
    Ok(ScoreMatrix::from_fn(m_spatial.rows(), m_spatial.cols(), |i, j| {
        let w = weights[j];
        w.w_spatial * m_spatial.get(i, j) / params.tau_spatial + w.w_temporal * m_tb.get(i, j) / params.tau_temporal
    })
    .with_unmatched(params.unmatched_logit))
}

/// Mean cross-entropy of each row's softmax over branches plus the
/// unmatched column. `None` labels select the unmatched column.
pub fn fusion_loss(m_fusion: &ScoreMatrix, labels: &[Option<usize>]) -> Result<f64> {
    if labels.len() != m_fusion.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} buds",
            labels.len(),
            m_fusion.rows()
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidInput("loss over zero buds".into()));
    }
    let unmatched = m_fusion
        .unmatched
        .ok_or_else(|| Error::InvalidInput("fusion matrix lacks an unmatched column".into()))?;
    let mut total = 0.0;
    for (i, label) in labels.iter().enumerate() {
        let row = m_fusion.row(i);
        let target = match label {
            Some(j) if *j < row.len() => row[*j],
            Some(j) => {
                return Err(Error::InvalidInput(format!(
                    "label {j} out of range for {} branches",
                    row.len()
                )))
            }
            None => unmatched,
        };
        let lse = log_sum_exp(row.iter().copied().chain(std::iter::once(unmatched)));
        total += lse - target;
    }
    Ok(total / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fixed_gate_reference_values() {
        let p = GateParams::default();
        assert_eq!(fixed_gate(false, &p).w_spatial, 0.7);
        assert_eq!(fixed_gate(true, &p).w_spatial, 0.35);
        for h in [false, true] {
            let w = fixed_gate(h, &p);
            assert_eq!(w.w_temporal, 1.0 - w.w_spatial);
        }
    }

    #[test]
    fn features_reference_values() {
        let ms = ScoreMatrix::from_rows(vec![vec![-0.5]]).unwrap();
        let mt = ScoreMatrix::from_rows(vec![vec![-6.0]]).unwrap();
        let f = gating_features(0, &ms, &mt, &[vec![None]], false).unwrap();
        assert_eq!(f.mu_spatial, -0.5);
        assert_eq!((f.sigma_vert, f.has_history), (0.0, 0.0));

        let ms = ScoreMatrix::from_rows(vec![vec![-1.0], vec![-2.0]]).unwrap();
        let mt = ScoreMatrix::from_rows(vec![vec![-0.2], vec![-0.4]]).unwrap();
        let f = gating_features(0, &ms, &mt, &[vec![Some(0.0)], vec![Some(0.1)]], true).unwrap();
        assert!((f.mu_temporal + 0.3).abs() < 1e-15);
        assert!((f.sigma_vert - 0.05 / 2f64.sqrt()).abs() < 1e-12);
        assert!((f.sigma_vert - 0.0354).abs() < 1e-4);
        assert_eq!(f.has_history, 1.0);
    }

    #[test]
    fn features_reject_empty_column() {
        let empty = ScoreMatrix::new(0, 1, 0.0);
        assert!(gating_features(0, &empty, &empty, &[], false).is_err());
    }

    #[test]
    fn initialized_gate_matches_fixed_gate() {
        let p = GateParams::default();
        let mlp = GateMlp::init(&p, &mut ChaCha8Rng::seed_from_u64(1));
        let h = GatingFeatures {
            mu_spatial: -3.0,
            mu_temporal: -1.0,
            sigma_vert: 0.2,
            has_history: 1.0,
        };
        assert!((learned_gate(&h, &mlp, &p).w_spatial - 0.35).abs() < 1e-6);
    }

    #[test]
    fn gate_clamps_and_centers() {
        let p = GateParams::default();
        let mut mlp = GateMlp::init(&p, &mut ChaCha8Rng::seed_from_u64(1));
        mlp.b2 = logit(0.99);
        assert_eq!(learned_gate(&GatingFeatures::default(), &mlp, &p).w_spatial, 0.95);
        mlp.b2 = 0.0;
        assert_eq!(learned_gate(&GatingFeatures::default(), &mlp, &p).w_spatial, 0.5);
    }

    #[test]
    fn fuse_reference_values() {
        let p = GateParams::default();
        let ms = ScoreMatrix::from_rows(vec![vec![-1.0, -0.3]]).unwrap();
        let mt = ScoreMatrix::from_rows(vec![vec![-2.0, -5.0]]).unwrap();
        let f = fuse(&ms, &mt, &[GateWeights::spatial(0.35), GateWeights::spatial(1.0)], &p).unwrap();
        assert!((f.get(0, 0) + 1.4333).abs() < 1e-4);
        assert!((f.get(0, 0) - (-0.35 + 0.65 * (-2.0 / 1.2))).abs() < 1e-15);
        assert_eq!(f.get(0, 1), -0.3);
        assert_eq!(f.unmatched, Some(-6.0));
    }

    #[test]
    fn fuse_rejects_shape_mismatch() {
        let p = GateParams::default();
        let a = ScoreMatrix::new(2, 2, 0.0);
        let b = ScoreMatrix::new(2, 3, 0.0);
        assert!(fuse(&a, &b, &[GateWeights::spatial(0.5); 2], &p).is_err());
        assert!(fuse(&a, &a, &[GateWeights::spatial(0.5)], &p).is_err());
    }

    #[test]
    fn loss_reference_values() {
        let uniform = ScoreMatrix::from_rows(vec![vec![-6.0; 3]])
            .unwrap()
            .with_unmatched(-6.0);
        assert!((fusion_loss(&uniform, &[Some(1)]).unwrap() - 4f64.ln()).abs() < 1e-12);
        let m = ScoreMatrix::from_rows(vec![vec![2.0, 0.0]])
            .unwrap()
            .with_unmatched(0.0);
        let l = fusion_loss(&m, &[Some(0)]).unwrap();
        assert!((l - (-(2f64.exp() / (2f64.exp() + 2.0)).ln())).abs() < 1e-12);
        assert!((l - 0.2395).abs() < 1e-4);
        let sharp = ScoreMatrix::from_rows(vec![vec![200.0, 0.0]])
            .unwrap()
            .with_unmatched(0.0);
        assert!(fusion_loss(&sharp, &[Some(0)]).unwrap() < 1e-80);
        assert!(fusion_loss(&m, &[Some(2)]).is_err());
        assert!(fusion_loss(&m, &[None]).unwrap() > l);
    }

    fn random_mlp(seed: u64, scale: f64) -> GateMlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GateMlp {
            w1: (0..GATE_HIDDEN)
                .map(|_| std::array::from_fn(|_| rng.gen_range(-scale..scale)))
                .collect(),
            b1: (0..GATE_HIDDEN).map(|_| rng.gen_range(-scale..scale)).collect(),
            w2: (0..GATE_HIDDEN).map(|_| rng.gen_range(-scale..scale)).collect(),
            b2: rng.gen_range(-scale..scale),
        }
    }

    proptest! {
        #[test]
        fn row_shift_keeps_fusion_argmax(
            s in proptest::collection::vec(-8.0f64..0.0, 3),
            t in proptest::collection::vec(-8.0f64..0.0, 3),
            c in -2.0f64..2.0, w in 0.05f64..0.95,
        ) {
            let p = GateParams::default();
            let argmax = |m: &ScoreMatrix| {
                let r = m.row(0);
                (0..r.len()).fold(0, |b, j| if r[j] > r[b] { j } else { b })
            };
            let weights = [GateWeights::spatial(w); 3];
            let base = fuse(&ScoreMatrix::from_rows(vec![s.clone()]).unwrap(), &ScoreMatrix::from_rows(vec![t.clone()]).unwrap(), &weights, &p).unwrap();
            let shift = |v: &[f64]| ScoreMatrix::from_rows(vec![v.iter().map(|x| x + c).collect()]).unwrap();
            let moved = fuse(&shift(&s), &shift(&t), &weights, &p).unwrap();
            prop_assert_eq!(argmax(&base), argmax(&moved));
        }

        #[test]
        fn initialized_gate_ignores_features(a in -20.0f64..5.0, b in -20.0f64..5.0, c in 0.0f64..1.0, seed in 0u64..1000) {
            let p = GateParams::default();
            let mlp = GateMlp::init(&p, &mut ChaCha8Rng::seed_from_u64(seed));
            let h = GatingFeatures { mu_spatial: a, mu_temporal: b, sigma_vert: c, has_history: 1.0 };
            prop_assert!((learned_gate(&h, &mlp, &p).w_spatial - fixed_gate(true, &p).w_spatial).abs() < 1e-6);
        }

        #[test]
        fn gate_output_stays_in_bounds(seed in 0u64..5000, scale in 0.1f64..50.0, a in -50.0f64..50.0, b in -50.0f64..50.0) {
            let p = GateParams::default();
            let h = GatingFeatures { mu_spatial: a, mu_temporal: b, sigma_vert: 0.1, has_history: 1.0 };
            let w = learned_gate(&h, &random_mlp(seed, scale), &p);
            prop_assert!(w.w_spatial >= p.alpha_min && w.w_spatial <= p.alpha_max);
        }

        #[test]
        fn loss_is_nonnegative(vals in proptest::collection::vec(-10.0f64..10.0, 4), u in -10.0f64..10.0, label in proptest::option::of(0usize..4)) {
            let m = ScoreMatrix::from_rows(vec![vals]).unwrap().with_unmatched(u);
            prop_assert!(fusion_loss(&m, &[label]).unwrap() >= 0.0);
        }
    }
}
