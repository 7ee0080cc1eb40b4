//! Learned matching scores.
//!
//! Current buds act as queries. In the spatial head they attend to embedded
//! branch points; in the temporal head they attend to embedded previous
//! buds. Each head is one cross-attention block (layer norm, multi-head
//! attention, residual, layer norm, feed-forward, residual) followed by
//! scaled dot-product logits against the normalized keys. The resulting
//! scores are raw: temperature is applied once, at fusion time.
//!
//! Inputs carry geometry and motion only. Annotated orders never enter the
//! network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::temporal::TemporalParams;
use crate::tracker::{assemble_evidence, Evidence, PreviousBud, PreviousContext};
use crate::types::{BranchPoint, Bud, Frame, MotionState, ScoreMatrix};

pub const LN_EPS: f64 = 1e-5;
/// Width of the per-bud input vector.
pub const BUD_INPUTS: usize = 10;
/// `[x, y, cos theta, sin theta]` per branch point.
pub const BRANCH_INPUTS: usize = 4;

/// Velocities and accelerations are tiny in normalized units; these factors
/// bring them to order one before they reach the network.
const VELOCITY_SCALE: f64 = 10.0;
const ACCEL_SCALE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub embed_dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// Frames per gradient step; 0 means the whole training set.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            embed_dim: 32,
            heads: 4,
            ffn_dim: 64,
            learning_rate: 0.05,
            momentum: 0.9,
            epochs: 50,
            batch_size: 8,
            seed: 11,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.heads == 0 || self.ffn_dim == 0 {
            return Err(Error::InvalidConfig("network dimensions must be positive".into()));
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return Err(Error::InvalidConfig(format!(
                "embed_dim {} is not divisible by {} heads",
                self.embed_dim, self.heads
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(
                "learning_rate must be finite and non-negative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub names: Vec<String>,
    pub tensors: Vec<Matrix>,
}

impl NetParams {
    pub fn get(&self, name: &str) -> &Matrix {
        &self.tensors[self.index(name)]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Matrix {
        let i = self.index(name);
        &mut self.tensors[i]
    }

    fn index(&self, name: &str) -> usize {
        self.names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("no parameter named {name}"))
    }

    pub fn validate(&self, config: &NetConfig) -> Result<()> {
        let expected = NetParams::shapes(config);
        if expected.len() != self.tensors.len() || self.names.len() != self.tensors.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), (have, t)) in expected.iter().zip(self.names.iter().zip(&self.tensors)) {
            if name != have || t.shape() != *shape || t.data.len() != shape.0 * shape.1 {
                return Err(Error::Shape(format!(
                    "parameter {have} {:?} does not match {name} {shape:?}",
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(Error::InvalidInput(format!("parameter {name} is not finite")));
            }
        }
        Ok(())
    }

    /// Parameter names and shapes for a configuration.
    pub fn shapes(config: &NetConfig) -> Vec<(String, (usize, usize))> {
        let d = config.embed_dim;
        let f = config.ffn_dim;
        let mut out = Vec::new();
        let mut mlp = |prefix: &str, input: usize| {
            out.push((format!("{prefix}.w1"), (input, d)));
            out.push((format!("{prefix}.b1"), (1, d)));
            out.push((format!("{prefix}.w2"), (d, d)));
            out.push((format!("{prefix}.b2"), (1, d)));
        };
        mlp("geom", BRANCH_INPUTS);
        mlp("curr", BUD_INPUTS);
        mlp("prev", BUD_INPUTS);
        mlp("time", 1);
        out.push(("role.curr".into(), (1, d)));
        out.push(("role.prev".into(), (1, d)));
        for head in ["spatial", "temporal"] {
            for ln in ["ln_q", "ln_kv", "ln_ffn"] {
                out.push((format!("{head}.{ln}.gain"), (1, d)));
                out.push((format!("{head}.{ln}.bias"), (1, d)));
            }
            for p in ["wq", "wk", "wv", "wo"] {
                out.push((format!("{head}.{p}"), (d, d)));
            }
            out.push((format!("{head}.ffn.w1"), (d, f)));
            out.push((format!("{head}.ffn.b1"), (1, f)));
            out.push((format!("{head}.ffn.w2"), (f, d)));
            out.push((format!("{head}.ffn.b2"), (1, d)));
        }
        out.push(("unmatched".into(), (1, 1)));
        out
    }

    /// Glorot-uniform weights, zero biases, unit gains, small role vectors.
    pub fn init(config: &NetConfig, unmatched_logit: f64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, (r, c)) in NetParams::shapes(config) {
            let m = if name == "unmatched" {
                Matrix::filled(1, 1, unmatched_logit)
            } else if name.ends_with(".gain") {
                Matrix::filled(r, c, 1.0)
            } else if name.ends_with(".bias") || name.contains(".b") {
                Matrix::zeros(r, c)
            } else if name.starts_with("role.") {
                Matrix::from_fn(r, c, |_, _| rng.gen_range(-0.1..0.1))
            } else {
                let limit = (6.0 / (r + c) as f64).sqrt();
                Matrix::from_fn(r, c, |_, _| rng.gen_range(-limit..limit))
            };
            names.push(name);
            tensors.push(m);
        }
        Ok(NetParams { names, tensors })
    }

    pub fn zeros_like(&self) -> Vec<Matrix> {
        self.tensors.iter().map(|t| Matrix::zeros(t.rows, t.cols)).collect()
    }
}

/// `[x, y, w, h, vx, vy, ax, ay, cos phi, sin phi]` with `phi` the heading
/// of the velocity; motion slots are zero for current buds and for buds at
/// rest.
pub fn bud_input(bud: &Bud, motion: Option<&MotionState>) -> [f64; BUD_INPUTS] {
    let (vx, vy, ax, ay) = motion.map_or((0.0, 0.0, 0.0, 0.0), |m| (m.vx, m.vy, m.ax, m.ay));
    let speed = vx.hypot(vy);
    let (c, s) = if speed > 0.0 {
        (vx / speed, vy / speed)
    } else {
        (0.0, 0.0)
    };
    [
        bud.cx,
        bud.cy,
        bud.w,
        bud.h,
        vx * VELOCITY_SCALE,
        vy * VELOCITY_SCALE,
        ax * ACCEL_SCALE,
        ay * ACCEL_SCALE,
        c,
        s,
    ]
}

pub fn branch_input(bp: &BranchPoint) -> [f64; BRANCH_INPUTS] {
    let (c, s) = bp.direction();
    [bp.x, bp.y, c, s]
}

fn rows_matrix<const N: usize>(rows: &[[f64; N]]) -> Matrix {
    Matrix::from_vec(rows.len(), N, rows.iter().flatten().copied().collect())
}

/// Parameters placed on a tape, looked up by name.
pub struct Bound<'a> {
    params: &'a NetParams,
    vars: Vec<Var>,
}

impl<'a> Bound<'a> {
    pub fn new(tape: &mut Tape, params: &'a NetParams) -> Self {
        let vars = params.tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        Bound { params, vars }
    }

    pub fn var(&self, name: &str) -> Var {
        self.vars[self.params.index(name)]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn mlp(&self, tape: &mut Tape, prefix: &str, x: Var) -> Var {
        let h = tape.matmul(x, self.var(&format!("{prefix}.w1")));
        let h = tape.add_row(h, self.var(&format!("{prefix}.b1")));
        let h = tape.tanh(h);
        let o = tape.matmul(h, self.var(&format!("{prefix}.w2")));
        tape.add_row(o, self.var(&format!("{prefix}.b2")))
    }

    fn norm(&self, tape: &mut Tape, prefix: &str, x: Var) -> Var {
        let n = tape.layer_norm(x, LN_EPS);
        let n = tape.mul_row(n, self.var(&format!("{prefix}.gain")));
        tape.add_row(n, self.var(&format!("{prefix}.bias")))
    }
}

/// Multi-head scaled dot-product attention of `q` over `k`/`v`, heads
/// concatenated and projected by `wo`.
pub fn multi_head_attention(tape: &mut Tape, q: Var, k: Var, v: Var, w: [Var; 4], heads: usize) -> Var {
    let [wq, wk, wv, wo] = w;
    let d = tape.value(wq).cols;
    let dh = d / heads;
    let qp = tape.matmul(q, wq);
    let kp = tape.matmul(k, wk);
    let vp = tape.matmul(v, wv);
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(qp, h * dh, dh);
        let kh = tape.slice_cols(kp, h * dh, dh);
        let vh = tape.slice_cols(vp, h * dh, dh);
        let kt = tape.transpose(kh);
        let s = tape.matmul(qh, kt);
        let s = tape.scale(s, 1.0 / (dh as f64).sqrt());
        let a = tape.softmax_rows(s);
        outs.push(tape.matmul(a, vh));
    }
    let cat = tape.concat_cols(&outs);
    tape.matmul(cat, wo)
}

/// `q v^T / tau`.
pub fn logits(tape: &mut Tape, q: Var, v: Var, tau: f64) -> Var {
    let vt = tape.transpose(v);
    let s = tape.matmul(q, vt);
    tape.scale(s, 1.0 / tau)
}

/// Refines queries against keys with one attention block, then scores them.
fn head(tape: &mut Tape, p: &Bound, name: &str, queries: Var, keys: Var, heads: usize) -> Var {
    let qn = p.norm(tape, &format!("{name}.ln_q"), queries);
    let kn = p.norm(tape, &format!("{name}.ln_kv"), keys);
    let w = ["wq", "wk", "wv", "wo"].map(|s| p.var(&format!("{name}.{s}")));
    let att = multi_head_attention(tape, qn, kn, kn, w, heads);
    let h = tape.add(qn, att);
    let hn = p.norm(tape, &format!("{name}.ln_ffn"), h);
    let f = p.mlp_ffn(tape, name, hn);
    let refined = tape.add(h, f);
    let d = tape.value(refined).cols as f64;
    logits(tape, refined, kn, d.sqrt())
}

impl Bound<'_> {
    fn mlp_ffn(&self, tape: &mut Tape, name: &str, x: Var) -> Var {
        let h = tape.matmul(x, self.var(&format!("{name}.ffn.w1")));
        let h = tape.add_row(h, self.var(&format!("{name}.ffn.b1")));
        let h = tape.tanh(h);
        let o = tape.matmul(h, self.var(&format!("{name}.ffn.w2")));
        tape.add_row(o, self.var(&format!("{name}.ffn.b2")))
    }
}

/// Embedded current buds (queries) and previous buds (keys) for the
/// temporal head. Role vectors are added per side; the time embedding of the
/// frame interval is added to the queries and that of each bud's own
/// elapsed time to its key.
pub fn embed_inputs(tape: &mut Tape, p: &Bound, current: &[Bud], previous: &[PreviousBud], dt: f64) -> (Var, Var) {
    let cur: Vec<_> = current.iter().map(|b| bud_input(b, None)).collect();
    let prev: Vec<_> = previous.iter().map(|b| bud_input(&b.bud, Some(&b.motion))).collect();
    let cur = tape.leaf(rows_matrix(&cur));
    let prev = tape.leaf(rows_matrix(&prev));
    let dt = tape.leaf(Matrix::filled(1, 1, dt));
    let elapsed = tape.leaf(Matrix::from_vec(
        previous.len(),
        1,
        previous.iter().map(|b| b.elapsed).collect(),
    ));
    let time_q = p.mlp(tape, "time", dt);
    let time_k = p.mlp(tape, "time", elapsed);
    let q = p.mlp(tape, "curr", cur);
    let q = tape.add_row(q, p.var("role.curr"));
    let q = tape.add_row(q, time_q);
    let k = p.mlp(tape, "prev", prev);
    let k = tape.add_row(k, p.var("role.prev"));
    let k = tape.add(k, time_k);
    (q, k)
}

/// Nodes of one forward pass.
pub struct Forward {
    pub m_spatial: Option<Var>,
    pub m_temporal: Option<Var>,
}

/// Records the spatial and temporal heads for one frame.
pub fn forward(
    tape: &mut Tape,
    p: &Bound,
    config: &NetConfig,
    frame: &Frame,
    previous: Option<&PreviousContext>,
) -> Forward {
    if frame.buds.is_empty() {
        return Forward {
            m_spatial: None,
            m_temporal: None,
        };
    }
    let m_spatial = (!frame.branch_points.is_empty()).then(|| {
        let cur: Vec<_> = frame.buds.iter().map(|b| bud_input(b, None)).collect();
        let br: Vec<_> = frame.branch_points.iter().map(branch_input).collect();
        let cur = tape.leaf(rows_matrix(&cur));
        let br = tape.leaf(rows_matrix(&br));
        let q = p.mlp(tape, "curr", cur);
        let q = tape.add_row(q, p.var("role.curr"));
        let k = p.mlp(tape, "geom", br);
        head(tape, p, "spatial", q, k, config.heads)
    });
    let m_temporal = previous.filter(|c| !c.buds.is_empty()).map(|ctx| {
        let (q, k) = embed_inputs(tape, p, &frame.buds, &ctx.buds, ctx.dt);
        head(tape, p, "temporal", q, k, config.heads)
    });
    Forward { m_spatial, m_temporal }
}

fn to_score_matrix(m: &Matrix) -> ScoreMatrix {
    ScoreMatrix::from_fn(m.rows, m.cols, |i, j| m[(i, j)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerNet {
    pub config: NetConfig,
    pub params: NetParams,
}

impl ScorerNet {
    pub fn new(config: NetConfig, unmatched_logit: f64) -> Result<Self> {
        let params = NetParams::init(&config, unmatched_logit)?;
        Ok(ScorerNet { config, params })
    }

    pub fn unmatched_logit(&self) -> f64 {
        self.params.get("unmatched").data[0]
    }

    /// Raw learned score matrices `(spatial, temporal)`.
    pub fn scores(&self, frame: &Frame, previous: Option<&PreviousContext>) -> (ScoreMatrix, Option<ScoreMatrix>) {
        let mut tape = Tape::new();
        let p = Bound::new(&mut tape, &self.params);
        let fwd = forward(&mut tape, &p, &self.config, frame, previous);
        let ms = fwd.m_spatial.map_or_else(
            || ScoreMatrix::new(frame.buds.len(), frame.branch_points.len(), 0.0),
            |v| to_score_matrix(tape.value(v)),
        );
        (ms, fwd.m_temporal.map(|v| to_score_matrix(tape.value(v))))
    }

    /// Branch-level evidence built from the learned scores.
    pub fn evidence(
        &self,
        frame: &Frame,
        previous: Option<&PreviousContext>,
        params: &TemporalParams,
    ) -> Result<Evidence> {
        let (ms, mt) = self.scores(frame, previous);
        if !ms
            .values()
            .iter()
            .chain(mt.iter().flat_map(|m| m.values()))
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidInput("scorer produced non-finite scores".into()));
        }
        Ok(assemble_evidence(frame, ms, mt, previous, params))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use twofloat::TwoFloat;

    fn small() -> NetConfig {
        NetConfig {
            embed_dim: 8,
            heads: 2,
            ffn_dim: 12,
            ..Default::default()
        }
    }

    fn bud(id: u32, x: f64, y: f64) -> Bud {
        Bud {
            id,
            gt_order: id + 1,
            cx: x,
            cy: y,
            w: 0.03,
            h: 0.02,
            frame: 1,
        }
    }

    fn prev(b: Bud, vx: f64) -> PreviousBud {
        PreviousBud {
            motion: MotionState {
                px: b.cx,
                py: b.cy,
                vx,
                vy: -0.01,
                ax: 0.001,
                ay: 0.0,
            },
            order: Some(b.gt_order),
            bud: b,
            elapsed: 1.0,
        }
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn config_rejects_indivisible_heads() {
        let c = NetConfig {
            embed_dim: 30,
            heads: 4,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        assert!(NetConfig::default().validate().is_ok());
    }

    #[test]
    fn init_matches_declared_shapes() {
        let c = small();
        let p = NetParams::init(&c, -6.0).unwrap();
        p.validate(&c).unwrap();
        assert_eq!(p.get("unmatched").data, vec![-6.0]);
        assert!(p.get("spatial.ln_q.gain").data.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn zero_weights_give_zero_embeddings() {
        let c = small();
        let mut p = NetParams::init(&c, -6.0).unwrap();
        for t in &mut p.tensors {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut tape = Tape::new();
        let b = Bound::new(&mut tape, &p);
        let (q, k) = embed_inputs(&mut tape, &b, &[bud(0, 0.3, 0.4)], &[prev(bud(1, 0.5, 0.5), 0.01)], 1.0);
        assert!(tape.value(q).data.iter().chain(&tape.value(k).data).all(|v| *v == 0.0));
    }

    #[test]
    fn identical_buds_embed_identically() {
        let c = small();
        let p = NetParams::init(&c, -6.0).unwrap();
        let mut tape = Tape::new();
        let b = Bound::new(&mut tape, &p);
        let (q, _) = embed_inputs(
            &mut tape,
            &b,
            &[bud(0, 0.3, 0.4), bud(1, 0.3, 0.4)],
            &[prev(bud(2, 0.5, 0.5), 0.0)],
            1.0,
        );
        let v = tape.value(q);
        assert_eq!(v.row(0), v.row(1));
    }

    #[test]
    fn time_embedding_shifts_both_sides_equally() {
        let c = small();
        let mut p = NetParams::init(&c, -6.0).unwrap();
        for (name, t) in p.names.iter().zip(&mut p.tensors) {
            if !name.starts_with("time.") {
                t.data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let embed = |dt: f64| {
            let mut tape = Tape::new();
            let b = Bound::new(&mut tape, &p);
            let mut pb = prev(bud(1, 0.6, 0.2), 0.02);
            pb.elapsed = dt;
            let (q, k) = embed_inputs(&mut tape, &b, &[bud(0, 0.3, 0.4)], &[pb], dt);
            (tape.value(q).clone(), tape.value(k).clone())
        };
        let (q1, k1) = embed(1.0);
        let (q2, k2) = embed(2.5);
        assert_ne!(q1, q2);
        let dq: Vec<f64> = q2.data.iter().zip(&q1.data).map(|(a, b)| a - b).collect();
        let dk: Vec<f64> = k2.data.iter().zip(&k1.data).map(|(a, b)| a - b).collect();
        assert_eq!(dq, dk);
    }

    fn attention_setup(nq: usize, nk: usize, seed: u64) -> (Tape, Var, Var, [Var; 4]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new();
        let q = tape.leaf(random(&mut rng, nq, 8));
        let k = tape.leaf(random(&mut rng, nk, 8));
        let w = [0, 1, 2, 3].map(|_| tape.leaf(random(&mut rng, 8, 8)));
        (tape, q, k, w)
    }

    #[test]
    fn single_key_attention_returns_its_value() {
        let (mut tape, q, k, w) = attention_setup(3, 1, 1);
        let out = multi_head_attention(&mut tape, q, k, k, w, 2);
        let vw = tape.value(k).matmul(tape.value(w[2])).matmul(tape.value(w[3]));
        for r in 0..3 {
            for (a, b) in tape.value(out).row(r).iter().zip(vw.row(0)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_keys_get_uniform_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut tape = Tape::new();
        let q = tape.leaf(random(&mut rng, 2, 4));
        let row = random(&mut rng, 1, 4);
        let k = tape.leaf(Matrix::from_fn(3, 4, |_, c| row.data[c]));
        let kt = tape.transpose(k);
        let s = tape.matmul(q, kt);
        let a = tape.softmax_rows(s);
        for v in &tape.value(a).data {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    /// Plain-loop attention with double-double accumulation.
    fn reference_attention(q: &Matrix, k: &Matrix, w: [&Matrix; 4], heads: usize) -> Vec<Vec<f64>> {
        let dot = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .fold(TwoFloat::from(0.0), |acc, (x, y)| acc + TwoFloat::new_mul(*x, *y))
        };
        let project = |x: &Matrix, wm: &Matrix| -> Vec<Vec<f64>> {
            (0..x.rows)
                .map(|r| {
                    (0..wm.cols)
                        .map(|c| {
                            let col: Vec<f64> = (0..wm.rows).map(|i| wm[(i, c)]).collect();
                            f64::from(dot(x.row(r), &col))
                        })
                        .collect()
                })
                .collect()
        };
        let (qp, kp, vp) = (project(q, w[0]), project(k, w[1]), project(k, w[2]));
        let d = w[0].cols;
        let dh = d / heads;
        let mut cat = vec![vec![0.0; d]; q.rows];
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            for i in 0..q.rows {
                let scores: Vec<f64> = (0..k.rows)
                    .map(|j| f64::from(dot(&qp[i][cols.clone()], &kp[j][cols.clone()])) / (dh as f64).sqrt())
                    .collect();
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let z: f64 = e.iter().sum();
                for c in cols.clone() {
                    let acc = (0..k.rows).fold(TwoFloat::from(0.0), |acc, j| {
                        acc + TwoFloat::new_mul(e[j] / z, vp[j][c])
                    });
                    cat[i][c] = f64::from(acc);
                }
            }
        }
        let cat = Matrix::from_fn(q.rows, d, |r, c| cat[r][c]);
        project(&cat, w[3])
    }

    #[test]
    fn attention_matches_reference_evaluation() {
        let (mut tape, q, k, w) = attention_setup(4, 5, 3);
        let out = multi_head_attention(&mut tape, q, k, k, w, 2);
        let reference = reference_attention(tape.value(q), tape.value(k), w.map(|v| tape.value(v)), 2);
        for (r, row) in reference.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                assert!((tape.value(out)[(r, c)] - v).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn logits_examples() {
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::from_vec(1, 2, vec![1.0, 0.0]));
        let b = tape.leaf(Matrix::from_vec(1, 2, vec![0.0, 1.0]));
        let l = logits(&mut tape, a, b, 1.0);
        assert_eq!(tape.value(l).data, vec![0.0]);
        let v = tape.leaf(Matrix::from_vec(1, 2, vec![2.0f64.sqrt(), 2.0f64.sqrt()]));
        let l = logits(&mut tape, v, v, 2.0);
        assert!((tape.value(l).data[0] - 2.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = tape.leaf(random(&mut rng, 3, 4));
        let k = tape.leaf(random(&mut rng, 2, 4));
        let l1 = logits(&mut tape, q, k, 0.7);
        let l2 = logits(&mut tape, q, k, 1.4);
        for (x, y) in tape.value(l1).data.iter().zip(&tape.value(l2).data) {
            assert!((x / 2.0 - y).abs() < 1e-12);
        }
    }

    fn frame() -> Frame {
        let bp = |id: u32, x: f64, y: f64, theta: f64| BranchPoint {
            id,
            order: id + 1,
            x,
            y,
            theta,
            first_seen: 0,
            reserved: 0.0,
        };
        Frame {
            index: 1,
            timestamp_days: 1.0,
            branch_points: vec![bp(0, 0.5, 0.8, 0.2), bp(1, 0.5, 0.6, 2.9), bp(2, 0.51, 0.4, 0.4)],
            buds: vec![bud(0, 0.7, 0.6), bud(1, 0.3, 0.45), bud(2, 0.66, 0.3)],
            masks: None,
            reset_history: false,
        }
    }

    fn context() -> PreviousContext {
        PreviousContext {
            buds: vec![prev(bud(5, 0.29, 0.47), -0.01), prev(bud(6, 0.69, 0.62), 0.02)],
            dt: 1.0,
            latest: 2,
        }
    }

    #[test]
    fn permuting_previous_buds_permutes_columns() {
        let net = ScorerNet::new(small(), -6.0).unwrap();
        let f = frame();
        let ctx = context();
        let mut swapped = ctx.clone();
        swapped.buds.reverse();
        let a = net.scores(&f, Some(&ctx)).1.unwrap();
        let b = net.scores(&f, Some(&swapped)).1.unwrap();
        for i in 0..a.rows() {
            assert!((a.get(i, 0) - b.get(i, 1)).abs() < 1e-12);
            assert!((a.get(i, 1) - b.get(i, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn annotated_orders_never_reach_the_network() {
        let net = ScorerNet::new(small(), -6.0).unwrap();
        let f = frame();
        let ctx = context();
        let mut g = f.clone();
        g.buds.iter_mut().for_each(|b| b.gt_order += 40);
        let mut c2 = ctx.clone();
        c2.buds.iter_mut().for_each(|b| b.bud.gt_order += 17);
        let (s1, t1) = net.scores(&f, Some(&ctx));
        let (s2, t2) = net.scores(&g, Some(&c2));
        assert_eq!(
            s1.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            s2.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(
            t1.unwrap().values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            t2.unwrap().values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn evidence_without_history_uses_absent_prior() {
        let net = ScorerNet::new(small(), -6.0).unwrap();
        let ev = net.evidence(&frame(), None, &TemporalParams::default()).unwrap();
        assert!(ev.m_temporal.is_none());
        assert!(ev.m_tb.values().iter().all(|v| *v == -6.0));
        assert_eq!(ev.m_spatial.rows(), 3);
    }
}
