//! Gradient training for the learned gate and the attention scorer.
//!
//! Both targets minimise the fusion cross-entropy (unmatched column
//! included) with minibatch SGD plus optional momentum. Per-sample
//! gradients are computed in parallel and summed in sample order, so a run
//! is bit-identical for any thread count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Tape, Var};
use crate::dataset::{split_counts, Sequence};
use crate::error::{Error, Result};
use crate::fusion::{fixed_gate, GateMlp, GateParams, GATE_INPUTS};
use crate::par::Execution;
use crate::scorer::{forward, Bound, NetConfig, NetParams, ScorerNet};
use crate::temporal::temporal_to_branch;
use crate::tracker::{
    analytic_evidence, assemble_evidence, ground_truth_contexts, ground_truth_labels, LearnedModel, PreviousContext,
    TrackerParams,
};
use crate::types::{Frame, ScoreMatrix};

pub const SPLIT_RATIOS: [f64; 3] = [0.70, 0.15, 0.15];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainTarget {
    Gate,
    Scorer,
}

impl std::str::FromStr for TrainTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gate" => Ok(TrainTarget::Gate),
            "scorer" => Ok(TrainTarget::Scorer),
            _ => Err(Error::UnknownMode(format!("training target `{s}`"))),
        }
    }
}

/// One annotated frame with its ground-truth history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub frame: Frame,
    pub context: Option<PreviousContext>,
    /// Column of each bud's branch, `None` for the unmatched column.
    pub labels: Vec<Option<usize>>,
}

/// Training frames of every sequence: the leading chronological split, minus
/// frames that have no buds or no branch points.
pub fn training_samples(sequences: &[Sequence], tracker: &TrackerParams) -> Result<Vec<TrainingSample>> {
    let mut out = Vec::new();
    for seq in sequences {
        let [train, _, _] = split_counts(seq.frames.len(), SPLIT_RATIOS)?;
        let contexts = ground_truth_contexts(seq, &tracker.temporal)?;
        for (frame, context) in seq.frames.iter().zip(contexts).take(train) {
            if frame.buds.is_empty() || frame.branch_points.is_empty() {
                continue;
            }
            out.push(TrainingSample {
                labels: ground_truth_labels(frame),
                frame: frame.clone(),
                context,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidInput("training split is empty".into()));
    }
    Ok(out)
}

fn class_labels(labels: &[Option<usize>], cols: usize) -> Vec<usize> {
    labels.iter().map(|l| l.unwrap_or(cols)).collect()
}

/// Analytic evidence frozen for gate training; it does not depend on the
/// gate parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSample {
    pub m_spatial: ScoreMatrix,
    pub m_tb: ScoreMatrix,
    /// `branches x 4` gating features.
    pub features: Matrix,
    pub labels: Vec<Option<usize>>,
}

pub fn gate_samples(samples: &[TrainingSample], tracker: &TrackerParams) -> Result<Vec<GateSample>> {
    samples
        .iter()
        .map(|s| {
            let ev = analytic_evidence(&s.frame, s.context.as_ref(), tracker)?;
            let feats = ev.gating_features()?;
            let features = Matrix::from_fn(feats.len(), GATE_INPUTS, |r, c| feats[r].to_array()[c]);
            Ok(GateSample {
                m_spatial: ev.m_spatial,
                m_tb: ev.m_tb,
                features,
                labels: s.labels.clone(),
            })
        })
        .collect()
}

pub const GATE_TENSORS: [&str; 5] = ["gate.w1", "gate.b1", "gate.w2", "gate.b2", "unmatched"];

/// Gate weights and the unmatched logit as named tensors.
pub fn gate_to_params(mlp: &GateMlp, unmatched_logit: f64) -> NetParams {
    let h = mlp.w1.len();
    NetParams {
        names: GATE_TENSORS.iter().map(|s| s.to_string()).collect(),
        tensors: vec![
            Matrix::from_fn(GATE_INPUTS, h, |i, j| mlp.w1[j][i]),
            Matrix::from_vec(1, h, mlp.b1.clone()),
            Matrix::from_vec(h, 1, mlp.w2.clone()),
            Matrix::filled(1, 1, mlp.b2),
            Matrix::filled(1, 1, unmatched_logit),
        ],
    }
}

pub fn params_to_gate(params: &NetParams) -> Result<(GateMlp, f64)> {
    if params.names.iter().map(String::as_str).ne(GATE_TENSORS) {
        return Err(Error::Shape(format!(
            "gate checkpoint lists tensors {:?}",
            params.names
        )));
    }
    let w1 = params.get("gate.w1");
    let h = w1.cols;
    let ok = w1.rows == GATE_INPUTS
        && params.get("gate.b1").shape() == (1, h)
        && params.get("gate.w2").shape() == (h, 1)
        && params.get("gate.b2").shape() == (1, 1)
        && params.get("unmatched").shape() == (1, 1);
    if !ok || h == 0 {
        return Err(Error::Shape("gate tensors have inconsistent shapes".into()));
    }
    if !params.tensors.iter().all(Matrix::is_finite) {
        return Err(Error::InvalidInput("gate parameters are not finite".into()));
    }
    let mlp = GateMlp {
        w1: (0..h).map(|j| std::array::from_fn(|i| w1[(i, j)])).collect(),
        b1: params.get("gate.b1").data.clone(),
        w2: params.get("gate.w2").data.clone(),
        b2: params.get("gate.b2").data[0],
    };
    Ok((mlp, params.get("unmatched").data[0]))
}

/// Fused logits with the unmatched column appended: `w_s M_s / tau_s +
/// (1 - w_s) M_tb / tau_t` where `w_row` is a `1 x C` node.
fn fused_logits(tape: &mut Tape, ms: Var, mtb: Var, w_row: Var, unmatched: Var, gate: &GateParams) -> Var {
    let rows = tape.value(ms).rows;
    let ms = tape.scale(ms, 1.0 / gate.tau_spatial);
    let mtb = tape.scale(mtb, 1.0 / gate.tau_temporal);
    let neg = tape.scale(w_row, -1.0);
    let wt = tape.add_scalar(neg, 1.0);
    let a = tape.mul_row(ms, w_row);
    let b = tape.mul_row(mtb, wt);
    let fused = tape.add(a, b);
    let u = tape.broadcast(unmatched, rows, 1);
    tape.concat_cols(&[fused, u])
}

/// Records the gate loss of one sample; returns the loss node and the
/// parameter nodes in [`GATE_TENSORS`] order.
pub fn gate_loss_node(tape: &mut Tape, params: &NetParams, sample: &GateSample, gate: &GateParams) -> (Var, Vec<Var>) {
    let vars: Vec<Var> = params.tensors.iter().map(|t| tape.leaf(t.clone())).collect();
    let [w1, b1, w2, b2, unmatched] = [vars[0], vars[1], vars[2], vars[3], vars[4]];
    let x = tape.leaf(sample.features.clone());
    let h = tape.matmul(x, w1);
    let h = tape.add_row(h, b1);
    let h = tape.tanh(h);
    let o = tape.matmul(h, w2);
    let o = tape.add_row(o, b2);
    let s = tape.sigmoid(o);
    let w = tape.clamp(s, gate.alpha_min, gate.alpha_max);
    let w_row = tape.transpose(w);
    let ms = tape.leaf(to_matrix(&sample.m_spatial));
    let mtb = tape.leaf(to_matrix(&sample.m_tb));
    let logits = fused_logits(tape, ms, mtb, w_row, unmatched, gate);
    let loss = tape.softmax_ce(logits, &class_labels(&sample.labels, sample.m_spatial.cols()));
    (loss, vars)
}

/// Records the scorer loss of one sample: learned scores, order-group
/// aggregation with the vertical penalty held constant, fixed gating.
pub fn scorer_loss_node(
    tape: &mut Tape,
    params: &NetParams,
    config: &NetConfig,
    sample: &TrainingSample,
    tracker: &TrackerParams,
) -> Result<(Var, Vec<Var>)> {
    let p = Bound::new(tape, params);
    let fwd = forward(tape, &p, config, &sample.frame, sample.context.as_ref());
    let ms = fwd
        .m_spatial
        .ok_or_else(|| Error::InvalidInput("training frame without buds or branch points".into()))?;
    let ms_value = to_score_matrix(tape.value(ms));
    let mt_value = fwd.m_temporal.map(|v| to_score_matrix(tape.value(v)));
    let ev = assemble_evidence(
        &sample.frame,
        ms_value,
        mt_value.clone(),
        sample.context.as_ref(),
        &tracker.temporal,
    );
    let mtb = match (fwd.m_temporal, mt_value) {
        (Some(mt), Some(mt_value)) => {
            let raw = tape.group_lse(mt, &ev.groups, tracker.temporal.beta_absent);
            let unpenalized = temporal_to_branch(&mt_value, &ev.groups, tracker.temporal.beta_absent);
            let penalty = Matrix::from_fn(ev.m_tb.rows(), ev.m_tb.cols(), |i, j| {
                unpenalized.get(i, j) - ev.m_tb.get(i, j)
            });
            let penalty = tape.leaf(penalty);
            tape.sub(raw, penalty)
        }
        _ => tape.leaf(to_matrix(&ev.m_tb)),
    };
    let cols = sample.frame.branch_points.len();
    let w_row = Matrix::from_fn(1, cols, |_, j| fixed_gate(ev.has_history(j), &tracker.gate).w_spatial);
    let w_row = tape.leaf(w_row);
    let logits = fused_logits(tape, ms, mtb, w_row, p.var("unmatched"), &tracker.gate);
    let loss = tape.softmax_ce(logits, &class_labels(&sample.labels, cols));
    Ok((loss, p.vars().to_vec()))
}

fn to_matrix(m: &ScoreMatrix) -> Matrix {
    Matrix::from_vec(m.rows(), m.cols(), m.values().to_vec())
}

fn to_score_matrix(m: &Matrix) -> ScoreMatrix {
    ScoreMatrix::from_fn(m.rows, m.cols, |i, j| m[(i, j)])
}

fn run_and_differentiate(tape: &Tape, loss: Var, vars: &[Var]) -> (f64, Vec<Matrix>) {
    let grads = tape.backward(loss);
    let value = tape.value(loss).data[0];
    (value, vars.iter().map(|v| grads[v.index()].clone()).collect())
}

/// Loss and parameter gradients of one gate sample.
pub fn gate_gradient(params: &NetParams, sample: &GateSample, gate: &GateParams) -> (f64, Vec<Matrix>) {
    let mut tape = Tape::new();
    let (loss, vars) = gate_loss_node(&mut tape, params, sample, gate);
    run_and_differentiate(&tape, loss, &vars)
}

/// Loss and parameter gradients of one scorer sample.
pub fn scorer_gradient(
    params: &NetParams,
    config: &NetConfig,
    sample: &TrainingSample,
    tracker: &TrackerParams,
) -> Result<(f64, Vec<Matrix>)> {
    let mut tape = Tape::new();
    let (loss, vars) = scorer_loss_node(&mut tape, params, config, sample, tracker)?;
    Ok(run_and_differentiate(&tape, loss, &vars))
}

/// Summed loss and gradients over `samples`, reduced in sample order.
pub fn summed_gradient<S, F>(params: &NetParams, samples: &[S], exec: Execution, grad: F) -> Result<(f64, Vec<Matrix>)>
where
    S: Sync,
    F: Fn(&NetParams, &S) -> Result<(f64, Vec<Matrix>)> + Sync + Send,
{
    let parts = exec.map(samples, |s| grad(params, s));
    let mut total = 0.0;
    let mut sum = params.zeros_like();
    for part in parts {
        let (loss, grads) = part?;
        total += loss;
        for (acc, g) in sum.iter_mut().zip(&grads) {
            acc.add_assign(g);
        }
    }
    Ok((total, sum))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: NetParams,
    /// Mean training loss of each epoch, measured during the epoch.
    pub curve: Vec<f64>,
}

/// Minibatch SGD with momentum: `v = mu v + g`, `p -= lr v`, with `g` the
/// batch-mean gradient. Batches are reshuffled every epoch from the seed.
pub fn optimize<S, F>(
    init: NetParams,
    samples: &[S],
    config: &NetConfig,
    exec: Execution,
    grad: F,
) -> Result<TrainOutcome>
where
    S: Sync,
    F: Fn(&NetParams, &S) -> Result<(f64, Vec<Matrix>)> + Sync + Send,
{
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidInput("training split is empty".into()));
    }
    let mut params = init;
    let mut velocity = params.zeros_like();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let batch = if config.batch_size == 0 {
        samples.len()
    } else {
        config.batch_size
    };
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let picked: Vec<&S> = chunk.iter().map(|&i| &samples[i]).collect();
            let (loss, grads) = summed_gradient(&params, &picked, exec, |p, s| grad(p, s))?;
            let n = chunk.len() as f64;
            if !loss.is_finite() || !grads.iter().all(Matrix::is_finite) {
                let norm: f64 = grads.iter().map(Matrix::sq_norm).sum::<f64>().sqrt();
                return Err(Error::Diverged {
                    epoch,
                    detail: format!(
                        "batch loss {loss}, gradient norm {norm}, last epoch loss {:?}",
                        curve.last()
                    ),
                });
            }
            epoch_loss += loss;
            for ((p, v), g) in params.tensors.iter_mut().zip(&mut velocity).zip(&grads) {
                for ((pv, vv), gv) in p.data.iter_mut().zip(&mut v.data).zip(&g.data) {
                    *vv = config.momentum * *vv + gv / n;
                    *pv -= config.learning_rate * *vv;
                }
            }
        }
        curve.push(epoch_loss / samples.len() as f64);
    }
    if !params.tensors.iter().all(Matrix::is_finite) {
        return Err(Error::Diverged {
            epoch: config.epochs,
            detail: "parameters became non-finite".into(),
        });
    }
    Ok(TrainOutcome { params, curve })
}

pub fn train_gate(
    samples: &[GateSample],
    tracker: &TrackerParams,
    config: &NetConfig,
    exec: Execution,
) -> Result<TrainOutcome> {
    tracker.gate.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = gate_to_params(&GateMlp::init(&tracker.gate, &mut rng), tracker.gate.unmatched_logit);
    let gate = tracker.gate;
    optimize(init, samples, config, exec, move |p, s| Ok(gate_gradient(p, s, &gate)))
}

pub fn train_scorer(
    samples: &[TrainingSample],
    tracker: &TrackerParams,
    config: &NetConfig,
    exec: Execution,
) -> Result<TrainOutcome> {
    let init = NetParams::init(config, tracker.gate.unmatched_logit)?;
    optimize(init, samples, config, exec, |p, s| {
        scorer_gradient(p, config, s, tracker)
    })
}

/// A serialized tensor: name, shape and row-major values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

/// Trained parameters plus an echo of the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub target: TrainTarget,
    pub net: NetConfig,
    pub gate: GateParams,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn new(target: TrainTarget, net: &NetConfig, gate: &GateParams, params: &NetParams) -> Self {
        Checkpoint {
            target,
            net: net.clone(),
            gate: *gate,
            tensors: params
                .names
                .iter()
                .zip(&params.tensors)
                .map(|(name, t)| TensorRecord {
                    name: name.clone(),
                    shape: [t.rows, t.cols],
                    values: t.data.clone(),
                })
                .collect(),
        }
    }

    pub fn params(&self) -> Result<NetParams> {
        let mut names = Vec::with_capacity(self.tensors.len());
        let mut tensors = Vec::with_capacity(self.tensors.len());
        for t in &self.tensors {
            let [r, c] = t.shape;
            if t.values.len() != r * c {
                return Err(Error::Shape(format!(
                    "tensor {} declares {r}x{c} but holds {} values",
                    t.name,
                    t.values.len()
                )));
            }
            names.push(t.name.clone());
            tensors.push(Matrix::from_vec(r, c, t.values.clone()));
        }
        Ok(NetParams { names, tensors })
    }

    pub fn model(&self) -> Result<LearnedModel> {
        let params = self.params()?;
        match self.target {
            TrainTarget::Gate => {
                let (mlp, unmatched_logit) = params_to_gate(&params)?;
                Ok(LearnedModel::Gate { mlp, unmatched_logit })
            }
            TrainTarget::Scorer => {
                self.net.validate()?;
                params.validate(&self.net)?;
                Ok(LearnedModel::Scorer(ScorerNet {
                    config: self.net.clone(),
                    params,
                }))
            }
        }
    }
}
