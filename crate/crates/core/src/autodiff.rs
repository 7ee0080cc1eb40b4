//! Reverse-mode automatic differentiation over small dense matrices.
//!
//! A [`Tape`] records every operation as it is evaluated; [`Tape::backward`]
//! walks the record in reverse and returns the gradient of a scalar output
//! with respect to every node.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data does not match {rows}x{cols}");
        Matrix { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    /// Position of the node on its tape; indexes the result of [`Tape::backward`].
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Clamp(Var, f64, f64),
    LayerNorm {
        x: Var,
        normalized: Matrix,
        inv_std: Vec<f64>,
    },
    SoftmaxRows(Var),
    Transpose(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    GroupLse {
        x: Var,
        groups: Vec<Vec<usize>>,
    },
    Broadcast(Var),
    SoftmaxCe {
        logits: Var,
        labels: Vec<usize>,
        probs: Matrix,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Parameter or constant input.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Matrix {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "elementwise shape mismatch");
        Matrix::from_vec(
            x.rows,
            x.cols,
            x.data.iter().zip(&y.data).map(|(p, q)| f(*p, *q)).collect(),
        )
    }

    fn zip_row(&self, a: Var, row: Var, f: impl Fn(f64, f64) -> f64) -> Matrix {
        let (x, r) = (self.value(a), self.value(row));
        assert!(r.rows == 1 && r.cols == x.cols, "row broadcast shape mismatch");
        Matrix::from_fn(x.rows, x.cols, |i, j| f(x[(i, j)], r.data[j]))
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Matrix {
        let x = self.value(a);
        Matrix::from_vec(x.rows, x.cols, x.data.iter().map(|v| f(*v)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p + q);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p - q);
        self.push(v, Op::Sub(a, b))
    }

    /// Adds a `1 x cols` row to every row.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.zip_row(a, row, |p, q| p + q);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p * q);
        self.push(v, Op::Mul(a, b))
    }

    /// Multiplies every row elementwise by a `1 x cols` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.zip_row(a, row, |p, q| p * q);
        self.push(v, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.map(a, |x| x + s);
        self.push(v, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.map(a, f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.map(a, |x| 1.0 / (1.0 + (-x).exp()));
        self.push(v, Op::Sigmoid(a))
    }

    /// Clamps to `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.map(a, |x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi))
    }

    /// Per-row standardization (no gain or offset).
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let x = self.value(a);
        let n = x.cols as f64;
        let mut normalized = Matrix::zeros(x.rows, x.cols);
        let mut inv_std = Vec::with_capacity(x.rows);
        for r in 0..x.rows {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let inv = 1.0 / (var + eps).sqrt();
            for (c, v) in row.iter().enumerate() {
                normalized[(r, c)] = (v - mean) * inv;
            }
            inv_std.push(inv);
        }
        let value = normalized.clone();
        self.push(
            value,
            Op::LayerNorm {
                x: a,
                normalized,
                inv_std,
            },
        )
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = Matrix::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            let row = x.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
            for (c, v) in row.iter().enumerate() {
                out[(r, c)] = (v - max).exp() / sum;
            }
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.cols, "column slice out of range");
        let v = Matrix::from_fn(x.rows, len, |r, c| x[(r, start + c)]);
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            let x = self.value(*p);
            assert_eq!(x.rows, rows, "concat row mismatch");
            for r in 0..rows {
                for c in 0..x.cols {
                    out[(r, offset + c)] = x[(r, c)];
                }
            }
            offset += x.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    /// Column `j` of the output is the log-mean-exp of the input columns in
    /// `groups[j]`, or the constant `beta` for an empty group.
    pub fn group_lse(&mut self, a: Var, groups: &[Vec<usize>], beta: f64) -> Var {
        let x = self.value(a);
        let v = Matrix::from_fn(x.rows, groups.len(), |r, j| {
            let g = &groups[j];
            if g.is_empty() {
                return beta;
            }
            let max = g.iter().map(|&k| x[(r, k)]).fold(f64::NEG_INFINITY, f64::max);
            max + g.iter().map(|&k| (x[(r, k)] - max).exp()).sum::<f64>().ln() - (g.len() as f64).ln()
        });
        self.push(
            v,
            Op::GroupLse {
                x: a,
                groups: groups.to_vec(),
            },
        )
    }

    /// Repeats a `1 x 1` node into a `rows x cols` block.
    pub fn broadcast(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape(), (1, 1), "broadcast needs a scalar");
        let v = Matrix::filled(rows, cols, x.data[0]);
        self.push(v, Op::Broadcast(a))
    }

    /// Mean cross-entropy of row softmaxes against class indices; `1 x 1`.
    pub fn softmax_ce(&mut self, logits: Var, labels: &[usize]) -> Var {
        let x = self.value(logits);
        assert_eq!(x.rows, labels.len(), "one label per row");
        let mut probs = Matrix::zeros(x.rows, x.cols);
        let mut loss = 0.0;
        for r in 0..x.rows {
            let row = x.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
            for (c, v) in row.iter().enumerate() {
                probs[(r, c)] = (v - max).exp() / sum;
            }
            loss += max + sum.ln() - row[labels[r]];
        }
        let v = Matrix::filled(1, 1, loss / x.rows.max(1) as f64);
        self.push(
            v,
            Op::SoftmaxCe {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        )
    }

    /// Gradients of the scalar `output` with respect to every node.
    pub fn backward(&self, output: Var) -> Vec<Matrix> {
        let mut grads: Vec<Matrix> = self
            .nodes
            .iter()
            .map(|n| Matrix::zeros(n.value.rows, n.value.cols))
            .collect();
        grads[output.0] = Matrix::filled(1, 1, 1.0);
        for idx in (0..=output.0).rev() {
            let g = std::mem::replace(&mut grads[idx], Matrix::zeros(0, 0));
            if g.data.iter().all(|v| *v == 0.0) {
                grads[idx] = g;
                continue;
            }
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = g.matmul(&self.value(*b).transpose());
                    let db = self.value(*a).transpose().matmul(&g);
                    grads[a.0].add_assign(&da);
                    grads[b.0].add_assign(&db);
                }
                Op::Add(a, b) => {
                    grads[a.0].add_assign(&g);
                    grads[b.0].add_assign(&g);
                }
                Op::Sub(a, b) => {
                    grads[a.0].add_assign(&g);
                    grads[b.0].add_assign(&g.scale(-1.0));
                }
                Op::AddRow(a, row) => {
                    grads[a.0].add_assign(&g);
                    let dr = column_sums(&g);
                    grads[row.0].add_assign(&dr);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let da = Matrix::from_vec(g.rows, g.cols, g.data.iter().zip(&y.data).map(|(p, q)| p * q).collect());
                    let db = Matrix::from_vec(g.rows, g.cols, g.data.iter().zip(&x.data).map(|(p, q)| p * q).collect());
                    grads[a.0].add_assign(&da);
                    grads[b.0].add_assign(&db);
                }
                Op::MulRow(a, row) => {
                    let (x, r) = (self.value(*a), self.value(*row));
                    let da = Matrix::from_fn(g.rows, g.cols, |i, j| g[(i, j)] * r.data[j]);
                    let mut dr = Matrix::zeros(1, g.cols);
                    for i in 0..g.rows {
                        for j in 0..g.cols {
                            dr.data[j] += g[(i, j)] * x[(i, j)];
                        }
                    }
                    grads[a.0].add_assign(&da);
                    grads[row.0].add_assign(&dr);
                }
                Op::Scale(a, s) => grads[a.0].add_assign(&g.scale(*s)),
                Op::AddScalar(a) => grads[a.0].add_assign(&g),
                Op::Tanh(a) => {
                    let y = &node.value;
                    let da = Matrix::from_vec(
                        g.rows,
                        g.cols,
                        g.data.iter().zip(&y.data).map(|(d, t)| d * (1.0 - t * t)).collect(),
                    );
                    grads[a.0].add_assign(&da);
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let da = Matrix::from_vec(
                        g.rows,
                        g.cols,
                        g.data.iter().zip(&y.data).map(|(d, s)| d * s * (1.0 - s)).collect(),
                    );
                    grads[a.0].add_assign(&da);
                }
                Op::Clamp(a, lo, hi) => {
                    let x = self.value(*a);
                    let da = Matrix::from_vec(
                        g.rows,
                        g.cols,
                        g.data
                            .iter()
                            .zip(&x.data)
                            .map(|(d, v)| if *v >= *lo && *v <= *hi { *d } else { 0.0 })
                            .collect(),
                    );
                    grads[a.0].add_assign(&da);
                }
                Op::LayerNorm { x, normalized, inv_std } => {
                    let n = g.cols as f64;
                    let mut dx = Matrix::zeros(g.rows, g.cols);
                    for r in 0..g.rows {
                        let dy = g.row(r);
                        let xh = normalized.row(r);
                        let sum_dy: f64 = dy.iter().sum();
                        let sum_dy_xh: f64 = dy.iter().zip(xh).map(|(a, b)| a * b).sum();
                        for c in 0..g.cols {
                            dx[(r, c)] = inv_std[r] / n * (n * dy[c] - sum_dy - xh[c] * sum_dy_xh);
                        }
                    }
                    grads[x.0].add_assign(&dx);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut da = Matrix::zeros(g.rows, g.cols);
                    for r in 0..g.rows {
                        let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(p, q)| p * q).sum();
                        for c in 0..g.cols {
                            da[(r, c)] = y[(r, c)] * (g[(r, c)] - dot);
                        }
                    }
                    grads[a.0].add_assign(&da);
                }
                Op::Transpose(a) => grads[a.0].add_assign(&g.transpose()),
                Op::SliceCols(a, start) => {
                    let dst = &mut grads[a.0];
                    for r in 0..g.rows {
                        for c in 0..g.cols {
                            dst[(r, start + c)] += g[(r, c)];
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let cols = self.value(*p).cols;
                        let dst = &mut grads[p.0];
                        for r in 0..g.rows {
                            for c in 0..cols {
                                dst[(r, c)] += g[(r, offset + c)];
                            }
                        }
                        offset += cols;
                    }
                }
                Op::GroupLse { x, groups } => {
                    let xv = self.value(*x);
                    let y = &node.value;
                    let dst = &mut grads[x.0];
                    for r in 0..g.rows {
                        for (j, grp) in groups.iter().enumerate() {
                            if grp.is_empty() {
                                continue;
                            }
                            // d/dx_k of log-mean-exp is the within-group softmax.
                            let base = y[(r, j)] + (grp.len() as f64).ln();
                            for &k in grp {
                                dst[(r, k)] += g[(r, j)] * (xv[(r, k)] - base).exp();
                            }
                        }
                    }
                }
                Op::Broadcast(a) => {
                    let s: f64 = g.data.iter().sum();
                    grads[a.0].data[0] += s;
                }
                Op::SoftmaxCe { logits, labels, probs } => {
                    let n = labels.len().max(1) as f64;
                    let scale = g.data[0] / n;
                    let mut dl = probs.scale(scale);
                    for (r, &l) in labels.iter().enumerate() {
                        dl[(r, l)] -= scale;
                    }
                    grads[logits.0].add_assign(&dl);
                }
            }
            grads[idx] = g;
        }
        grads
    }
}

fn column_sums(g: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, g.cols);
    for r in 0..g.rows {
        for c in 0..g.cols {
            out.data[c] += g[(r, c)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Checks d(loss)/d(input) for a graph built by `build` against central
    /// differences.
    fn check(inputs: Vec<Matrix>, build: impl Fn(&mut Tape, &[Var]) -> Var) {
        let eval = |inputs: &[Matrix]| {
            let mut t = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|m| t.leaf(m.clone())).collect();
            let out = build(&mut t, &vars);
            (t, vars, out)
        };
        let (tape, vars, out) = eval(&inputs);
        let grads = tape.backward(out);
        let h = 1e-5;
        for (n, input) in inputs.iter().enumerate() {
            for k in 0..input.data.len() {
                let mut plus = inputs.clone();
                plus[n].data[k] += h;
                let mut minus = inputs.clone();
                minus[n].data[k] -= h;
                let fp = {
                    let (t, _, o) = eval(&plus);
                    t.value(o).data[0]
                };
                let fm = {
                    let (t, _, o) = eval(&minus);
                    t.value(o).data[0]
                };
                let numeric = (fp - fm) / (2.0 * h);
                let analytic = grads[vars[n].0].data[k];
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                assert!(rel < 1e-5, "input {n}[{k}]: numeric {numeric} analytic {analytic}");
            }
        }
    }

    fn sum_all(t: &mut Tape, v: Var) -> Var {
        let (r, c) = t.value(v).shape();
        let ones_l = t.leaf(Matrix::filled(1, r, 1.0));
        let ones_r = t.leaf(Matrix::filled(c, 1, 1.0));
        let left = t.matmul(ones_l, v);
        t.matmul(left, ones_r)
    }

    /// Weighted sum so every output element gets a distinct gradient.
    fn weighted(t: &mut Tape, v: Var, seed: u64) -> Var {
        let (r, c) = t.value(v).shape();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = t.leaf(random(&mut rng, r, c));
        let m = t.mul(v, w);
        sum_all(t, m)
    }

    #[test]
    fn elementwise_and_linear_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ins = vec![
            random(&mut rng, 3, 4),
            random(&mut rng, 4, 2),
            random(&mut rng, 1, 2),
            random(&mut rng, 3, 2),
        ];
        check(ins, |t, v| {
            let m = t.matmul(v[0], v[1]);
            let a = t.add_row(m, v[2]);
            let b = t.mul_row(a, v[2]);
            let c = t.tanh(b);
            let d = t.sub(c, v[3]);
            let e = t.mul(d, v[3]);
            let f = t.scale(e, 1.7);
            let g = t.add_scalar(f, 0.3);
            let s = t.sigmoid(g);
            let tr = t.transpose(s);
            weighted(t, tr, 9)
        });
    }

    #[test]
    fn normalization_and_softmax_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        check(vec![random(&mut rng, 3, 5)], |t, v| {
            let n = t.layer_norm(v[0], 1e-5);
            let s = t.softmax_rows(n);
            weighted(t, s, 4)
        });
    }

    #[test]
    fn structural_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        check(vec![random(&mut rng, 2, 5), random(&mut rng, 1, 1)], |t, v| {
            let a = t.slice_cols(v[0], 1, 3);
            let b = t.broadcast(v[1], 2, 2);
            let c = t.concat_cols(&[a, b, v[0]]);
            weighted(t, c, 5)
        });
    }

    #[test]
    fn group_lse_and_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        check(vec![random(&mut rng, 3, 5), random(&mut rng, 1, 1)], |t, v| {
            let g = t.group_lse(v[0], &[vec![0, 3], vec![], vec![1], vec![2, 4]], -6.0);
            let u = t.broadcast(v[1], 3, 1);
            let logits = t.concat_cols(&[g, u]);
            t.softmax_ce(logits, &[0, 4, 2])
        });
    }

    #[test]
    fn clamp_blocks_gradient_outside_bounds() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::from_vec(1, 3, vec![-2.0, 0.5, 3.0]));
        let c = t.clamp(x, 0.0, 1.0);
        let s = sum_all(&mut t, c);
        let g = t.backward(s);
        assert_eq!(g[x.0].data, vec![0.0, 1.0, 0.0]);
        assert_eq!(t.value(c).data, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn group_lse_values() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::from_vec(1, 2, vec![0.0, -2.0]));
        let g = t.group_lse(x, &[vec![0, 1], vec![]], -6.0);
        let v = t.value(g);
        assert!((v.data[0] + 0.5662).abs() < 1e-4);
        assert_eq!(v.data[1], -6.0);
    }
}
