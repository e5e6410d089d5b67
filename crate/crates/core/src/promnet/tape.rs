//! Reverse-mode accumulation over a recorded graph of matrix operations.
//!
//! Every forward call appends a node holding its value; `backward` walks the
//! nodes in reverse, pushing adjoints to the inputs that need gradients.

use super::tensor::Mat;

pub type NodeId = usize;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

/// Which attention entries are allowed. Masked entries get weight exactly 0.
#[derive(Debug, Clone, Default)]
pub struct Mask {
    pub causal: bool,
    /// Per key column: `true` when the key may be attended to.
    pub keys: Option<Vec<bool>>,
}

impl Mask {
    fn allowed(&self, r: usize, c: usize) -> bool {
        (!self.causal || c <= r) && self.keys.as_ref().is_none_or(|k| k[c])
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    MatMulBt(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Scale(NodeId, f64),
    Gelu(NodeId),
    Sigmoid(NodeId),
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId, xhat: Mat, inv_std: Vec<f64> },
    Softmax(NodeId),
    Gather { table: NodeId, ids: Vec<usize> },
    SliceCols { x: NodeId, start: usize },
    ConcatCols(Vec<NodeId>),
    Transpose(NodeId),
    BroadcastRows(NodeId),
    Mul(NodeId, NodeId),
    AffineScalar { x: NodeId, w: NodeId, b: NodeId },
    RowNormalize(NodeId),
    Mix { g: NodeId, pv: NodeId, pc: NodeId },
    NllMean { p: NodeId, targets: Vec<usize> },
    BceLogitsMean { z: NodeId, labels: Vec<f64>, mask: Vec<bool> },
    Axpy { a: NodeId, b: NodeId, coef: f64 },
}

#[derive(Debug)]
struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
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

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id].value
    }

    fn push(&mut self, value: Mat, op: Op, inputs: &[NodeId]) -> NodeId {
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        self.nodes.len() - 1
    }

    /// A leaf; `trainable` leaves receive gradients.
    pub fn leaf(&mut self, value: Mat, trainable: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: trainable,
        });
        self.nodes.len() - 1
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b), &[a, b])
    }

    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul_bt(self.value(b));
        self.push(v, Op::MatMulBt(a, b), &[a, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b), &[a, b])
    }

    /// `a + bias` with a `1 x C` bias broadcast over rows.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        let b = self.value(bias);
        assert_eq!((1, v.cols), b.shape(), "bias shape");
        for r in 0..v.rows {
            for (x, y) in v.row_mut(r).iter_mut().zip(&b.data) {
                *x += y;
            }
        }
        self.push(v, Op::AddBias(a, bias), &[a, bias])
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s), &[a])
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let v = self
            .value(a)
            .map(|x| 0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh()));
        self.push(v, Op::Gelu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a), &[a])
    }

    /// Row-wise layer normalization with `1 x C` gain and bias.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let mut xhat = Mat::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mu = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            for (o, v) in xhat.row_mut(r).iter_mut().zip(row) {
                *o = (v - mu) * is;
            }
            inv_std.push(is);
        }
        let g = self.value(gain);
        let b = self.value(bias);
        let mut out = xhat.clone();
        for r in 0..rows {
            for ((o, gv), bv) in out.row_mut(r).iter_mut().zip(&g.data).zip(&b.data) {
                *o = *o * gv + bv;
            }
        }
        self.push(out, Op::LayerNorm { x, gain, bias, xhat, inv_std }, &[x, gain, bias])
    }

    /// Row-wise softmax; masked entries are exactly zero. Every row must
    /// keep at least one allowed entry.
    pub fn softmax(&mut self, x: NodeId, mask: &Mask) -> NodeId {
        let xv = self.value(x);
        let mut out = Mat::zeros(xv.rows, xv.cols);
        for r in 0..xv.rows {
            let row = xv.row(r);
            let mx = (0..xv.cols)
                .filter(|&c| mask.allowed(r, c))
                .map(|c| row[c])
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(mx.is_finite() || mx.is_nan(), "softmax row {r} fully masked");
            let o = out.row_mut(r);
            let mut z = 0.0;
            for c in 0..xv.cols {
                if mask.allowed(r, c) {
                    o[c] = (row[c] - mx).exp();
                    z += o[c];
                }
            }
            for v in o.iter_mut() {
                *v /= z;
            }
        }
        self.push(out, Op::Softmax(x), &[x])
    }

    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let t = self.value(table);
        let mut out = Mat::zeros(ids.len(), t.cols);
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(id));
        }
        self.push(out, Op::Gather { table, ids: ids.to_vec() }, &[table])
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let xv = self.value(x);
        let mut out = Mat::zeros(xv.rows, len);
        for r in 0..xv.rows {
            out.row_mut(r).copy_from_slice(&xv.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols { x, start }, &[x])
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Mat::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for &p in parts {
                let pv = self.value(p);
                assert_eq!(pv.rows, rows, "concat row mismatch");
                out.row_mut(r)[c0..c0 + pv.cols].copy_from_slice(pv.row(r));
                c0 += pv.cols;
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).transpose();
        self.push(v, Op::Transpose(x), &[x])
    }

    /// Repeats a `1 x C` row `rows` times.
    pub fn broadcast_rows(&mut self, x: NodeId, rows: usize) -> NodeId {
        let xv = self.value(x);
        assert_eq!(xv.rows, 1, "broadcast_rows expects a single row");
        let mut out = Mat::zeros(rows, xv.cols);
        for r in 0..rows {
            out.row_mut(r).copy_from_slice(&xv.data);
        }
        self.push(out, Op::BroadcastRows(x), &[x])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let av = self.value(a);
        let bv = self.value(b);
        assert_eq!(av.shape(), bv.shape(), "mul shape mismatch");
        let data = av.data.iter().zip(&bv.data).map(|(x, y)| x * y).collect();
        let v = Mat::from_vec(av.rows, av.cols, data);
        self.push(v, Op::Mul(a, b), &[a, b])
    }

    /// `x * w + b` elementwise with `1 x 1` nodes `w` and `b`.
    pub fn affine_scalar(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let wv = self.value(w).data[0];
        let bv = self.value(b).data[0];
        let v = self.value(x).map(|v| v * wv + bv);
        self.push(v, Op::AffineScalar { x, w, b }, &[x, w, b])
    }

    /// Divides every row by its sum. Rows must have a positive sum.
    pub fn row_normalize(&mut self, x: NodeId) -> NodeId {
        let mut v = self.value(x).clone();
        for r in 0..v.rows {
            let s: f64 = v.row(r).iter().sum();
            for e in v.row_mut(r) {
                *e /= s;
            }
        }
        self.push(v, Op::RowNormalize(x), &[x])
    }

    /// `g * pv + (1 - g) * pc` with a per-row gate `g` of shape `R x 1`.
    pub fn mix(&mut self, g: NodeId, pv: NodeId, pc: NodeId) -> NodeId {
        let gv = self.value(g);
        let a = self.value(pv);
        let b = self.value(pc);
        assert_eq!(a.shape(), b.shape(), "mix shape mismatch");
        assert_eq!((a.rows, 1), gv.shape(), "mix gate shape");
        let mut out = Mat::zeros(a.rows, a.cols);
        for r in 0..a.rows {
            let gr = gv.data[r];
            for ((o, x), y) in out.row_mut(r).iter_mut().zip(a.row(r)).zip(b.row(r)) {
                *o = gr * x + (1.0 - gr) * y;
            }
        }
        self.push(out, Op::Mix { g, pv, pc }, &[g, pv, pc])
    }

    /// Mean over rows of `-ln p[r, targets[r]]`.
    pub fn nll_mean(&mut self, p: NodeId, targets: &[usize]) -> NodeId {
        let pv = self.value(p);
        assert_eq!(pv.rows, targets.len(), "one target per row");
        let s: f64 = targets.iter().enumerate().map(|(r, &t)| -pv.at(r, t).ln()).sum();
        let v = Mat::scalar(s / targets.len() as f64);
        self.push(v, Op::NllMean { p, targets: targets.to_vec() }, &[p])
    }

    /// Mean binary cross-entropy of `sigmoid(z)` against `labels` over the
    /// masked-in entries, computed from the logits.
    pub fn bce_logits_mean(&mut self, z: NodeId, labels: &[f64], mask: &[bool]) -> NodeId {
        let zv = self.value(z);
        assert_eq!(zv.len(), labels.len());
        let m = mask.iter().filter(|&&b| b).count().max(1);
        let s: f64 = zv
            .data
            .iter()
            .zip(labels)
            .zip(mask)
            .filter(|(_, &k)| k)
            .map(|((&z, &c), _)| softplus(z) - c * z)
            .sum();
        let v = Mat::scalar(s / m as f64);
        self.push(
            v,
            Op::BceLogitsMean { z, labels: labels.to_vec(), mask: mask.to_vec() },
            &[z],
        )
    }

    /// `a + coef * b`
    pub fn axpy(&mut self, a: NodeId, b: NodeId, coef: f64) -> NodeId {
        let mut v = self.value(a).clone();
        for (x, y) in v.data.iter_mut().zip(&self.value(b).data) {
            *x += coef * y;
        }
        self.push(v, Op::Axpy { a, b, coef }, &[a, b])
    }

    /// Adjoints of every node with respect to the scalar `root`.
    pub fn backward(&self, root: NodeId) -> Vec<Option<Mat>> {
        assert_eq!(self.value(root).shape(), (1, 1), "backward root must be scalar");
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root] = Some(Mat::scalar(1.0));
        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].needs_grad {
                continue;
            }
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        grads
    }

    fn acc(&self, grads: &mut [Option<Mat>], id: NodeId, g: Mat) {
        if !self.nodes[id].needs_grad {
            return;
        }
        match &mut grads[id] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id].needs_grad
    }

    fn propagate(&self, id: NodeId, g: &Mat, grads: &mut [Option<Mat>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                if self.wants(a) {
                    self.acc(grads, a, g.matmul_bt(self.value(b)));
                }
                if self.wants(b) {
                    self.acc(grads, b, self.value(a).matmul_at(g));
                }
            }
            &Op::MatMulBt(a, b) => {
                if self.wants(a) {
                    self.acc(grads, a, g.matmul(self.value(b)));
                }
                if self.wants(b) {
                    self.acc(grads, b, g.matmul_at(self.value(a)));
                }
            }
            &Op::Add(a, b) => {
                self.acc(grads, a, g.clone());
                self.acc(grads, b, g.clone());
            }
            &Op::AddBias(a, bias) => {
                self.acc(grads, a, g.clone());
                if self.wants(bias) {
                    self.acc(grads, bias, col_sums(g));
                }
            }
            &Op::Scale(a, s) => self.acc(grads, a, g.map(|v| v * s)),
            &Op::Gelu(a) => {
                let x = self.value(a);
                let data = x
                    .data
                    .iter()
                    .zip(&g.data)
                    .map(|(&x, &gy)| {
                        let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
                        let d = 0.5 * (1.0 + t)
                            + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x);
                        gy * d
                    })
                    .collect();
                self.acc(grads, a, Mat::from_vec(x.rows, x.cols, data));
            }
            &Op::Sigmoid(a) => {
                let y = &node.value;
                let data = y.data.iter().zip(&g.data).map(|(&y, &gy)| gy * y * (1.0 - y)).collect();
                self.acc(grads, a, Mat::from_vec(y.rows, y.cols, data));
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let (rows, cols) = xhat.shape();
                let gv = self.value(*gain);
                if self.wants(*gain) {
                    let mut dg = Mat::zeros(1, cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            dg.data[c] += g.at(r, c) * xhat.at(r, c);
                        }
                    }
                    self.acc(grads, *gain, dg);
                }
                if self.wants(*bias) {
                    self.acc(grads, *bias, col_sums(g));
                }
                if self.wants(*x) {
                    let n = cols as f64;
                    let mut dx = Mat::zeros(rows, cols);
                    for r in 0..rows {
                        let dxh: Vec<f64> = (0..cols).map(|c| g.at(r, c) * gv.data[c]).collect();
                        let s1: f64 = dxh.iter().sum();
                        let s2: f64 = dxh.iter().zip(xhat.row(r)).map(|(a, b)| a * b).sum();
                        for c in 0..cols {
                            *dx.at_mut(r, c) = inv_std[r] / n * (n * dxh[c] - s1 - xhat.at(r, c) * s2);
                        }
                    }
                    self.acc(grads, *x, dx);
                }
            }
            &Op::Softmax(x) => {
                let y = &node.value;
                let mut dx = Mat::zeros(y.rows, y.cols);
                for r in 0..y.rows {
                    let dot: f64 = y.row(r).iter().zip(g.row(r)).map(|(a, b)| a * b).sum();
                    for c in 0..y.cols {
                        *dx.at_mut(r, c) = y.at(r, c) * (g.at(r, c) - dot);
                    }
                }
                self.acc(grads, x, dx);
            }
            Op::Gather { table, ids } => {
                let t = self.value(*table);
                let mut dt = Mat::zeros(t.rows, t.cols);
                for (r, &i) in ids.iter().enumerate() {
                    for (o, v) in dt.row_mut(i).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                self.acc(grads, *table, dt);
            }
            &Op::SliceCols { x, start } => {
                let xv = self.value(x);
                let mut dx = Mat::zeros(xv.rows, xv.cols);
                for r in 0..xv.rows {
                    dx.row_mut(r)[start..start + g.cols].copy_from_slice(g.row(r));
                }
                self.acc(grads, x, dx);
            }
            Op::ConcatCols(parts) => {
                let mut c0 = 0;
                for &p in parts {
                    let cols = self.value(p).cols;
                    if self.wants(p) {
                        let mut dp = Mat::zeros(g.rows, cols);
                        for r in 0..g.rows {
                            dp.row_mut(r).copy_from_slice(&g.row(r)[c0..c0 + cols]);
                        }
                        self.acc(grads, p, dp);
                    }
                    c0 += cols;
                }
            }
            &Op::Transpose(x) => self.acc(grads, x, g.transpose()),
            &Op::BroadcastRows(x) => self.acc(grads, x, col_sums(g)),
            &Op::Mul(a, b) => {
                let av = self.value(a);
                let bv = self.value(b);
                if self.wants(a) {
                    let d = g.data.iter().zip(&bv.data).map(|(x, y)| x * y).collect();
                    self.acc(grads, a, Mat::from_vec(g.rows, g.cols, d));
                }
                if self.wants(b) {
                    let d = g.data.iter().zip(&av.data).map(|(x, y)| x * y).collect();
                    self.acc(grads, b, Mat::from_vec(g.rows, g.cols, d));
                }
            }
            &Op::AffineScalar { x, w, b } => {
                let xv = self.value(x);
                let wv = self.value(w).data[0];
                if self.wants(x) {
                    self.acc(grads, x, g.map(|v| v * wv));
                }
                if self.wants(w) {
                    let s: f64 = g.data.iter().zip(&xv.data).map(|(a, b)| a * b).sum();
                    self.acc(grads, w, Mat::scalar(s));
                }
                if self.wants(b) {
                    self.acc(grads, b, Mat::scalar(g.sum()));
                }
            }
            &Op::RowNormalize(x) => {
                let xv = self.value(x);
                let y = &node.value;
                let mut dx = Mat::zeros(y.rows, y.cols);
                for r in 0..y.rows {
                    let s: f64 = xv.row(r).iter().sum();
                    let dot: f64 = y.row(r).iter().zip(g.row(r)).map(|(a, b)| a * b).sum();
                    for c in 0..y.cols {
                        *dx.at_mut(r, c) = (g.at(r, c) - dot) / s;
                    }
                }
                self.acc(grads, x, dx);
            }
            &Op::Mix { g: gate, pv, pc } => {
                let gv = self.value(gate);
                let a = self.value(pv);
                let b = self.value(pc);
                if self.wants(gate) {
                    let mut dg = Mat::zeros(a.rows, 1);
                    for r in 0..a.rows {
                        dg.data[r] = g.row(r).iter().zip(a.row(r)).zip(b.row(r)).map(|((d, x), y)| d * (x - y)).sum();
                    }
                    self.acc(grads, gate, dg);
                }
                if self.wants(pv) {
                    let mut d = g.clone();
                    for r in 0..d.rows {
                        let gr = gv.data[r];
                        d.row_mut(r).iter_mut().for_each(|v| *v *= gr);
                    }
                    self.acc(grads, pv, d);
                }
                if self.wants(pc) {
                    let mut d = g.clone();
                    for r in 0..d.rows {
                        let gr = 1.0 - gv.data[r];
                        d.row_mut(r).iter_mut().for_each(|v| *v *= gr);
                    }
                    self.acc(grads, pc, d);
                }
            }
            Op::NllMean { p, targets } => {
                let pv = self.value(*p);
                let mut dp = Mat::zeros(pv.rows, pv.cols);
                let scale = g.data[0] / targets.len() as f64;
                for (r, &t) in targets.iter().enumerate() {
                    *dp.at_mut(r, t) = -scale / pv.at(r, t);
                }
                self.acc(grads, *p, dp);
            }
            Op::BceLogitsMean { z, labels, mask } => {
                let zv = self.value(*z);
                let m = mask.iter().filter(|&&b| b).count().max(1) as f64;
                let scale = g.data[0] / m;
                let data = zv
                    .data
                    .iter()
                    .zip(labels)
                    .zip(mask)
                    .map(|((&z, &c), &k)| if k { scale * (sigmoid(z) - c) } else { 0.0 })
                    .collect();
                self.acc(grads, *z, Mat::from_vec(zv.rows, zv.cols, data));
            }
            &Op::Axpy { a, b, coef } => {
                self.acc(grads, a, g.clone());
                if self.wants(b) {
                    self.acc(grads, b, g.map(|v| v * coef));
                }
            }
        }
    }
}

fn col_sums(g: &Mat) -> Mat {
    let mut out = Mat::zeros(1, g.cols);
    for r in 0..g.rows {
        for (o, v) in out.data.iter_mut().zip(g.row(r)) {
            *o += v;
        }
    }
    out
}
