use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{gemm, Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub enum BatchNormMode {
    /// Normalize with the statistics of the current batch.
    Train { eps: f64 },
    /// Normalize with fixed statistics.
    Eval { mean: Vec<f64>, var: Vec<f64>, eps: f64 },
}

/// Per-column statistics of a training-mode batch normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Population variance.
    pub var: Vec<f64>,
    pub rows: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScaleByScalar(Var, Var),
    RowScale(Var, Var),
    Gather(Var, Rc<Vec<usize>>),
    ScatterAdd(Var, Rc<Vec<usize>>),
    PRelu(Var, Var),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SegmentSoftmax(Var, Rc<Vec<usize>>),
    Sum(Var),
    BceWithLogits(Var, Rc<Tensor>),
    CrossEntropy(Var, Rc<Vec<usize>>),
    Mse(Var, Rc<Tensor>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records operations for one forward pass; [`Tape::backward`] runs the
/// reverse sweep.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every recorded value.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// A differentiable input.
    pub fn var(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// `a[m x k] * b[k x n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k, k2, n) = (av.rows(), av.cols(), bv.rows(), bv.cols());
        if k != k2 {
            return Err(mismatch("matmul", av, bv));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), false, &mut out, false);
        let needs = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), needs))
    }

    /// Adds a length-`d` bias to every row of `x[n x d]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.len() != xv.cols() {
            return Err(mismatch("add_bias", xv, bv));
        }
        let d = xv.cols();
        let mut out = xv.data().to_vec();
        for row in out.chunks_mut(d.max(1)) {
            for (o, b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let shape = xv.shape().to_vec();
        let needs = self.needs(&[x, bias]);
        Ok(self.push(Tensor::new(shape, out)?, Op::AddBias(x, bias), needs))
    }

    /// `x W + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add_bias(y, b),
            None => Ok(y),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.len() != bv.len() || av.rows() != bv.rows() {
            return Err(mismatch("add", av, bv));
        }
        let out: Vec<f64> = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let shape = av.shape().to_vec();
        let needs = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(shape, out)?, Op::Add(a, b), needs))
    }

    /// Sum of several same-shaped values.
    pub fn add_all(&mut self, vars: &[Var]) -> Result<Var> {
        let mut it = vars.iter().copied();
        let mut acc = it.next().expect("add_all of nothing");
        for v in it {
            acc = self.add(acc, v)?;
        }
        Ok(acc)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if !av.same_shape(bv) {
            return Err(mismatch("mul", av, bv));
        }
        let out: Vec<f64> = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let shape = av.shape().to_vec();
        let needs = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(shape, out)?, Op::Mul(a, b), needs))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).map(|v| v * factor);
        let needs = self.needs(&[x]);
        self.push(out, Op::Scale(x, factor), needs)
    }

    /// Multiplies every entry of `x` by the single entry of `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        let sv = self.value(s);
        if sv.len() != 1 {
            return Err(mismatch("scale_by", self.value(x), sv));
        }
        let f = sv.item();
        let out = self.value(x).map(|v| v * f);
        let needs = self.needs(&[x, s]);
        Ok(self.push(out, Op::ScaleByScalar(x, s), needs))
    }

    /// Multiplies row `i` of `x[n x d]` by `w[i]`, `w` holding `n` values.
    pub fn row_scale(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if wv.len() != xv.rows() {
            return Err(mismatch("row_scale", xv, wv));
        }
        let d = xv.cols();
        let mut out = xv.data().to_vec();
        for (i, row) in out.chunks_mut(d.max(1)).enumerate().take(xv.rows()) {
            let f = wv.data()[i];
            row.iter_mut().for_each(|v| *v *= f);
        }
        let shape = xv.shape().to_vec();
        let needs = self.needs(&[x, w]);
        Ok(self.push(Tensor::new(shape, out)?, Op::RowScale(x, w), needs))
    }

    /// Rows `index[0], index[1], ...` of `x`.
    pub fn gather_rows(&mut self, x: Var, index: Rc<Vec<usize>>) -> Result<Var> {
        let xv = self.value(x);
        let (n, d) = (xv.rows(), xv.cols());
        let mut out = Vec::with_capacity(index.len() * d);
        for &i in index.iter() {
            if i >= n {
                return Err(TensorError::IndexOutOfRange { index: i, len: n });
            }
            out.extend_from_slice(xv.row(i));
        }
        let needs = self.needs(&[x]);
        Ok(self.push(Tensor::new(vec![index.len(), d], out)?, Op::Gather(x, index), needs))
    }

    /// `out[index[i]] += x[i]` into `n_out` zero rows.
    pub fn scatter_add_rows(&mut self, x: Var, index: Rc<Vec<usize>>, n_out: usize) -> Result<Var> {
        let xv = self.value(x);
        let d = xv.cols();
        if index.len() != xv.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "scatter_add_rows",
                lhs: xv.shape().to_vec(),
                rhs: vec![index.len()],
            });
        }
        let mut out = vec![0.0; n_out * d];
        for (r, &t) in index.iter().enumerate() {
            if t >= n_out {
                return Err(TensorError::IndexOutOfRange { index: t, len: n_out });
            }
            let src = xv.row(r);
            for (o, s) in out[t * d..(t + 1) * d].iter_mut().zip(src) {
                *o += s;
            }
        }
        let needs = self.needs(&[x]);
        Ok(self.push(Tensor::new(vec![n_out, d], out)?, Op::ScatterAdd(x, index), needs))
    }

    /// Sums rows of `x` per segment; `segment[i]` names the output row of
    /// input row `i`.
    pub fn segment_sum(&mut self, x: Var, segment: Rc<Vec<usize>>, n_segments: usize) -> Result<Var> {
        self.scatter_add_rows(x, segment, n_segments)
    }

    /// Mean of rows per segment; empty segments give zero rows.
    pub fn segment_mean(&mut self, x: Var, segment: Rc<Vec<usize>>, n_segments: usize) -> Result<Var> {
        let mut counts = vec![0usize; n_segments];
        for &s in segment.iter() {
            if s < n_segments {
                counts[s] += 1;
            }
        }
        let sums = self.segment_sum(x, segment, n_segments)?;
        let inv: Vec<f64> = counts.iter().map(|&c| if c == 0 { 0.0 } else { 1.0 / c as f64 }).collect();
        let w = self.constant(Tensor::new(vec![n_segments, 1], inv)?);
        self.row_scale(sums, w)
    }

    /// Parameterized ReLU with one slope per column (or a single shared
    /// slope). The derivative at zero is taken as the slope.
    pub fn prelu(&mut self, x: Var, slope: Var) -> Result<Var> {
        let (xv, av) = (self.value(x), self.value(slope));
        let d = xv.cols();
        if av.len() != d && av.len() != 1 {
            return Err(mismatch("prelu", xv, av));
        }
        let a = av.data();
        let out: Vec<f64> = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v > 0.0 {
                    v
                } else {
                    let j = if a.len() == 1 { 0 } else { i % d };
                    a[j] * v
                }
            })
            .collect();
        let shape = xv.shape().to_vec();
        let needs = self.needs(&[x, slope]);
        Ok(self.push(Tensor::new(shape, out)?, Op::PRelu(x, slope), needs))
    }

    /// Inverted dropout. The mask is drawn from a ChaCha stream seeded with
    /// `seed`; outside training, or with `p == 0`, this is the identity.
    pub fn dropout(&mut self, x: Var, p: f64, training: bool, seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::InvalidProbability(p));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let xv = self.value(x);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..xv.len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let mask = self.constant(Tensor::new(xv.shape().to_vec(), mask)?);
        self.mul(x, mask)
    }

    /// Column-wise batch normalization of `x[n x d]` with affine `gamma`,
    /// `beta`. In training mode the batch statistics are returned so the
    /// caller can update its running estimates.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: &BatchNormMode,
    ) -> Result<(Var, Option<BatchStats>)> {
        let xv = self.value(x);
        let (n, d) = (xv.rows(), xv.cols());
        let (gv, bv) = (self.value(gamma), self.value(beta));
        if gv.len() != d || bv.len() != d {
            return Err(mismatch("batch_norm", xv, gv));
        }
        let (mean, var, eps, train) = match mode {
            BatchNormMode::Train { eps } => {
                if n < 2 {
                    return Err(TensorError::DegenerateBatch(n));
                }
                let mut mean = vec![0.0; d];
                for row in xv.data().chunks(d) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0; d];
                for row in xv.data().chunks(d) {
                    for j in 0..d {
                        let c = row[j] - mean[j];
                        var[j] += c * c;
                    }
                }
                var.iter_mut().for_each(|v| *v /= n as f64);
                (mean, var, *eps, true)
            }
            BatchNormMode::Eval { mean, var, eps } => {
                if mean.len() != d || var.len() != d {
                    return Err(TensorError::ShapeMismatch {
                        op: "batch_norm",
                        lhs: xv.shape().to_vec(),
                        rhs: vec![mean.len()],
                    });
                }
                (mean.clone(), var.clone(), *eps, false)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = vec![0.0; n * d];
        let mut out = vec![0.0; n * d];
        let (g, b) = (gv.data(), bv.data());
        for i in 0..n {
            for j in 0..d {
                let h = (xv.data()[i * d + j] - mean[j]) * inv_std[j];
                xhat[i * d + j] = h;
                out[i * d + j] = g[j] * h + b[j];
            }
        }
        let shape = xv.shape().to_vec();
        let needs = self.needs(&[x, gamma, beta]);
        let v = self.push(
            Tensor::new(shape, out)?,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            },
            needs,
        );
        let stats = train.then_some(BatchStats { mean, var, rows: n });
        Ok((v, stats))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let n = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.rows() != n {
                return Err(mismatch("concat_cols", self.value(parts[0]), pv));
            }
            total += pv.cols();
        }
        let mut out = Vec::with_capacity(n * total);
        for i in 0..n {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        let needs = self.needs(parts);
        Ok(self.push(Tensor::new(vec![n, total], out)?, Op::ConcatCols(parts.to_vec()), needs))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let d = self.value(parts[0]).cols();
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let pv = self.value(p);
            if pv.cols() != d {
                return Err(mismatch("concat_rows", self.value(parts[0]), pv));
            }
            rows += pv.rows();
            out.extend_from_slice(pv.data());
        }
        let needs = self.needs(parts);
        Ok(self.push(Tensor::new(vec![rows, d], out)?, Op::ConcatRows(parts.to_vec()), needs))
    }

    /// Softmax of a score column within each segment.
    pub fn segment_softmax(&mut self, scores: Var, segment: Rc<Vec<usize>>, n_segments: usize) -> Result<Var> {
        let sv = self.value(scores);
        if sv.len() != segment.len() {
            return Err(TensorError::ShapeMismatch {
                op: "segment_softmax",
                lhs: sv.shape().to_vec(),
                rhs: vec![segment.len()],
            });
        }
        let mut max = vec![f64::NEG_INFINITY; n_segments];
        for (i, &s) in segment.iter().enumerate() {
            if s >= n_segments {
                return Err(TensorError::IndexOutOfRange { index: s, len: n_segments });
            }
            max[s] = max[s].max(sv.data()[i]);
        }
        let mut out: Vec<f64> = segment.iter().enumerate().map(|(i, &s)| (sv.data()[i] - max[s]).exp()).collect();
        let mut total = vec![0.0; n_segments];
        for (i, &s) in segment.iter().enumerate() {
            total[s] += out[i];
        }
        for (i, &s) in segment.iter().enumerate() {
            out[i] /= total[s];
        }
        let needs = self.needs(&[scores]);
        Ok(self.push(
            Tensor::new(vec![segment.len(), 1], out)?,
            Op::SegmentSoftmax(scores, segment),
            needs,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let needs = self.needs(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), needs)
    }

    /// Mean binary cross-entropy on logits, computed as
    /// `max(z, 0) - z t + ln(1 + exp(-|z|))`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Rc<Tensor>) -> Result<Var> {
        let lv = self.value(logits);
        if lv.len() != targets.len() {
            return Err(mismatch("bce_with_logits", lv, &targets));
        }
        let n = lv.len().max(1) as f64;
        let loss: f64 = lv
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&z, &t)| z.max(0.0) - z * t + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / n;
        let needs = self.needs(&[logits]);
        Ok(self.push(Tensor::scalar(loss), Op::BceWithLogits(logits, targets), needs))
    }

    /// Mean softmax cross-entropy of `logits[n x k]` against class indices.
    pub fn cross_entropy(&mut self, logits: Var, classes: Rc<Vec<usize>>) -> Result<Var> {
        let lv = self.value(logits);
        let (n, k) = (lv.rows(), lv.cols());
        if classes.len() != n {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                lhs: lv.shape().to_vec(),
                rhs: vec![classes.len()],
            });
        }
        let mut loss = 0.0;
        for (i, &c) in classes.iter().enumerate() {
            if c >= k {
                return Err(TensorError::IndexOutOfRange { index: c, len: k });
            }
            let row = lv.row(i);
            loss += log_sum_exp(row) - row[c];
        }
        loss /= n.max(1) as f64;
        let needs = self.needs(&[logits]);
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy(logits, classes), needs))
    }

    pub fn mse(&mut self, pred: Var, target: Rc<Tensor>) -> Result<Var> {
        let pv = self.value(pred);
        if pv.len() != target.len() {
            return Err(mismatch("mse", pv, &target));
        }
        let n = pv.len().max(1) as f64;
        let loss: f64 = pv.data().iter().zip(target.data()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
        let needs = self.needs(&[pred]);
        Ok(self.push(Tensor::scalar(loss), Op::Mse(pred, target), needs))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let out = &self.nodes[output.0].value;
        grads[output.0] = Some(Tensor::full(out.shape(), 1.0));
        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if self.wants(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, bv.data(), true, &mut da, false);
                    self.accumulate(grads, *a, Tensor::new(av.shape().to_vec(), da).unwrap());
                }
                if self.wants(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, av.data(), true, g.data(), false, &mut db, false);
                    self.accumulate(grads, *b, Tensor::new(bv.shape().to_vec(), db).unwrap());
                }
            }
            Op::AddBias(x, b) => {
                if self.wants(*x) {
                    self.accumulate(grads, *x, g.clone());
                }
                if self.wants(*b) {
                    let bv = self.value(*b);
                    let d = bv.len();
                    let mut db = vec![0.0; d];
                    for row in g.data().chunks(d.max(1)) {
                        for (o, v) in db.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, *b, Tensor::new(bv.shape().to_vec(), db).unwrap());
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.wants(v) {
                        let shape = self.value(v).shape().to_vec();
                        self.accumulate(grads, v, Tensor::new(shape, g.data().to_vec()).unwrap());
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let d: Vec<f64> = g.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *a, Tensor::new(av.shape().to_vec(), d).unwrap());
                }
                if self.wants(*b) {
                    let d: Vec<f64> = g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *b, Tensor::new(bv.shape().to_vec(), d).unwrap());
                }
            }
            Op::Scale(x, f) => {
                let f = *f;
                self.accumulate(grads, *x, g.map(|v| v * f));
            }
            Op::ScaleByScalar(x, s) => {
                let (xv, sv) = (self.value(*x), self.value(*s));
                if self.wants(*x) {
                    let f = sv.item();
                    self.accumulate(grads, *x, g.map(|v| v * f));
                }
                if self.wants(*s) {
                    let ds: f64 = g.data().iter().zip(xv.data()).map(|(a, b)| a * b).sum();
                    self.accumulate(grads, *s, Tensor::new(sv.shape().to_vec(), vec![ds]).unwrap());
                }
            }
            Op::RowScale(x, w) => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let d = xv.cols().max(1);
                if self.wants(*x) {
                    let mut dx = g.data().to_vec();
                    for (i, row) in dx.chunks_mut(d).enumerate() {
                        let f = wv.data()[i];
                        row.iter_mut().for_each(|v| *v *= f);
                    }
                    self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx).unwrap());
                }
                if self.wants(*w) {
                    let dw: Vec<f64> = g
                        .data()
                        .chunks(d)
                        .zip(xv.data().chunks(d))
                        .map(|(gr, xr)| gr.iter().zip(xr).map(|(a, b)| a * b).sum())
                        .collect();
                    self.accumulate(grads, *w, Tensor::new(wv.shape().to_vec(), dw).unwrap());
                }
            }
            Op::Gather(x, index) => {
                let xv = self.value(*x);
                let d = xv.cols();
                let mut dx = vec![0.0; xv.len()];
                for (r, &i) in index.iter().enumerate() {
                    for (o, v) in dx[i * d..(i + 1) * d].iter_mut().zip(&g.data()[r * d..(r + 1) * d]) {
                        *o += v;
                    }
                }
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx).unwrap());
            }
            Op::ScatterAdd(x, index) => {
                let xv = self.value(*x);
                let d = xv.cols();
                let mut dx = Vec::with_capacity(xv.len());
                for &t in index.iter() {
                    dx.extend_from_slice(&g.data()[t * d..(t + 1) * d]);
                }
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx).unwrap());
            }
            Op::PRelu(x, slope) => {
                let (xv, av) = (self.value(*x), self.value(*slope));
                let d = xv.cols().max(1);
                let a = av.data();
                let shared = a.len() == 1;
                if self.wants(*x) {
                    let dx: Vec<f64> = xv
                        .data()
                        .iter()
                        .zip(g.data())
                        .enumerate()
                        .map(|(i, (&v, &gv))| {
                            if v > 0.0 {
                                gv
                            } else {
                                gv * a[if shared { 0 } else { i % d }]
                            }
                        })
                        .collect();
                    self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx).unwrap());
                }
                if self.wants(*slope) {
                    let mut da = vec![0.0; a.len()];
                    for (i, (&v, &gv)) in xv.data().iter().zip(g.data()).enumerate() {
                        if v <= 0.0 {
                            da[if shared { 0 } else { i % d }] += gv * v;
                        }
                    }
                    self.accumulate(grads, *slope, Tensor::new(av.shape().to_vec(), da).unwrap());
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => {
                let xv = self.value(*x);
                let (n, d) = (xv.rows(), xv.cols());
                let gd = g.data();
                let mut dgamma = vec![0.0; d];
                let mut dbeta = vec![0.0; d];
                for i in 0..n {
                    for j in 0..d {
                        dbeta[j] += gd[i * d + j];
                        dgamma[j] += gd[i * d + j] * xhat[i * d + j];
                    }
                }
                if self.wants(*x) {
                    let gam = self.value(*gamma).data();
                    let mut dx = vec![0.0; n * d];
                    for i in 0..n {
                        for j in 0..d {
                            let k = i * d + j;
                            dx[k] = if *train {
                                gam[j] * inv_std[j] / n as f64
                                    * (n as f64 * gd[k] - dbeta[j] - xhat[k] * dgamma[j])
                            } else {
                                gam[j] * inv_std[j] * gd[k]
                            };
                        }
                    }
                    self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx).unwrap());
                }
                if self.wants(*gamma) {
                    let shape = self.value(*gamma).shape().to_vec();
                    self.accumulate(grads, *gamma, Tensor::new(shape, dgamma).unwrap());
                }
                if self.wants(*beta) {
                    let shape = self.value(*beta).shape().to_vec();
                    self.accumulate(grads, *beta, Tensor::new(shape, dbeta).unwrap());
                }
            }
            Op::ConcatCols(parts) => {
                let n = g.rows();
                let total = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let c = pv.cols();
                    if self.wants(p) {
                        let mut dp = Vec::with_capacity(n * c);
                        for i in 0..n {
                            dp.extend_from_slice(&g.data()[i * total + offset..i * total + offset + c]);
                        }
                        self.accumulate(grads, p, Tensor::new(pv.shape().to_vec(), dp).unwrap());
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let len = pv.len();
                    if self.wants(p) {
                        let dp = g.data()[offset..offset + len].to_vec();
                        self.accumulate(grads, p, Tensor::new(pv.shape().to_vec(), dp).unwrap());
                    }
                    offset += len;
                }
            }
            Op::SegmentSoftmax(scores, segment) => {
                let alpha = node.value.data();
                let n_seg = segment.iter().copied().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; n_seg];
                for (i, &s) in segment.iter().enumerate() {
                    dot[s] += alpha[i] * g.data()[i];
                }
                let ds: Vec<f64> = segment
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| alpha[i] * (g.data()[i] - dot[s]))
                    .collect();
                let shape = self.value(*scores).shape().to_vec();
                self.accumulate(grads, *scores, Tensor::new(shape, ds).unwrap());
            }
            Op::Sum(x) => {
                let gv = g.item();
                let shape = self.value(*x).shape().to_vec();
                self.accumulate(grads, *x, Tensor::full(&shape, gv));
            }
            Op::BceWithLogits(logits, targets) => {
                let lv = self.value(*logits);
                let scale = g.item() / lv.len().max(1) as f64;
                let d: Vec<f64> = lv
                    .data()
                    .iter()
                    .zip(targets.data())
                    .map(|(&z, &t)| (sigmoid(z) - t) * scale)
                    .collect();
                self.accumulate(grads, *logits, Tensor::new(lv.shape().to_vec(), d).unwrap());
            }
            Op::CrossEntropy(logits, classes) => {
                let lv = self.value(*logits);
                let (n, k) = (lv.rows(), lv.cols());
                let scale = g.item() / n.max(1) as f64;
                let mut d = vec![0.0; n * k];
                for (i, &c) in classes.iter().enumerate() {
                    let row = lv.row(i);
                    let lse = log_sum_exp(row);
                    for j in 0..k {
                        let p = (row[j] - lse).exp();
                        d[i * k + j] = (p - if j == c { 1.0 } else { 0.0 }) * scale;
                    }
                }
                self.accumulate(grads, *logits, Tensor::new(lv.shape().to_vec(), d).unwrap());
            }
            Op::Mse(pred, target) => {
                let pv = self.value(*pred);
                let scale = 2.0 * g.item() / pv.len().max(1) as f64;
                let d: Vec<f64> = pv.data().iter().zip(target.data()).map(|(p, t)| (p - t) * scale).collect();
                self.accumulate(grads, *pred, Tensor::new(pv.shape().to_vec(), d).unwrap());
            }
        }
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}


#[cfg(test)]
mod grad_tests {
    use super::*;
    use crate::tensor::finite_diff_check;
    use rand::Rng;

    fn rand_t(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    // random-weighted sum so every output coordinate matters
    fn weighted(t: &mut Tape, y: Var, seed: u64) -> Result<Var> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = t.value(y).shape().to_vec();
        let w = t.constant(rand_t(&mut rng, &shape));
        let p = t.mul(y, w)?;
        Ok(t.sum(p))
    }

    fn check<F>(inputs: Vec<Tensor>, f: F)
    where
        F: Fn(&mut Tape, &[Var]) -> Result<Var>,
    {
        let err = finite_diff_check(&inputs, 1e-5, |t, v| {
            let y = f(t, v)?;
            weighted(t, y, 99)
        })
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn every_op_passes_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut r = |s: &[usize]| rand_t(&mut rng, s);
        check(vec![r(&[3, 4]), r(&[4, 2])], |t, v| t.matmul(v[0], v[1]));
        check(vec![r(&[3, 4]), r(&[4])], |t, v| t.add_bias(v[0], v[1]));
        check(vec![r(&[3, 4]), r(&[3, 4])], |t, v| t.add(v[0], v[1]));
        check(vec![r(&[3, 4]), r(&[3, 4])], |t, v| t.mul(v[0], v[1]));
        check(vec![r(&[3, 4])], |t, v| Ok(t.scale(v[0], -1.7)));
        check(vec![r(&[3, 4]), r(&[1, 1])], |t, v| t.scale_by(v[0], v[1]));
        check(vec![r(&[3, 4]), r(&[3, 1])], |t, v| t.row_scale(v[0], v[1]));
        check(vec![r(&[3, 2])], |t, v| t.gather_rows(v[0], Rc::new(vec![2, 0, 2, 1])));
        check(vec![r(&[4, 2])], |t, v| t.scatter_add_rows(v[0], Rc::new(vec![1, 1, 0, 2]), 3));
        check(vec![r(&[4, 2])], |t, v| t.segment_mean(v[0], Rc::new(vec![1, 1, 0, 2]), 4));
        check(vec![r(&[3, 4]), r(&[4])], |t, v| t.prelu(v[0], v[1]));
        check(vec![r(&[3, 4]), r(&[1])], |t, v| t.prelu(v[0], v[1]));
        check(vec![r(&[5, 3]), r(&[3]), r(&[3])], |t, v| {
            Ok(t.batch_norm(v[0], v[1], v[2], &BatchNormMode::Train { eps: 1e-5 })?.0)
        });
        check(vec![r(&[2, 3]), r(&[3]), r(&[3])], |t, v| {
            Ok(t.batch_norm(v[0], v[1], v[2], &BatchNormMode::Train { eps: 1e-5 })?.0)
        });
        check(vec![r(&[2, 3]), r(&[3]), r(&[3])], |t, v| {
            let mode = BatchNormMode::Eval { mean: vec![0.1, -0.2, 0.3], var: vec![0.5, 1.5, 2.0], eps: 1e-5 };
            Ok(t.batch_norm(v[0], v[1], v[2], &mode)?.0)
        });
        check(vec![r(&[3, 2]), r(&[3, 1])], |t, v| t.concat_cols(&[v[0], v[1]]));
        check(vec![r(&[3, 2]), r(&[1, 2])], |t, v| t.concat_rows(&[v[0], v[1]]));
        check(vec![r(&[5, 1])], |t, v| t.segment_softmax(v[0], Rc::new(vec![0, 1, 0, 0, 1]), 2));
        check(vec![r(&[4, 3])], |t, v| t.dropout(v[0], 0.3, true, 5));
        let targets = Rc::new(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
        check(vec![r(&[2, 2])], move |t, v| t.bce_with_logits(v[0], targets.clone()));
        check(vec![r(&[3, 4])], |t, v| t.cross_entropy(v[0], Rc::new(vec![0, 3, 1])));
        let target = Rc::new(Tensor::full(&[3, 1], 0.5));
        check(vec![r(&[3, 1])], move |t, v| t.mse(v[0], target.clone()));
    }
}
