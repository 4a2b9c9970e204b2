//! Operation tape and the reverse pass.

use super::tensor::Tensor;
use super::{AdError, AdResult, LAYER_NORM_EPSILON};
use crate::real::Real;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(VarId, VarId),
    Transpose(VarId),
    Add(VarId, VarId),
    Sub(VarId, VarId),
    Mul(VarId, VarId),
    Scale(VarId),
    BiasAdd(VarId, VarId),
    Silu(VarId),
    Relu(VarId),
    Concat { parts: Vec<VarId>, axis: usize },
    SliceCols { x: VarId, start: usize, end: usize },
    RepeatCols { x: VarId },
    GatherRows { x: VarId, indices: Vec<usize> },
    ScatterAddRows { rows: VarId, indices: Vec<usize> },
    SumAxis { x: VarId, axis: usize },
    MeanAxis { x: VarId, axis: usize },
    // The mask is consumed in forward; masked outputs are exactly 0, which
    // already zeroes their backward contribution.
    SoftmaxRows { x: VarId },
    LayerNorm { x: VarId, gain: VarId, bias: VarId },
    NormalizeRows(VarId),
    Mse { pred: VarId, target: VarId },
    L1 { pred: VarId, target: VarId, valid: Option<Vec<bool>> },
    BceWithLogits { logits: VarId, targets: VarId, valid: Option<Vec<bool>> },
    NllDiagonal(VarId),
}

struct Node<F> {
    value: Tensor<F>,
    op: Op,
    requires_grad: bool,
    /// Scalar payload for `Scale`.
    factor: F,
}

/// Gradient store produced by the backward pass, aligned with tape ids.
pub struct Gradients<F> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Real> Gradients<F> {
    pub fn get(&self, id: VarId) -> Option<&Tensor<F>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: VarId) -> Option<Tensor<F>> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}

/// Records a forward computation; one tape owns one backward pass.
pub struct Tape<F: Real> {
    nodes: Vec<Node<F>>,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: VarId) -> &Tensor<F> {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: VarId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, value: Tensor<F>, op: Op, requires_grad: bool) -> VarId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            factor: F::zero(),
        });
        VarId(self.nodes.len() - 1)
    }

    fn flows(&self, inputs: &[VarId]) -> bool {
        inputs.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// Insert a value that does not receive gradients.
    pub fn constant(&mut self, value: Tensor<F>) -> VarId {
        self.push(value, Op::Leaf, false)
    }

    /// Insert a leaf value; gradients accumulate into it when the flag is set.
    pub fn input(&mut self, value: Tensor<F>, requires_grad: bool) -> VarId {
        self.push(value, Op::Leaf, requires_grad)
    }

    // ── linear algebra ──────────────────────────────────────────────

    pub fn matmul(&mut self, a: VarId, b: VarId) -> AdResult<VarId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.is_matrix() || !tb.is_matrix() || ta.shape()[1] != tb.shape()[0] {
            return Err(AdError::ShapeMismatch {
                op: "matmul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let value = ta.matmul_value(tb);
        let rg = self.flows(&[a, b]);
        Ok(self.push(value, Op::Matmul(a, b), rg))
    }

    pub fn transpose(&mut self, x: VarId) -> AdResult<VarId> {
        let t = self.value(x);
        if !t.is_matrix() {
            return Err(AdError::BadShape {
                op: "transpose",
                shape: t.shape().to_vec(),
                detail: "matrix required".into(),
            });
        }
        let value = t.transposed();
        let rg = self.flows(&[x]);
        Ok(self.push(value, Op::Transpose(x), rg))
    }

    // ── elementwise suite ───────────────────────────────────────────

    fn binary_same_shape(
        &mut self,
        op_name: &'static str,
        a: VarId,
        b: VarId,
        f: impl Fn(F, F) -> F,
        op: Op,
    ) -> AdResult<VarId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(AdError::ShapeMismatch {
                op: op_name,
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let value = ta.zip(tb, f);
        let rg = self.flows(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> AdResult<VarId> {
        self.binary_same_shape("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> AdResult<VarId> {
        self.binary_same_shape("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> AdResult<VarId> {
        self.binary_same_shape("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: VarId, factor: F) -> AdResult<VarId> {
        let value = self.value(x).map(|v| v * factor);
        let rg = self.flows(&[x]);
        let id = self.push(value, Op::Scale(x), rg);
        self.nodes[id.0].factor = factor;
        Ok(id)
    }

    /// Add a rank-1 bias along the last axis of a matrix.
    pub fn bias_add(&mut self, x: VarId, bias: VarId) -> AdResult<VarId> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if !tx.is_matrix() || tb.rank() != 1 || tb.numel() != tx.shape()[1] {
            return Err(AdError::ShapeMismatch {
                op: "bias_add",
                left: tx.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let cols = tx.shape()[1];
        let data: Vec<F> = tx
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + tb.data()[i % cols])
            .collect();
        let value = Tensor::new(tx.shape().to_vec(), data).expect("shape preserved");
        let rg = self.flows(&[x, bias]);
        Ok(self.push(value, Op::BiasAdd(x, bias), rg))
    }

    pub fn silu(&mut self, x: VarId) -> AdResult<VarId> {
        let value = self.value(x).map(|v| v * sigmoid(v));
        let rg = self.flows(&[x]);
        Ok(self.push(value, Op::Silu(x), rg))
    }

    pub fn relu(&mut self, x: VarId) -> AdResult<VarId> {
        let value = self.value(x).map(|v| if v > F::zero() { v } else { F::zero() });
        let rg = self.flows(&[x]);
        Ok(self.push(value, Op::Relu(x), rg))
    }

    /// Concatenate matrices along `axis` (0 = stack rows, 1 = widen columns).
    pub fn concat(&mut self, parts: &[VarId], axis: usize) -> AdResult<VarId> {
        if parts.is_empty() || axis > 1 {
            return Err(AdError::BadShape {
                op: "concat",
                shape: vec![parts.len()],
                detail: "needs at least one part and axis in {0,1}".into(),
            });
        }
        let first = self.value(parts[0]).shape().to_vec();
        if first.len() != 2 {
            return Err(AdError::BadShape {
                op: "concat",
                shape: first,
                detail: "matrix required".into(),
            });
        }
        let fixed = 1 - axis;
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != 2 || s[fixed] != first[fixed] {
                return Err(AdError::ShapeMismatch {
                    op: "concat",
                    left: first,
                    right: s.to_vec(),
                });
            }
        }
        let total: usize = parts.iter().map(|&p| self.value(p).shape()[axis]).sum();
        let (rows, cols) = if axis == 0 {
            (total, first[1])
        } else {
            (first[0], total)
        };
        let mut data = vec![F::zero(); rows * cols];
        if axis == 0 {
            let mut at = 0;
            for &p in parts {
                let t = self.value(p);
                data[at..at + t.numel()].copy_from_slice(t.data());
                at += t.numel();
            }
        } else {
            let mut col_at = 0;
            for &p in parts {
                let t = self.value(p);
                let w = t.shape()[1];
                for r in 0..rows {
                    data[r * cols + col_at..r * cols + col_at + w].copy_from_slice(t.row(r));
                }
                col_at += w;
            }
        }
        let value = Tensor::matrix(rows, cols, data).expect("sized above");
        let rg = self.flows(parts);
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    pub fn slice_cols(&mut self, x: VarId, start: usize, end: usize) -> AdResult<VarId> {
        let t = self.value(x);
        if !t.is_matrix() || start >= end || end > t.shape()[1] {
            return Err(AdError::BadShape {
                op: "slice_cols",
                shape: t.shape().to_vec(),
                detail: format!("columns {start}..{end}"),
            });
        }
        let rows = t.shape()[0];
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&t.row(r)[start..end]);
        }
        let value = Tensor::matrix(rows, end - start, data).expect("sized above");
        let rg = self.flows(&[x]);
        Ok(self.push(value, Op::SliceCols { x, start, end }, rg))
    }

    /// Broadcast an (R, 1) column across `copies` columns.
    pub fn repeat_cols(&mut self, x: VarId, copies: usize) -> AdResult<VarId> {
        let t = self.value(x);
        if !t.is_matrix() || t.shape()[1] != 1 || copies == 0 {
            return Err(AdError::BadShape {
                op: "repeat_cols",
                shape: t.shape().to_vec(),
                detail: format!("needs an (R,1) column and copies > 0, got copies={copies}"),
            });
        }
        let rows = t.shape()[0];
        let mut data = Vec::with_capacity(rows * copies);
        for r in 0..rows {
            let v = t.data()[r];
            data.extend(std::iter::repeat(v).take(copies));
        }
        let value = Tensor::matrix(rows, copies, data).expect("sized above");
        let rg = self.flows(&[x]);
        Ok(self.push(value, Op::RepeatCols { x }, rg))
    }

    pub fn gather_rows(&mut self, x: VarId, indices: &[usize]) -> AdResult<VarId> {
        let t = self.value(x);
        if !t.is_matrix() {
            return Err(AdError::BadShape {
                op: "gather_rows",
                shape: t.shape().to_vec(),
                detail: "matrix required".into(),
            });
        }
        let rows = t.shape()[0];
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(AdError::IndexOutOfRange {
                op: "gather_rows",
                index: bad,
                bound: rows,
            });
        }
        let cols = t.shape()[1];
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(t.row(i));
        }
        let value = Tensor::matrix(indices.len(), cols, data).expect("sized above");
        let rg = self.flows(&[x]);
        Ok(self.push(
            value,
            Op::GatherRows {
                x,
                indices: indices.to_vec(),
            },
            rg,
        ))
    }

    /// Sum rows of `rows` that share an index into a fresh (target_rows, C)
    /// array. Adjoint of `gather_rows`.
    pub fn scatter_add_rows(
        &mut self,
        target_rows: usize,
        indices: &[usize],
        rows: VarId,
    ) -> AdResult<VarId> {
        let t = self.value(rows);
        if !t.is_matrix() || t.shape()[0] != indices.len() {
            return Err(AdError::BadShape {
                op: "scatter_add_rows",
                shape: t.shape().to_vec(),
                detail: format!("{} indices for {} rows", indices.len(), t.view_rows()),
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= target_rows) {
            return Err(AdError::IndexOutOfRange {
                op: "scatter_add_rows",
                index: bad,
                bound: target_rows,
            });
        }
        let cols = t.shape()[1];
        let mut data = vec![F::zero(); target_rows * cols];
        for (e, &i) in indices.iter().enumerate() {
            for (d, &s) in data[i * cols..(i + 1) * cols].iter_mut().zip(t.row(e)) {
                *d += s;
            }
        }
        let value = Tensor::matrix(target_rows, cols, data).expect("sized above");
        let rg = self.flows(&[rows]);
        Ok(self.push(
            value,
            Op::ScatterAddRows {
                rows,
                indices: indices.to_vec(),
            },
            rg,
        ))
    }

    // ── reductions ──────────────────────────────────────────────────

    fn reduce_axis(&mut self, x: VarId, axis: usize, mean: bool) -> AdResult<VarId> {
        let t = self.value(x);
        if !t.is_matrix() || axis > 1 {
            return Err(AdError::BadShape {
                op: if mean { "mean_axis" } else { "sum_axis" },
                shape: t.shape().to_vec(),
                detail: format!("matrix required, axis {axis}"),
            });
        }
        let (r, c) = (t.shape()[0], t.shape()[1]);
        let (or, oc) = if axis == 0 { (1, c) } else { (r, 1) };
        let denom = F::from_f64(if axis == 0 { r as f64 } else { c as f64 });
        let mut data = vec![F::zero(); or * oc];
        for i in 0..r {
            for j in 0..c {
                let o = if axis == 0 { j } else { i };
                data[o] += t.at(i, j);
            }
        }
        if mean {
            for d in &mut data {
                *d /= denom;
            }
        }
        let value = Tensor::matrix(or, oc, data).expect("sized above");
        let rg = self.flows(&[x]);
        let op = if mean {
            Op::MeanAxis { x, axis }
        } else {
            Op::SumAxis { x, axis }
        };
        Ok(self.push(value, op, rg))
    }

    pub fn sum_axis(&mut self, x: VarId, axis: usize) -> AdResult<VarId> {
        self.reduce_axis(x, axis, false)
    }

    pub fn mean_axis(&mut self, x: VarId, axis: usize) -> AdResult<VarId> {
        self.reduce_axis(x, axis, true)
    }

    /// Scalar (1,1) sum of every entry of a matrix.
    pub fn sum_all(&mut self, x: VarId) -> AdResult<VarId> {
        let rows = self.sum_axis(x, 0)?;
        self.sum_axis(rows, 1)
    }

    // ── normalization ───────────────────────────────────────────────

    /// Row-wise softmax with max-subtraction; `valid`, when given, marks the
    /// entries that participate (false entries get weight exactly 0).
    pub fn softmax_rows(&mut self, x: VarId, valid: Option<&[bool]>) -> AdResult<VarId> {
        let t = self.value(x);
        if t.rank() == 0 || t.rank() > 2 {
            return Err(AdError::BadShape {
                op: "softmax_rows",
                shape: t.shape().to_vec(),
                detail: "rank 1 or 2 required".into(),
            });
        }
        let cols = t.view_cols();
        if let Some(v) = valid {
            if v.len() != cols {
                return Err(AdError::ShapeMismatch {
                    op: "softmax_rows",
                    left: t.shape().to_vec(),
                    right: vec![v.len()],
                });
            }
            if v.iter().all(|&keep| !keep) {
                return Err(AdError::DegenerateRow { row: 0 });
            }
        }
        let rows = t.view_rows();
        let mut data = vec![F::zero(); t.numel()];
        for r in 0..rows {
            let row = t.row(r);
            let mut max = F::neg_infinity();
            for (j, &v) in row.iter().enumerate() {
                if valid.map_or(true, |m| m[j]) && v > max {
                    max = v;
                }
            }
            let mut sum = F::zero();
            for (j, &v) in row.iter().enumerate() {
                if valid.map_or(true, |m| m[j]) {
                    let e = (v - max).exp();
                    data[r * cols + j] = e;
                    sum += e;
                }
            }
            for j in 0..cols {
                data[r * cols + j] /= sum;
            }
        }
        let value = Tensor::new(t.shape().to_vec(), data).expect("shape preserved");
        let rg = self.flows(&[x]);
        Ok(self.push(value, Op::SoftmaxRows { x }, rg))
    }

    /// Normalize over the last axis to mean 0 / variance 1 (population,
    /// epsilon-guarded), then apply the per-column affine `gain`/`bias`.
    pub fn layer_norm(&mut self, x: VarId, gain: VarId, bias: VarId) -> AdResult<VarId> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let cols = tx.view_cols();
        if tx.rank() == 0 || tx.rank() > 2 || cols == 0 {
            return Err(AdError::BadShape {
                op: "layer_norm",
                shape: tx.shape().to_vec(),
                detail: "rank 1 or 2 with non-empty last axis required".into(),
            });
        }
        if tg.numel() != cols || tb.numel() != cols {
            return Err(AdError::ShapeMismatch {
                op: "layer_norm",
                left: tx.shape().to_vec(),
                right: tg.shape().to_vec(),
            });
        }
        let eps = F::from_f64(LAYER_NORM_EPSILON);
        let rows = tx.view_rows();
        let mut data = vec![F::zero(); tx.numel()];
        for r in 0..rows {
            let row = tx.row(r);
            let (mean, inv_std) = row_moments(row, eps);
            for j in 0..cols {
                let xhat = (row[j] - mean) * inv_std;
                data[r * cols + j] = xhat * tg.data()[j] + tb.data()[j];
            }
        }
        let value = Tensor::new(tx.shape().to_vec(), data).expect("shape preserved");
        let rg = self.flows(&[x, gain, bias]);
        Ok(self.push(value, Op::LayerNorm { x, gain, bias }, rg))
    }

    /// Scale each row to unit L2 norm (floored at 1e-12).
    pub fn normalize_rows(&mut self, x: VarId) -> AdResult<VarId> {
        let t = self.value(x);
        if !t.is_matrix() {
            return Err(AdError::BadShape {
                op: "normalize_rows",
                shape: t.shape().to_vec(),
                detail: "matrix required".into(),
            });
        }
        let (rows, cols) = (t.shape()[0], t.shape()[1]);
        let mut data = vec![F::zero(); t.numel()];
        for r in 0..rows {
            let norm = row_norm(t.row(r));
            for j in 0..cols {
                data[r * cols + j] = t.at(r, j) / norm;
            }
        }
        let value = Tensor::matrix(rows, cols, data).expect("shape preserved");
        let rg = self.flows(&[x]);
        Ok(self.push(value, Op::NormalizeRows(x), rg))
    }

    // ── losses ──────────────────────────────────────────────────────

    pub fn mse(&mut self, pred: VarId, target: VarId) -> AdResult<VarId> {
        let (tp, tt) = (self.value(pred), self.value(target));
        if tp.shape() != tt.shape() {
            return Err(AdError::ShapeMismatch {
                op: "mse",
                left: tp.shape().to_vec(),
                right: tt.shape().to_vec(),
            });
        }
        if tp.numel() == 0 {
            return Err(AdError::DegenerateLoss { op: "mse" });
        }
        let n = F::from_f64(tp.numel() as f64);
        let mut sum = F::zero();
        for (&p, &t) in tp.data().iter().zip(tt.data()) {
            let d = p - t;
            sum += d * d;
        }
        let value = Tensor::scalar(sum / n);
        let rg = self.flows(&[pred, target]);
        Ok(self.push(value, Op::Mse { pred, target }, rg))
    }

    /// Mean absolute error over valid entries; `valid` flags participating
    /// entries in flattened order.
    pub fn l1(&mut self, pred: VarId, target: VarId, valid: Option<&[bool]>) -> AdResult<VarId> {
        let (tp, tt) = (self.value(pred), self.value(target));
        if tp.shape() != tt.shape() || valid.is_some_and(|v| v.len() != tp.numel()) {
            return Err(AdError::ShapeMismatch {
                op: "l1",
                left: tp.shape().to_vec(),
                right: tt.shape().to_vec(),
            });
        }
        let n_valid = valid.map_or(tp.numel(), |v| v.iter().filter(|&&b| b).count());
        if n_valid == 0 {
            return Err(AdError::DegenerateLoss { op: "l1" });
        }
        let n = F::from_f64(n_valid as f64);
        let mut sum = F::zero();
        for (i, (&p, &t)) in tp.data().iter().zip(tt.data()).enumerate() {
            if valid.map_or(true, |v| v[i]) {
                sum += (p - t).abs();
            }
        }
        let value = Tensor::scalar(sum / n);
        let rg = self.flows(&[pred, target]);
        Ok(self.push(
            value,
            Op::L1 {
                pred,
                target,
                valid: valid.map(|v| v.to_vec()),
            },
            rg,
        ))
    }

    /// Numerically stable binary cross entropy on logits, averaged over valid
    /// entries.
    pub fn bce_with_logits(
        &mut self,
        logits: VarId,
        targets: VarId,
        valid: Option<&[bool]>,
    ) -> AdResult<VarId> {
        let (tl, tt) = (self.value(logits), self.value(targets));
        if tl.shape() != tt.shape() || valid.is_some_and(|v| v.len() != tl.numel()) {
            return Err(AdError::ShapeMismatch {
                op: "bce_with_logits",
                left: tl.shape().to_vec(),
                right: tt.shape().to_vec(),
            });
        }
        let n_valid = valid.map_or(tl.numel(), |v| v.iter().filter(|&&b| b).count());
        if n_valid == 0 {
            return Err(AdError::DegenerateLoss { op: "bce_with_logits" });
        }
        let n = F::from_f64(n_valid as f64);
        let mut sum = F::zero();
        for (i, (&x, &y)) in tl.data().iter().zip(tt.data()).enumerate() {
            if valid.map_or(true, |v| v[i]) {
                // max(x,0) - x*y + ln(1 + e^{-|x|})
                let pos = if x > F::zero() { x } else { F::zero() };
                sum += pos - x * y + (F::one() + (-x.abs()).exp()).ln();
            }
        }
        let value = Tensor::scalar(sum / n);
        let rg = self.flows(&[logits, targets]);
        Ok(self.push(
            value,
            Op::BceWithLogits {
                logits,
                targets,
                valid: valid.map(|v| v.to_vec()),
            },
            rg,
        ))
    }

    /// Mean over rows of `logsumexp(row) - diagonal`, the cross entropy of
    /// matching row i to column i. Input must be square.
    pub fn nll_diagonal(&mut self, logits: VarId) -> AdResult<VarId> {
        let t = self.value(logits);
        if !t.is_matrix() || t.shape()[0] != t.shape()[1] || t.shape()[0] == 0 {
            return Err(AdError::BadShape {
                op: "nll_diagonal",
                shape: t.shape().to_vec(),
                detail: "non-empty square matrix required".into(),
            });
        }
        let b = t.shape()[0];
        let mut sum = F::zero();
        for r in 0..b {
            sum += log_sum_exp(t.row(r)) - t.at(r, r);
        }
        let value = Tensor::scalar(sum / F::from_f64(b as f64));
        let rg = self.flows(&[logits]);
        Ok(self.push(value, Op::NllDiagonal(logits), rg))
    }

    // ── reverse pass ────────────────────────────────────────────────

    /// Run the reverse pass from a scalar root, seeding its gradient with 1.
    pub fn backward(&self, root: VarId) -> AdResult<Gradients<F>> {
        let root_val = self.value(root);
        if root_val.numel() != 1 {
            return Err(AdError::NonScalarOutput {
                shape: root_val.shape().to_vec(),
            });
        }
        let seed = Tensor::new(root_val.shape().to_vec(), vec![F::one()]).expect("scalar");
        self.backward_with_seed(root, seed)
    }

    /// Reverse pass with an explicit output cotangent.
    pub fn backward_with_seed(&self, root: VarId, seed: Tensor<F>) -> AdResult<Gradients<F>> {
        if seed.shape() != self.value(root).shape() {
            return Err(AdError::ShapeMismatch {
                op: "backward",
                left: seed.shape().to_vec(),
                right: self.value(root).shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor<F>>> = vec![None; self.nodes.len()];
        if self.nodes[root.0].requires_grad {
            grads[root.0] = Some(seed);
        }
        for idx in (0..=root.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(idx, &g, &mut grads);
            // A leaf keeps its accumulated gradient; interior nodes release
            // theirs once consumed.
            if matches!(self.nodes[idx].op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<F>>], id: VarId, delta: Tensor<F>) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(g) => g.accumulate(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&self, idx: usize, g: &Tensor<F>, grads: &mut [Option<Tensor<F>>]) {
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.nodes[a.0].requires_grad {
                    self.accumulate(grads, *a, g.matmul_value(&tb.transposed()));
                }
                if self.nodes[b.0].requires_grad {
                    self.accumulate(grads, *b, ta.transposed().matmul_value(g));
                }
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.transposed()),
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.nodes[a.0].requires_grad {
                    self.accumulate(grads, *a, g.zip(tb, |gv, bv| gv * bv));
                }
                if self.nodes[b.0].requires_grad {
                    self.accumulate(grads, *b, g.zip(ta, |gv, av| gv * av));
                }
            }
            Op::Scale(a) => {
                let factor = self.nodes[idx].factor;
                self.accumulate(grads, *a, g.map(|v| v * factor));
            }
            Op::BiasAdd(x, bias) => {
                if self.nodes[x.0].requires_grad {
                    self.accumulate(grads, *x, g.clone());
                }
                if self.nodes[bias.0].requires_grad {
                    let cols = self.value(*bias).numel();
                    let mut db = vec![F::zero(); cols];
                    for (i, &gv) in g.data().iter().enumerate() {
                        db[i % cols] += gv;
                    }
                    self.accumulate(grads, *bias, Tensor::vector(db));
                }
            }
            Op::Silu(a) => {
                let ta = self.value(*a);
                let dx = g.zip(ta, |gv, x| {
                    let s = sigmoid(x);
                    gv * s * (F::one() + x * (F::one() - s))
                });
                self.accumulate(grads, *a, dx);
            }
            Op::Relu(a) => {
                let ta = self.value(*a);
                let dx = g.zip(ta, |gv, x| if x > F::zero() { gv } else { F::zero() });
                self.accumulate(grads, *a, dx);
            }
            Op::Concat { parts, axis } => {
                if *axis == 0 {
                    let mut at = 0;
                    for &p in parts {
                        let t = self.value(p);
                        let n = t.numel();
                        if self.nodes[p.0].requires_grad {
                            let slab = g.data()[at..at + n].to_vec();
                            let dt = Tensor::new(t.shape().to_vec(), slab).expect("sized");
                            self.accumulate(grads, p, dt);
                        }
                        at += n;
                    }
                } else {
                    let cols = self.value(VarId(idx)).shape()[1];
                    let rows = self.value(VarId(idx)).shape()[0];
                    let mut col_at = 0;
                    for &p in parts {
                        let w = self.value(p).shape()[1];
                        if self.nodes[p.0].requires_grad {
                            let mut data = Vec::with_capacity(rows * w);
                            for r in 0..rows {
                                data.extend_from_slice(
                                    &g.data()[r * cols + col_at..r * cols + col_at + w],
                                );
                            }
                            let dt = Tensor::matrix(rows, w, data).expect("sized");
                            self.accumulate(grads, p, dt);
                        }
                        col_at += w;
                    }
                }
            }
            Op::SliceCols { x, start, end } => {
                let tx = self.value(*x);
                let (rows, cols) = (tx.shape()[0], tx.shape()[1]);
                let w = end - start;
                let mut data = vec![F::zero(); rows * cols];
                for r in 0..rows {
                    data[r * cols + start..r * cols + end]
                        .copy_from_slice(&g.data()[r * w..(r + 1) * w]);
                }
                self.accumulate(grads, *x, Tensor::matrix(rows, cols, data).expect("sized"));
            }
            Op::RepeatCols { x } => {
                let rows = self.value(*x).shape()[0];
                let copies = g.shape()[1];
                let mut data = vec![F::zero(); rows];
                for r in 0..rows {
                    for j in 0..copies {
                        data[r] += g.at(r, j);
                    }
                }
                self.accumulate(grads, *x, Tensor::matrix(rows, 1, data).expect("sized"));
            }
            Op::GatherRows { x, indices } => {
                let tx = self.value(*x);
                let (rows, cols) = (tx.shape()[0], tx.shape()[1]);
                let mut data = vec![F::zero(); rows * cols];
                for (e, &i) in indices.iter().enumerate() {
                    for (d, &gv) in data[i * cols..(i + 1) * cols].iter_mut().zip(g.row(e)) {
                        *d += gv;
                    }
                }
                self.accumulate(grads, *x, Tensor::matrix(rows, cols, data).expect("sized"));
            }
            Op::ScatterAddRows { rows, indices } => {
                let cols = g.shape()[1];
                let mut data = Vec::with_capacity(indices.len() * cols);
                for &i in indices {
                    data.extend_from_slice(g.row(i));
                }
                self.accumulate(
                    grads,
                    *rows,
                    Tensor::matrix(indices.len(), cols, data).expect("sized"),
                );
            }
            Op::SumAxis { x, axis } | Op::MeanAxis { x, axis } => {
                let tx = self.value(*x);
                let (rows, cols) = (tx.shape()[0], tx.shape()[1]);
                let mean = matches!(self.nodes[idx].op, Op::MeanAxis { .. });
                let denom = F::from_f64(if *axis == 0 { rows as f64 } else { cols as f64 });
                let mut data = vec![F::zero(); rows * cols];
                for r in 0..rows {
                    for c in 0..cols {
                        let gv = if *axis == 0 { g.at(0, c) } else { g.at(r, 0) };
                        data[r * cols + c] = if mean { gv / denom } else { gv };
                    }
                }
                self.accumulate(grads, *x, Tensor::matrix(rows, cols, data).expect("sized"));
            }
            Op::SoftmaxRows { x } => {
                // dX = y ⊙ (dY − ⟨dY, y⟩) per row; masked entries have y = 0.
                let y = self.value(VarId(idx));
                let (rows, cols) = (y.view_rows(), y.view_cols());
                let mut data = vec![F::zero(); y.numel()];
                for r in 0..rows {
                    let mut dot = F::zero();
                    for j in 0..cols {
                        dot += g.data()[r * cols + j] * y.data()[r * cols + j];
                    }
                    for j in 0..cols {
                        let yj = y.data()[r * cols + j];
                        data[r * cols + j] = yj * (g.data()[r * cols + j] - dot);
                    }
                }
                self.accumulate(
                    grads,
                    *x,
                    Tensor::new(y.shape().to_vec(), data).expect("shape preserved"),
                );
            }
            Op::LayerNorm { x, gain, bias } => {
                let tx = self.value(*x);
                let tg = self.value(*gain);
                let (rows, cols) = (tx.view_rows(), tx.view_cols());
                let eps = F::from_f64(LAYER_NORM_EPSILON);
                let cn = F::from_f64(cols as f64);
                let mut dx = vec![F::zero(); tx.numel()];
                let mut dgain = vec![F::zero(); cols];
                let mut dbias = vec![F::zero(); cols];
                for r in 0..rows {
                    let row = tx.row(r);
                    let (mean, inv_std) = row_moments(row, eps);
                    let mut sum_dxhat = F::zero();
                    let mut sum_dxhat_xhat = F::zero();
                    let mut xhat = vec![F::zero(); cols];
                    let mut dxhat = vec![F::zero(); cols];
                    for j in 0..cols {
                        xhat[j] = (row[j] - mean) * inv_std;
                        let gv = g.data()[r * cols + j];
                        dgain[j] += gv * xhat[j];
                        dbias[j] += gv;
                        dxhat[j] = gv * tg.data()[j];
                        sum_dxhat += dxhat[j];
                        sum_dxhat_xhat += dxhat[j] * xhat[j];
                    }
                    for j in 0..cols {
                        dx[r * cols + j] = inv_std
                            * (dxhat[j] - sum_dxhat / cn - xhat[j] * sum_dxhat_xhat / cn);
                    }
                }
                if self.nodes[x.0].requires_grad {
                    self.accumulate(
                        grads,
                        *x,
                        Tensor::new(tx.shape().to_vec(), dx).expect("shape preserved"),
                    );
                }
                if self.nodes[gain.0].requires_grad {
                    self.accumulate(grads, *gain, Tensor::vector(dgain));
                }
                if self.nodes[bias.0].requires_grad {
                    self.accumulate(grads, *bias, Tensor::vector(dbias));
                }
            }
            Op::NormalizeRows(x) => {
                let tx = self.value(*x);
                let y = self.value(VarId(idx));
                let (rows, cols) = (tx.shape()[0], tx.shape()[1]);
                let mut data = vec![F::zero(); tx.numel()];
                for r in 0..rows {
                    let norm = row_norm(tx.row(r));
                    let mut dot = F::zero();
                    for j in 0..cols {
                        dot += g.at(r, j) * y.at(r, j);
                    }
                    for j in 0..cols {
                        data[r * cols + j] = (g.at(r, j) - dot * y.at(r, j)) / norm;
                    }
                }
                self.accumulate(grads, *x, Tensor::matrix(rows, cols, data).expect("sized"));
            }
            Op::Mse { pred, target } => {
                let (tp, tt) = (self.value(*pred), self.value(*target));
                let gs = g.item();
                let n = F::from_f64(tp.numel() as f64);
                let two = F::from_f64(2.0);
                if self.nodes[pred.0].requires_grad {
                    let dp = tp.zip(tt, |p, t| gs * two * (p - t) / n);
                    self.accumulate(grads, *pred, dp);
                }
                if self.nodes[target.0].requires_grad {
                    let dt = tp.zip(tt, |p, t| -gs * two * (p - t) / n);
                    self.accumulate(grads, *target, dt);
                }
            }
            Op::L1 { pred, target, valid } => {
                let (tp, tt) = (self.value(*pred), self.value(*target));
                let gs = g.item();
                let n_valid = valid
                    .as_ref()
                    .map_or(tp.numel(), |v| v.iter().filter(|&&b| b).count());
                let n = F::from_f64(n_valid as f64);
                let signed = |i: usize, p: F, t: F| {
                    if valid.as_ref().map_or(true, |v| v[i]) {
                        let d = p - t;
                        if d > F::zero() {
                            gs / n
                        } else if d < F::zero() {
                            -gs / n
                        } else {
                            F::zero()
                        }
                    } else {
                        F::zero()
                    }
                };
                if self.nodes[pred.0].requires_grad {
                    let data: Vec<F> = tp
                        .data()
                        .iter()
                        .zip(tt.data())
                        .enumerate()
                        .map(|(i, (&p, &t))| signed(i, p, t))
                        .collect();
                    self.accumulate(
                        grads,
                        *pred,
                        Tensor::new(tp.shape().to_vec(), data).expect("shape preserved"),
                    );
                }
                if self.nodes[target.0].requires_grad {
                    let data: Vec<F> = tp
                        .data()
                        .iter()
                        .zip(tt.data())
                        .enumerate()
                        .map(|(i, (&p, &t))| -signed(i, p, t))
                        .collect();
                    self.accumulate(
                        grads,
                        *target,
                        Tensor::new(tt.shape().to_vec(), data).expect("shape preserved"),
                    );
                }
            }
            Op::BceWithLogits { logits, targets, valid } => {
                let (tl, tt) = (self.value(*logits), self.value(*targets));
                let gs = g.item();
                let n_valid = valid
                    .as_ref()
                    .map_or(tl.numel(), |v| v.iter().filter(|&&b| b).count());
                let n = F::from_f64(n_valid as f64);
                if self.nodes[logits.0].requires_grad {
                    let data: Vec<F> = tl
                        .data()
                        .iter()
                        .zip(tt.data())
                        .enumerate()
                        .map(|(i, (&x, &y))| {
                            if valid.as_ref().map_or(true, |v| v[i]) {
                                gs * (sigmoid(x) - y) / n
                            } else {
                                F::zero()
                            }
                        })
                        .collect();
                    self.accumulate(
                        grads,
                        *logits,
                        Tensor::new(tl.shape().to_vec(), data).expect("shape preserved"),
                    );
                }
                if self.nodes[targets.0].requires_grad {
                    let data: Vec<F> = tl
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| {
                            if valid.as_ref().map_or(true, |v| v[i]) {
                                -gs * x / n
                            } else {
                                F::zero()
                            }
                        })
                        .collect();
                    self.accumulate(
                        grads,
                        *targets,
                        Tensor::new(tt.shape().to_vec(), data).expect("shape preserved"),
                    );
                }
            }
            Op::NllDiagonal(logits) => {
                let t = self.value(*logits);
                let b = t.shape()[0];
                let gs = g.item();
                let bn = F::from_f64(b as f64);
                let mut data = vec![F::zero(); t.numel()];
                for r in 0..b {
                    let row = t.row(r);
                    let lse = log_sum_exp(row);
                    for j in 0..b {
                        let soft = (row[j] - lse).exp();
                        let delta = if r == j { F::one() } else { F::zero() };
                        data[r * b + j] = gs * (soft - delta) / bn;
                    }
                }
                self.accumulate(grads, *logits, Tensor::matrix(b, b, data).expect("sized"));
            }
        }
    }
}

fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

fn log_sum_exp<F: Real>(row: &[F]) -> F {
    let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
    let sum = row.iter().map(|&v| (v - max).exp()).fold(F::zero(), |a, b| a + b);
    max + sum.ln()
}

fn row_moments<F: Real>(row: &[F], eps: F) -> (F, F) {
    let n = F::from_f64(row.len() as f64);
    let mean = row.iter().cloned().fold(F::zero(), |a, b| a + b) / n;
    let var = row
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .fold(F::zero(), |a, b| a + b)
        / n;
    (mean, F::one() / (var + eps).sqrt())
}

fn row_norm<F: Real>(row: &[F]) -> F {
    let sq = row.iter().map(|&v| v * v).fold(F::zero(), |a, b| a + b);
    sq.sqrt().max(F::from_f64(1e-12))
}
