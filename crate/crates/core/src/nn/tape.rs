//! Minimal reverse-mode autodiff tape over [`Tensor`] values.
//!
//! Forward values are computed eagerly as operations are pushed; a
//! backward pass walks the tape in reverse creation order and accumulates
//! gradients deterministically. Every operation checks its result for
//! NaN/Inf and fails with the current context label.

use super::tensor::{dot, matmul, matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};

pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VarId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(VarId, VarId),
    /// A * B^T
    MatMulNt(VarId, VarId),
    Scale(VarId, f64),
    Add(VarId, VarId),
    AddConst(VarId),
    /// Row-wise softmax over the first `valid` columns; masked columns get
    /// exactly zero weight. `valid == 0` yields an all-zero matrix.
    MaskedSoftmaxRows {
        x: VarId,
        valid: usize,
    },
    /// Fused masked softmax and value mixing:
    /// `out = softmax(scores[.., ..valid]) * values`. Reductions run in
    /// ascending score order, so permuting rows of a self-attention input
    /// permutes the output bitwise-identically (for distinct scores).
    AttentionMix {
        scores: VarId,
        values: VarId,
        valid: usize,
        /// Softmax weights saved at forward time for the backward pass.
        weights: Tensor,
    },
    SliceCols {
        x: VarId,
        start: usize,
        width: usize,
    },
    ConcatCols(Vec<VarId>),
    ConcatRows(Vec<VarId>),
    ZeroRowsFrom {
        x: VarId,
        from: usize,
    },
    /// Keep only the first `take` rows.
    SliceRows {
        x: VarId,
        take: usize,
    },
    PadRows {
        x: VarId,
    },
    /// Embedding lookup: output row t is table row ids[t]; rows past
    /// ids.len() are zero.
    Gather {
        table: VarId,
        ids: Vec<usize>,
    },
    /// Single-channel valid convolution: x is [h,w], kernels [c,kh,kw].
    Conv2dValid {
        x: VarId,
        k: VarId,
    },
    Relu(VarId),
    /// [c,h,w] -> [c], mean over each channel.
    GlobalAvgPool(VarId),
    /// y = W x + b with W [out,in], x [in], b [out].
    AffineVec {
        x: VarId,
        w: VarId,
        b: VarId,
    },
    Sigmoid(VarId),
    /// Binary cross-entropy of a scalar probability against a 0/1 label,
    /// with the probability clamped away from 0 and 1.
    BceLoss {
        p: VarId,
        y: f64,
    },
    MeanScalars(Vec<VarId>),
}

struct Node {
    value: Tensor,
    op: Op,
    context: String,
}

/// A single-use computation graph.
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    context: String,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
            context: String::new(),
        }
    }

    /// Label used in non-finite errors for subsequently created nodes.
    pub fn set_context(&mut self, ctx: impl Into<String>) {
        self.context = ctx.into();
    }

    pub fn value(&self, id: VarId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last backward target with respect to `id`.
    pub fn grad(&self, id: VarId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn leaf(&mut self, value: Tensor) -> Result<VarId> {
        self.push(value, Op::Leaf)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<VarId> {
        value.check_finite(&self.context)?;
        let id = VarId(self.nodes.len());
        self.nodes.push(Node {
            value,
            op,
            context: self.context.clone(),
        });
        Ok(id)
    }

    fn shape2(&self, id: VarId, what: &str) -> Result<(usize, usize)> {
        let s = self.value(id).shape();
        if s.len() != 2 {
            return Err(Error::config(format!("{what}: expected a matrix, got rank {}", s.len())));
        }
        Ok((s[0], s[1]))
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (_, ka) = self.shape2(a, "matmul")?;
        let (kb, _) = self.shape2(b, "matmul")?;
        if ka != kb {
            return Err(Error::config(format!(
                "matmul shape mismatch: {:?} x {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let v = matmul(self.value(a), self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_nt(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (_, ka) = self.shape2(a, "matmul_nt")?;
        let (_, kb) = self.shape2(b, "matmul_nt")?;
        if ka != kb {
            return Err(Error::config(format!(
                "matmul_nt shape mismatch: {:?} x {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let v = matmul_nt(self.value(a), self.value(b));
        self.push(v, Op::MatMulNt(a, b))
    }

    pub fn scale(&mut self, x: VarId, c: f64) -> Result<VarId> {
        let mut v = self.value(x).clone();
        for e in v.data_mut() {
            *e *= c;
        }
        self.push(v, Op::Scale(x, c))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::config("add shape mismatch".to_string()));
        }
        let mut v = self.value(a).clone();
        for (e, &o) in v.data_mut().iter_mut().zip(self.value(b).data()) {
            *e += o;
        }
        self.push(v, Op::Add(a, b))
    }

    /// Add a constant tensor (no gradient flows into it).
    pub fn add_const(&mut self, x: VarId, konst: &Tensor) -> Result<VarId> {
        if self.value(x).shape() != konst.shape() {
            return Err(Error::config("add_const shape mismatch".to_string()));
        }
        let mut v = self.value(x).clone();
        for (e, &o) in v.data_mut().iter_mut().zip(konst.data()) {
            *e += o;
        }
        self.push(v, Op::AddConst(x))
    }

    pub fn masked_softmax_rows(&mut self, x: VarId, valid: usize) -> Result<VarId> {
        let (rows, cols) = self.shape2(x, "softmax")?;
        if valid > cols {
            return Err(Error::config(format!(
                "softmax valid length {valid} exceeds {cols} columns"
            )));
        }
        let mut v = Tensor::zeros(&[rows, cols]);
        if valid > 0 {
            let xv = self.value(x).clone();
            let mut order = vec![0usize; valid];
            for r in 0..rows {
                softmax_masked_row(&xv.row(r)[..valid], v.row_mut(r), &mut order);
            }
        }
        self.push(v, Op::MaskedSoftmaxRows { x, valid })
    }

    /// `softmax(scores rows over ..valid) * values` as one operation. See
    /// [`Op::AttentionMix`] for the ordering guarantee.
    pub fn attention_mix(&mut self, scores: VarId, values: VarId, valid: usize) -> Result<VarId> {
        let (rows, cols) = self.shape2(scores, "attention_mix")?;
        let (vrows, d) = self.shape2(values, "attention_mix")?;
        if cols != vrows {
            return Err(Error::config(format!(
                "attention_mix: {cols} score columns vs {vrows} value rows"
            )));
        }
        if valid > cols {
            return Err(Error::config(format!(
                "attention_mix valid length {valid} exceeds {cols} keys"
            )));
        }
        let mut weights = Tensor::zeros(&[rows, cols]);
        let mut out = Tensor::zeros(&[rows, d]);
        if valid > 0 {
            let sv = self.value(scores).clone();
            let vv = self.value(values).clone();
            let mut order = vec![0usize; valid];
            for r in 0..rows {
                softmax_masked_row(&sv.row(r)[..valid], weights.row_mut(r), &mut order);
                let wrow = weights.row(r);
                let orow = out.row_mut(r);
                // Mix values in the same ascending-score order.
                for &j in order.iter() {
                    let w = wrow[j];
                    let vrow = vv.row(j);
                    for c in 0..d {
                        orow[c] += w * vrow[c];
                    }
                }
            }
        }
        self.push(
            out,
            Op::AttentionMix {
                scores,
                values,
                valid,
                weights,
            },
        )
    }

    pub fn slice_cols(&mut self, x: VarId, start: usize, width: usize) -> Result<VarId> {
        let (rows, cols) = self.shape2(x, "slice_cols")?;
        if start + width > cols {
            return Err(Error::config(format!(
                "slice [{start}, {}) out of {cols} columns",
                start + width
            )));
        }
        let xv = self.value(x);
        let mut v = Tensor::zeros(&[rows, width]);
        for r in 0..rows {
            v.row_mut(r).copy_from_slice(&xv.row(r)[start..start + width]);
        }
        self.push(v, Op::SliceCols { x, start, width })
    }

    pub fn concat_cols(&mut self, xs: &[VarId]) -> Result<VarId> {
        let rows = self.shape2(xs[0], "concat_cols")?.0;
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let (r, c) = self.shape2(x, "concat_cols")?;
            if r != rows {
                return Err(Error::config("concat_cols row mismatch".to_string()));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut v = Tensor::zeros(&[rows, total]);
        for r in 0..rows {
            let out = v.row_mut(r);
            let mut off = 0;
            for (&x, &w) in xs.iter().zip(&widths) {
                out[off..off + w].copy_from_slice(self.nodes[x.0].value.row(r));
                off += w;
            }
        }
        self.push(v, Op::ConcatCols(xs.to_vec()))
    }

    pub fn concat_rows(&mut self, xs: &[VarId]) -> Result<VarId> {
        let cols = self.shape2(xs[0], "concat_rows")?.1;
        let mut total = 0;
        for &x in xs {
            let (r, c) = self.shape2(x, "concat_rows")?;
            if c != cols {
                return Err(Error::config("concat_rows column mismatch".to_string()));
            }
            total += r;
        }
        let mut data = Vec::with_capacity(total * cols);
        for &x in xs {
            data.extend_from_slice(self.value(x).data());
        }
        self.push(Tensor::from_vec(&[total, cols], data), Op::ConcatRows(xs.to_vec()))
    }

    /// Zero out all rows at index >= `from`.
    pub fn zero_rows_from(&mut self, x: VarId, from: usize) -> Result<VarId> {
        let (rows, _) = self.shape2(x, "zero_rows_from")?;
        let mut v = self.value(x).clone();
        for r in from..rows {
            v.row_mut(r).fill(0.0);
        }
        self.push(v, Op::ZeroRowsFrom { x, from })
    }

    pub fn slice_rows(&mut self, x: VarId, take: usize) -> Result<VarId> {
        let (rows, cols) = self.shape2(x, "slice_rows")?;
        if take > rows {
            return Err(Error::config(format!("slice_rows take {take} exceeds {rows} rows")));
        }
        let data = self.value(x).data()[..take * cols].to_vec();
        self.push(Tensor::from_vec(&[take, cols], data), Op::SliceRows { x, take })
    }

    /// Extend with zero rows up to `to` rows.
    pub fn pad_rows(&mut self, x: VarId, to: usize) -> Result<VarId> {
        let (rows, cols) = self.shape2(x, "pad_rows")?;
        if to < rows {
            return Err(Error::config(format!("pad_rows target {to} below {rows} rows")));
        }
        let mut data = self.value(x).data().to_vec();
        data.resize(to * cols, 0.0);
        self.push(Tensor::from_vec(&[to, cols], data), Op::PadRows { x })
    }

    pub fn gather(&mut self, table: VarId, ids: &[usize], rows: usize) -> Result<VarId> {
        let (t_rows, d) = self.shape2(table, "gather")?;
        if ids.len() > rows {
            return Err(Error::config("gather id list longer than output".to_string()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= t_rows) {
            return Err(Error::config(format!("gather id {bad} out of table range {t_rows}")));
        }
        let mut v = Tensor::zeros(&[rows, d]);
        for (t, &id) in ids.iter().enumerate() {
            let src = self.nodes[table.0].value.row(id).to_vec();
            v.row_mut(t).copy_from_slice(&src);
        }
        self.push(
            v,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn conv2d_valid(&mut self, x: VarId, k: VarId) -> Result<VarId> {
        let (h, w) = self.shape2(x, "conv")?;
        let ks = self.value(k).shape().to_vec();
        if ks.len() != 3 {
            return Err(Error::config("conv kernels must be [c, kh, kw]".to_string()));
        }
        let (c, kh, kw) = (ks[0], ks[1], ks[2]);
        if kh > h || kw > w {
            return Err(Error::config(format!(
                "conv kernel {kh}x{kw} larger than input {h}x{w}"
            )));
        }
        let (oh, ow) = (h - kh + 1, w - kw + 1);
        let mut v = Tensor::zeros(&[c, oh, ow]);
        {
            let xv = &self.nodes[x.0].value;
            let kv = &self.nodes[k.0].value;
            let vd = v.data_mut();
            for ch in 0..c {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut acc = 0.0;
                        for a in 0..kh {
                            let xrow = &xv.data()[(i + a) * w + j..(i + a) * w + j + kw];
                            let krow = &kv.data()[ch * kh * kw + a * kw..ch * kh * kw + a * kw + kw];
                            acc += dot(xrow, krow);
                        }
                        vd[ch * oh * ow + i * ow + j] = acc;
                    }
                }
            }
        }
        self.push(v, Op::Conv2dValid { x, k })
    }

    pub fn relu(&mut self, x: VarId) -> Result<VarId> {
        let mut v = self.value(x).clone();
        for e in v.data_mut() {
            if *e < 0.0 {
                *e = 0.0;
            }
        }
        self.push(v, Op::Relu(x))
    }

    pub fn global_avg_pool(&mut self, x: VarId) -> Result<VarId> {
        let s = self.value(x).shape().to_vec();
        if s.len() != 3 {
            return Err(Error::config("global_avg_pool expects [c,h,w]".to_string()));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let area = (h * w) as f64;
        let xv = self.value(x).data();
        let data: Vec<f64> = (0..c)
            .map(|ch| xv[ch * h * w..(ch + 1) * h * w].iter().sum::<f64>() / area)
            .collect();
        self.push(Tensor::from_vec(&[c], data), Op::GlobalAvgPool(x))
    }

    pub fn affine_vec(&mut self, x: VarId, w: VarId, b: VarId) -> Result<VarId> {
        let xs = self.value(x).shape().to_vec();
        let (out_dim, in_dim) = self.shape2(w, "affine")?;
        if xs != [in_dim] || self.value(b).shape() != [out_dim] {
            return Err(Error::config(format!(
                "affine shape mismatch: W {:?}, x {:?}, b {:?}",
                self.value(w).shape(),
                xs,
                self.value(b).shape()
            )));
        }
        let wv = self.value(w);
        let xv = self.value(x).data();
        let bv = self.value(b).data();
        let data: Vec<f64> = (0..out_dim).map(|o| dot(wv.row(o), xv) + bv[o]).collect();
        self.push(Tensor::from_vec(&[out_dim], data), Op::AffineVec { x, w, b })
    }

    pub fn sigmoid(&mut self, x: VarId) -> Result<VarId> {
        let mut v = self.value(x).clone();
        for e in v.data_mut() {
            *e = 1.0 / (1.0 + (-*e).exp());
        }
        self.push(v, Op::Sigmoid(x))
    }

    pub fn bce_loss(&mut self, p: VarId, y: f64) -> Result<VarId> {
        if self.value(p).len() != 1 {
            return Err(Error::config("bce_loss expects a scalar probability".to_string()));
        }
        let pv = self.value(p).data()[0];
        let pc = clamp_prob(pv)?;
        let loss = -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
        self.push(Tensor::scalar(loss), Op::BceLoss { p, y })
    }

    pub fn mean_scalars(&mut self, xs: &[VarId]) -> Result<VarId> {
        if xs.is_empty() {
            return Err(Error::config("mean over empty set".to_string()));
        }
        let sum: f64 = xs.iter().map(|&x| self.value(x).data()[0]).sum();
        self.push(
            Tensor::scalar(sum / xs.len() as f64),
            Op::MeanScalars(xs.to_vec()),
        )
    }

    /// Reverse pass from a scalar target. Gradients accumulate in reverse
    /// creation order, so repeated runs are bit-identical.
    pub fn backward(&mut self, target: VarId) -> Result<()> {
        if self.value(target).len() != 1 {
            return Err(Error::config("backward target must be scalar".to_string()));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[target.0] = Some(Tensor::from_vec(
            self.value(target).shape(),
            vec![1.0],
        ));

        for i in (0..self.nodes.len()).rev() {
            // Leaf gradients stay in place for callers to read; interior
            // gradients are consumed as the walk passes them.
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = matmul_nt(&g, &self.nodes[b.0].value);
                    let db = matmul_tn(&self.nodes[a.0].value, &g);
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::MatMulNt(a, b) => {
                    let da = matmul(&g, &self.nodes[b.0].value);
                    let db = matmul_tn(&g, &self.nodes[a.0].value);
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::Scale(x, c) => {
                    let mut dx = g.clone();
                    for e in dx.data_mut() {
                        *e *= c;
                    }
                    self.accumulate(x, dx);
                }
                Op::Add(a, b) => {
                    self.accumulate(a, g.clone());
                    self.accumulate(b, g.clone());
                }
                Op::AddConst(x) => self.accumulate(x, g.clone()),
                Op::MaskedSoftmaxRows { x, valid } => {
                    let s = &self.nodes[i].value;
                    let (rows, cols) = (s.rows(), s.cols());
                    let mut dx = Tensor::zeros(&[rows, cols]);
                    for r in 0..rows {
                        let srow = &s.row(r)[..valid];
                        let grow = &g.row(r)[..valid];
                        let inner = dot(srow, grow);
                        let out = dx.row_mut(r);
                        for j in 0..valid {
                            out[j] = srow[j] * (grow[j] - inner);
                        }
                    }
                    self.accumulate(x, dx);
                }
                Op::AttentionMix {
                    scores,
                    values,
                    valid,
                    weights,
                } => {
                    // dValues = W^T g
                    let dv = matmul_tn(&weights, &g);
                    // dW = g V^T, then the softmax Jacobian per row.
                    let dw = matmul_nt(&g, &self.nodes[values.0].value);
                    let (rows, cols) = (weights.rows(), weights.cols());
                    let mut ds = Tensor::zeros(&[rows, cols]);
                    for r in 0..rows {
                        let wrow = &weights.row(r)[..valid];
                        let dwrow = &dw.row(r)[..valid];
                        let inner = dot(wrow, dwrow);
                        let out = ds.row_mut(r);
                        for j in 0..valid {
                            out[j] = wrow[j] * (dwrow[j] - inner);
                        }
                    }
                    self.accumulate(scores, ds);
                    self.accumulate(values, dv);
                }
                Op::SliceCols { x, start, width } => {
                    let (rows, cols) = (self.nodes[x.0].value.rows(), self.nodes[x.0].value.cols());
                    let mut dx = Tensor::zeros(&[rows, cols]);
                    for r in 0..rows {
                        dx.row_mut(r)[start..start + width].copy_from_slice(g.row(r));
                    }
                    self.accumulate(x, dx);
                }
                Op::ConcatCols(xs) => {
                    let rows = g.rows();
                    let mut off = 0;
                    for x in xs {
                        let w = self.nodes[x.0].value.cols();
                        let mut dx = Tensor::zeros(&[rows, w]);
                        for r in 0..rows {
                            dx.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                        }
                        off += w;
                        self.accumulate(x, dx);
                    }
                }
                Op::ConcatRows(xs) => {
                    let cols = g.cols();
                    let mut off = 0;
                    for x in xs {
                        let r = self.nodes[x.0].value.rows();
                        let dx = Tensor::from_vec(
                            &[r, cols],
                            g.data()[off * cols..(off + r) * cols].to_vec(),
                        );
                        off += r;
                        self.accumulate(x, dx);
                    }
                }
                Op::ZeroRowsFrom { x, from } => {
                    let mut dx = g.clone();
                    for r in from..dx.rows() {
                        dx.row_mut(r).fill(0.0);
                    }
                    self.accumulate(x, dx);
                }
                Op::SliceRows { x, take } => {
                    let (rows, cols) = (self.nodes[x.0].value.rows(), self.nodes[x.0].value.cols());
                    let mut data = g.data()[..take * cols].to_vec();
                    data.resize(rows * cols, 0.0);
                    self.accumulate(x, Tensor::from_vec(&[rows, cols], data));
                }
                Op::PadRows { x } => {
                    let (rows, cols) = (self.nodes[x.0].value.rows(), self.nodes[x.0].value.cols());
                    let dx = Tensor::from_vec(&[rows, cols], g.data()[..rows * cols].to_vec());
                    self.accumulate(x, dx);
                }
                Op::Gather { table, ids } => {
                    let (t_rows, d) = (self.nodes[table.0].value.rows(), self.nodes[table.0].value.cols());
                    let mut dt = Tensor::zeros(&[t_rows, d]);
                    for (t, &id) in ids.iter().enumerate() {
                        let grow = g.row(t);
                        let trow = dt.row_mut(id);
                        for c in 0..d {
                            trow[c] += grow[c];
                        }
                    }
                    self.accumulate(table, dt);
                }
                Op::Conv2dValid { x, k } => {
                    let (h, w) = (self.nodes[x.0].value.rows(), self.nodes[x.0].value.cols());
                    let ks = self.nodes[k.0].value.shape().to_vec();
                    let (c, kh, kw) = (ks[0], ks[1], ks[2]);
                    let (oh, ow) = (h - kh + 1, w - kw + 1);
                    let mut dx = Tensor::zeros(&[h, w]);
                    let mut dk = Tensor::zeros(&[c, kh, kw]);
                    {
                        let xv = self.nodes[x.0].value.data();
                        let kv = self.nodes[k.0].value.data();
                        let dxd = dx.data_mut();
                        for ch in 0..c {
                            for i in 0..oh {
                                for j in 0..ow {
                                    let go = g.data()[ch * oh * ow + i * ow + j];
                                    if go == 0.0 {
                                        continue;
                                    }
                                    for a in 0..kh {
                                        for b in 0..kw {
                                            dxd[(i + a) * w + (j + b)] +=
                                                go * kv[ch * kh * kw + a * kw + b];
                                        }
                                    }
                                }
                            }
                        }
                        let dkd = dk.data_mut();
                        for ch in 0..c {
                            for i in 0..oh {
                                for j in 0..ow {
                                    let go = g.data()[ch * oh * ow + i * ow + j];
                                    if go == 0.0 {
                                        continue;
                                    }
                                    for a in 0..kh {
                                        for b in 0..kw {
                                            dkd[ch * kh * kw + a * kw + b] +=
                                                go * xv[(i + a) * w + (j + b)];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    self.accumulate(x, dx);
                    self.accumulate(k, dk);
                }
                Op::Relu(x) => {
                    let mut dx = g.clone();
                    for (e, &xv) in dx.data_mut().iter_mut().zip(self.nodes[x.0].value.data()) {
                        if xv <= 0.0 {
                            *e = 0.0;
                        }
                    }
                    self.accumulate(x, dx);
                }
                Op::GlobalAvgPool(x) => {
                    let s = self.nodes[x.0].value.shape().to_vec();
                    let (c, h, w) = (s[0], s[1], s[2]);
                    let area = (h * w) as f64;
                    let mut dx = Tensor::zeros(&[c, h, w]);
                    let dxd = dx.data_mut();
                    for ch in 0..c {
                        let gc = g.data()[ch] / area;
                        for e in &mut dxd[ch * h * w..(ch + 1) * h * w] {
                            *e = gc;
                        }
                    }
                    self.accumulate(x, dx);
                }
                Op::AffineVec { x, w, b } => {
                    let (out_dim, in_dim) =
                        (self.nodes[w.0].value.rows(), self.nodes[w.0].value.cols());
                    let mut dw = Tensor::zeros(&[out_dim, in_dim]);
                    let mut dx = Tensor::zeros(&[in_dim]);
                    {
                        let xv = self.nodes[x.0].value.data().to_vec();
                        let wv = &self.nodes[w.0].value;
                        for o in 0..out_dim {
                            let go = g.data()[o];
                            if go != 0.0 {
                                let dwr = dw.row_mut(o);
                                for (c, &xc) in xv.iter().enumerate() {
                                    dwr[c] = go * xc;
                                }
                            }
                            let wrow = wv.row(o);
                            for (c, e) in dx.data_mut().iter_mut().enumerate() {
                                *e += go * wrow[c];
                            }
                        }
                    }
                    self.accumulate(x, dx);
                    self.accumulate(w, dw);
                    self.accumulate(b, g.clone());
                }
                Op::Sigmoid(x) => {
                    let s = self.nodes[i].value.clone();
                    let mut dx = g.clone();
                    for (e, &sv) in dx.data_mut().iter_mut().zip(s.data()) {
                        *e *= sv * (1.0 - sv);
                    }
                    self.accumulate(x, dx);
                }
                Op::BceLoss { p, y } => {
                    let pv = self.nodes[p.0].value.data()[0];
                    let pc = clamp_prob(pv).expect("checked at forward time");
                    let dp = g.data()[0] * (pc - y) / (pc * (1.0 - pc));
                    let shape = self.nodes[p.0].value.shape().to_vec();
                    self.accumulate(p, Tensor::from_vec(&shape, vec![dp]));
                }
                Op::MeanScalars(xs) => {
                    let share = g.data()[0] / xs.len() as f64;
                    for x in xs {
                        self.accumulate(x, Tensor::scalar(share));
                    }
                }
            }
        }
        Ok(())
    }

    /// Gradient of a leaf, with a finiteness check naming the parameter.
    pub fn leaf_grad(&self, id: VarId, name: &str) -> Result<Tensor> {
        match self.grad(id) {
            Some(g) => {
                g.check_finite(&format!("gradient of {name}"))?;
                Ok(g.clone())
            }
            None => Ok(Tensor::zeros(self.value(id).shape())),
        }
    }

    fn accumulate(&mut self, id: VarId, delta: Tensor) {
        match &mut self.grads[id.0] {
            Some(g) => {
                for (e, &d) in g.data_mut().iter_mut().zip(delta.data()) {
                    *e += d;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    pub fn context_of(&self, id: VarId) -> &str {
        &self.nodes[id.0].context
    }
}

/// Softmax of `scores` into `out[..scores.len()]`. The exponential sum
/// runs in ascending score order (left in `order`), which makes the
/// result invariant to permutations of the inputs with distinct scores.
fn softmax_masked_row(scores: &[f64], out: &mut [f64], order: &mut [usize]) {
    let valid = scores.len();
    for (i, o) in order.iter_mut().enumerate() {
        *o = i;
    }
    order.sort_unstable_by(|&a, &b| {
        scores[a].partial_cmp(&scores[b]).unwrap_or(std::cmp::Ordering::Equal)
    });
    let max = scores[order[valid - 1]];
    let mut sum = 0.0;
    for &j in order.iter() {
        let e = (scores[j] - max).exp();
        out[j] = e;
        sum += e;
    }
    for o in out[..valid].iter_mut() {
        *o /= sum;
    }
}

fn clamp_prob(p: f64) -> Result<f64> {
    if !p.is_finite() {
        return Err(Error::NonFinite("probability".to_string()));
    }
    let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if pc <= 0.0 || pc >= 1.0 {
        return Err(Error::NonFinite("probability after clamping".to_string()));
    }
    Ok(pc)
}

/// Standalone binary cross-entropy: `-(y ln p + (1-y) ln(1-p))` with the
/// probability clamped at 1e-12 from both ends.
pub fn ce_loss(p: f64, y: f64) -> Result<f64> {
    let pc = clamp_prob(p)?;
    Ok(-(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        let mut g = Vec::with_capacity(x.len());
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            xp[i] = x[i] + h;
            let up = f(&xp);
            xp[i] = x[i] - h;
            let dn = f(&xp);
            xp[i] = x[i];
            g.push((up - dn) / (2.0 * h));
        }
        g
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        let a0 = vec![0.3, -0.7, 1.2, 0.5, -0.1, 0.9];
        let eval = |av: &[f64]| -> f64 {
            let mut g = Graph::new();
            let a = g.leaf(Tensor::from_vec(&[2, 3], av.to_vec())).unwrap();
            let b = g
                .leaf(Tensor::from_vec(&[3, 2], vec![1.0, -2.0, 0.5, 0.25, -1.5, 2.0]))
                .unwrap();
            let c = g.matmul(a, b).unwrap();
            // Sum entries via mean trick: scale by count.
            g.value(c).data().iter().sum()
        };
        let mut g = Graph::new();
        let a = g.leaf(Tensor::from_vec(&[2, 3], a0.clone())).unwrap();
        let b = g
            .leaf(Tensor::from_vec(&[3, 2], vec![1.0, -2.0, 0.5, 0.25, -1.5, 2.0]))
            .unwrap();
        let c = g.matmul(a, b).unwrap();
        // Reduce to scalar: multiply by ones via matmul_nt with ones matrix.
        let ones = g.leaf(Tensor::from_vec(&[1, 2], vec![1.0, 1.0])).unwrap();
        let rowsum = g.matmul_nt(c, ones).unwrap(); // [2,1]
        let onesl = g.leaf(Tensor::from_vec(&[1, 2], vec![1.0, 1.0])).unwrap();
        let total = g.matmul(onesl, rowsum).unwrap(); // [1,1]
        g.backward(total).unwrap();
        let ga = g.grad(a).unwrap().data().to_vec();
        let fd = finite_diff(&mut { |x| eval(x) }, &a0, 1e-6);
        for (x, y) in ga.iter().zip(&fd) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_over_valid_columns() {
        let mut g = Graph::new();
        let x = g
            .leaf(Tensor::from_vec(&[2, 4], vec![0.1, 2.0, -1.0, 9.0, 0.0, 0.0, 0.0, 9.0]))
            .unwrap();
        let s = g.masked_softmax_rows(x, 3).unwrap();
        for r in 0..2 {
            let row = g.value(s).row(r);
            let sum: f64 = row[..3].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert_eq!(row[3], 0.0, "masked column must have zero weight");
        }
    }

    #[test]
    fn zero_valid_softmax_is_all_zero() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        let s = g.masked_softmax_rows(x, 0).unwrap();
        assert!(g.value(s).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bce_loss_analytic_values() {
        assert!((ce_loss(0.5, 1.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((ce_loss(0.5, 0.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(ce_loss(1.0, 1.0).unwrap() < 1e-11);
        assert!(ce_loss(f64::NAN, 1.0).is_err());
        assert!(ce_loss(0.9, 1.0).unwrap() >= 0.0);
    }

    #[test]
    fn gather_scatters_gradients_to_used_rows_only() {
        let mut g = Graph::new();
        let table = g
            .leaf(Tensor::from_vec(&[4, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]))
            .unwrap();
        let got = g.gather(table, &[2, 2, 0], 5).unwrap();
        assert_eq!(g.value(got).row(0), &[5.0, 6.0]);
        assert_eq!(g.value(got).row(3), &[0.0, 0.0]);
        // Reduce: sum everything through a fake loss chain.
        let ones = g.leaf(Tensor::from_vec(&[1, 2], vec![1.0, 1.0])).unwrap();
        let rowsum = g.matmul_nt(got, ones).unwrap();
        let onesl = g.leaf(Tensor::from_vec(&[1, 5], vec![1.0; 5])).unwrap();
        let total = g.matmul(onesl, rowsum).unwrap();
        g.backward(total).unwrap();
        let gt = g.grad(table).unwrap();
        assert_eq!(gt.row(0), &[1.0, 1.0]);
        assert_eq!(gt.row(1), &[0.0, 0.0], "unused row must have zero gradient");
        assert_eq!(gt.row(2), &[2.0, 2.0], "duplicated id accumulates");
        assert_eq!(gt.row(3), &[0.0, 0.0]);
    }

    #[test]
    fn nonfinite_is_caught() {
        let mut g = Graph::new();
        g.set_context("view css");
        let x = g.leaf(Tensor::from_vec(&[1, 1], vec![1e308])).unwrap();
        let err = g.add(x, x).unwrap_err();
        assert!(err.to_string().contains("view css"));
    }
}
