//! Reverse-mode differentiation over 2-D `f64` arrays.
//!
//! A [`Tape`] records every operation of a forward pass. Nodes are stored in
//! creation order, so walking them backwards is a valid topological order.

use ndarray::{s, Array2, ArrayView2, Axis};

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf { param: Option<usize> },
    MatMul(Var, Var),
    /// `a @ b^T`
    MatMulBT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    SoftmaxRows(Var),
    /// Kernel-3 dilated convolution along rows within segments of `seg`
    /// rows, zero padded. `col` holds the unfolded input.
    Conv1d { x: Var, w: Var, dilation: usize, seg: usize, col: Array2<f64> },
    /// Row `r` is multiplied by `ws[groups[r]]`.
    GroupMatMul { x: Var, ws: Vec<Var>, groups: Vec<usize> },
    /// Softmax over each run of `seg` scores, weighted sum of values.
    AttnPool { scores: Var, values: Var, seg: usize, weights: Vec<f64> },
    SelfAttention { q: Var, k: Var, v: Var, segs: Vec<(usize, usize)>, heads: usize, probs: Vec<Array2<f64>> },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Array2<f64>, inv_std: Vec<f64> },
    Dropout { x: Var, mask: Array2<f64> },
    CrossEntropy { logits: Var, labels: Vec<Option<usize>>, probs: Array2<f64> },
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let th = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    /// A constant input.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf { param: None })
    }

    /// A trainable parameter; its gradient is reported under `index`.
    pub fn param(&mut self, index: usize, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf { param: Some(index) })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulBT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.push(v, Op::Scale(a, k))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(gelu);
        self.push(v, Op::Gelu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            softmax_in_place(row.as_slice_mut().unwrap());
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn conv1d(&mut self, x: Var, w: Var, dilation: usize, seg: usize) -> Var {
        let xv = self.value(x);
        let (n, h) = xv.dim();
        assert_eq!(n % seg, 0, "rows must be a multiple of the segment length");
        assert_eq!(self.value(w).nrows(), 3 * h);
        let mut col = Array2::zeros((n, 3 * h));
        for r in 0..n {
            let t = r % seg;
            for j in 0..3 {
                let off = j as isize - 1;
                let src = t as isize + off * dilation as isize;
                if src >= 0 && (src as usize) < seg {
                    let sr = r - t + src as usize;
                    col.slice_mut(s![r, j * h..(j + 1) * h]).assign(&xv.row(sr));
                }
            }
        }
        let v = col.dot(self.value(w));
        self.push(v, Op::Conv1d { x, w, dilation, seg, col })
    }

    pub fn group_matmul(&mut self, x: Var, ws: &[Var], groups: &[usize]) -> Var {
        let xv = self.value(x);
        assert_eq!(groups.len(), xv.nrows());
        let out_cols = self.value(ws[0]).ncols();
        let mut v = Array2::zeros((xv.nrows(), out_cols));
        for (g, &w) in ws.iter().enumerate() {
            let rows: Vec<usize> = (0..groups.len()).filter(|&r| groups[r] == g).collect();
            if rows.is_empty() {
                continue;
            }
            let sub = xv.select(Axis(0), &rows).dot(self.value(w));
            for (i, &r) in rows.iter().enumerate() {
                v.row_mut(r).assign(&sub.row(i));
            }
        }
        self.push(v, Op::GroupMatMul { x, ws: ws.to_vec(), groups: groups.to_vec() })
    }

    pub fn attn_pool(&mut self, scores: Var, values: Var, seg: usize) -> Var {
        let sv = self.value(scores);
        let vv = self.value(values);
        let n = sv.nrows() / seg;
        let mut weights: Vec<f64> = sv.column(0).to_vec();
        let mut out = Array2::zeros((n, vv.ncols()));
        for b in 0..n {
            let w = &mut weights[b * seg..(b + 1) * seg];
            softmax_in_place(w);
            let mut o = out.row_mut(b);
            for (t, &a) in w.iter().enumerate() {
                o.scaled_add(a, &vv.row(b * seg + t));
            }
        }
        self.push(out, Op::AttnPool { scores, values, seg, weights })
    }

    /// Multi-head attention restricted to each `(start, len)` segment of
    /// rows. Keys with `key_valid[r] == false` receive no attention.
    pub fn self_attention(&mut self, q: Var, k: Var, v: Var, segs: &[(usize, usize)], heads: usize, key_valid: &[bool]) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (n, h) = qv.dim();
        assert_eq!(h % heads, 0);
        let dh = h / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Array2::zeros((n, h));
        let mut probs = Vec::with_capacity(segs.len() * heads);
        for &(start, len) in segs {
            for hd in 0..heads {
                let cols = s![start..start + len, hd * dh..(hd + 1) * dh];
                let mut p = qv.slice(cols).dot(&kv.slice(cols).t()) * scale;
                for mut row in p.rows_mut() {
                    for (j, x) in row.iter_mut().enumerate() {
                        if !key_valid[start + j] {
                            *x = f64::NEG_INFINITY;
                        }
                    }
                    softmax_in_place(row.as_slice_mut().unwrap());
                }
                out.slice_mut(cols).assign(&p.dot(&vv.slice(cols)));
                probs.push(p);
            }
        }
        self.push(out, Op::SelfAttention { q, k, v, segs: segs.to_vec(), heads, probs })
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let (n, h) = xv.dim();
        let mut xhat = Array2::zeros((n, h));
        let mut inv_std = Vec::with_capacity(n);
        for (r, row) in xv.rows().into_iter().enumerate() {
            let mean = row.sum() / h as f64;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / h as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            xhat.row_mut(r).assign(&row.mapv(|x| (x - mean) * is));
            inv_std.push(is);
        }
        let v = &xhat * self.value(gain) + self.value(bias);
        self.push(v, Op::LayerNorm { x, gain, bias, xhat, inv_std })
    }

    /// Multiplies by a fixed mask (already scaled by `1 / keep`).
    pub fn dropout(&mut self, x: Var, mask: Array2<f64>) -> Var {
        let v = self.value(x) * &mask;
        self.push(v, Op::Dropout { x, mask })
    }

    /// Mean negative log-likelihood over rows with a label.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[Option<usize>]) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.nrows(), labels.len());
        let mut probs = lv.clone();
        let mut total = 0.0;
        let mut n = 0usize;
        for ((mut row, raw), y) in probs.rows_mut().into_iter().zip(lv.rows()).zip(labels) {
            if let Some(y) = y {
                let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + raw.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                total += lse - raw[*y];
                n += 1;
            }
            softmax_in_place(row.as_slice_mut().unwrap());
        }
        let loss = if n == 0 { 0.0 } else { total / n as f64 };
        self.push(Array2::from_elem((1, 1), loss), Op::CrossEntropy { logits, labels: labels.to_vec(), probs })
    }

    /// Gradients of the scalar `loss` for every parameter leaf reached, as
    /// `(param index, gradient)`. A parameter used twice appears twice.
    pub fn backward(&self, loss: Var) -> Vec<(usize, Array2<f64>)> {
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::ones(self.nodes[loss.0].value.dim()));
        let mut out = Vec::new();
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let mut acc = |v: Var, d: Array2<f64>| match &mut grads[v.0] {
                Some(x) => *x += &d,
                slot => *slot = Some(d),
            };
            match &node.op {
                Op::Leaf { param } => {
                    if let Some(p) = param {
                        out.push((*p, g));
                    }
                }
                Op::MatMul(a, b) => {
                    acc(*a, g.dot(&self.value(*b).t()));
                    acc(*b, self.value(*a).t().dot(&g));
                }
                Op::MatMulBT(a, b) => {
                    acc(*a, g.dot(self.value(*b)));
                    acc(*b, g.t().dot(self.value(*a)));
                }
                Op::Add(a, b) => {
                    acc(*b, g.clone());
                    acc(*a, g);
                }
                Op::AddRow(a, row) => {
                    acc(*row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(*a, g);
                }
                Op::Scale(a, k) => acc(*a, g * *k),
                Op::Gelu(a) => {
                    let d = ndarray::Zip::from(&g).and(self.value(*a)).map_collect(|&g, &x| g * gelu_grad(x));
                    acc(*a, d);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut d = &g * y;
                    for (mut dr, yr) in d.rows_mut().into_iter().zip(y.rows()) {
                        let s = dr.sum();
                        dr.zip_mut_with(&yr, |d, &y| *d -= s * y);
                    }
                    acc(*a, d);
                }
                Op::Conv1d { x, w, dilation, seg, col } => {
                    acc(*w, col.t().dot(&g));
                    let dcol = g.dot(&self.value(*w).t());
                    let h = dcol.ncols() / 3;
                    let n = dcol.nrows();
                    let mut dx = Array2::zeros((n, h));
                    for r in 0..n {
                        let t = r % seg;
                        for j in 0..3 {
                            let src = t as isize + (j as isize - 1) * *dilation as isize;
                            if src >= 0 && (src as usize) < *seg {
                                let sr = r - t + src as usize;
                                let mut row = dx.row_mut(sr);
                                row += &dcol.slice(s![r, j * h..(j + 1) * h]);
                            }
                        }
                    }
                    acc(*x, dx);
                }
                Op::GroupMatMul { x, ws, groups } => {
                    let xv = self.value(*x);
                    let mut dx = Array2::zeros(xv.dim());
                    for (gi, &w) in ws.iter().enumerate() {
                        let rows: Vec<usize> = (0..groups.len()).filter(|&r| groups[r] == gi).collect();
                        if rows.is_empty() {
                            acc(w, Array2::zeros(self.value(w).dim()));
                            continue;
                        }
                        let gs = g.select(Axis(0), &rows);
                        acc(w, xv.select(Axis(0), &rows).t().dot(&gs));
                        let dxs = gs.dot(&self.value(w).t());
                        for (k, &r) in rows.iter().enumerate() {
                            dx.row_mut(r).assign(&dxs.row(k));
                        }
                    }
                    acc(*x, dx);
                }
                Op::AttnPool { scores, values, seg, weights } => {
                    let vv = self.value(*values);
                    let mut dv = Array2::zeros(vv.dim());
                    let mut ds = Array2::zeros((vv.nrows(), 1));
                    for b in 0..g.nrows() {
                        let gb = g.row(b);
                        let w = &weights[b * seg..(b + 1) * seg];
                        let da: Vec<f64> = (0..*seg).map(|t| vv.row(b * seg + t).dot(&gb)).collect();
                        let mean: f64 = w.iter().zip(&da).map(|(a, d)| a * d).sum();
                        for t in 0..*seg {
                            dv.row_mut(b * seg + t).scaled_add(w[t], &gb);
                            ds[[b * seg + t, 0]] = w[t] * (da[t] - mean);
                        }
                    }
                    acc(*scores, ds);
                    acc(*values, dv);
                }
                Op::SelfAttention { q, k, v, segs, heads, probs } => {
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let h = qv.ncols();
                    let dh = h / heads;
                    let scale = 1.0 / (dh as f64).sqrt();
                    let mut dq = Array2::zeros(qv.dim());
                    let mut dk = Array2::zeros(kv.dim());
                    let mut dvv = Array2::zeros(vv.dim());
                    let mut pi = 0;
                    for &(start, len) in segs {
                        for hd in 0..*heads {
                            let cols = s![start..start + len, hd * dh..(hd + 1) * dh];
                            let p = &probs[pi];
                            pi += 1;
                            let go: ArrayView2<f64> = g.slice(cols);
                            dvv.slice_mut(cols).assign(&p.t().dot(&go));
                            let dp = go.dot(&vv.slice(cols).t());
                            let mut dsc = &dp * p;
                            for (mut r, pr) in dsc.rows_mut().into_iter().zip(p.rows()) {
                                let s = r.sum();
                                r.zip_mut_with(&pr, |d, &p| *d -= s * p);
                            }
                            dsc *= scale;
                            dq.slice_mut(cols).assign(&dsc.dot(&kv.slice(cols)));
                            dk.slice_mut(cols).assign(&dsc.t().dot(&qv.slice(cols)));
                        }
                    }
                    acc(*q, dq);
                    acc(*k, dk);
                    acc(*v, dvv);
                }
                Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                    let gv = self.value(*gain);
                    acc(*bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(*gain, (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    let dxhat = &g * gv;
                    let h = dxhat.ncols() as f64;
                    let mut dx = Array2::zeros(dxhat.dim());
                    for r in 0..dxhat.nrows() {
                        let d = dxhat.row(r);
                        let xh = xhat.row(r);
                        let m1 = d.sum() / h;
                        let m2 = d.dot(&xh) / h;
                        let is = inv_std[r];
                        dx.row_mut(r).assign(&ndarray::Zip::from(&d).and(&xh).map_collect(|&d, &xh| is * (d - m1 - xh * m2)));
                    }
                    acc(*x, dx);
                }
                Op::Dropout { x, mask } => acc(*x, g * mask),
                Op::CrossEntropy { logits, labels, probs } => {
                    let n = labels.iter().filter(|l| l.is_some()).count().max(1) as f64;
                    let g0 = g[[0, 0]];
                    let mut d = probs.clone();
                    for (mut row, y) in d.rows_mut().into_iter().zip(labels) {
                        match y {
                            Some(y) => {
                                row[*y] -= 1.0;
                                row *= g0 / n;
                            }
                            None => row.fill(0.0),
                        }
                    }
                    acc(*logits, d);
                }
            }
        }
        out
    }
}
