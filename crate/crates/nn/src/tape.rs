//! Reverse-mode differentiation over a linear recording of 2-D ops.

use crate::params::{Gradients, ParamId, Parameters};
use crate::tensor::gemm;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

const LN_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Linear { x: Var, w: Var, b: Option<Var> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Square(Var),
    Sum(Var),
    Softmax(Var),
    LayerNorm { x: Var, g: Var, b: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Attention { q: Var, k: Var, v: Var, heads: usize, nq: usize, nk: usize, mask: Option<Vec<bool>>, probs: Vec<f64> },
    Tile { x: Var, times: usize },
    MaskedMean { x: Var, n: usize, counts: Vec<usize> },
    AddFirstRow { x: Var, y: Var, n: usize },
    Reshape(Var),
    Gather { x: Var, rows: Vec<usize> },
    Pick { x: Var, idx: Vec<usize> },
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
}

/// A recording of one computation. Parameter leaves borrow their values
/// from the [`Parameters`] store instead of copying them.
pub struct Tape<'p> {
    params: &'p Parameters,
    nodes: Vec<Node>,
}

/// Gradients for every node of a tape plus the parameters it read.
pub struct Backward {
    nodes: Vec<Vec<f64>>,
    pub params: Gradients,
}

impl Backward {
    /// Gradient with respect to a node; empty when nothing flowed into it.
    pub fn of(&self, v: Var) -> &[f64] {
        &self.nodes[v.0]
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p Parameters) -> Self {
        Tape { params, nodes: Vec::new() }
    }

    pub fn params(&self) -> &'p Parameters {
        self.params
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == rows * cols);
        self.nodes.push(Node { rows, cols, value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let n = &self.nodes[v.0];
        match n.op {
            Op::Param(id) => &self.params.get(id).data,
            _ => &n.value,
        }
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        (self.nodes[v.0].rows, self.nodes[v.0].cols)
    }

    pub fn input(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Var {
        assert_eq!(data.len(), rows * cols, "input shape");
        self.push(rows, cols, data, Op::Input)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let (rows, cols) = self.params.get(id).matrix_dims();
        self.push(rows, cols, Vec::new(), Op::Param(id))
    }

    /// `x · w (+ b)`, with `b` a `1 × cols` row broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let (r, k) = self.dims(x);
        let (k2, c) = self.dims(w);
        assert_eq!(k, k2, "linear: inner dims {k} vs {k2}");
        let mut y = vec![0.0; r * c];
        gemm(r, k, c, self.value(x), (k, 1), self.value(w), (c, 1), &mut y, false);
        if let Some(b) = b {
            assert_eq!(self.dims(b), (1, c), "linear: bias shape");
            let bv = self.value(b);
            for row in y.chunks_mut(c) {
                row.iter_mut().zip(bv).for_each(|(a, b)| *a += b);
            }
        }
        self.push(r, c, y, Op::Linear { x, w, b })
    }

    fn zip_same(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (r, c) = self.dims(a);
        assert_eq!((r, c), self.dims(b), "elementwise shape mismatch");
        let y = self.value(a).iter().zip(self.value(b)).map(|(x, y)| f(*x, *y)).collect();
        self.push(r, c, y, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_same(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_same(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_same(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (r, c) = self.dims(x);
        let y = self.value(x).iter().map(|v| f(*v)).collect();
        self.push(r, c, y, op)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.map(x, |v| v * s, Op::Scale(x, s))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, |v| 1.0 / (1.0 + (-v).exp()), Op::Sigmoid(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.map(x, |v| v * v, Op::Square(x))
    }

    /// Sum of all entries as a `1 × 1` node.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        self.push(1, 1, vec![s], Op::Sum(x))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, x: Var) -> Var {
        let (r, c) = self.dims(x);
        let mut y = self.value(x).to_vec();
        for row in y.chunks_mut(c) {
            softmax_in_place(row);
        }
        self.push(r, c, y, Op::Softmax(x))
    }

    /// Row-wise layer normalization with gain `g` and shift `b` (`1 × cols`).
    pub fn layer_norm(&mut self, x: Var, g: Var, b: Var) -> Var {
        let (r, c) = self.dims(x);
        assert_eq!(self.dims(g), (1, c), "layer_norm: gain shape");
        assert_eq!(self.dims(b), (1, c), "layer_norm: shift shape");
        let (gv, bv) = (self.value(g), self.value(b));
        let mut y = vec![0.0; r * c];
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = Vec::with_capacity(r);
        for (i, row) in self.value(x).chunks(c).enumerate() {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for j in 0..c {
                let h = (row[j] - mean) * inv;
                xhat[i * c + j] = h;
                y[i * c + j] = gv[j] * h + bv[j];
            }
            inv_std.push(inv);
        }
        self.push(r, c, y, Op::LayerNorm { x, g, b, xhat, inv_std })
    }

    /// Scaled dot-product attention with `heads` heads over a batch of
    /// sets: `q` is `B·nq × d`, `k` and `v` are `B·nk × d`. `mask` marks the
    /// valid keys (`B·nk` entries); masked keys get zero weight.
    #[allow(clippy::too_many_arguments)]
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, nq: usize, nk: usize, mask: Option<&[bool]>) -> Var {
        let (rq, d) = self.dims(q);
        let (rk, dk) = self.dims(k);
        assert_eq!(self.dims(v), (rk, dk), "attention: key/value shapes");
        assert_eq!(d, dk, "attention: width");
        assert!(heads > 0 && d % heads == 0, "attention: {d} not divisible by {heads} heads");
        assert!(nq > 0 && nk > 0 && rq % nq == 0 && rk % nk == 0 && rq / nq == rk / nk, "attention: batch layout");
        if let Some(m) = mask {
            assert_eq!(m.len(), rk, "attention: mask length");
        }
        let batch = rq / nq;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let mut out = vec![0.0; rq * d];
        let mut probs = vec![0.0; batch * heads * nq * nk];
        for bi in 0..batch {
            for h in 0..heads {
                let off = h * dh;
                for i in 0..nq {
                    let qrow = &qv[(bi * nq + i) * d + off..][..dh];
                    let p = &mut probs[((bi * heads + h) * nq + i) * nk..][..nk];
                    let mut any = false;
                    for j in 0..nk {
                        let kr = bi * nk + j;
                        if mask.is_some_and(|m| !m[kr]) {
                            p[j] = f64::NEG_INFINITY;
                            continue;
                        }
                        any = true;
                        let krow = &kv[kr * d + off..][..dh];
                        p[j] = scale * qrow.iter().zip(krow).map(|(a, b)| a * b).sum::<f64>();
                    }
                    if !any {
                        p.fill(0.0);
                        continue;
                    }
                    softmax_in_place(p);
                    let o = &mut out[(bi * nq + i) * d + off..][..dh];
                    for j in 0..nk {
                        if p[j] == 0.0 {
                            continue;
                        }
                        let vrow = &vv[(bi * nk + j) * d + off..][..dh];
                        o.iter_mut().zip(vrow).for_each(|(a, b)| *a += p[j] * b);
                    }
                }
            }
        }
        let mask = mask.map(<[bool]>::to_vec);
        self.push(rq, d, out, Op::Attention { q, k, v, heads, nq, nk, mask, probs })
    }

    /// Stacks `times` copies of `x` vertically.
    pub fn tile(&mut self, x: Var, times: usize) -> Var {
        let (r, c) = self.dims(x);
        let y = self.value(x).repeat(times);
        self.push(r * times, c, y, Op::Tile { x, times })
    }

    /// Mean over the first `counts[b]` rows of each block of `n` rows.
    pub fn masked_mean(&mut self, x: Var, n: usize, counts: &[usize]) -> Var {
        let (r, c) = self.dims(x);
        assert_eq!(r, n * counts.len(), "masked_mean: layout");
        let xv = self.value(x);
        let mut y = vec![0.0; counts.len() * c];
        for (bi, &cnt) in counts.iter().enumerate() {
            assert!(cnt >= 1 && cnt <= n, "masked_mean: count {cnt} of {n}");
            let out = &mut y[bi * c..][..c];
            for row in xv[bi * n * c..].chunks(c).take(cnt) {
                out.iter_mut().zip(row).for_each(|(a, b)| *a += b);
            }
            out.iter_mut().for_each(|a| *a /= cnt as f64);
        }
        self.push(counts.len(), c, y, Op::MaskedMean { x, n, counts: counts.to_vec() })
    }

    /// Adds row `b` of `y` to the first row of block `b` (blocks of `n` rows) of `x`.
    pub fn add_first_row(&mut self, x: Var, y: Var, n: usize) -> Var {
        let (r, c) = self.dims(x);
        assert_eq!(self.dims(y), (r / n, c), "add_first_row: shapes");
        let mut out = self.value(x).to_vec();
        for (bi, yr) in self.value(y).chunks(c).enumerate() {
            out[bi * n * c..][..c].iter_mut().zip(yr).for_each(|(a, b)| *a += b);
        }
        self.push(r, c, out, Op::AddFirstRow { x, y, n })
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let (r, c) = self.dims(x);
        assert_eq!(r * c, rows * cols, "reshape: size");
        let y = self.value(x).to_vec();
        self.push(rows, cols, y, Op::Reshape(x))
    }

    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Var {
        let (_, c) = self.dims(x);
        let xv = self.value(x);
        let y = rows.iter().flat_map(|&r| xv[r * c..][..c].iter().copied()).collect();
        self.push(rows.len(), c, y, Op::Gather { x, rows: rows.to_vec() })
    }

    /// Entry `idx[r]` of each row, as a column.
    pub fn pick(&mut self, x: Var, idx: &[usize]) -> Var {
        let (r, c) = self.dims(x);
        assert_eq!(idx.len(), r, "pick: one index per row");
        let xv = self.value(x);
        let y = idx.iter().enumerate().map(|(i, &j)| {
            assert!(j < c, "pick: column {j} of {c}");
            xv[i * c + j]
        });
        let y = y.collect();
        self.push(r, 1, y, Op::Pick { x, idx: idx.to_vec() })
    }

    /// Back-propagates from the scalar node `loss`.
    pub fn backward(&self, loss: Var) -> Backward {
        assert_eq!(self.dims(loss), (1, 1), "backward needs a scalar");
        let mut g: Vec<Vec<f64>> = vec![Vec::new(); self.nodes.len()];
        g[loss.0] = vec![1.0];
        let mut pg = Gradients::zeros_like(self.params);
        for idx in (0..=loss.0).rev() {
            if g[idx].is_empty() {
                continue;
            }
            let node = &self.nodes[idx];
            if let Op::Param(id) = node.op {
                pg.grads[id.0].iter_mut().zip(&g[idx]).for_each(|(a, b)| *a += b);
                continue;
            }
            let dy = std::mem::take(&mut g[idx]);
            self.backward_node(node, &dy, &mut g);
            g[idx] = dy;
        }
        Backward { nodes: g, params: pg }
    }

    fn backward_node(&self, node: &Node, dy: &[f64], g: &mut [Vec<f64>]) {
        let (rows, cols) = (node.rows, node.cols);
        let y = &node.value;
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::Linear { x, w, b } => {
                let (_, k) = self.dims(*x);
                let (xv, wv) = (self.value(*x), self.value(*w));
                gemm(rows, cols, k, dy, (cols, 1), wv, (1, cols), acc(g, *x, rows * k), true);
                gemm(k, rows, cols, xv, (1, k), dy, (cols, 1), acc(g, *w, k * cols), true);
                if let Some(b) = b {
                    let db = acc(g, *b, cols);
                    for row in dy.chunks(cols) {
                        db.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                }
            }
            Op::Add(a, b) => {
                add_into(acc(g, *a, dy.len()), dy);
                add_into(acc(g, *b, dy.len()), dy);
            }
            Op::Sub(a, b) => {
                add_into(acc(g, *a, dy.len()), dy);
                acc(g, *b, dy.len()).iter_mut().zip(dy).for_each(|(a, d)| *a -= d);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = acc(g, *a, dy.len());
                for i in 0..dy.len() {
                    ga[i] += dy[i] * bv[i];
                }
                let gb = acc(g, *b, dy.len());
                for i in 0..dy.len() {
                    gb[i] += dy[i] * av[i];
                }
            }
            Op::Scale(x, s) => {
                acc(g, *x, dy.len()).iter_mut().zip(dy).for_each(|(a, d)| *a += s * d);
            }
            Op::Relu(x) => {
                let gx = acc(g, *x, dy.len());
                for i in 0..dy.len() {
                    if y[i] > 0.0 {
                        gx[i] += dy[i];
                    }
                }
            }
            Op::Sigmoid(x) => {
                let gx = acc(g, *x, dy.len());
                for i in 0..dy.len() {
                    gx[i] += dy[i] * y[i] * (1.0 - y[i]);
                }
            }
            Op::Square(x) => {
                let xv = self.value(*x);
                let gx = acc(g, *x, dy.len());
                for i in 0..dy.len() {
                    gx[i] += 2.0 * xv[i] * dy[i];
                }
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                acc(g, *x, n).iter_mut().for_each(|a| *a += dy[0]);
            }
            Op::Softmax(x) => {
                let gx = acc(g, *x, dy.len());
                for ((yr, dr), gr) in y.chunks(cols).zip(dy.chunks(cols)).zip(gx.chunks_mut(cols)) {
                    let dot: f64 = yr.iter().zip(dr).map(|(a, b)| a * b).sum();
                    for j in 0..cols {
                        gr[j] += yr[j] * (dr[j] - dot);
                    }
                }
            }
            Op::LayerNorm { x, g: gain, b, xhat, inv_std } => {
                let gv = self.value(*gain);
                let mut dg = vec![0.0; cols];
                let mut db = vec![0.0; cols];
                let mut dxhat = vec![0.0; cols];
                let gx = acc(g, *x, dy.len());
                let n = cols as f64;
                for r in 0..rows {
                    let (hr, dr) = (&xhat[r * cols..][..cols], &dy[r * cols..][..cols]);
                    for j in 0..cols {
                        dxhat[j] = dr[j] * gv[j];
                        dg[j] += dr[j] * hr[j];
                        db[j] += dr[j];
                    }
                    let s1: f64 = dxhat.iter().sum();
                    let s2: f64 = dxhat.iter().zip(hr).map(|(a, b)| a * b).sum();
                    let gr = &mut gx[r * cols..][..cols];
                    for j in 0..cols {
                        gr[j] += inv_std[r] / n * (n * dxhat[j] - s1 - hr[j] * s2);
                    }
                }
                add_into(acc(g, *gain, cols), &dg);
                add_into(acc(g, *b, cols), &db);
            }
            Op::Attention { q, k, v, heads, nq, nk, mask, probs } => {
                let (heads, nq, nk) = (*heads, *nq, *nk);
                let d = cols;
                let dh = d / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let batch = rows / nq;
                let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                let mut dq = vec![0.0; qv.len()];
                let mut dk = vec![0.0; kv.len()];
                let mut dv = vec![0.0; vv.len()];
                let mut dp = vec![0.0; nk];
                for bi in 0..batch {
                    for h in 0..heads {
                        let off = h * dh;
                        for i in 0..nq {
                            let p = &probs[((bi * heads + h) * nq + i) * nk..][..nk];
                            let qr = (bi * nq + i) * d + off;
                            let dor = &dy[qr..][..dh];
                            let mut dot = 0.0;
                            for j in 0..nk {
                                let kr = bi * nk + j;
                                if p[j] == 0.0 || mask.as_ref().is_some_and(|m| !m[kr]) {
                                    dp[j] = 0.0;
                                    continue;
                                }
                                let vrow = &vv[kr * d + off..][..dh];
                                dp[j] = dor.iter().zip(vrow).map(|(a, b)| a * b).sum();
                                dot += p[j] * dp[j];
                                dv[kr * d + off..][..dh].iter_mut().zip(dor).for_each(|(a, b)| *a += p[j] * b);
                            }
                            for j in 0..nk {
                                if p[j] == 0.0 {
                                    continue;
                                }
                                let ds = p[j] * (dp[j] - dot) * scale;
                                let kr = (bi * nk + j) * d + off;
                                for t in 0..dh {
                                    dq[qr + t] += ds * kv[kr + t];
                                    dk[kr + t] += ds * qv[qr + t];
                                }
                            }
                        }
                    }
                }
                add_into(acc(g, *q, dq.len()), &dq);
                add_into(acc(g, *k, dk.len()), &dk);
                add_into(acc(g, *v, dv.len()), &dv);
            }
            Op::Tile { x, times } => {
                let n = dy.len() / times;
                let gx = acc(g, *x, n);
                for chunk in dy.chunks(n) {
                    add_into(gx, chunk);
                }
            }
            Op::MaskedMean { x, n, counts } => {
                let gx = acc(g, *x, n * counts.len() * cols);
                for (bi, &cnt) in counts.iter().enumerate() {
                    let d = &dy[bi * cols..][..cols];
                    for r in 0..cnt {
                        gx[(bi * n + r) * cols..][..cols]
                            .iter_mut()
                            .zip(d)
                            .for_each(|(a, b)| *a += b / cnt as f64);
                    }
                }
            }
            Op::AddFirstRow { x, y: yv, n } => {
                add_into(acc(g, *x, dy.len()), dy);
                let gy = acc(g, *yv, (rows / n) * cols);
                for bi in 0..rows / n {
                    add_into(&mut gy[bi * cols..][..cols], &dy[bi * n * cols..][..cols]);
                }
            }
            Op::Reshape(x) => add_into(acc(g, *x, dy.len()), dy),
            Op::Gather { x, rows: rs } => {
                let (xr, _) = self.dims(*x);
                let gx = acc(g, *x, xr * cols);
                for (i, &r) in rs.iter().enumerate() {
                    add_into(&mut gx[r * cols..][..cols], &dy[i * cols..][..cols]);
                }
            }
            Op::Pick { x, idx } => {
                let (_, c) = self.dims(*x);
                let gx = acc(g, *x, rows * c);
                for (i, &j) in idx.iter().enumerate() {
                    gx[i * c + j] += dy[i];
                }
            }
        }
    }
}

fn acc(g: &mut [Vec<f64>], v: Var, len: usize) -> &mut [f64] {
    let slot = &mut g[v.0];
    if slot.is_empty() {
        *slot = vec![0.0; len];
    }
    slot
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

/// Numerically stable softmax; entries equal to -inf get zero weight.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}
