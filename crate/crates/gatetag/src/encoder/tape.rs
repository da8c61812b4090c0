//! Reverse-mode automatic differentiation over matrices.
//!
//! A [`Tape`] records every operation eagerly: each method computes the
//! forward value immediately and appends a node. [`Tape::backward`] then
//! walks the recording once in reverse, producing the exact gradient of a
//! scalar node with respect to every leaf it depends on. Gradients are
//! allocated lazily, so leaves off the loss path cost nothing and report
//! no gradient — callers treat "no gradient" as zero.
//!
//! The op set is the minimum for the encoders and losses in this crate:
//! linear maps, row softmax/log-sum-exp (attention, cross-entropy,
//! contrastive denominators), row normalization (cosine similarities),
//! gathers (embedding lookup, label picking), and concatenation (feature
//! assembly, batching).

use super::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    /// `a · bᵀ`.
    MatMulT(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, f64),
    /// Broadcast a 1×c bias over every row.
    AddRowBias(NodeId, NodeId),
    Relu(NodeId),
    Square(NodeId),
    SoftmaxRows(NodeId),
    MeanRows(NodeId),
    MeanAll(NodeId),
    NormalizeRows(NodeId),
    LogSumExpRows(NodeId),
    GatherRows(NodeId, Vec<usize>),
    GatherElems(NodeId, Vec<(usize, usize)>),
    ConcatRows(NodeId, NodeId),
    ConcatCols(NodeId, NodeId),
    StackRows(Vec<NodeId>),
}

pub struct Tape {
    vals: Vec<Matrix>,
    ops: Vec<Op>,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Grads(Vec<Option<Matrix>>);

impl Grads {
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        self.0[id.0].as_ref()
    }

    pub fn take(&mut self, id: NodeId) -> Option<Matrix> {
        self.0[id.0].take()
    }
}

const ROW_NORM_FLOOR: f64 = 1e-12;

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { vals: Vec::new(), ops: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.vals[id.0]
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let m = self.value(id);
        assert_eq!(m.shape(), (1, 1), "scalar() on a non-scalar node");
        m.data[0]
    }

    fn push(&mut self, val: Matrix, op: Op) -> NodeId {
        self.vals.push(val);
        self.ops.push(op);
        NodeId(self.vals.len() - 1)
    }

    /// Insert a matrix as a leaf: a parameter if its gradient will be
    /// consumed, otherwise a constant.
    pub fn leaf(&mut self, m: Matrix) -> NodeId {
        self.push(m, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let val = self.vals[a.0].matmul(&self.vals[b.0]);
        self.push(val, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let val = self.vals[a.0].matmul_t(&self.vals[b.0]);
        self.push(val, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.vals[a.0].shape(), self.vals[b.0].shape(), "add shape mismatch");
        let mut val = self.vals[a.0].clone();
        val.add_assign(&self.vals[b.0]);
        self.push(val, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.vals[a.0].shape(), self.vals[b.0].shape(), "sub shape mismatch");
        let mut val = self.vals[a.0].clone();
        for (x, &y) in val.data.iter_mut().zip(&self.vals[b.0].data) {
            *x -= y;
        }
        self.push(val, Op::Sub(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let mut val = self.vals[a.0].clone();
        for x in &mut val.data {
            *x *= c;
        }
        self.push(val, Op::Scale(a, c))
    }

    pub fn add_row_bias(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let b = &self.vals[bias.0];
        assert_eq!(b.rows, 1, "bias must be a single row");
        assert_eq!(self.vals[a.0].cols, b.cols, "bias width mismatch");
        let mut val = self.vals[a.0].clone();
        for r in 0..val.rows {
            for c in 0..val.cols {
                val.data[r * val.cols + c] += b.data[c];
            }
        }
        self.push(val, Op::AddRowBias(a, bias))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let mut val = self.vals[a.0].clone();
        for x in &mut val.data {
            *x = x.max(0.0);
        }
        self.push(val, Op::Relu(a))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let mut val = self.vals[a.0].clone();
        for x in &mut val.data {
            *x *= *x;
        }
        self.push(val, Op::Square(a))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let src = &self.vals[a.0];
        let mut val = src.clone();
        for r in 0..val.rows {
            let row = val.row_mut(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
        }
        self.push(val, Op::SoftmaxRows(a))
    }

    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let src = &self.vals[a.0];
        assert!(src.rows > 0, "mean over zero rows");
        let mut val = Matrix::zeros(1, src.cols);
        for r in 0..src.rows {
            for c in 0..src.cols {
                val.data[c] += src.get(r, c);
            }
        }
        for x in &mut val.data {
            *x /= src.rows as f64;
        }
        self.push(val, Op::MeanRows(a))
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let src = &self.vals[a.0];
        assert!(!src.data.is_empty(), "mean over an empty matrix");
        let m = src.data.iter().sum::<f64>() / src.data.len() as f64;
        self.push(Matrix::filled(1, 1, m), Op::MeanAll(a))
    }

    /// L2-normalize each row; rows below the norm floor pass through
    /// unchanged (and backpropagate as identity).
    pub fn normalize_rows(&mut self, a: NodeId) -> NodeId {
        let src = &self.vals[a.0];
        let mut val = src.clone();
        for r in 0..val.rows {
            let row = val.row_mut(r);
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > ROW_NORM_FLOOR {
                for x in row.iter_mut() {
                    *x /= n;
                }
            }
        }
        self.push(val, Op::NormalizeRows(a))
    }

    pub fn log_sum_exp_rows(&mut self, a: NodeId) -> NodeId {
        let src = &self.vals[a.0];
        assert!(src.cols > 0, "log-sum-exp over zero columns");
        let mut val = Matrix::zeros(src.rows, 1);
        for r in 0..src.rows {
            let row = src.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
            val.data[r] = max + sum.ln();
        }
        self.push(val, Op::LogSumExpRows(a))
    }

    pub fn gather_rows(&mut self, a: NodeId, rows: Vec<usize>) -> NodeId {
        let src = &self.vals[a.0];
        let mut val = Matrix::zeros(rows.len(), src.cols);
        for (i, &r) in rows.iter().enumerate() {
            val.row_mut(i).copy_from_slice(src.row(r));
        }
        self.push(val, Op::GatherRows(a, rows))
    }

    /// Pick single entries into an n×1 column.
    pub fn gather_elems(&mut self, a: NodeId, at: Vec<(usize, usize)>) -> NodeId {
        let src = &self.vals[a.0];
        let mut val = Matrix::zeros(at.len(), 1);
        for (i, &(r, c)) in at.iter().enumerate() {
            val.data[i] = src.get(r, c);
        }
        self.push(val, Op::GatherElems(a, at))
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ma, mb) = (&self.vals[a.0], &self.vals[b.0]);
        assert_eq!(ma.cols, mb.cols, "concat_rows width mismatch");
        let mut data = Vec::with_capacity(ma.data.len() + mb.data.len());
        data.extend_from_slice(&ma.data);
        data.extend_from_slice(&mb.data);
        let val = Matrix { rows: ma.rows + mb.rows, cols: ma.cols, data };
        self.push(val, Op::ConcatRows(a, b))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ma, mb) = (&self.vals[a.0], &self.vals[b.0]);
        assert_eq!(ma.rows, mb.rows, "concat_cols height mismatch");
        let mut val = Matrix::zeros(ma.rows, ma.cols + mb.cols);
        for r in 0..ma.rows {
            val.row_mut(r)[..ma.cols].copy_from_slice(ma.row(r));
            val.row_mut(r)[ma.cols..].copy_from_slice(mb.row(r));
        }
        self.push(val, Op::ConcatCols(a, b))
    }

    /// Stack single-row nodes into one matrix; `cols` disambiguates the
    /// empty stack.
    pub fn stack_rows(&mut self, rows: &[NodeId], cols: usize) -> NodeId {
        let mut val = Matrix::zeros(rows.len(), cols);
        for (i, &id) in rows.iter().enumerate() {
            let m = &self.vals[id.0];
            assert_eq!(m.shape(), (1, cols), "stack_rows expects 1×{cols} rows");
            val.row_mut(i).copy_from_slice(&m.data);
        }
        self.push(val, Op::StackRows(rows.to_vec()))
    }

    /// Gradient of the scalar `loss` node with respect to every node it
    /// depends on.
    pub fn backward(&self, loss: NodeId) -> Grads {
        assert_eq!(self.vals[loss.0].shape(), (1, 1), "backward needs a scalar loss");
        assert!(self.vals[loss.0].data[0].is_finite(), "non-finite loss");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.vals.len()];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..self.ops.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.ops[i] {
                Op::Leaf => {
                    grads[i] = Some(g); // keep for the caller
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(&self.vals[b.0]);
                    let gb = self.vals[a.0].t_matmul(&g);
                    self.accumulate(&mut grads, *a, ga);
                    self.accumulate(&mut grads, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.matmul(&self.vals[b.0]);
                    let gb = g.t_matmul(&self.vals[a.0]);
                    self.accumulate(&mut grads, *a, ga);
                    self.accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, g.clone());
                    self.accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    let mut gb = g.clone();
                    for x in &mut gb.data {
                        *x = -*x;
                    }
                    self.accumulate(&mut grads, *a, g);
                    self.accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => {
                    let mut ga = g;
                    for x in &mut ga.data {
                        *x *= c;
                    }
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::AddRowBias(a, bias) => {
                    let mut gb = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for c in 0..g.cols {
                            gb.data[c] += g.get(r, c);
                        }
                    }
                    self.accumulate(&mut grads, *a, g);
                    self.accumulate(&mut grads, *bias, gb);
                }
                Op::Relu(a) => {
                    let mut ga = g;
                    for (x, &v) in ga.data.iter_mut().zip(&self.vals[a.0].data) {
                        if v <= 0.0 {
                            *x = 0.0;
                        }
                    }
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let mut ga = g;
                    for (x, &v) in ga.data.iter_mut().zip(&self.vals[a.0].data) {
                        *x *= 2.0 * v;
                    }
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let p = &self.vals[i];
                    let mut ga = Matrix::zeros(p.rows, p.cols);
                    for r in 0..p.rows {
                        let prow = p.row(r);
                        let grow = g.row(r);
                        let dot: f64 = prow.iter().zip(grow).map(|(&p, &g)| p * g).sum();
                        for c in 0..p.cols {
                            ga.data[r * p.cols + c] = prow[c] * (grow[c] - dot);
                        }
                    }
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::MeanRows(a) => {
                    let src = &self.vals[a.0];
                    let mut ga = Matrix::zeros(src.rows, src.cols);
                    for r in 0..src.rows {
                        for c in 0..src.cols {
                            ga.data[r * src.cols + c] = g.data[c] / src.rows as f64;
                        }
                    }
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::MeanAll(a) => {
                    let src = &self.vals[a.0];
                    let per = g.data[0] / src.data.len() as f64;
                    self.accumulate(&mut grads, *a, Matrix::filled(src.rows, src.cols, per));
                }
                Op::NormalizeRows(a) => {
                    let src = &self.vals[a.0];
                    let out = &self.vals[i];
                    let mut ga = Matrix::zeros(src.rows, src.cols);
                    for r in 0..src.rows {
                        let n = src.row(r).iter().map(|x| x * x).sum::<f64>().sqrt();
                        if n > ROW_NORM_FLOOR {
                            let yrow = out.row(r);
                            let grow = g.row(r);
                            let dot: f64 = yrow.iter().zip(grow).map(|(&y, &g)| y * g).sum();
                            for c in 0..src.cols {
                                ga.data[r * src.cols + c] = (grow[c] - yrow[c] * dot) / n;
                            }
                        } else {
                            ga.row_mut(r).copy_from_slice(g.row(r));
                        }
                    }
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::LogSumExpRows(a) => {
                    let src = &self.vals[a.0];
                    let mut ga = Matrix::zeros(src.rows, src.cols);
                    for r in 0..src.rows {
                        let row = src.row(r);
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
                        for c in 0..src.cols {
                            ga.data[r * src.cols + c] =
                                g.data[r] * (row[c] - max).exp() / sum;
                        }
                    }
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::GatherRows(a, rows) => {
                    let src = &self.vals[a.0];
                    let mut ga = Matrix::zeros(src.rows, src.cols);
                    for (i, &r) in rows.iter().enumerate() {
                        for c in 0..src.cols {
                            ga.data[r * src.cols + c] += g.get(i, c);
                        }
                    }
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::GatherElems(a, at) => {
                    let src = &self.vals[a.0];
                    let mut ga = Matrix::zeros(src.rows, src.cols);
                    for (i, &(r, c)) in at.iter().enumerate() {
                        ga.data[r * src.cols + c] += g.data[i];
                    }
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::ConcatRows(a, b) => {
                    let ra = self.vals[a.0].rows;
                    let cols = g.cols;
                    let ga = Matrix {
                        rows: ra,
                        cols,
                        data: g.data[..ra * cols].to_vec(),
                    };
                    let gb = Matrix {
                        rows: g.rows - ra,
                        cols,
                        data: g.data[ra * cols..].to_vec(),
                    };
                    self.accumulate(&mut grads, *a, ga);
                    self.accumulate(&mut grads, *b, gb);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.vals[a.0].cols;
                    let mut ga = Matrix::zeros(g.rows, ca);
                    let mut gb = Matrix::zeros(g.rows, g.cols - ca);
                    for r in 0..g.rows {
                        ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                        gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                    }
                    self.accumulate(&mut grads, *a, ga);
                    self.accumulate(&mut grads, *b, gb);
                }
                Op::StackRows(rows) => {
                    for (i, &id) in rows.iter().enumerate() {
                        let gr = Matrix { rows: 1, cols: g.cols, data: g.row(i).to_vec() };
                        self.accumulate(&mut grads, id, gr);
                    }
                }
            }
        }
        Grads(grads)
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
        match &mut grads[id.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Central finite difference of `f` along one entry of its input.
    fn fd(f: &dyn Fn(&Matrix) -> f64, x: &Matrix, idx: usize) -> f64 {
        let h = 1e-6;
        let mut plus = x.clone();
        plus.data[idx] += h;
        let mut minus = x.clone();
        minus.data[idx] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    }

    fn assert_grad_matches(f: &dyn Fn(&Matrix) -> f64, build: &dyn Fn(&mut Tape, NodeId) -> NodeId, x: &Matrix) {
        let mut tape = Tape::new();
        let leaf = tape.leaf(x.clone());
        let loss = build(&mut tape, leaf);
        let mut grads = tape.backward(loss);
        let g = grads.take(leaf).expect("leaf on the loss path");
        for idx in 0..x.data.len() {
            let want = fd(f, x, idx);
            let got = g.data[idx];
            let denom = want.abs().max(got.abs()).max(1e-6);
            assert!(
                ((want - got) / denom).abs() < 1e-5,
                "entry {idx}: analytic {got} vs numeric {want}"
            );
        }
    }

    #[test]
    fn every_op_backpropagates_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x = Matrix::uniform(3, 4, 1.0, &mut rng);
        let w = Matrix::uniform(4, 5, 1.0, &mut rng);
        let b = Matrix::uniform(1, 5, 1.0, &mut rng);

        // chain: relu(x·w + b) → softmax → lse → mean
        let wc = w.clone();
        let bc = b.clone();
        let forward = move |x: &Matrix| {
            let mut t = Tape::new();
            let xi = t.leaf(x.clone());
            let wi = t.leaf(wc.clone());
            let bi = t.leaf(bc.clone());
            let h = t.matmul(xi, wi);
            let h = t.add_row_bias(h, bi);
            let h = t.relu(h);
            let s = t.softmax_rows(h);
            let l = t.log_sum_exp_rows(s);
            let m = t.mean_all(l);
            t.scalar(m)
        };
        let wb = (w.clone(), b.clone());
        assert_grad_matches(
            &forward,
            &move |t, xi| {
                let wi = t.leaf(wb.0.clone());
                let bi = t.leaf(wb.1.clone());
                let h = t.matmul(xi, wi);
                let h = t.add_row_bias(h, bi);
                let h = t.relu(h);
                let s = t.softmax_rows(h);
                let l = t.log_sum_exp_rows(s);
                t.mean_all(l)
            },
            &x,
        );

        // chain: normalize → self-similarity → square → gather → mean
        let forward2 = |x: &Matrix| {
            let mut t = Tape::new();
            let xi = t.leaf(x.clone());
            let n = t.normalize_rows(xi);
            let s = t.matmul_t(n, n);
            let q = t.square(s);
            let p = t.gather_elems(q, vec![(0, 1), (1, 2), (2, 0)]);
            let m = t.mean_all(p);
            t.scalar(m)
        };
        assert_grad_matches(
            &forward2,
            &|t, xi| {
                let n = t.normalize_rows(xi);
                let s = t.matmul_t(n, n);
                let q = t.square(s);
                let p = t.gather_elems(q, vec![(0, 1), (1, 2), (2, 0)]);
                t.mean_all(p)
            },
            &x,
        );

        // chain: gather/stack/concat/sub/scale/mean_rows
        let forward3 = |x: &Matrix| {
            let mut t = Tape::new();
            let xi = t.leaf(x.clone());
            let g = t.gather_rows(xi, vec![2, 0, 2]);
            let d = t.sub(g, xi);
            let d = t.scale(d, 1.7);
            let m = t.mean_rows(d);
            let mm = t.concat_cols(m, m);
            let st = t.stack_rows(&[m, m], 4);
            let cat = t.concat_rows(st, st);
            let pooled = t.mean_rows(cat);
            let both = t.concat_cols(pooled, mm);
            let sq = t.square(both);
            let out = t.mean_all(sq);
            t.scalar(out)
        };
        assert_grad_matches(
            &forward3,
            &|t, xi| {
                let g = t.gather_rows(xi, vec![2, 0, 2]);
                let d = t.sub(g, xi);
                let d = t.scale(d, 1.7);
                let m = t.mean_rows(d);
                let mm = t.concat_cols(m, m);
                let st = t.stack_rows(&[m, m], 4);
                let cat = t.concat_rows(st, st);
                let pooled = t.mean_rows(cat);
                let both = t.concat_cols(pooled, mm);
                let sq = t.square(both);
                t.mean_all(sq)
            },
            &x,
        );
    }

    #[test]
    fn half_squared_norm_gradient_is_the_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Matrix::uniform(1, 6, 2.0, &mut rng);
        let mut t = Tape::new();
        let xi = t.leaf(x.clone());
        let sq = t.square(xi);
        let m = t.mean_all(sq);
        // ½‖x‖² = (n/2)·mean(x²); d/dx = x  ⇒  grad of mean is 2x/n
        let loss = t.scale(m, x.data.len() as f64 / 2.0);
        let mut grads = t.backward(loss);
        let g = grads.take(xi).unwrap();
        for (gx, &xx) in g.data.iter().zip(&x.data) {
            assert!((gx - xx).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_loss_reaches_no_leaves() {
        let mut t = Tape::new();
        let p = t.leaf(Matrix::filled(2, 2, 3.0));
        let c = t.leaf(Matrix::filled(1, 1, 5.0));
        let loss = t.mean_all(c);
        let grads = t.backward(loss);
        assert!(grads.get(p).is_none(), "parameter off the loss path has no gradient");
        assert_eq!(grads.get(c).unwrap().data[0], 1.0);
        let _ = t.len();
    }

    #[test]
    fn shared_leaf_accumulates_both_uses() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::filled(1, 1, 4.0));
        let s = t.add(x, x);
        let loss = t.mean_all(s);
        let mut grads = t.backward(loss);
        assert_eq!(grads.take(x).unwrap().data[0], 2.0);
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Matrix::from_fn(5, 7, |_, _| rng.gen_range(-30.0..30.0));
        let mut t = Tape::new();
        let xi = t.leaf(x);
        let s = t.softmax_rows(xi);
        let v = t.value(s);
        for r in 0..v.rows {
            let sum: f64 = v.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(v.row(r).iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    #[should_panic(expected = "non-finite loss")]
    fn non_finite_loss_is_rejected() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::filled(1, 1, f64::NAN));
        let loss = t.mean_all(x);
        let _ = t.backward(loss);
    }
}
