//! Reverse-mode automatic differentiation over 2-D float64 matrices.
//!
//! Every op appends a node holding its forward value; [`Tape::gradients`]
//! walks the nodes in reverse and applies each op's vector-Jacobian product.
//! Nodes are appended only after their inputs, so reverse insertion order is a
//! valid reverse topological order.

use super::tensor::{matmul_into, ParamId, ParamSet, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sqrt(Var),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    /// Source row per output element, `None` for an empty segment.
    SegmentMax(Var, Vec<Option<usize>>),
    BlockSoftmax(Var, usize),
    BlockSum(Var, usize),
    Sum(Var),
    Mean(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        coeffs: Vec<f64>,
        probs: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints for every node of one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if `v` requires grad and the
    /// loss depends on it.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.adjoints.get(v.0).and_then(|a| a.as_deref())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
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

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(vec![n.rows, n.cols], n.value.clone()).expect("node dims are consistent")
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Record a constant matrix.
    pub fn constant(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Result<Var> {
        if rows * cols != value.len() {
            return Err(Error::dims("constant", &[rows, cols], &[value.len()]));
        }
        Ok(self.push(rows, cols, value, Op::Leaf, false))
    }

    /// Record a tensor as a leaf; its `requires_grad` flag is honoured.
    pub fn input(&mut self, t: &Tensor) -> Var {
        let (rows, cols) = t.as_matrix_dims();
        self.push(rows, cols, t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    /// Record a trainable parameter; backward accumulates into its grad buffer.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        let t = params.get(id);
        let (rows, cols) = t.as_matrix_dims();
        self.push(rows, cols, t.data().to_vec(), Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(Error::dims("matmul", &[m, k], &[k2, n]));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(self.value(a), self.value(b), &mut out, m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(m, n, out, Op::MatMul(a, b), rg))
    }

    fn same_dims(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let da = self.dims(a);
        let db = self.dims(b);
        if da != db {
            return Err(Error::dims(op, &[da.0, da.1], &[db.0, db.1]));
        }
        Ok(da)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_dims("add", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(r, c, out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_dims("sub", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(r, c, out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_dims("mul", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(r, c, out, Op::Mul(a, b), rg))
    }

    /// `a[m×n] + row[1×n]` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        let (one, n2) = self.dims(row);
        if one != 1 || n != n2 {
            return Err(Error::dims("add_row", &[m, n], &[one, n2]));
        }
        let rv = self.value(row);
        let out: Vec<f64> = self
            .value(a)
            .chunks(n.max(1))
            .flat_map(|r| r.iter().zip(rv).map(|(x, y)| x + y))
            .collect();
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(m, n, out, Op::AddRow(a, row), rg))
    }

    /// `a[m×n] ⊙ col[m×1]` broadcast over columns.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        let (m2, one) = self.dims(col);
        if one != 1 || m != m2 {
            return Err(Error::dims("mul_col", &[m, n], &[m2, one]));
        }
        let cv = self.value(col);
        let mut out = self.value(a).to_vec();
        for i in 0..m {
            for x in &mut out[i * n..(i + 1) * n] {
                *x *= cv[i];
            }
        }
        let rg = self.rg(a) || self.rg(col);
        Ok(self.push(m, n, out, Op::MulCol(a, col), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let (r, c) = self.dims(a);
        let out = self.value(a).iter().map(|x| x * factor).collect();
        let rg = self.rg(a);
        self.push(r, c, out, Op::Scale(a, factor), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let out = self.value(a).iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        let rg = self.rg(a);
        self.push(r, c, out, Op::Relu(a), rg)
    }

    /// Elementwise square root; inputs must be non-negative. The gradient at
    /// exactly zero is taken as zero.
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims(a);
        if let Some(bad) = self.value(a).iter().find(|&&x| x < 0.0) {
            return Err(Error::Domain(format!("sqrt of negative value {bad}")));
        }
        let out = self.value(a).iter().map(|x| x.sqrt()).collect();
        let rg = self.rg(a);
        Ok(self.push(r, c, out, Op::Sqrt(a), rg))
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Contract("concat of zero tensors".into()));
        };
        let rows = self.dims(first).0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims(p);
            if r != rows {
                return Err(Error::dims("concat_cols", &[rows], &[r]));
            }
            widths.push(c);
        }
        let cols: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[i * w..(i + 1) * w]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(rows, cols, out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Select rows `index[k]` of `a` into row `k` of the output.
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let (m, n) = self.dims(a);
        let mut out = Vec::with_capacity(index.len() * n);
        for &i in index {
            if i >= m {
                return Err(Error::Index { index: i, len: m });
            }
            out.extend_from_slice(&self.value(a)[i * n..(i + 1) * n]);
        }
        let rg = self.rg(a);
        Ok(self.push(index.len(), n, out, Op::GatherRows(a, index.to_vec()), rg))
    }

    /// Sum row `k` of `a` into output row `index[k]`; output has `out_rows` rows.
    pub fn scatter_add_rows(&mut self, a: Var, index: &[usize], out_rows: usize) -> Result<Var> {
        let (m, n) = self.dims(a);
        if index.len() != m {
            return Err(Error::dims("scatter_add_rows", &[m], &[index.len()]));
        }
        let mut out = vec![0.0; out_rows * n];
        for (k, &i) in index.iter().enumerate() {
            if i >= out_rows {
                return Err(Error::Index { index: i, len: out_rows });
            }
            add_into(&mut out[i * n..(i + 1) * n], &self.value(a)[k * n..(k + 1) * n]);
        }
        let rg = self.rg(a);
        Ok(self.push(out_rows, n, out, Op::ScatterAddRows(a, index.to_vec()), rg))
    }

    /// Per-segment elementwise max over rows of `a`; row `k` belongs to
    /// segment `segment[k]`. Empty segments yield zeros. Ties route the
    /// gradient to the lowest row index.
    pub fn segment_max(&mut self, a: Var, segment: &[usize], num_segments: usize) -> Result<Var> {
        let (m, n) = self.dims(a);
        if segment.len() != m {
            return Err(Error::dims("segment_max", &[m], &[segment.len()]));
        }
        let mut best: Vec<Option<usize>> = vec![None; num_segments * n];
        let val = self.value(a);
        for (k, &s) in segment.iter().enumerate() {
            if s >= num_segments {
                return Err(Error::Index { index: s, len: num_segments });
            }
            for c in 0..n {
                let slot = &mut best[s * n + c];
                match *slot {
                    Some(r) if val[r * n + c] >= val[k * n + c] => {}
                    _ => *slot = Some(k),
                }
            }
        }
        let out = best
            .iter()
            .enumerate()
            .map(|(idx, b)| b.map_or(0.0, |r| val[r * n + idx % n.max(1)]))
            .collect();
        let rg = self.rg(a);
        Ok(self.push(num_segments, n, out, Op::SegmentMax(a, best), rg))
    }

    /// Elementwise max over all rows of `a` (1×n output).
    pub fn reduce_max_rows(&mut self, a: Var) -> Result<Var> {
        let (m, _) = self.dims(a);
        if m == 0 {
            return Err(Error::EmptySet);
        }
        self.segment_max(a, &vec![0; m], 1)
    }

    /// Softmax over each contiguous block of `block` columns, row by row.
    pub fn block_softmax(&mut self, a: Var, block: usize) -> Result<Var> {
        let (r, c) = self.dims(a);
        if block == 0 || c % block != 0 {
            return Err(Error::Config(format!("width {c} not divisible into blocks of {block}")));
        }
        let mut out = self.value(a).to_vec();
        for chunk in out.chunks_mut(block) {
            softmax_in_place(chunk);
        }
        let rg = self.rg(a);
        Ok(self.push(r, c, out, Op::BlockSoftmax(a, block), rg))
    }

    /// Sum each contiguous block of `block` columns: m×(k·block) → m×k.
    pub fn block_sum(&mut self, a: Var, block: usize) -> Result<Var> {
        let (r, c) = self.dims(a);
        if block == 0 || c % block != 0 {
            return Err(Error::Config(format!("width {c} not divisible into blocks of {block}")));
        }
        let out = self.value(a).chunks(block).map(|ch| ch.iter().sum()).collect();
        let rg = self.rg(a);
        Ok(self.push(r, c / block, out, Op::BlockSum(a, block), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        let rg = self.rg(a);
        self.push(1, 1, vec![s], Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(Error::Contract("mean of an empty tensor".into()));
        }
        let s = self.value(a).iter().sum::<f64>() / n as f64;
        let rg = self.rg(a);
        Ok(self.push(1, 1, vec![s], Op::Mean(a), rg))
    }

    /// Mean softmax cross-entropy of `logits[b×C]` against class indices.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        self.weighted_cross_entropy(logits, targets, None)
    }

    /// Cross-entropy with optional per-class weights, normalized by the sum of
    /// the weights actually applied (`Σ w_t·CE / Σ w_t`).
    pub fn weighted_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        class_weights: Option<&[f64]>,
    ) -> Result<Var> {
        let (b, c) = self.dims(logits);
        if targets.len() != b {
            return Err(Error::dims("cross_entropy", &[b], &[targets.len()]));
        }
        if b == 0 {
            return Err(Error::Contract("cross-entropy over an empty batch".into()));
        }
        if let Some(w) = class_weights {
            if w.len() != c {
                return Err(Error::dims("class_weights", &[c], &[w.len()]));
            }
        }
        let mut weights = Vec::with_capacity(b);
        for &t in targets {
            if t >= c {
                return Err(Error::Index { index: t, len: c });
            }
            weights.push(class_weights.map_or(1.0, |w| w[t]));
        }
        let norm: f64 = weights.iter().sum();
        if norm <= 0.0 {
            return Err(Error::Contract("cross-entropy weights sum to zero".into()));
        }
        let val = self.value(logits);
        let mut probs = Vec::with_capacity(b * c);
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            let row = &val[i * c..(i + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = row.iter().map(|x| (x - max).exp()).sum();
            let lse = max + sum_exp.ln();
            loss += weights[i] * (lse - row[t]);
            probs.extend(row.iter().map(|x| (x - max).exp() / sum_exp));
        }
        let coeffs = weights.iter().map(|w| w / norm).collect();
        let rg = self.rg(logits);
        Ok(self.push(
            1,
            1,
            vec![loss / norm],
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                coeffs,
                probs,
            },
            rg,
        ))
    }

    /// Adjoints of scalar `loss` with respect to every recorded node.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        let (r, c) = self.dims(loss);
        if r * c != 1 {
            return Err(Error::Contract(format!("backward needs a scalar loss, got {r}×{c}")));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { adjoints: adj });
        }
        adj[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            self.propagate(node, &g, &mut adj);
            adj[idx] = Some(g);
        }
        Ok(Gradients { adjoints: adj })
    }

    fn accumulate(&self, adj: &mut [Option<Vec<f64>>], v: Var, delta: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let len = self.nodes[v.0].value.len();
        let slot = adj[v.0].get_or_insert_with(|| vec![0.0; len]);
        delta(slot);
    }

    fn propagate(&self, node: &Node, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let (rows, cols) = (node.rows, node.cols);
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = cols;
                let av = self.value(*a);
                let bv = self.value(*b);
                self.accumulate(adj, *a, |da| {
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            da[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                self.accumulate(adj, *b, |db| {
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let a_ip = av[i * k + p];
                            if a_ip == 0.0 {
                                continue;
                            }
                            for (d, x) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *d += a_ip * x;
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                self.accumulate(adj, *a, |d| add_into(d, g));
                self.accumulate(adj, *b, |d| add_into(d, g));
            }
            Op::Sub(a, b) => {
                self.accumulate(adj, *a, |d| add_into(d, g));
                self.accumulate(adj, *b, |d| {
                    for (x, y) in d.iter_mut().zip(g) {
                        *x -= y;
                    }
                });
            }
            Op::Mul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                self.accumulate(adj, *a, |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * bv[i];
                    }
                });
                self.accumulate(adj, *b, |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * av[i];
                    }
                });
            }
            Op::AddRow(a, row) => {
                self.accumulate(adj, *a, |d| add_into(d, g));
                self.accumulate(adj, *row, |d| {
                    for r in g.chunks(cols.max(1)) {
                        add_into(d, r);
                    }
                });
            }
            Op::MulCol(a, col) => {
                let av = self.value(*a);
                let cv = self.value(*col);
                self.accumulate(adj, *a, |d| {
                    for i in 0..rows {
                        for j in 0..cols {
                            d[i * cols + j] += g[i * cols + j] * cv[i];
                        }
                    }
                });
                self.accumulate(adj, *col, |d| {
                    for i in 0..rows {
                        let mut s = 0.0;
                        for j in 0..cols {
                            s += g[i * cols + j] * av[i * cols + j];
                        }
                        d[i] += s;
                    }
                });
            }
            Op::Scale(a, f) => {
                self.accumulate(adj, *a, |d| {
                    for (x, y) in d.iter_mut().zip(g) {
                        *x += f * y;
                    }
                });
            }
            Op::Relu(a) => {
                let av = self.value(*a);
                self.accumulate(adj, *a, |d| {
                    for i in 0..d.len() {
                        if av[i] > 0.0 {
                            d[i] += g[i];
                        }
                    }
                });
            }
            Op::Sqrt(a) => {
                let out = &node.value;
                self.accumulate(adj, *a, |d| {
                    for i in 0..d.len() {
                        if out[i] > 0.0 {
                            d[i] += g[i] / (2.0 * out[i]);
                        }
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.dims(p).1;
                    self.accumulate(adj, p, |d| {
                        for i in 0..rows {
                            add_into(&mut d[i * w..(i + 1) * w], &g[i * cols + offset..i * cols + offset + w]);
                        }
                    });
                    offset += w;
                }
            }
            Op::GatherRows(a, index) => {
                self.accumulate(adj, *a, |d| {
                    for (k, &i) in index.iter().enumerate() {
                        add_into(&mut d[i * cols..(i + 1) * cols], &g[k * cols..(k + 1) * cols]);
                    }
                });
            }
            Op::ScatterAddRows(a, index) => {
                self.accumulate(adj, *a, |d| {
                    for (k, &i) in index.iter().enumerate() {
                        add_into(&mut d[k * cols..(k + 1) * cols], &g[i * cols..(i + 1) * cols]);
                    }
                });
            }
            Op::SegmentMax(a, best) => {
                self.accumulate(adj, *a, |d| {
                    for (idx, b) in best.iter().enumerate() {
                        if let Some(r) = b {
                            d[r * cols + idx % cols] += g[idx];
                        }
                    }
                });
            }
            Op::BlockSoftmax(a, block) => {
                let y = &node.value;
                self.accumulate(adj, *a, |d| {
                    for start in (0..y.len()).step_by(*block) {
                        let ys = &y[start..start + block];
                        let gs = &g[start..start + block];
                        let dot: f64 = ys.iter().zip(gs).map(|(a, b)| a * b).sum();
                        for k in 0..*block {
                            d[start + k] += ys[k] * (gs[k] - dot);
                        }
                    }
                });
            }
            Op::BlockSum(a, block) => {
                self.accumulate(adj, *a, |d| {
                    for (k, x) in d.iter_mut().enumerate() {
                        *x += g[k / block];
                    }
                });
            }
            Op::Sum(a) => {
                self.accumulate(adj, *a, |d| {
                    for x in d.iter_mut() {
                        *x += g[0];
                    }
                });
            }
            Op::Mean(a) => {
                let n = self.value(*a).len() as f64;
                self.accumulate(adj, *a, |d| {
                    for x in d.iter_mut() {
                        *x += g[0] / n;
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                targets,
                coeffs,
                probs,
            } => {
                let c = self.dims(*logits).1;
                self.accumulate(adj, *logits, |d| {
                    for (i, &t) in targets.iter().enumerate() {
                        let w = coeffs[i] * g[0];
                        for k in 0..c {
                            let onehot = if k == t { 1.0 } else { 0.0 };
                            d[i * c + k] += w * (probs[i * c + k] - onehot);
                        }
                    }
                });
            }
        }
    }

    /// Backpropagate `loss` and accumulate into the grad buffers of every
    /// parameter recorded on this tape. Calling it twice doubles the grads.
    pub fn backward(&self, loss: Var, params: &mut ParamSet) -> Result<Gradients> {
        let grads = self.gradients(loss)?;
        for (idx, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if let Op::Param(id) = node.op {
                if let Some(g) = grads.adjoints[idx].as_deref() {
                    params.get_mut(id).accumulate_grad(g);
                }
            }
        }
        Ok(grads)
    }
}

/// Max-shifted softmax in place.
pub fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

/// Row-wise softmax of a row-major `rows × cols` buffer.
pub fn softmax_rows(values: &[f64], cols: usize) -> Vec<f64> {
    let mut out = values.to_vec();
    if cols > 0 {
        for row in out.chunks_mut(cols) {
            softmax_in_place(row);
        }
    }
    out
}
