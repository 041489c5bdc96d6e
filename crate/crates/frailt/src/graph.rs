//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! A [`Graph`] records every operation as it executes the forward pass; each
//! node owns its output buffer and the ids of its inputs, so the record list is
//! topologically ordered by construction. [`Graph::backward`] replays the tape
//! in reverse, accumulating gradients into per-node buffers.
//!
//! The element type is generic so the exact same operation code can be
//! evaluated at `f64` by the finite-difference oracle while the product path
//! stays `f32`.

use crate::error::NumericsError;
use crate::tensor::{Real, Tensor};

/// Default epsilon inside the RMS normalizer.
pub const RMS_NORM_EPS: f64 = 1e-5;

/// Rotary position embedding base frequency.
pub const ROPE_THETA: f64 = 10_000.0;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One recorded operation: what ran, which nodes fed it, which node it produced.
#[derive(Debug, Clone)]
pub struct ComputationRecord {
    pub op: &'static str,
    pub inputs: Vec<Var>,
    pub output: Var,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul { a: usize, b: usize },
    Add { a: usize, b: usize },
    AddRowBroadcast { x: usize, v: usize },
    Mul { a: usize, b: usize },
    Scale { x: usize, c: f64 },
    Silu { x: usize },
    RmsNorm { x: usize, w: usize },
    SoftmaxRows { x: usize },
    Rope { x: usize, n_heads: usize },
    CausalAttention { q: usize, k: usize, v: usize, n_heads: usize },
    Embedding { table: usize, ids: Vec<usize> },
    CrossEntropy { logits: usize, targets: Vec<usize> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Matmul { .. } => "matmul",
            Op::Add { .. } => "add",
            Op::AddRowBroadcast { .. } => "add_row_broadcast",
            Op::Mul { .. } => "mul",
            Op::Scale { .. } => "scale",
            Op::Silu { .. } => "silu",
            Op::RmsNorm { .. } => "rms_norm",
            Op::SoftmaxRows { .. } => "softmax_rows",
            Op::Rope { .. } => "rope",
            Op::CausalAttention { .. } => "causal_attention",
            Op::Embedding { .. } => "embedding",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }

    fn inputs(&self) -> Vec<usize> {
        match *self {
            Op::Leaf => vec![],
            Op::Matmul { a, b } | Op::Add { a, b } | Op::Mul { a, b } => vec![a, b],
            Op::AddRowBroadcast { x, v } => vec![x, v],
            Op::Scale { x, .. } | Op::Silu { x } | Op::SoftmaxRows { x } | Op::Rope { x, .. } => {
                vec![x]
            }
            Op::RmsNorm { x, w } => vec![x, w],
            Op::CausalAttention { q, k, v, .. } => vec![q, k, v],
            Op::Embedding { table, .. } => vec![table],
            Op::CrossEntropy { logits, .. } => vec![logits],
        }
    }
}

struct Node<F> {
    shape: Vec<usize>,
    value: Vec<F>,
    /// Op-specific saved state for backward (attention probabilities,
    /// cross-entropy softmax, RMS inverse norms).
    aux: Vec<F>,
    op: Op,
}

/// Reverse-mode tape. Build the forward pass through the op methods, then call
/// [`Graph::backward`] once on a scalar node and read gradients back out.
pub struct Graph<F: Real = f32> {
    nodes: Vec<Node<F>>,
    grads: Vec<Vec<F>>,
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<F>, aux: Vec<F>, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            aux,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Inserts an input (leaf) node.
    pub fn leaf(&mut self, shape: Vec<usize>, value: Vec<F>) -> Result<Var, NumericsError> {
        if shape.iter().product::<usize>() != value.len() {
            return Err(NumericsError::ShapeDataMismatch {
                shape,
                len: value.len(),
            });
        }
        Ok(self.push(shape, value, vec![], Op::Leaf))
    }

    /// Inserts an `f32` tensor as a leaf, converting to the graph element type.
    pub fn leaf_tensor(&mut self, tensor: &Tensor) -> Var {
        let value = tensor.data().iter().map(|&x| F::from_f32(x)).collect();
        self.push(tensor.shape().to_vec(), value, vec![], Op::Leaf)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[F] {
        &self.nodes[v.0].value
    }

    pub fn value_scalar(&self, v: Var) -> F {
        debug_assert_eq!(self.nodes[v.0].value.len(), 1);
        self.nodes[v.0].value[0]
    }

    /// Gradient of the node the last `backward` was seeded from, w.r.t. `v`.
    /// Zero-filled for nodes the loss does not depend on.
    pub fn grad(&self, v: Var) -> &[F] {
        &self.grads[v.0]
    }

    /// The tape as (op, inputs, output) records, in execution order.
    pub fn records(&self) -> Vec<ComputationRecord> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| ComputationRecord {
                op: n.op.name(),
                inputs: n.op.inputs().into_iter().map(Var).collect(),
                output: Var(i),
            })
            .collect()
    }

    // ----- forward ops -------------------------------------------------

    /// `[m,k] x [k,n] -> [m,n]` matrix product.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(NumericsError::MatmulShape {
                a: sa.clone(),
                b: sb.clone(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![F::ZERO; m * n];
        matmul_into(
            &mut out,
            &self.nodes[a.0].value,
            &self.nodes[b.0].value,
            m,
            k,
            n,
        );
        Ok(self.push(vec![m, n], out, vec![], Op::Matmul { a: a.0, b: b.0 }))
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
        if sa != sb {
            return Err(NumericsError::ShapeMismatch {
                op: "add",
                expected: sa.clone(),
                got: sb.clone(),
            });
        }
        let out: Vec<F> = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = sa.clone();
        Ok(self.push(shape, out, vec![], Op::Add { a: a.0, b: b.0 }))
    }

    /// Adds a length-`d` vector to every row of a `[T,d]` tensor.
    pub fn add_row_broadcast(&mut self, x: Var, v: Var) -> Result<Var, NumericsError> {
        let (sx, sv) = (&self.nodes[x.0].shape, &self.nodes[v.0].shape);
        let d = *sx.last().unwrap_or(&0);
        if sv.len() != 1 || sv[0] != d {
            return Err(NumericsError::ShapeMismatch {
                op: "add_row_broadcast",
                expected: vec![d],
                got: sv.clone(),
            });
        }
        let vv = &self.nodes[v.0].value;
        let out: Vec<F> = self.nodes[x.0]
            .value
            .iter()
            .enumerate()
            .map(|(i, &xi)| xi + vv[i % d])
            .collect();
        let shape = sx.clone();
        Ok(self.push(shape, out, vec![], Op::AddRowBroadcast { x: x.0, v: v.0 }))
    }

    /// Elementwise product of two same-shape tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
        if sa != sb {
            return Err(NumericsError::ShapeMismatch {
                op: "mul",
                expected: sa.clone(),
                got: sb.clone(),
            });
        }
        let out: Vec<F> = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = sa.clone();
        Ok(self.push(shape, out, vec![], Op::Mul { a: a.0, b: b.0 }))
    }

    /// Multiplies every element by a constant.
    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let cf = F::from_f64(c);
        let out: Vec<F> = self.nodes[x.0].value.iter().map(|&v| v * cf).collect();
        let shape = self.nodes[x.0].shape.clone();
        self.push(shape, out, vec![], Op::Scale { x: x.0, c })
    }

    /// SiLU activation `x * sigmoid(x)`.
    pub fn silu(&mut self, x: Var) -> Var {
        let out: Vec<F> = self.nodes[x.0]
            .value
            .iter()
            .map(|&v| v * sigmoid(v))
            .collect();
        let shape = self.nodes[x.0].shape.clone();
        self.push(shape, out, vec![], Op::Silu { x: x.0 })
    }

    /// RMS normalization of each trailing-dimension row, scaled by `w`.
    pub fn rms_norm(&mut self, x: Var, w: Var) -> Result<Var, NumericsError> {
        self.rms_norm_with_eps(x, w, RMS_NORM_EPS)
    }

    pub fn rms_norm_with_eps(&mut self, x: Var, w: Var, eps: f64) -> Result<Var, NumericsError> {
        let (sx, sw) = (&self.nodes[x.0].shape, &self.nodes[w.0].shape);
        let d = *sx.last().unwrap_or(&0);
        if sw.len() != 1 || sw[0] != d || d == 0 {
            return Err(NumericsError::ShapeMismatch {
                op: "rms_norm",
                expected: vec![d],
                got: sw.clone(),
            });
        }
        let rows = self.nodes[x.0].value.len() / d;
        let mut out = vec![F::ZERO; rows * d];
        let mut inv = vec![F::ZERO; rows];
        let xv = &self.nodes[x.0].value;
        let wv = &self.nodes[w.0].value;
        for r in 0..rows {
            let row = &xv[r * d..(r + 1) * d];
            let mut ms = 0.0f64;
            for &v in row {
                let v = v.to_f64();
                ms += v * v;
            }
            let ri = F::from_f64(1.0 / (ms / d as f64 + eps).sqrt());
            inv[r] = ri;
            for i in 0..d {
                out[r * d + i] = row[i] * ri * wv[i];
            }
        }
        let shape = sx.clone();
        Ok(self.push(shape, out, inv, Op::RmsNorm { x: x.0, w: w.0 }))
    }

    /// Row-wise softmax over the trailing dimension, max-subtracted for stability.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let d = *self.nodes[x.0].shape.last().unwrap_or(&1);
        let xv = &self.nodes[x.0].value;
        let rows = xv.len() / d.max(1);
        let mut out = vec![F::ZERO; xv.len()];
        for r in 0..rows {
            softmax_row(&mut out[r * d..(r + 1) * d], &xv[r * d..(r + 1) * d]);
        }
        let shape = self.nodes[x.0].shape.clone();
        self.push(shape, out, vec![], Op::SoftmaxRows { x: x.0 })
    }

    /// Rotary position embedding over a `[T,d]` tensor, pairwise within each
    /// head, positions `0..T`.
    pub fn rope(&mut self, x: Var, n_heads: usize) -> Result<Var, NumericsError> {
        let sx = &self.nodes[x.0].shape;
        if sx.len() != 2 || sx[1] % n_heads != 0 || (sx[1] / n_heads) % 2 != 0 {
            return Err(NumericsError::ShapeMismatch {
                op: "rope",
                expected: vec![sx[0], n_heads * 2],
                got: sx.clone(),
            });
        }
        let (t_len, d) = (sx[0], sx[1]);
        let mut out = self.nodes[x.0].value.clone();
        apply_rope(&mut out, t_len, d, n_heads, false);
        Ok(self.push(vec![t_len, d], out, vec![], Op::Rope { x: x.0, n_heads }))
    }

    /// Multi-head causal self-attention over `[T,d]` query/key/value tensors.
    /// Scores are scaled by `1/sqrt(head_dim)`; position `t` attends to `0..=t`.
    pub fn causal_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        n_heads: usize,
    ) -> Result<Var, NumericsError> {
        let sq = self.nodes[q.0].shape.clone();
        for other in [k, v] {
            if self.nodes[other.0].shape != sq {
                return Err(NumericsError::ShapeMismatch {
                    op: "causal_attention",
                    expected: sq.clone(),
                    got: self.nodes[other.0].shape.clone(),
                });
            }
        }
        if sq.len() != 2 || sq[1] % n_heads != 0 {
            return Err(NumericsError::ShapeMismatch {
                op: "causal_attention",
                expected: vec![sq[0], n_heads],
                got: sq,
            });
        }
        let (t_len, d) = (sq[0], sq[1]);
        let hd = d / n_heads;
        let scale = F::from_f64(1.0 / (hd as f64).sqrt());
        let qv = &self.nodes[q.0].value;
        let kv = &self.nodes[k.0].value;
        let vv = &self.nodes[v.0].value;
        let mut out = vec![F::ZERO; t_len * d];
        // probs[((h * T) + t) * T + s], lower-triangular in (t, s)
        let mut probs = vec![F::ZERO; n_heads * t_len * t_len];
        let mut scores = vec![F::ZERO; t_len];
        for h in 0..n_heads {
            let off = h * hd;
            for t in 0..t_len {
                for (s, score) in scores.iter_mut().enumerate().take(t + 1) {
                    let mut dot = F::ZERO;
                    for i in 0..hd {
                        dot += qv[t * d + off + i] * kv[s * d + off + i];
                    }
                    *score = dot * scale;
                }
                let p = &mut probs[(h * t_len + t) * t_len..(h * t_len + t) * t_len + t + 1];
                softmax_row(p, &scores[..t + 1]);
                for (s, &ps) in p.iter().enumerate() {
                    for i in 0..hd {
                        out[t * d + off + i] += ps * vv[s * d + off + i];
                    }
                }
            }
        }
        Ok(self.push(
            vec![t_len, d],
            out,
            probs,
            Op::CausalAttention {
                q: q.0,
                k: k.0,
                v: v.0,
                n_heads,
            },
        ))
    }

    /// Row gather: `table [V,d]`, `ids [T]` -> `[T,d]`; differentiable into the table.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, NumericsError> {
        let st = &self.nodes[table.0].shape;
        if st.len() != 2 {
            return Err(NumericsError::ShapeMismatch {
                op: "embedding",
                expected: vec![0, 0],
                got: st.clone(),
            });
        }
        let (rows, d) = (st[0], st[1]);
        for (position, &id) in ids.iter().enumerate() {
            if id >= rows {
                return Err(NumericsError::EmbeddingOutOfRange { id, position, rows });
            }
        }
        let tv = &self.nodes[table.0].value;
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            out.extend_from_slice(&tv[id * d..(id + 1) * d]);
        }
        Ok(self.push(
            vec![ids.len(), d],
            out,
            vec![],
            Op::Embedding {
                table: table.0,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits [T,V]`, natural log. Returns a scalar node.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, NumericsError> {
        let sl = &self.nodes[logits.0].shape;
        if sl.len() != 2 || sl[0] != targets.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "cross_entropy",
                expected: vec![targets.len(), sl.last().copied().unwrap_or(0)],
                got: sl.clone(),
            });
        }
        let (t_len, vocab) = (sl[0], sl[1]);
        for (position, &id) in targets.iter().enumerate() {
            if id >= vocab {
                return Err(NumericsError::TargetOutOfRange {
                    id,
                    position,
                    vocab,
                });
            }
        }
        let lv = &self.nodes[logits.0].value;
        let mut probs = vec![F::ZERO; t_len * vocab];
        let mut nll = 0.0f64;
        for t in 0..t_len {
            let row = &lv[t * vocab..(t + 1) * vocab];
            let p = &mut probs[t * vocab..(t + 1) * vocab];
            softmax_row(p, row);
            nll -= p[targets[t]].to_f64().ln();
        }
        let loss = F::from_f64(nll / t_len as f64);
        Ok(self.push(
            vec![1],
            vec![loss],
            probs,
            Op::CrossEntropy {
                logits: logits.0,
                targets: targets.to_vec(),
            },
        ))
    }

    // ----- backward -----------------------------------------------------

    /// Accumulates gradients of the scalar node `loss` w.r.t. every node.
    pub fn backward(&mut self, loss: Var) -> Result<(), NumericsError> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(NumericsError::NotScalar {
                shape: self.nodes[loss.0].shape.clone(),
            });
        }
        self.grads = self
            .nodes
            .iter()
            .map(|n| vec![F::ZERO; n.value.len()])
            .collect();
        self.grads[loss.0][0] = F::ONE;
        for idx in (0..=loss.0).rev() {
            self.backward_node(idx);
        }
        Ok(())
    }

    fn backward_node(&mut self, idx: usize) {
        let op = self.nodes[idx].op.clone();
        match op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (m, k) = (self.nodes[a].shape[0], self.nodes[a].shape[1]);
                let n = self.nodes[b].shape[1];
                let dy = std::mem::take(&mut self.grads[idx]);
                // dA[i,p] += dot(dY[i,:], B[p,:])
                {
                    let bv = &self.nodes[b].value;
                    let da = &mut self.grads[a];
                    for i in 0..m {
                        let dy_row = &dy[i * n..(i + 1) * n];
                        for p in 0..k {
                            let b_row = &bv[p * n..(p + 1) * n];
                            let mut acc = F::ZERO;
                            for j in 0..n {
                                acc += dy_row[j] * b_row[j];
                            }
                            da[i * k + p] += acc;
                        }
                    }
                }
                // dB[p,:] += A[i,p] * dY[i,:]
                {
                    let av = &self.nodes[a].value;
                    let db = &mut self.grads[b];
                    for i in 0..m {
                        let dy_row = &dy[i * n..(i + 1) * n];
                        for p in 0..k {
                            let a_ip = av[i * k + p];
                            let db_row = &mut db[p * n..(p + 1) * n];
                            for j in 0..n {
                                db_row[j] += a_ip * dy_row[j];
                            }
                        }
                    }
                }
                self.grads[idx] = dy;
            }
            Op::Add { a, b } => {
                let dy = std::mem::take(&mut self.grads[idx]);
                for (g, &d) in self.grads[a].iter_mut().zip(&dy) {
                    *g += d;
                }
                for (g, &d) in self.grads[b].iter_mut().zip(&dy) {
                    *g += d;
                }
                self.grads[idx] = dy;
            }
            Op::AddRowBroadcast { x, v } => {
                let d = self.nodes[v].value.len();
                let dy = std::mem::take(&mut self.grads[idx]);
                for (g, &dv) in self.grads[x].iter_mut().zip(&dy) {
                    *g += dv;
                }
                for (i, &dv) in dy.iter().enumerate() {
                    self.grads[v][i % d] += dv;
                }
                self.grads[idx] = dy;
            }
            Op::Mul { a, b } => {
                let dy = std::mem::take(&mut self.grads[idx]);
                {
                    let bv = &self.nodes[b].value;
                    let da = &mut self.grads[a];
                    for i in 0..dy.len() {
                        da[i] += dy[i] * bv[i];
                    }
                }
                {
                    let av = &self.nodes[a].value;
                    let db = &mut self.grads[b];
                    for i in 0..dy.len() {
                        db[i] += dy[i] * av[i];
                    }
                }
                self.grads[idx] = dy;
            }
            Op::Scale { x, c } => {
                let cf = F::from_f64(c);
                let dy = std::mem::take(&mut self.grads[idx]);
                for (g, &d) in self.grads[x].iter_mut().zip(&dy) {
                    *g += d * cf;
                }
                self.grads[idx] = dy;
            }
            Op::Silu { x } => {
                let dy = std::mem::take(&mut self.grads[idx]);
                let xv = &self.nodes[x].value;
                let dx = &mut self.grads[x];
                for i in 0..dy.len() {
                    let s = sigmoid(xv[i]);
                    // d/dx [x*s(x)] = s(x) * (1 + x * (1 - s(x)))
                    dx[i] += dy[i] * s * (F::ONE + xv[i] * (F::ONE - s));
                }
                self.grads[idx] = dy;
            }
            Op::RmsNorm { x, w, .. } => {
                let d = self.nodes[w].value.len();
                let rows = self.nodes[x].value.len() / d;
                let dy = std::mem::take(&mut self.grads[idx]);
                let inv = std::mem::take(&mut self.nodes[idx].aux);
                {
                    let xv = &self.nodes[x].value;
                    let dw = &mut self.grads[w];
                    for r in 0..rows {
                        let ri = inv[r];
                        for i in 0..d {
                            dw[i] += dy[r * d + i] * xv[r * d + i] * ri;
                        }
                    }
                }
                {
                    let xv = &self.nodes[x].value;
                    let wv = &self.nodes[w].value;
                    let dx = &mut self.grads[x];
                    let inv_d = F::from_f64(1.0 / d as f64);
                    for r in 0..rows {
                        let ri = inv[r];
                        let mut dot = F::ZERO;
                        for i in 0..d {
                            dot += dy[r * d + i] * wv[i] * xv[r * d + i];
                        }
                        let coeff = ri * ri * ri * inv_d * dot;
                        for i in 0..d {
                            dx[r * d + i] += dy[r * d + i] * wv[i] * ri - coeff * xv[r * d + i];
                        }
                    }
                }
                self.nodes[idx].aux = inv;
                self.grads[idx] = dy;
            }
            Op::SoftmaxRows { x } => {
                let d = *self.nodes[idx].shape.last().unwrap_or(&1);
                let dy = std::mem::take(&mut self.grads[idx]);
                let yv = &self.nodes[idx].value;
                let dx = &mut self.grads[x];
                let rows = yv.len() / d.max(1);
                for r in 0..rows {
                    let y = &yv[r * d..(r + 1) * d];
                    let g = &dy[r * d..(r + 1) * d];
                    let mut dot = F::ZERO;
                    for i in 0..d {
                        dot += y[i] * g[i];
                    }
                    for i in 0..d {
                        dx[r * d + i] += y[i] * (g[i] - dot);
                    }
                }
                self.grads[idx] = dy;
            }
            Op::Rope { x, n_heads } => {
                let (t_len, d) = (self.nodes[idx].shape[0], self.nodes[idx].shape[1]);
                let mut dx = self.grads[idx].clone();
                // The rotation is orthogonal; its adjoint is the inverse rotation.
                apply_rope(&mut dx, t_len, d, n_heads, true);
                for (g, &dv) in self.grads[x].iter_mut().zip(&dx) {
                    *g += dv;
                }
            }
            Op::CausalAttention { q, k, v, n_heads } => {
                let (t_len, d) = (self.nodes[idx].shape[0], self.nodes[idx].shape[1]);
                let hd = d / n_heads;
                let scale = F::from_f64(1.0 / (hd as f64).sqrt());
                let dy = std::mem::take(&mut self.grads[idx]);
                let probs = std::mem::take(&mut self.nodes[idx].aux);
                let mut dq = vec![F::ZERO; t_len * d];
                let mut dk = vec![F::ZERO; t_len * d];
                let mut dv = vec![F::ZERO; t_len * d];
                {
                    let qv = &self.nodes[q].value;
                    let kv = &self.nodes[k].value;
                    let vv = &self.nodes[v].value;
                    let mut dprobs = vec![F::ZERO; t_len];
                    let mut dscores = vec![F::ZERO; t_len];
                    for h in 0..n_heads {
                        let off = h * hd;
                        for t in 0..t_len {
                            let p = &probs[(h * t_len + t) * t_len..(h * t_len + t) * t_len + t + 1];
                            // dv[s] += p[s] * dy[t]; dprobs[s] = dot(dy[t], v[s])
                            for s in 0..=t {
                                let mut acc = F::ZERO;
                                for i in 0..hd {
                                    let g = dy[t * d + off + i];
                                    dv[s * d + off + i] += p[s] * g;
                                    acc += g * vv[s * d + off + i];
                                }
                                dprobs[s] = acc;
                            }
                            // softmax backward over s..=t
                            let mut dot = F::ZERO;
                            for s in 0..=t {
                                dot += p[s] * dprobs[s];
                            }
                            for s in 0..=t {
                                dscores[s] = p[s] * (dprobs[s] - dot) * scale;
                            }
                            for s in 0..=t {
                                let ds = dscores[s];
                                for i in 0..hd {
                                    dq[t * d + off + i] += ds * kv[s * d + off + i];
                                    dk[s * d + off + i] += ds * qv[t * d + off + i];
                                }
                            }
                        }
                    }
                }
                for (g, &dvv) in self.grads[q].iter_mut().zip(&dq) {
                    *g += dvv;
                }
                for (g, &dvv) in self.grads[k].iter_mut().zip(&dk) {
                    *g += dvv;
                }
                for (g, &dvv) in self.grads[v].iter_mut().zip(&dv) {
                    *g += dvv;
                }
                self.nodes[idx].aux = probs;
                self.grads[idx] = dy;
            }
            Op::Embedding { table, ids } => {
                let d = self.nodes[table].shape[1];
                let dy = std::mem::take(&mut self.grads[idx]);
                let dt = &mut self.grads[table];
                for (t, &id) in ids.iter().enumerate() {
                    for i in 0..d {
                        dt[id * d + i] += dy[t * d + i];
                    }
                }
                self.grads[idx] = dy;
            }
            Op::CrossEntropy { logits, targets } => {
                let vocab = self.nodes[logits].shape[1];
                let t_len = targets.len();
                let dloss = self.grads[idx][0];
                let probs = std::mem::take(&mut self.nodes[idx].aux);
                let scale = dloss * F::from_f64(1.0 / t_len as f64);
                let dl = &mut self.grads[logits];
                for t in 0..t_len {
                    for i in 0..vocab {
                        let onehot = if i == targets[t] { F::ONE } else { F::ZERO };
                        dl[t * vocab + i] += (probs[t * vocab + i] - onehot) * scale;
                    }
                }
                self.nodes[idx].aux = probs;
            }
        }
    }
}

/// `out += a @ b` for row-major `[m,k] x [k,n]`, accumulation order fixed.
fn matmul_into<F: Real>(out: &mut [F], a: &[F], b: &[F], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            let b_row = &b[p * n..(p + 1) * n];
            for j in 0..n {
                out_row[j] += a_ip * b_row[j];
            }
        }
    }
}

fn sigmoid<F: Real>(x: F) -> F {
    F::ONE / (F::ONE + (-x).exp())
}

/// Max-subtracted softmax of `row` into `out` (same length).
fn softmax_row<F: Real>(out: &mut [F], row: &[F]) {
    let mut max = row[0];
    for &v in row.iter() {
        max = max.max(v);
    }
    let mut sum = F::ZERO;
    for (o, &v) in out.iter_mut().zip(row) {
        let e = (v - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o = *o / sum;
    }
}

/// Rotates head-local pairs `(2j, 2j+1)` of each position by
/// `pos * theta^(-2j/head_dim)`; `inverse` applies the opposite rotation.
fn apply_rope<F: Real>(x: &mut [F], t_len: usize, d: usize, n_heads: usize, inverse: bool) {
    let hd = d / n_heads;
    for t in 0..t_len {
        for h in 0..n_heads {
            let off = t * d + h * hd;
            for j in 0..hd / 2 {
                let freq = ROPE_THETA.powf(-2.0 * j as f64 / hd as f64);
                let angle = t as f64 * freq * if inverse { -1.0 } else { 1.0 };
                let (sin, cos) = (F::from_f64(angle.sin()), F::from_f64(angle.cos()));
                let x0 = x[off + 2 * j];
                let x1 = x[off + 2 * j + 1];
                x[off + 2 * j] = x0 * cos - x1 * sin;
                x[off + 2 * j + 1] = x0 * sin + x1 * cos;
            }
        }
    }
}
