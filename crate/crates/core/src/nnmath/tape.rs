//! Per-evaluation reverse-mode tape.
//!
//! Every value is a row-major `(rows, cols)` matrix where rows index the
//! mini-batch. Operations are recorded in evaluation order; [`Tape::backward`]
//! walks them in reverse and accumulates parameter gradients into the
//! [`ParamStore`]. Parameter values are copied onto the tape, so a tape never
//! borrows the store it was built from.

use super::params::{ParamStore, TensorId};

pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(TensorId),
    /// `x · w + b`, with `b` broadcast over rows.
    Affine { x: Var, w: Var, b: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Exp(Var),
    Tanh(Var),
    Relu(Var),
    Clamp(Var, f64, f64),
    Columns(Var, Vec<usize>),
    Concat(Vec<Var>),
    RowSum(Var),
    Mean(Var),
    GaussLogPdf { x: Var, mean: Var, log_std: Var },
}

#[derive(Debug, Clone)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn rows(&self, v: Var) -> usize {
        self.nodes[v.0].rows
    }

    pub fn cols(&self, v: Var) -> usize {
        self.nodes[v.0].cols
    }

    /// Row `r` of `v`.
    pub fn row(&self, v: Var, r: usize) -> &[f64] {
        let n = &self.nodes[v.0];
        &n.value[r * n.cols..(r + 1) * n.cols]
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        let needs_grad = match &op {
            Op::Leaf => false,
            Op::Param(_) => true,
            Op::Affine { x, w, b } => self.needs(*x) || self.needs(*w) || self.needs(*b),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => self.needs(*a) || self.needs(*b),
            Op::Scale(a, _)
            | Op::Exp(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Clamp(a, _, _)
            | Op::Columns(a, _)
            | Op::RowSum(a)
            | Op::Mean(a) => self.needs(*a),
            Op::Concat(vs) => vs.iter().any(|v| self.needs(*v)),
            Op::GaussLogPdf { x, mean, log_std } => {
                self.needs(*x) || self.needs(*mean) || self.needs(*log_std)
            }
        };
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input with no gradient.
    pub fn leaf(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        assert_eq!(value.len(), rows * cols, "leaf shape mismatch");
        self.push(rows, cols, value, Op::Leaf)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.leaf(rows, cols, vec![0.0; rows * cols])
    }

    pub fn param(&mut self, params: &ParamStore, id: TensorId) -> Var {
        self.push(id.rows, id.cols, params.tensor(id).to_vec(), Op::Param(id))
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (rows, input) = self.shape(x);
        let (w_rows, out) = self.shape(w);
        assert_eq!(input, w_rows, "affine: input width does not match weight rows");
        assert_eq!(self.shape(b), (1, out), "affine: bias shape");
        let xv = &self.nodes[x.0].value;
        let wv = &self.nodes[w.0].value;
        let bv = &self.nodes[b.0].value;
        let mut y = vec![0.0; rows * out];
        for r in 0..rows {
            let yr = &mut y[r * out..(r + 1) * out];
            yr.copy_from_slice(bv);
            for (i, &xi) in xv[r * input..(r + 1) * input].iter().enumerate() {
                let wi = &wv[i * out..(i + 1) * out];
                for (yj, &wij) in yr.iter_mut().zip(wi) {
                    *yj += xi * wij;
                }
            }
        }
        self.push(rows, out, y, Op::Affine { x, w, b })
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let shape = self.shape(a);
        assert_eq!(shape, self.shape(b), "elementwise shape mismatch");
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(shape.0, shape.1, value, op)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (rows, cols) = self.shape(a);
        let value = self.nodes[a.0].value.iter().map(|&x| f(x)).collect();
        self.push(rows, cols, value, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| c * x, Op::Scale(a, c))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, f64::exp, Op::Exp(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.map(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    /// `c · tanh(a / c)`: smooth clamp of `a` into `(-c, c)`.
    pub fn soft_clamp(&mut self, a: Var, c: f64) -> Var {
        let inner = self.scale(a, 1.0 / c);
        let t = self.tanh(inner);
        self.scale(t, c)
    }

    /// Gathers the listed columns (indices may repeat or reorder).
    pub fn columns(&mut self, a: Var, idx: &[usize]) -> Var {
        let (rows, cols) = self.shape(a);
        assert!(idx.iter().all(|&i| i < cols), "column index out of range");
        let src = &self.nodes[a.0].value;
        let mut value = Vec::with_capacity(rows * idx.len());
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            value.extend(idx.iter().map(|&i| row[i]));
        }
        self.push(rows, idx.len(), value, Op::Columns(a, idx.to_vec()))
    }

    pub fn column_range(&mut self, a: Var, range: std::ops::Range<usize>) -> Var {
        let idx: Vec<usize> = range.collect();
        self.columns(a, &idx)
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.rows(parts[0]);
        assert!(parts.iter().all(|&p| self.rows(p) == rows), "concat row mismatch");
        let cols: usize = parts.iter().map(|&p| self.cols(p)).sum();
        let mut value = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                value.extend_from_slice(self.row(p, r));
            }
        }
        self.push(rows, cols, value, Op::Concat(parts.to_vec()))
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let (rows, cols) = self.shape(a);
        let src = &self.nodes[a.0].value;
        let value = (0..rows)
            .map(|r| src[r * cols..(r + 1) * cols].iter().sum())
            .collect();
        self.push(rows, 1, value, Op::RowSum(a))
    }

    /// Mean over every element, as a `1 × 1` matrix.
    pub fn mean(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let m = v.iter().sum::<f64>() / v.len() as f64;
        self.push(1, 1, vec![m], Op::Mean(a))
    }

    /// Row-wise diagonal Gaussian log-density, returning `(rows, 1)`.
    pub fn gaussian_logpdf(&mut self, x: Var, mean: Var, log_std: Var) -> Var {
        let (rows, cols) = self.shape(x);
        assert_eq!(self.shape(mean), (rows, cols), "gaussian mean shape");
        assert_eq!(self.shape(log_std), (rows, cols), "gaussian log_std shape");
        let (xv, mv, sv) = (
            &self.nodes[x.0].value,
            &self.nodes[mean.0].value,
            &self.nodes[log_std.0].value,
        );
        let value = (0..rows)
            .map(|r| {
                let s = r * cols..(r + 1) * cols;
                gaussian_terms(&xv[s.clone()], &mv[s.clone()], &sv[s])
            })
            .collect();
        self.push(rows, 1, value, Op::GaussLogPdf { x, mean, log_std })
    }

    /// Standard-normal log-density per row.
    pub fn std_normal_logpdf(&mut self, x: Var) -> Var {
        let (rows, cols) = self.shape(x);
        let zeros = self.zeros(rows, cols);
        self.gaussian_logpdf(x, zeros, zeros)
    }

    /// Propagates `seed` (the gradient of the loss with respect to `out`)
    /// backwards and accumulates into `params.grads`. Repeated calls
    /// accumulate; the caller zeroes. An empty tape is a no-op.
    pub fn backward(&self, out: Var, seed: &[f64], params: &mut ParamStore) {
        if self.nodes.is_empty() {
            return;
        }
        assert_eq!(seed.len(), self.value(out).len(), "seed gradient shape");
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; out.0 + 1];
        grads[out.0] = Some(seed.to_vec());
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    for (acc, gi) in params.grads_mut()[id.range()].iter_mut().zip(&g) {
                        *acc += gi;
                    }
                }
                Op::Affine { x, w, b } => self.back_affine(&g, node, *x, *w, *b, &mut grads),
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, |dst| add_into(dst, &g));
                    self.accumulate(&mut grads, *b, |dst| add_into(dst, &g));
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, *a, |dst| add_into(dst, &g));
                    self.accumulate(&mut grads, *b, |dst| {
                        dst.iter_mut().zip(&g).for_each(|(d, gi)| *d -= gi)
                    });
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    self.accumulate(&mut grads, *a, |dst| {
                        for ((d, gi), bi) in dst.iter_mut().zip(&g).zip(bv) {
                            *d += gi * bi;
                        }
                    });
                    self.accumulate(&mut grads, *b, |dst| {
                        for ((d, gi), ai) in dst.iter_mut().zip(&g).zip(av) {
                            *d += gi * ai;
                        }
                    });
                }
                Op::Scale(a, c) => self.accumulate(&mut grads, *a, |dst| {
                    dst.iter_mut().zip(&g).for_each(|(d, gi)| *d += c * gi)
                }),
                Op::Exp(a) => self.accumulate(&mut grads, *a, |dst| {
                    for ((d, gi), y) in dst.iter_mut().zip(&g).zip(&node.value) {
                        *d += gi * y;
                    }
                }),
                Op::Tanh(a) => self.accumulate(&mut grads, *a, |dst| {
                    for ((d, gi), y) in dst.iter_mut().zip(&g).zip(&node.value) {
                        *d += gi * (1.0 - y * y);
                    }
                }),
                Op::Relu(a) => {
                    let av = self.value(*a);
                    self.accumulate(&mut grads, *a, |dst| {
                        for ((d, gi), x) in dst.iter_mut().zip(&g).zip(av) {
                            if *x > 0.0 {
                                *d += gi;
                            }
                        }
                    })
                }
                Op::Clamp(a, lo, hi) => {
                    let av = self.value(*a);
                    self.accumulate(&mut grads, *a, |dst| {
                        for ((d, gi), x) in dst.iter_mut().zip(&g).zip(av) {
                            if x >= lo && x <= hi {
                                *d += gi;
                            }
                        }
                    })
                }
                Op::Columns(a, idx) => {
                    let src_cols = self.cols(*a);
                    let k = idx.len();
                    self.accumulate(&mut grads, *a, |dst| {
                        for r in 0..node.rows {
                            for (j, &c) in idx.iter().enumerate() {
                                dst[r * src_cols + c] += g[r * k + j];
                            }
                        }
                    })
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let pc = self.cols(p);
                        self.accumulate(&mut grads, p, |dst| {
                            for r in 0..node.rows {
                                let src = &g[r * node.cols + start..r * node.cols + start + pc];
                                add_into(&mut dst[r * pc..(r + 1) * pc], src);
                            }
                        });
                        start += pc;
                    }
                }
                Op::RowSum(a) => {
                    let cols = self.cols(*a);
                    self.accumulate(&mut grads, *a, |dst| {
                        for (r, gr) in g.iter().enumerate() {
                            dst[r * cols..(r + 1) * cols].iter_mut().for_each(|d| *d += gr);
                        }
                    })
                }
                Op::Mean(a) => {
                    let n = self.value(*a).len() as f64;
                    self.accumulate(&mut grads, *a, |dst| {
                        dst.iter_mut().for_each(|d| *d += g[0] / n)
                    })
                }
                Op::GaussLogPdf { x, mean, log_std } => {
                    let cols = self.cols(*x);
                    let (xv, mv, sv) = (self.value(*x), self.value(*mean), self.value(*log_std));
                    // z = (x - m) e^{-s};  d/dx = -z e^{-s},  d/dm = z e^{-s},  d/ds = z^2 - 1
                    let mut dx = vec![0.0; xv.len()];
                    let mut ds = vec![0.0; xv.len()];
                    for r in 0..node.rows {
                        for c in 0..cols {
                            let k = r * cols + c;
                            let inv = (-sv[k]).exp();
                            let z = (xv[k] - mv[k]) * inv;
                            dx[k] = -g[r] * z * inv;
                            ds[k] = g[r] * (z * z - 1.0);
                        }
                    }
                    self.accumulate(&mut grads, *mean, |dst| {
                        dst.iter_mut().zip(&dx).for_each(|(d, v)| *d -= v)
                    });
                    self.accumulate(&mut grads, *x, |dst| add_into(dst, &dx));
                    self.accumulate(&mut grads, *log_std, |dst| add_into(dst, &ds));
                }
            }
        }
    }

    fn accumulate(
        &self,
        grads: &mut [Option<Vec<f64>>],
        v: Var,
        f: impl FnOnce(&mut [f64]),
    ) {
        if !self.needs(v) {
            return;
        }
        let len = self.nodes[v.0].value.len();
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
        f(slot);
    }

    fn back_affine(
        &self,
        g: &[f64],
        node: &Node,
        x: Var,
        w: Var,
        b: Var,
        grads: &mut [Option<Vec<f64>>],
    ) {
        let rows = node.rows;
        let out = node.cols;
        let input = self.cols(x);
        let xv = self.value(x);
        let wv = self.value(w);
        self.accumulate(grads, b, |db| {
            for r in 0..rows {
                add_into(db, &g[r * out..(r + 1) * out]);
            }
        });
        self.accumulate(grads, w, |dw| {
            for r in 0..rows {
                let gr = &g[r * out..(r + 1) * out];
                for (i, &xi) in xv[r * input..(r + 1) * input].iter().enumerate() {
                    for (d, gj) in dw[i * out..(i + 1) * out].iter_mut().zip(gr) {
                        *d += xi * gj;
                    }
                }
            }
        });
        self.accumulate(grads, x, |dx| {
            for r in 0..rows {
                let gr = &g[r * out..(r + 1) * out];
                for i in 0..input {
                    let wi = &wv[i * out..(i + 1) * out];
                    dx[r * input + i] += wi.iter().zip(gr).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        });
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn gaussian_terms(x: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&xi, &mi), &si)| {
            let z = (xi - mi) * (-si).exp();
            -HALF_LN_2PI - si - 0.5 * z * z
        })
        .sum()
}

/// Diagonal Gaussian log-density
/// `Σ_i [ -½ log 2π - s_i - ½ ((x_i - m_i) / e^{s_i})² ]`.
pub fn gaussian_logpdf(x: &[f64], mean: &[f64], log_std: &[f64]) -> crate::Result<f64> {
    if mean.len() != x.len() {
        return Err(crate::Error::dim("gaussian_logpdf mean", x.len(), mean.len()));
    }
    if log_std.len() != x.len() {
        return Err(crate::Error::dim("gaussian_logpdf log_std", x.len(), log_std.len()));
    }
    Ok(gaussian_terms(x, mean, log_std))
}
