use std::borrow::Cow;
use std::sync::Arc;

use crate::scalar::Scalar;

use super::ops::{self, NormCache};
use super::{NnError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Scale(Var, T),
    Relu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        cache: NormCache<T>,
    },
    MaskedSoftmax(Var),
    GatherRows {
        table: Var,
        ids: Vec<usize>,
    },
    BiasLookup {
        table: Var,
        index: Arc<[usize]>,
        allow: Arc<[bool]>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    CrossEntropySum {
        logits: Var,
        targets: Vec<usize>,
        pad: usize,
        probs: Vec<T>,
    },
}

struct Node<'p, T: Scalar> {
    value: Cow<'p, Tensor<T>>,
    op: Op<T>,
}

/// Records a forward computation so gradients can be pulled back through it.
///
/// Leaves may borrow tensors (parameters) for the tape's lifetime; every
/// other value is owned.
pub struct Tape<'p, T: Scalar> {
    nodes: Vec<Node<'p, T>>,
}

impl<T: Scalar> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn borrowed(&mut self, t: &'p Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(t),
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let out = self.value(a).matmul_t(self.value(b))?;
        Ok(self.push(out, Op::MatMulT(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.len() != y.len() {
            return Err(NnError::Shape(format!("add {:?} + {:?}", x.shape(), y.shape())));
        }
        let mut out = x.clone();
        out.add_assign(y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Adds a length-`cols` vector to every row.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var, NnError> {
        let mut out = self.value(x).clone();
        ops::add_bias(&mut out, self.value(b))?;
        Ok(self.push(out, Op::AddBias(x, b)))
    }

    /// `x · W + b`
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let h = self.matmul(x, w)?;
        self.add_bias(h, b)
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let out = self.value(x).map(|v| v * s);
        self.push(out, Op::Scale(x, s))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = ops::relu(self.value(x));
        self.push(out, Op::Relu(x))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var, NnError> {
        let (out, cache) =
            ops::layer_norm_cached(self.value(x), self.value(gamma), self.value(beta), eps)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                cache,
            },
        ))
    }

    /// Row softmax; `allow` (same shape) masks keys out with exact zeros.
    pub fn masked_softmax(&mut self, x: Var, allow: Option<&[bool]>) -> Result<Var, NnError> {
        let mut out = self.value(x).clone();
        if let Some(a) = allow {
            if a.len() != out.len() {
                return Err(NnError::Shape(format!(
                    "mask of {} entries for {:?}",
                    a.len(),
                    out.shape()
                )));
            }
        }
        let cols = out.cols();
        ops::masked_softmax_rows(out.data_mut(), cols, allow)?;
        Ok(self.push(out, Op::MaskedSoftmax(x)))
    }

    /// Rows of `table` selected by `ids` (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var, NnError> {
        let t = self.value(table);
        let (r, c) = (t.rows(), t.cols());
        let mut out = Vec::with_capacity(ids.len() * c);
        for &id in ids {
            if id >= r {
                return Err(NnError::Shape(format!("row {id} of a {r}-row table")));
            }
            out.extend_from_slice(t.row(id));
        }
        let out = Tensor::from_vec(&[ids.len(), c], out)?;
        Ok(self.push(
            out,
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// `n×m` matrix with `table[index[k]]` where `allow[k]`, zero elsewhere.
    pub fn bias_lookup(
        &mut self,
        table: Var,
        index: Arc<[usize]>,
        allow: Arc<[bool]>,
        n: usize,
        m: usize,
    ) -> Result<Var, NnError> {
        let t = self.value(table);
        if index.len() != n * m || allow.len() != n * m {
            return Err(NnError::Shape(format!("bias index for {n}x{m}")));
        }
        let mut out = vec![T::zero(); n * m];
        for (k, o) in out.iter_mut().enumerate() {
            if allow[k] {
                *o = *t.data().get(index[k]).ok_or_else(|| {
                    NnError::Shape(format!("bias index {} outside table of {}", index[k], t.len()))
                })?;
            }
        }
        let out = Tensor::from_vec(&[n, m], out)?;
        Ok(self.push(out, Op::BiasLookup { table, index, allow }))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let t = self.value(x);
        let c = t.cols();
        if start + len > c {
            return Err(NnError::Shape(format!("columns {start}..{} of {c}", start + len)));
        }
        let mut out = Vec::with_capacity(t.rows() * len);
        for i in 0..t.rows() {
            out.extend_from_slice(&t.row(i)[start..start + len]);
        }
        let out = Tensor::from_vec(&[t.rows(), len], out)?;
        Ok(self.push(out, Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let rows = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(NnError::Shape("concat of differing row counts".into()));
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        let out = Tensor::from_vec(&[rows, total], out)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Multiplies by a fixed mask (already scaled by `1/(1−p)`).
    pub fn dropout(&mut self, x: Var, mask: Vec<T>) -> Result<Var, NnError> {
        let t = self.value(x);
        if mask.len() != t.len() {
            return Err(NnError::Shape("dropout mask size".into()));
        }
        let data = t.data().iter().zip(&mask).map(|(&a, &m)| a * m).collect();
        let out = Tensor::from_vec(t.shape(), data)?;
        Ok(self.push(out, Op::Dropout { x, mask }))
    }

    /// Summed token cross-entropy over non-pad rows; returns the scalar node
    /// and the number of rows counted.
    pub fn cross_entropy_sum(
        &mut self,
        logits: Var,
        targets: &[usize],
        pad: usize,
    ) -> Result<(Var, usize), NnError> {
        let (sum, count, probs) = ops::cross_entropy_sum(self.value(logits), targets, pad)?;
        let v = self.push(
            Tensor::scalar(sum),
            Op::CrossEntropySum {
                logits,
                targets: targets.to_vec(),
                pad,
                probs,
            },
        );
        Ok((v, count))
    }

    /// Reverse pass from a scalar `root`, seeded with `seed`.
    pub fn backward(&self, root: Var, seed: T) -> Gradients<T> {
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(self.value(root).shape(), seed));

        fn acc<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b)).expect("shapes checked forward");
                    let gb = self.value(*a).t_matmul(&g).expect("shapes checked forward");
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.matmul(self.value(*b)).expect("shapes checked forward");
                    let gb = g.t_matmul(self.value(*a)).expect("shapes checked forward");
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::AddBias(x, b) => {
                    let gb = column_sums(&g, self.value(*b).shape());
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *x, g);
                }
                Op::Scale(x, s) => {
                    let s = *s;
                    acc(&mut grads, *x, g.map(|v| v * s));
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    let data = g
                        .data()
                        .iter()
                        .zip(xv.data())
                        .map(|(&gi, &xi)| if xi > T::zero() { gi } else { T::zero() })
                        .collect();
                    acc(&mut grads, *x, Tensor::from_vec(g.shape(), data).unwrap());
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    cache,
                } => {
                    let gbeta = column_sums(&g, self.value(*beta).shape());
                    acc(&mut grads, *beta, gbeta);
                    let gv = self.value(*gamma).data();
                    let d = gv.len();
                    let dn = T::of(d as f64);
                    let mut gx = vec![T::zero(); g.len()];
                    let mut ggamma = vec![T::zero(); d];
                    for (i, grow) in g.data().chunks(d).enumerate() {
                        let xh = &cache.xhat[i * d..(i + 1) * d];
                        let mut sum_dxh = T::zero();
                        let mut sum_dxh_xh = T::zero();
                        for j in 0..d {
                            ggamma[j] += grow[j] * xh[j];
                            let dxh = grow[j] * gv[j];
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * xh[j];
                        }
                        let is = cache.inv_std[i];
                        for j in 0..d {
                            let dxh = grow[j] * gv[j];
                            gx[i * d + j] = is / dn * (dn * dxh - sum_dxh - xh[j] * sum_dxh_xh);
                        }
                    }
                    acc(&mut grads, *x, Tensor::from_vec(g.shape(), gx).unwrap());
                    let gshape = self.value(*gamma).shape().to_vec();
                    acc(&mut grads, *gamma, Tensor::from_vec(&gshape, ggamma).unwrap());
                }
                Op::MaskedSoftmax(x) => {
                    let y = &node.value;
                    let c = y.cols();
                    let mut gx = vec![T::zero(); y.len()];
                    for ((yrow, grow), out) in y
                        .data()
                        .chunks(c)
                        .zip(g.data().chunks(c))
                        .zip(gx.chunks_mut(c))
                    {
                        let dot: T = yrow.iter().zip(grow).map(|(&a, &b)| a * b).sum();
                        for j in 0..c {
                            out[j] = yrow[j] * (grow[j] - dot);
                        }
                    }
                    acc(&mut grads, *x, Tensor::from_vec(y.shape(), gx).unwrap());
                }
                Op::GatherRows { table, ids } => {
                    let tv = self.value(*table);
                    let c = tv.cols();
                    let mut gt = Tensor::zeros(tv.shape());
                    for (r, &id) in ids.iter().enumerate() {
                        let dst = &mut gt.data_mut()[id * c..(id + 1) * c];
                        for (d, &s) in dst.iter_mut().zip(g.row(r)) {
                            *d += s;
                        }
                    }
                    acc(&mut grads, *table, gt);
                }
                Op::BiasLookup { table, index, allow } => {
                    let mut gt = Tensor::zeros(self.value(*table).shape());
                    for (k, &gk) in g.data().iter().enumerate() {
                        if allow[k] {
                            gt.data_mut()[index[k]] += gk;
                        }
                    }
                    acc(&mut grads, *table, gt);
                }
                Op::SliceCols { x, start } => {
                    let xv = self.value(*x);
                    let (c, len) = (xv.cols(), g.cols());
                    let mut gx = Tensor::zeros(xv.shape());
                    for i in 0..g.rows() {
                        gx.data_mut()[i * c + start..i * c + start + len].copy_from_slice(g.row(i));
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.value(p).cols();
                        let mut gp = Vec::with_capacity(g.rows() * pc);
                        for i in 0..g.rows() {
                            gp.extend_from_slice(&g.row(i)[offset..offset + pc]);
                        }
                        offset += pc;
                        acc(&mut grads, p, Tensor::from_vec(&[g.rows(), pc], gp).unwrap());
                    }
                }
                Op::Dropout { x, mask } => {
                    let data = g.data().iter().zip(mask).map(|(&a, &m)| a * m).collect();
                    acc(&mut grads, *x, Tensor::from_vec(g.shape(), data).unwrap());
                }
                Op::CrossEntropySum {
                    logits,
                    targets,
                    pad,
                    probs,
                } => {
                    let up = g.item();
                    let lv = self.value(*logits);
                    let c = lv.cols();
                    let mut gl = vec![T::zero(); lv.len()];
                    for (i, &t) in targets.iter().enumerate() {
                        if t == *pad {
                            continue;
                        }
                        for j in 0..c {
                            gl[i * c + j] = probs[i * c + j] * up;
                        }
                        gl[i * c + t] -= up;
                    }
                    acc(&mut grads, *logits, Tensor::from_vec(lv.shape(), gl).unwrap());
                }
            }
        }
        Gradients { grads }
    }
}

fn column_sums<T: Scalar>(g: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    let c = g.cols();
    let mut out = vec![T::zero(); c];
    for row in g.data().chunks(c) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    Tensor::from_vec(shape, out).expect("bias shape has cols entries")
}

/// Gradients from one [`Tape::backward`] call, indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], d: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, d).unwrap()
    }

    /// Central-difference derivative of `f` with respect to entry `k` of `x`.
    fn numeric(f: &dyn Fn(&Tensor<f64>) -> f64, x: &Tensor<f64>, k: usize) -> f64 {
        let eps = 1e-6;
        let mut p = x.clone();
        p.data_mut()[k] += eps;
        let mut m = x.clone();
        m.data_mut()[k] -= eps;
        (f(&p) - f(&m)) / (2.0 * eps)
    }

    fn check(build: &dyn Fn(&mut Tape<f64>, Var) -> Var, x: Tensor<f64>) {
        let f = |xv: &Tensor<f64>| {
            let mut tape = Tape::new();
            let v = tape.constant(xv.clone());
            let out = build(&mut tape, v);
            tape.value(out).item()
        };
        let mut tape = Tape::new();
        let v = tape.constant(x.clone());
        let out = build(&mut tape, v);
        let grads = tape.backward(out, 1.0);
        let g = grads.get(v).expect("input reached");
        for k in 0..x.len() {
            let n = numeric(&f, &x, k);
            assert!(
                (g.data()[k] - n).abs() < 1e-6 * (1.0 + n.abs()),
                "entry {k}: analytic {} numeric {n}",
                g.data()[k]
            );
        }
    }

    #[test]
    fn attention_block_gradient() {
        let allow: Arc<[bool]> = vec![true, false, true, true, true, false, true, true, true].into();
        let index: Arc<[usize]> = vec![0, 9, 1, 2, 0, 9, 1, 2, 0].into();
        let w = t(&[3, 3], &[0.3, -0.2, 0.5, 0.1, 0.9, -0.4, -0.7, 0.2, 0.6]);
        let tb = t(&[3], &[0.2, -0.3, 0.7]);
        check(
            &|tape, x| {
                let wv = tape.constant(w.clone());
                let bt = tape.constant(tb.clone());
                let q = tape.matmul(x, wv).unwrap();
                let s = tape.matmul_t(q, x).unwrap();
                let s = tape.scale(s, 0.5);
                let b = tape.bias_lookup(bt, index.clone(), allow.clone(), 3, 3).unwrap();
                let s = tape.add(s, b).unwrap();
                let p = tape.masked_softmax(s, Some(&allow)).unwrap();
                let o = tape.matmul(p, x).unwrap();
                let o = tape.relu(o);
                let (loss, _) = tape.cross_entropy_sum(o, &[2, 0, 5], 5).unwrap();
                loss
            },
            t(&[3, 3], &[0.1, 0.4, -0.3, 0.8, -0.5, 0.2, 0.6, 0.3, -0.9]),
        );
    }

    #[test]
    fn norm_slice_concat_gradient() {
        let gamma = t(&[4], &[1.2, 0.7, -0.4, 0.9]);
        let beta = t(&[4], &[0.1, 0.0, -0.2, 0.3]);
        check(
            &|tape, x| {
                let g = tape.constant(gamma.clone());
                let b = tape.constant(beta.clone());
                let y = tape.layer_norm(x, g, b, 1e-5).unwrap();
                let l = tape.slice_cols(y, 0, 2).unwrap();
                let r = tape.slice_cols(y, 2, 2).unwrap();
                let c = tape.concat_cols(&[r, l]).unwrap();
                let c = tape.dropout(c, vec![2.0, 0.0, 2.0, 2.0, 0.0, 2.0, 2.0, 2.0]).unwrap();
                let (loss, _) = tape.cross_entropy_sum(c, &[1, 3], 9).unwrap();
                loss
            },
            t(&[2, 4], &[0.5, -1.0, 2.0, 0.3, 1.1, 0.4, -0.6, 0.9]),
        );
    }

    #[test]
    fn gather_and_parameter_gradients() {
        let mut tape = Tape::new();
        let table = t(&[3, 2], &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let tv = tape.borrowed(&table);
        let e = tape.gather_rows(tv, &[2, 0, 2]).unwrap();
        let gamma = tape.constant(t(&[2], &[1.0, 1.0]));
        let beta = tape.constant(t(&[2], &[0.0, 0.0]));
        let bias = tape.constant(t(&[2], &[0.5, -0.5]));
        let y = tape.add_bias(e, bias).unwrap();
        let y = tape.layer_norm(y, gamma, beta, 1e-5).unwrap();
        let (loss, n) = tape.cross_entropy_sum(y, &[0, 1, 1], 7).unwrap();
        assert_eq!(n, 3);
        let grads = tape.backward(loss, 1.0);
        let gt = grads.get(tv).unwrap();
        // row 1 of the table is never gathered
        assert_eq!(gt.row(1), &[0.0, 0.0]);
        assert!(grads.get(beta).unwrap().data().iter().any(|&v| v != 0.0));
        assert!(grads.get(bias).is_some());
    }
}
