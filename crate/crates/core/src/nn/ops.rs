//! Forward kernels shared by the standalone API and the tape.

use crate::scalar::Scalar;

use super::{NnError, Tensor};

fn shape_err(msg: String) -> NnError {
    NnError::Shape(msg)
}

/// Row-wise softmax in place. Disallowed logits get [`Scalar::MASK`] added
/// before normalization and their weights are then set to exactly zero.
pub fn masked_softmax_rows<T: Scalar>(
    logits: &mut [T],
    cols: usize,
    allow: Option<&[bool]>,
) -> Result<(), NnError> {
    let mask = T::of(T::MASK);
    for (i, row) in logits.chunks_mut(cols).enumerate() {
        let allowed = allow.map(|a| &a[i * cols..(i + 1) * cols]);
        if let Some(a) = allowed {
            if !a.iter().any(|&x| x) {
                return Err(NnError::EmptyRow(i));
            }
            for (x, &ok) in row.iter_mut().zip(a) {
                if !ok {
                    *x += mask;
                }
            }
        }
        let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
        let mut sum = T::zero();
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
        if let Some(a) = allowed {
            for (x, &ok) in row.iter_mut().zip(a) {
                if !ok {
                    *x = T::zero();
                }
            }
        }
    }
    Ok(())
}

/// Softmax weights of scaled dot-product attention with additive bias.
pub fn attention_weights<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    allow: &[bool],
    bias: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    let (n, m) = (q.rows(), k.rows());
    if allow.len() != n * m || bias.len() != n * m {
        return Err(shape_err(format!(
            "attention mask/bias must be {n}x{m}, got {} / {}",
            allow.len(),
            bias.len()
        )));
    }
    let scale = T::one() / T::of(q.cols() as f64).sqrt();
    let mut logits = q.matmul_t(k)?.map(|x| x * scale);
    logits.add_assign(bias);
    masked_softmax_rows(logits.data_mut(), m, Some(allow))?;
    Ok(logits)
}

/// `softmax(QKᵀ/√d_h + bias, masked) · V`.
pub fn masked_attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    allow: &[bool],
    bias: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    if k.rows() != v.rows() {
        return Err(shape_err(format!(
            "keys {:?} and values {:?} differ in length",
            k.shape(),
            v.shape()
        )));
    }
    attention_weights(q, k, allow, bias)?.matmul(v)
}

pub(crate) fn add_bias<T: Scalar>(x: &mut Tensor<T>, b: &Tensor<T>) -> Result<(), NnError> {
    let c = x.cols();
    if b.len() != c {
        return Err(shape_err(format!(
            "bias of {} values for {c} columns",
            b.len()
        )));
    }
    for row in x.data_mut().chunks_mut(c) {
        for (a, &bb) in row.iter_mut().zip(b.data()) {
            *a += bb;
        }
    }
    Ok(())
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// `ReLU(x·W1 + b1)·W2 + b2`.
pub fn feed_forward<T: Scalar>(
    x: &Tensor<T>,
    w1: &Tensor<T>,
    b1: &Tensor<T>,
    w2: &Tensor<T>,
    b2: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    let mut h = x.matmul(w1)?;
    add_bias(&mut h, b1)?;
    let mut out = relu(&h).matmul(w2)?;
    add_bias(&mut out, b2)?;
    Ok(out)
}

pub(crate) struct NormCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
}

pub(crate) fn layer_norm_cached<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<(Tensor<T>, NormCache<T>), NnError> {
    let d = x.cols();
    if d == 0 || gamma.len() != d || beta.len() != d {
        return Err(shape_err(format!(
            "layer_norm over {d} columns with gamma {:?} beta {:?}",
            gamma.shape(),
            beta.shape()
        )));
    }
    let dn = T::of(d as f64);
    let mut out = Vec::with_capacity(x.len());
    let mut xhat = Vec::with_capacity(x.len());
    let mut inv_std = Vec::with_capacity(x.rows());
    for row in x.data().chunks(d) {
        let mean = row.iter().copied().sum::<T>() / dn;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
        let is = T::one() / (var + eps).sqrt();
        inv_std.push(is);
        for (j, &v) in row.iter().enumerate() {
            let h = (v - mean) * is;
            xhat.push(h);
            out.push(h * gamma.data()[j] + beta.data()[j]);
        }
    }
    Ok((
        Tensor::from_vec(x.shape(), out)?,
        NormCache { xhat, inv_std },
    ))
}

/// Per-row `(x − mean)/√(var + eps)·gamma + beta` with population variance.
pub fn layer_norm<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<Tensor<T>, NnError> {
    Ok(layer_norm_cached(x, gamma, beta, eps)?.0)
}

/// Sum of `−log softmax(row)[target]` over non-pad rows, the row count used,
/// and the softmax probabilities (zero rows at padding).
pub(crate) fn cross_entropy_sum<T: Scalar>(
    logits: &Tensor<T>,
    targets: &[usize],
    pad_id: usize,
) -> Result<(T, usize, Vec<T>), NnError> {
    let (n, v) = (logits.rows(), logits.cols());
    if targets.len() != n {
        return Err(shape_err(format!("{} targets for {n} rows", targets.len())));
    }
    let mut probs = vec![T::zero(); n * v];
    let mut total = T::zero();
    let mut count = 0;
    for (i, &t) in targets.iter().enumerate() {
        if t == pad_id {
            continue;
        }
        if t >= v {
            return Err(shape_err(format!("target {t} outside vocabulary of {v}")));
        }
        let row = logits.row(i);
        let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
        let sum: T = row.iter().map(|&x| (x - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - row[t];
        for (p, &x) in probs[i * v..(i + 1) * v].iter_mut().zip(row) {
            *p = (x - lse).exp();
        }
        count += 1;
    }
    if count == 0 {
        return Err(NnError::AllPad);
    }
    Ok((total, count, probs))
}

/// Mean token cross-entropy over non-pad positions, with the count used.
pub fn cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    targets: &[usize],
    pad_id: usize,
) -> Result<(T, usize), NnError> {
    let (sum, count, _) = cross_entropy_sum(logits, targets, pad_id)?;
    Ok((sum / T::of(count as f64), count))
}
