//! Raw forward kernels. The graph layer calls these and saves whatever the
//! matching backward rule needs. Everything is plain row-major loops; no
//! BLAS, no SIMD intrinsics — models here are small enough that clarity and
//! bit-level determinism win.

use super::{same_shape, Scalar, Tensor};
use crate::error::{Error, Result};

fn want_rank2<T: Scalar>(op: &'static str, t: &Tensor<T>) -> Result<()> {
    if t.rank() != 2 {
        return Err(Error::ShapeMismatch { op, detail: format!("expected rank 2, got {:?}", t.shape()) });
    }
    Ok(())
}

/// C = A · B for A [m,k], B [k,n].
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    want_rank2("matmul", a)?;
    want_rank2("matmul", b)?;
    let (m, k) = (a.rows(), a.cols());
    let (k2, n) = (b.rows(), b.cols());
    if k != k2 {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            detail: format!("[{m},{k}] x [{k2},{n}]"),
        });
    }
    let mut out = Tensor::zeros(vec![m, n]);
    for i in 0..m {
        let arow = a.row(i);
        let orow = &mut out.data_mut()[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b.data()[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
    Ok(out)
}

/// C = A · Bᵀ for A [m,k], B [n,k].
pub fn matmul_nt<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    want_rank2("matmul_nt", a)?;
    want_rank2("matmul_nt", b)?;
    let (m, k) = (a.rows(), a.cols());
    let (n, k2) = (b.rows(), b.cols());
    if k != k2 {
        return Err(Error::ShapeMismatch {
            op: "matmul_nt",
            detail: format!("[{m},{k}] x [{n},{k2}]T"),
        });
    }
    let mut out = Tensor::zeros(vec![m, n]);
    for i in 0..m {
        let arow = a.row(i);
        for j in 0..n {
            let brow = b.row(j);
            let mut acc = T::zero();
            for (&av, &bv) in arow.iter().zip(brow) {
                acc = acc + av * bv;
            }
            out.set2(i, j, acc);
        }
    }
    Ok(out)
}

/// C = Aᵀ · B for A [m,k], B [m,n] → [k,n].
pub fn matmul_tn<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    want_rank2("matmul_tn", a)?;
    want_rank2("matmul_tn", b)?;
    let (m, k) = (a.rows(), a.cols());
    let (m2, n) = (b.rows(), b.cols());
    if m != m2 {
        return Err(Error::ShapeMismatch {
            op: "matmul_tn",
            detail: format!("[{m},{k}]T x [{m2},{n}]"),
        });
    }
    let mut out = Tensor::zeros(vec![k, n]);
    for i in 0..m {
        let arow = a.row(i);
        let brow = b.row(i);
        for (p, &av) in arow.iter().enumerate() {
            let orow = &mut out.data_mut()[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
    Ok(out)
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("add", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Tensor::new(a.shape().to_vec(), data)
}

/// A [m,n] plus row vector b [n], broadcast over rows.
pub fn add_row<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    want_rank2("add_row", a)?;
    if b.rank() != 1 || b.len() != a.cols() {
        return Err(Error::ShapeMismatch {
            op: "add_row",
            detail: format!("{:?} + {:?}", a.shape(), b.shape()),
        });
    }
    let n = a.cols();
    let mut out = a.clone();
    for i in 0..a.rows() {
        let row = &mut out.data_mut()[i * n..(i + 1) * n];
        for (o, &bv) in row.iter_mut().zip(b.data()) {
            *o = *o + bv;
        }
    }
    Ok(out)
}

pub fn scale<T: Scalar>(a: &Tensor<T>, c: T) -> Tensor<T> {
    a.map(|v| v * c)
}

pub fn relu<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    a.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Row-wise softmax with max-subtraction. A row that is entirely -inf (every
/// position masked) has no valid distribution and is rejected.
pub fn softmax_rows<T: Scalar>(a: &Tensor<T>) -> Result<Tensor<T>> {
    want_rank2("softmax_rows", a)?;
    let (m, n) = (a.rows(), a.cols());
    if n == 0 {
        return Err(Error::ShapeMismatch { op: "softmax_rows", detail: "zero columns".into() });
    }
    let mut out = Tensor::zeros(vec![m, n]);
    for i in 0..m {
        let row = a.row(i);
        let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
        if !max.is_finite() {
            return Err(Error::DegenerateSoftmaxRow { row: i });
        }
        let orow = &mut out.data_mut()[i * n..(i + 1) * n];
        let mut denom = T::zero();
        for (o, &v) in orow.iter_mut().zip(row) {
            let e = (v - max).exp();
            *o = e;
            denom = denom + e;
        }
        for o in orow.iter_mut() {
            *o = *o / denom;
        }
    }
    Ok(out)
}

/// Layer normalization over the last axis with learned gain/bias.
/// Returns (y, xhat, inv_std); the latter two feed the backward rule.
/// Variance is the population variance (divide by n) plus `eps` under the
/// square root.
pub fn layer_norm<T: Scalar>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    eps: T,
) -> Result<(Tensor<T>, Tensor<T>, Vec<T>)> {
    want_rank2("layer_norm", x)?;
    let n = x.cols();
    if gain.rank() != 1 || gain.len() != n || bias.rank() != 1 || bias.len() != n {
        return Err(Error::ShapeMismatch {
            op: "layer_norm",
            detail: format!("x {:?}, gain {:?}, bias {:?}", x.shape(), gain.shape(), bias.shape()),
        });
    }
    let m = x.rows();
    let inv_n = T::from_f64(1.0 / n as f64);
    let mut y = Tensor::zeros(vec![m, n]);
    let mut xhat = Tensor::zeros(vec![m, n]);
    let mut inv_stds = Vec::with_capacity(m);
    for i in 0..m {
        let row = x.row(i);
        let mut mean = T::zero();
        for &v in row {
            mean = mean + v;
        }
        mean = mean * inv_n;
        let mut var = T::zero();
        for &v in row {
            let d = v - mean;
            var = var + d * d;
        }
        var = var * inv_n;
        let inv_std = T::one() / (var + eps).sqrt();
        inv_stds.push(inv_std);
        for j in 0..n {
            let h = (row[j] - mean) * inv_std;
            xhat.set2(i, j, h);
            y.set2(i, j, gain.data()[j] * h + bias.data()[j]);
        }
    }
    Ok((y, xhat, inv_stds))
}

/// Select rows of `table` by index (embedding lookup).
pub fn gather_rows<T: Scalar>(table: &Tensor<T>, ids: &[usize]) -> Result<Tensor<T>> {
    want_rank2("gather_rows", table)?;
    let (v, d) = (table.rows(), table.cols());
    let mut out = Tensor::zeros(vec![ids.len(), d]);
    for (i, &id) in ids.iter().enumerate() {
        if id >= v {
            return Err(Error::TokenOutOfRange { id, vocab_size: v });
        }
        out.data_mut()[i * d..(i + 1) * d].copy_from_slice(table.row(id));
    }
    Ok(out)
}

/// Concatenate rank-2 tensors along the last axis.
pub fn concat_last<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts.first().ok_or(Error::ShapeMismatch {
        op: "concat_last",
        detail: "no inputs".into(),
    })?;
    want_rank2("concat_last", first)?;
    let m = first.rows();
    let mut total = 0;
    for p in parts {
        want_rank2("concat_last", p)?;
        if p.rows() != m {
            return Err(Error::ShapeMismatch {
                op: "concat_last",
                detail: format!("row counts differ: {} vs {}", m, p.rows()),
            });
        }
        total += p.cols();
    }
    let mut out = Tensor::zeros(vec![m, total]);
    for i in 0..m {
        let mut off = i * total;
        for p in parts {
            let c = p.cols();
            out.data_mut()[off..off + c].copy_from_slice(p.row(i));
            off += c;
        }
    }
    Ok(out)
}

/// Slice columns [offset, offset+width) of a rank-2 tensor.
pub fn slice_cols<T: Scalar>(a: &Tensor<T>, offset: usize, width: usize) -> Result<Tensor<T>> {
    want_rank2("slice_cols", a)?;
    let (m, n) = (a.rows(), a.cols());
    if offset + width > n {
        return Err(Error::ShapeMismatch {
            op: "slice_cols",
            detail: format!("cols [{offset}, {}) of {:?}", offset + width, a.shape()),
        });
    }
    let mut out = Tensor::zeros(vec![m, width]);
    for i in 0..m {
        out.data_mut()[i * width..(i + 1) * width]
            .copy_from_slice(&a.row(i)[offset..offset + width]);
    }
    Ok(out)
}
