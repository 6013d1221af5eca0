//! Pure forward-pass math on [`Tensor`] values, shared by the tape ops.
//!
//! Functions here do no shape validation beyond debug assertions; the tape
//! validates shapes before calling in.

use super::Tensor;

pub fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let data = a.data().iter().map(|&v| f(v)).collect();
    Tensor { shape: a.shape.clone(), data: std::sync::Arc::new(data) }
}

pub fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor { shape: a.shape.clone(), data: std::sync::Arc::new(data) }
}

/// `[m,k] x [k,n] -> [m,n]`, skipping zero left entries so sparse
/// bag-of-words rows cost only their support.
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    debug_assert_eq!(b.shape()[0], k);
    let mut out = vec![0.0; m * n];
    let ad = a.data();
    let bd = b.data();
    for i in 0..m {
        for p in 0..k {
            let av = ad[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    Tensor { shape: vec![m, n], data: std::sync::Arc::new(out) }
}

/// Transposed rank-2 copy.
pub fn transpose(a: &Tensor) -> Tensor {
    let (m, n) = (a.shape()[0], a.shape()[1]);
    let ad = a.data();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = ad[i * n + j];
        }
    }
    Tensor { shape: vec![n, m], data: std::sync::Arc::new(out) }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Iterate a rank-`r` tensor as (outer, axis, inner) lanes for reductions
/// along `axis`. Returns (outer_count, axis_len, inner_count).
pub fn lanes(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

/// Softmax along `axis`, shifted by the lane max for stability.
pub fn softmax(a: &Tensor, axis: usize) -> Tensor {
    let (outer, len, inner) = lanes(a.shape(), axis);
    let ad = a.data();
    let mut out = vec![0.0; ad.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |l: usize| (o * len + l) * inner + i;
            let mut mx = f64::NEG_INFINITY;
            for l in 0..len {
                mx = mx.max(ad[idx(l)]);
            }
            let mut sum = 0.0;
            for l in 0..len {
                let e = (ad[idx(l)] - mx).exp();
                out[idx(l)] = e;
                sum += e;
            }
            for l in 0..len {
                out[idx(l)] /= sum;
            }
        }
    }
    Tensor { shape: a.shape.clone(), data: std::sync::Arc::new(out) }
}

/// Log-softmax along `axis` via the shifted log-sum-exp.
pub fn log_softmax(a: &Tensor, axis: usize) -> Tensor {
    let (outer, len, inner) = lanes(a.shape(), axis);
    let ad = a.data();
    let mut out = vec![0.0; ad.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |l: usize| (o * len + l) * inner + i;
            let mut mx = f64::NEG_INFINITY;
            for l in 0..len {
                mx = mx.max(ad[idx(l)]);
            }
            let mut sum = 0.0;
            for l in 0..len {
                sum += (ad[idx(l)] - mx).exp();
            }
            let lse = mx + sum.ln();
            for l in 0..len {
                out[idx(l)] = ad[idx(l)] - lse;
            }
        }
    }
    Tensor { shape: a.shape.clone(), data: std::sync::Arc::new(out) }
}

/// Valid cross-correlation of `seq` `[l, e]` with a filter bank whose rows
/// flatten to `width * e` values each, producing `[l - w + 1, f]`.
pub fn conv1d(seq: &Tensor, filters: &Tensor, width: usize) -> Tensor {
    let (l, e) = (seq.shape()[0], seq.shape()[1]);
    let f = filters.shape()[0];
    debug_assert_eq!(filters.numel(), f * width * e);
    let steps = l - width + 1;
    let sd = seq.data();
    let fd = filters.data();
    let mut out = vec![0.0; steps * f];
    for t in 0..steps {
        let window = &sd[t * e..(t + width) * e];
        for j in 0..f {
            let frow = &fd[j * width * e..(j + 1) * width * e];
            let mut acc = 0.0;
            for (x, w) in window.iter().zip(frow) {
                acc += x * w;
            }
            out[t * f + j] = acc;
        }
    }
    Tensor { shape: vec![steps, f], data: std::sync::Arc::new(out) }
}
