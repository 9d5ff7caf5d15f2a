//! Dense primitives on row-major matrices and their reverse-mode rules.

use alloc::vec;
use alloc::vec::Vec;

use crate::scalar::{dot, Scalar};

use super::params::{LinearSlots, ModelParams, NormSlots};

const LN_EPS: f64 = 1e-5;

/// `y = x W^T + b` for `n` rows.
pub(crate) fn linear<T: Scalar>(p: &ModelParams<T>, s: LinearSlots, x: &[T], n: usize) -> Vec<T> {
    let w = p.get(s.weight);
    let bias = s.bias.map(|b| p.get(b));
    let mut y = vec![T::zero(); n * s.out_dim];
    for i in 0..n {
        let xi = &x[i * s.in_dim..(i + 1) * s.in_dim];
        let yi = &mut y[i * s.out_dim..(i + 1) * s.out_dim];
        for (o, yo) in yi.iter_mut().enumerate() {
            let mut acc = dot(&w[o * s.in_dim..(o + 1) * s.in_dim], xi);
            if let Some(b) = bias {
                acc += b[o];
            }
            *yo = acc;
        }
    }
    y
}

/// Accumulates weight and bias gradients and returns `dx` when requested.
pub(crate) fn linear_backward<T: Scalar>(
    p: &ModelParams<T>,
    g: &mut ModelParams<T>,
    s: LinearSlots,
    x: &[T],
    dy: &[T],
    n: usize,
    want_dx: bool,
) -> Option<Vec<T>> {
    {
        let dw = g.get_mut(s.weight);
        for i in 0..n {
            let xi = &x[i * s.in_dim..(i + 1) * s.in_dim];
            for o in 0..s.out_dim {
                let d = dy[i * s.out_dim + o];
                if d == T::zero() {
                    continue;
                }
                let row = &mut dw[o * s.in_dim..(o + 1) * s.in_dim];
                for (r, &xv) in row.iter_mut().zip(xi) {
                    *r += d * xv;
                }
            }
        }
    }
    if let Some(b) = s.bias {
        let db = g.get_mut(b);
        for i in 0..n {
            for (o, dbo) in db.iter_mut().enumerate() {
                *dbo += dy[i * s.out_dim + o];
            }
        }
    }
    if !want_dx {
        return None;
    }
    let w = p.get(s.weight);
    let mut dx = vec![T::zero(); n * s.in_dim];
    for i in 0..n {
        let dxi = &mut dx[i * s.in_dim..(i + 1) * s.in_dim];
        for o in 0..s.out_dim {
            let d = dy[i * s.out_dim + o];
            if d == T::zero() {
                continue;
            }
            for (r, &wv) in dxi.iter_mut().zip(&w[o * s.in_dim..(o + 1) * s.in_dim]) {
                *r += d * wv;
            }
        }
    }
    Some(dx)
}

#[derive(Debug, Clone)]
pub(crate) struct NormCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub out: Vec<T>,
}

pub(crate) fn layer_norm<T: Scalar>(
    p: &ModelParams<T>,
    s: NormSlots,
    x: &[T],
    n: usize,
) -> NormCache<T> {
    let d = s.dim;
    let gain = p.get(s.gain);
    let bias = p.get(s.bias);
    let dn = T::of(d as f64);
    let mut xhat = vec![T::zero(); n * d];
    let mut out = vec![T::zero(); n * d];
    let mut inv_std = vec![T::zero(); n];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().copied().sum::<T>() / dn;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
        let is = T::one() / (var + T::of(LN_EPS)).sqrt();
        inv_std[i] = is;
        for j in 0..d {
            let xh = (row[j] - mean) * is;
            xhat[i * d + j] = xh;
            out[i * d + j] = gain[j] * xh + bias[j];
        }
    }
    NormCache { xhat, inv_std, out }
}

pub(crate) fn layer_norm_backward<T: Scalar>(
    p: &ModelParams<T>,
    g: &mut ModelParams<T>,
    s: NormSlots,
    cache: &NormCache<T>,
    dy: &[T],
    n: usize,
) -> Vec<T> {
    let d = s.dim;
    let dn = T::of(d as f64);
    {
        let dgain = g.get_mut(s.gain);
        for i in 0..n {
            for j in 0..d {
                dgain[j] += dy[i * d + j] * cache.xhat[i * d + j];
            }
        }
    }
    {
        let dbias = g.get_mut(s.bias);
        for i in 0..n {
            for j in 0..d {
                dbias[j] += dy[i * d + j];
            }
        }
    }
    let gain = p.get(s.gain);
    let mut dx = vec![T::zero(); n * d];
    for i in 0..n {
        let xh = &cache.xhat[i * d..(i + 1) * d];
        let dyr = &dy[i * d..(i + 1) * d];
        let mut sum_dxh = T::zero();
        let mut sum_dxh_xh = T::zero();
        for j in 0..d {
            let dxh = dyr[j] * gain[j];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh[j];
        }
        let scale = cache.inv_std[i] / dn;
        for j in 0..d {
            let dxh = dyr[j] * gain[j];
            dx[i * d + j] = scale * (dn * dxh - sum_dxh - xh[j] * sum_dxh_xh);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// Tanh approximation of GELU.
#[inline]
pub(crate) fn gelu<T: Scalar>(x: T) -> T {
    let u = T::of(GELU_C) * (x + T::of(GELU_K) * x * x * x);
    T::of(0.5) * x * (T::one() + u.tanh())
}

#[inline]
pub(crate) fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let k = T::of(GELU_K);
    let u = c * (x + k * x * x * x);
    let th = u.tanh();
    let du = c * (T::one() + T::of(3.0) * k * x * x);
    T::of(0.5) * (T::one() + th) + T::of(0.5) * x * (T::one() - th * th) * du
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// In-place softmax of one row.
pub(crate) fn softmax_row<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Scales to unit L2 norm; returns the original norm.
pub(crate) fn normalize<T: Scalar>(v: &[T]) -> (Vec<T>, T) {
    let norm = crate::scalar::l2_norm(v);
    (v.iter().map(|&x| x / norm).collect(), norm)
}

/// Gradient through `y = x / ||x||`.
pub(crate) fn normalize_backward<T: Scalar>(y: &[T], norm: T, dy: &[T]) -> Vec<T> {
    let proj = dot(y, dy);
    y.iter()
        .zip(dy)
        .map(|(&yi, &dyi)| (dyi - yi * proj) / norm)
        .collect()
}
