//! Set transformer over item features with an outfit token and a target-item
//! token, three heads, and hand-written reverse-mode gradients.
//!
//! A sequence is `[token, u_1, .., u_L]`. There are no positional encodings and
//! every position attends to every other, so the output at the token position
//! is invariant to item order. Padded positions of a [`Batch`] row are dropped
//! before the row is encoded, which is the same as giving padded keys a
//! `-inf` attention logit and makes padding exactly inert.

pub mod batch;
pub(crate) mod ops;
pub mod params;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

pub use batch::Batch;
pub use params::{diff_specs, Layout, ModelConfig, ModelParams, ParamSpec};

use crate::error::{Error, Result};
use crate::scalar::{all_finite, dot, Scalar};
use crate::SeedRng;
use ops::{
    gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_backward, normalize,
    normalize_backward, sigmoid, softmax_row, NormCache,
};
use params::{LayerSlots, MlpSlots};

/// Evaluation is deterministic; training draws dropout masks from the run's generator.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut SeedRng),
}

impl Mode<'_> {
    fn dropout_mask<T: Scalar>(&mut self, rate: f64, len: usize) -> Option<Vec<T>> {
        match self {
            Mode::Train(rng) if rate > 0.0 => {
                let keep = 1.0 - rate;
                let scale = T::of(1.0 / keep);
                Some(
                    (0..len)
                        .map(|_| {
                            if rng.random::<f64>() < keep {
                                scale
                            } else {
                                T::zero()
                            }
                        })
                        .collect(),
                )
            }
            _ => None,
        }
    }
}

enum Head<'a, T> {
    Outfit,
    Target(&'a [T]),
}

struct LayerCache<T> {
    ln1: NormCache<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    probs: Vec<T>,
    concat: Vec<T>,
    drop1: Option<Vec<T>>,
    ln2: NormCache<T>,
    ff_pre: Vec<T>,
    ff_act: Vec<T>,
    drop2: Option<Vec<T>>,
}

struct SeqCache<T> {
    n: usize,
    /// Rows fed to the input projection: the target token first when present.
    proj_input: Vec<T>,
    target_token: bool,
    layers: Vec<LayerCache<T>>,
    final_norm: NormCache<T>,
}

struct MlpCache<T> {
    input: Vec<T>,
    pre: Vec<T>,
    act: Vec<T>,
    out: Vec<T>,
}

fn ensure_finite<T: Scalar>(v: &[T], stage: &str) -> Result<()> {
    if all_finite(v) {
        Ok(())
    } else {
        Err(Error::NonFinite(stage.into()))
    }
}

fn check_grads<T: Scalar>(p: &ModelParams<T>, g: &ModelParams<T>) -> Result<()> {
    if let Some(diff) = p.shape_diff(g) {
        return Err(Error::Shape(format!(
            "gradient registry does not match parameters: {diff}"
        )));
    }
    Ok(())
}

fn attention<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    n: usize,
    d: usize,
    heads: usize,
) -> (Vec<T>, Vec<T>) {
    let hd = d / heads;
    let scale = T::one() / T::of(hd as f64).sqrt();
    let mut out = vec![T::zero(); n * d];
    let mut probs = vec![T::zero(); heads * n * n];
    for h in 0..heads {
        let c0 = h * hd;
        for i in 0..n {
            let qi = &q[i * d + c0..i * d + c0 + hd];
            let row = &mut probs[(h * n + i) * n..(h * n + i + 1) * n];
            for (j, r) in row.iter_mut().enumerate() {
                *r = dot(qi, &k[j * d + c0..j * d + c0 + hd]) * scale;
            }
            softmax_row(row);
            let oi = &mut out[i * d + c0..i * d + c0 + hd];
            for (j, &pij) in row.iter().enumerate() {
                for (o, &vv) in oi.iter_mut().zip(&v[j * d + c0..j * d + c0 + hd]) {
                    *o += pij * vv;
                }
            }
        }
    }
    (out, probs)
}

#[allow(clippy::too_many_arguments)]
fn attention_backward<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    probs: &[T],
    dout: &[T],
    n: usize,
    d: usize,
    heads: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let hd = d / heads;
    let scale = T::one() / T::of(hd as f64).sqrt();
    let mut dq = vec![T::zero(); n * d];
    let mut dk = vec![T::zero(); n * d];
    let mut dv = vec![T::zero(); n * d];
    let mut dp = vec![T::zero(); n];
    for h in 0..heads {
        let c0 = h * hd;
        for i in 0..n {
            let pr = &probs[(h * n + i) * n..(h * n + i + 1) * n];
            let doi = &dout[i * d + c0..i * d + c0 + hd];
            for j in 0..n {
                dp[j] = dot(doi, &v[j * d + c0..j * d + c0 + hd]);
                let dvj = &mut dv[j * d + c0..j * d + c0 + hd];
                for (a, &b) in dvj.iter_mut().zip(doi) {
                    *a += pr[j] * b;
                }
            }
            let weighted: T = pr.iter().zip(&dp).map(|(&a, &b)| a * b).sum();
            for j in 0..n {
                let ds = pr[j] * (dp[j] - weighted) * scale;
                if ds == T::zero() {
                    continue;
                }
                for c in 0..hd {
                    dq[i * d + c0 + c] += ds * k[j * d + c0 + c];
                    dk[j * d + c0 + c] += ds * q[i * d + c0 + c];
                }
            }
        }
    }
    (dq, dk, dv)
}

fn layer_forward<T: Scalar>(
    p: &ModelParams<T>,
    s: &LayerSlots,
    h: &[T],
    n: usize,
    mode: &mut Mode<'_>,
) -> (Vec<T>, LayerCache<T>) {
    let cfg = p.config();
    let d = cfg.d_model;
    let ln1 = layer_norm(p, s.ln1, h, n);
    let q = linear(p, s.wq, &ln1.out, n);
    let k = linear(p, s.wk, &ln1.out, n);
    let v = linear(p, s.wv, &ln1.out, n);
    let (concat, probs) = attention(&q, &k, &v, n, d, cfg.n_heads);
    let mut attn = linear(p, s.wo, &concat, n);
    let drop1 = mode.dropout_mask::<T>(cfg.dropout_rate, n * d);
    if let Some(m) = &drop1 {
        attn.iter_mut().zip(m).for_each(|(a, &m)| *a *= m);
    }
    let mut h_mid = h.to_vec();
    h_mid.iter_mut().zip(&attn).for_each(|(a, &b)| *a += b);

    let ln2 = layer_norm(p, s.ln2, &h_mid, n);
    let ff_pre = linear(p, s.ff1, &ln2.out, n);
    let ff_act: Vec<T> = ff_pre.iter().map(|&x| gelu(x)).collect();
    let mut ff_out = linear(p, s.ff2, &ff_act, n);
    let drop2 = mode.dropout_mask::<T>(cfg.dropout_rate, n * d);
    if let Some(m) = &drop2 {
        ff_out.iter_mut().zip(m).for_each(|(a, &m)| *a *= m);
    }
    let mut h_out = h_mid;
    h_out.iter_mut().zip(&ff_out).for_each(|(a, &b)| *a += b);
    (
        h_out,
        LayerCache {
            ln1,
            q,
            k,
            v,
            probs,
            concat,
            drop1,
            ln2,
            ff_pre,
            ff_act,
            drop2,
        },
    )
}

fn layer_backward<T: Scalar>(
    p: &ModelParams<T>,
    g: &mut ModelParams<T>,
    s: &LayerSlots,
    c: &LayerCache<T>,
    dh: &[T],
    n: usize,
) -> Vec<T> {
    let cfg = p.config();
    let d = cfg.d_model;

    let mut d_ff_out = dh.to_vec();
    if let Some(m) = &c.drop2 {
        d_ff_out.iter_mut().zip(m).for_each(|(a, &m)| *a *= m);
    }
    let d_act = linear_backward(p, g, s.ff2, &c.ff_act, &d_ff_out, n, true).unwrap_or_default();
    let d_pre: Vec<T> = d_act
        .iter()
        .zip(&c.ff_pre)
        .map(|(&da, &x)| da * gelu_grad(x))
        .collect();
    let d_ln2 = linear_backward(p, g, s.ff1, &c.ln2.out, &d_pre, n, true).unwrap_or_default();
    let dx2 = layer_norm_backward(p, g, s.ln2, &c.ln2, &d_ln2, n);
    let mut dh_mid = dh.to_vec();
    dh_mid.iter_mut().zip(&dx2).for_each(|(a, &b)| *a += b);

    let mut d_attn = dh_mid.clone();
    if let Some(m) = &c.drop1 {
        d_attn.iter_mut().zip(m).for_each(|(a, &m)| *a *= m);
    }
    let d_concat = linear_backward(p, g, s.wo, &c.concat, &d_attn, n, true).unwrap_or_default();
    let (dq, dk, dv) = attention_backward(&c.q, &c.k, &c.v, &c.probs, &d_concat, n, d, cfg.n_heads);
    let mut d_ln1 = linear_backward(p, g, s.wq, &c.ln1.out, &dq, n, true).unwrap_or_default();
    for (slots, dy) in [(s.wk, &dk), (s.wv, &dv)] {
        let dx = linear_backward(p, g, slots, &c.ln1.out, dy, n, true).unwrap_or_default();
        d_ln1.iter_mut().zip(&dx).for_each(|(a, &b)| *a += b);
    }
    let dx1 = layer_norm_backward(p, g, s.ln1, &c.ln1, &d_ln1, n);
    dh_mid.iter_mut().zip(&dx1).for_each(|(a, &b)| *a += b);
    dh_mid
}

/// Runs the encoder and returns the final-norm output at the token position.
fn encode<T: Scalar>(
    p: &ModelParams<T>,
    head: Head<'_, T>,
    items: &[&[T]],
    mode: &mut Mode<'_>,
) -> Result<(Vec<T>, SeqCache<T>)> {
    let cfg = p.config();
    let lay = p.layout();
    let d = cfg.d_model;
    if items.is_empty() {
        return Err(Error::Validation("outfit has no items".into()));
    }
    let mut proj_input = Vec::with_capacity((items.len() + 1) * cfg.input_dim);
    let target_token = match head {
        Head::Outfit => false,
        Head::Target(s) => {
            if s.len() != cfg.input_dim {
                return Err(Error::Shape(format!(
                    "target token has length {}, expected {}",
                    s.len(),
                    cfg.input_dim
                )));
            }
            proj_input.extend_from_slice(s);
            if let Some(slot) = lay.blank_placeholder {
                proj_input[..cfg.image_dim].copy_from_slice(p.get(slot));
            }
            true
        }
    };
    for (i, item) in items.iter().enumerate() {
        if item.len() != cfg.input_dim {
            return Err(Error::Shape(format!(
                "item {i} feature has length {}, expected {}",
                item.len(),
                cfg.input_dim
            )));
        }
        proj_input.extend_from_slice(item);
    }
    let rows = items.len() + usize::from(target_token);
    let projected = linear(p, lay.input_projection, &proj_input, rows);
    let n = items.len() + 1;
    let mut h = if target_token {
        projected
    } else {
        let mut h = p.get(lay.outfit_token).to_vec();
        h.extend_from_slice(&projected);
        h
    };
    ensure_finite(&h, "input_projection")?;

    let mut layers = Vec::with_capacity(lay.layers.len());
    for (li, slots) in lay.layers.iter().enumerate() {
        let (next, cache) = layer_forward(p, slots, &h, n, mode);
        if !all_finite(&next) {
            return Err(Error::NonFinite(format!("layers.{li}")));
        }
        h = next;
        layers.push(cache);
    }
    let final_norm = layer_norm(p, lay.final_norm, &h[..d], 1);
    ensure_finite(&final_norm.out, "final_norm")?;
    let z = final_norm.out.clone();
    Ok((
        z,
        SeqCache {
            n,
            proj_input,
            target_token,
            layers,
            final_norm,
        },
    ))
}

fn encode_backward<T: Scalar>(
    p: &ModelParams<T>,
    g: &mut ModelParams<T>,
    cache: &SeqCache<T>,
    dz: &[T],
) {
    let cfg = p.config();
    let lay = p.layout();
    let d = cfg.d_model;
    let n = cache.n;
    let mut dh = vec![T::zero(); n * d];
    let d0 = layer_norm_backward(p, g, lay.final_norm, &cache.final_norm, dz, 1);
    dh[..d].copy_from_slice(&d0);
    for (slots, lc) in lay.layers.iter().zip(&cache.layers).rev() {
        dh = layer_backward(p, g, slots, lc, &dh, n);
    }
    let (d_proj, rows) = if cache.target_token {
        (&dh[..], n)
    } else {
        let dt = g.get_mut(lay.outfit_token);
        dt.iter_mut().zip(&dh[..d]).for_each(|(a, &b)| *a += b);
        (&dh[d..], n - 1)
    };
    let want_dx = cache.target_token && lay.blank_placeholder.is_some();
    let dx = linear_backward(
        p,
        g,
        lay.input_projection,
        &cache.proj_input,
        d_proj,
        rows,
        want_dx,
    );
    if let (Some(dx), Some(slot)) = (dx, lay.blank_placeholder) {
        let dph = g.get_mut(slot);
        dph.iter_mut()
            .zip(&dx[..cfg.image_dim])
            .for_each(|(a, &b)| *a += b);
    }
}

fn mlp<T: Scalar>(p: &ModelParams<T>, s: MlpSlots, x: &[T]) -> MlpCache<T> {
    let pre = linear(p, s.fc1, x, 1);
    let act: Vec<T> = pre.iter().map(|&v| gelu(v)).collect();
    let out = linear(p, s.fc2, &act, 1);
    MlpCache {
        input: x.to_vec(),
        pre,
        act,
        out,
    }
}

fn mlp_backward<T: Scalar>(
    p: &ModelParams<T>,
    g: &mut ModelParams<T>,
    s: MlpSlots,
    c: &MlpCache<T>,
    dout: &[T],
) -> Vec<T> {
    let d_act = linear_backward(p, g, s.fc2, &c.act, dout, 1, true).unwrap_or_default();
    let d_pre: Vec<T> = d_act
        .iter()
        .zip(&c.pre)
        .map(|(&da, &x)| da * gelu_grad(x))
        .collect();
    linear_backward(p, g, s.fc1, &c.input, &d_pre, 1, true).unwrap_or_default()
}

struct CpRow<T> {
    seq: SeqCache<T>,
    head: MlpCache<T>,
}

/// Compatibility scores plus everything needed for [`backward_cp`].
pub struct CpPass<T> {
    pub scores: Vec<T>,
    rows: Vec<CpRow<T>>,
}

pub fn forward_cp_cached<T: Scalar>(
    p: &ModelParams<T>,
    batch: &Batch<T>,
    mode: &mut Mode<'_>,
) -> Result<CpPass<T>> {
    batch.validate()?;
    if batch.input_dim != p.config().input_dim {
        return Err(Error::Shape(format!(
            "batch input_dim {} != model input_dim {}",
            batch.input_dim,
            p.config().input_dim
        )));
    }
    let mut scores = Vec::with_capacity(batch.batch_size);
    let mut rows = Vec::with_capacity(batch.batch_size);
    for b in 0..batch.batch_size {
        let items = batch.row_items(b);
        let (z, seq) = encode(p, Head::Outfit, &items, mode)?;
        let head = mlp(p, p.layout().cp_head, &z);
        let score = sigmoid(head.out[0]);
        ensure_finite(&[score], "cp_head")?;
        scores.push(score);
        rows.push(CpRow { seq, head });
    }
    Ok(CpPass { scores, rows })
}

/// Compatibility score `c` in `(0, 1)` per batch row.
pub fn forward_cp<T: Scalar>(
    p: &ModelParams<T>,
    batch: &Batch<T>,
    mode: &mut Mode<'_>,
) -> Result<Vec<T>> {
    forward_cp_cached(p, batch, mode).map(|pass| pass.scores)
}

/// Accumulates into `grads` the gradient of a scalar loss whose derivative
/// with respect to each score is `dscores`.
pub fn backward_cp<T: Scalar>(
    p: &ModelParams<T>,
    pass: &CpPass<T>,
    dscores: &[T],
    grads: &mut ModelParams<T>,
) -> Result<()> {
    check_grads(p, grads)?;
    if dscores.len() != pass.scores.len() {
        return Err(Error::Shape(format!(
            "{} score gradients for {} scores",
            dscores.len(),
            pass.scores.len()
        )));
    }
    for ((row, &c), &dc) in pass.rows.iter().zip(&pass.scores).zip(dscores) {
        if dc == T::zero() {
            continue;
        }
        let dlogit = dc * c * (T::one() - c);
        let dz = mlp_backward(p, grads, p.layout().cp_head, &row.head, &[dlogit]);
        encode_backward(p, grads, &row.seq, &dz);
    }
    Ok(())
}

/// Retrieval query `t` plus everything needed for [`backward_cir`].
pub struct CirPass<T> {
    pub t: Vec<T>,
    norm: T,
    seq: SeqCache<T>,
    head: MlpCache<T>,
}

pub fn forward_cir_cached<T: Scalar>(
    p: &ModelParams<T>,
    items: &[&[T]],
    target_token: &[T],
    mode: &mut Mode<'_>,
) -> Result<CirPass<T>> {
    let (z, seq) = encode(p, Head::Target(target_token), items, mode)?;
    let head = mlp(p, p.layout().cir_head, &z);
    ensure_finite(&head.out, "cir_head")?;
    let (t, norm) = normalize(&head.out);
    if norm <= T::zero() || !all_finite(&t) {
        return Err(Error::NonFinite(
            "cir_head: zero vector before normalization".into(),
        ));
    }
    Ok(CirPass { t, norm, seq, head })
}

/// Unit-norm target embedding for an incomplete outfit and a target token.
pub fn forward_cir<T: Scalar>(
    p: &ModelParams<T>,
    items: &[&[T]],
    target_token: &[T],
    mode: &mut Mode<'_>,
) -> Result<Vec<T>> {
    forward_cir_cached(p, items, target_token, mode).map(|pass| pass.t)
}

pub fn backward_cir<T: Scalar>(
    p: &ModelParams<T>,
    pass: &CirPass<T>,
    dt: &[T],
    grads: &mut ModelParams<T>,
) -> Result<()> {
    check_grads(p, grads)?;
    if dt.len() != pass.t.len() {
        return Err(Error::Shape("target gradient length mismatch".into()));
    }
    let dout = normalize_backward(&pass.t, pass.norm, dt);
    let dz = mlp_backward(p, grads, p.layout().cir_head, &pass.head, &dout);
    encode_backward(p, grads, &pass.seq, &dz);
    Ok(())
}

pub struct IndexPass<T> {
    pub f: Vec<T>,
    norm: T,
    input: Vec<T>,
}

pub fn index_embedding_cached<T: Scalar>(
    p: &ModelParams<T>,
    feature: &[T],
) -> Result<IndexPass<T>> {
    let cfg = p.config();
    if feature.len() != cfg.input_dim {
        return Err(Error::Shape(format!(
            "item feature has length {}, expected {}",
            feature.len(),
            cfg.input_dim
        )));
    }
    let r = linear(p, p.layout().index_head, feature, 1);
    ensure_finite(&r, "index_head")?;
    let (f, norm) = normalize(&r);
    if norm <= T::zero() || !all_finite(&f) {
        return Err(Error::NonFinite(
            "index_head: zero vector before normalization".into(),
        ));
    }
    Ok(IndexPass {
        f,
        norm,
        input: feature.to_vec(),
    })
}

/// Unit-norm single-item embedding in the retrieval space.
pub fn item_index_embedding<T: Scalar>(p: &ModelParams<T>, feature: &[T]) -> Result<Vec<T>> {
    index_embedding_cached(p, feature).map(|pass| pass.f)
}

pub fn backward_index<T: Scalar>(
    p: &ModelParams<T>,
    pass: &IndexPass<T>,
    df: &[T],
    grads: &mut ModelParams<T>,
) -> Result<()> {
    check_grads(p, grads)?;
    let dr = normalize_backward(&pass.f, pass.norm, df);
    linear_backward(p, grads, p.layout().index_head, &pass.input, &dr, 1, false);
    Ok(())
}
