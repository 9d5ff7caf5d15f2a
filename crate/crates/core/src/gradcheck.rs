//! Central finite-difference check of the hand-written backward passes.
//!
//! Both loss paths are checked in `f64` on a small model with a 3-item
//! outfit. The ranking path uses a margin large enough that every hinge is
//! active, and inputs whose closest negatives are separated, so no
//! perturbation crosses a kink.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{focal_loss, ranking_loss, ranking_terms, squared_euclidean};
use crate::model::{self, Batch, Mode, ModelConfig, ModelParams};
use crate::scalar::l2_norm;
use crate::SeedRng;

pub const STEP: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-4;
/// Gradient norms below this are compared in absolute terms.
pub const NORM_FLOOR: f64 = 1e-6;
const KINK_GUARD: f64 = 1e-3;
const CHECK_MARGIN: f64 = 4.0;
const N_NEGATIVES: usize = 3;
const OUTFIT_LEN: usize = 3;

/// Model used by the check: every block of the real model, small enough that
/// each parameter can be perturbed individually.
pub fn check_config(seed: u64) -> ModelConfig {
    ModelConfig {
        input_dim: 8,
        image_dim: 4,
        d_model: 8,
        n_layers: 2,
        n_heads: 2,
        ff_dim: 12,
        head_hidden_dim: 6,
        index_dim: 5,
        dropout_rate: 0.0,
        seed,
        learnable_placeholder: true,
        index_head_bias: true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorError {
    pub name: String,
    pub numel: usize,
    /// `|a - n| / max(|a|, |n|, NORM_FLOOR)` over the whole tensor (L2 norms).
    pub rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub focal: Vec<TensorError>,
    pub ranking: Vec<TensorError>,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.focal
            .iter()
            .chain(&self.ranking)
            .map(|t| t.rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error() <= tolerance
    }
}

struct Inputs {
    outfit: Vec<Vec<f64>>,
    token: Vec<f64>,
    positive: Vec<f64>,
    negatives: Vec<Vec<f64>>,
}

fn gaussian(rng: &mut SeedRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn inputs(cfg: &ModelConfig, rng: &mut SeedRng) -> Inputs {
    let d = cfg.input_dim;
    let mut token = gaussian(rng, d);
    token[..cfg.image_dim].iter_mut().for_each(|x| *x = 0.0);
    Inputs {
        outfit: (0..OUTFIT_LEN).map(|_| gaussian(rng, d)).collect(),
        token,
        positive: gaussian(rng, d),
        negatives: (0..N_NEGATIVES).map(|_| gaussian(rng, d)).collect(),
    }
}

fn focal_value(p: &ModelParams<f64>, x: &Inputs) -> Result<f64> {
    let batch = Batch::from_rows(p.config().input_dim, core::slice::from_ref(&x.outfit))?;
    let scores = model::forward_cp(p, &batch, &mut Mode::Eval)?;
    Ok(focal_loss(&scores, &[1], 2.0)?.loss)
}

fn focal_grad(p: &ModelParams<f64>, x: &Inputs) -> Result<ModelParams<f64>> {
    let batch = Batch::from_rows(p.config().input_dim, core::slice::from_ref(&x.outfit))?;
    let pass = model::forward_cp_cached(p, &batch, &mut Mode::Eval)?;
    let focal = focal_loss(&pass.scores, &[1], 2.0)?;
    let mut g = p.zeros_like();
    model::backward_cp(p, &pass, &focal.grad, &mut g)?;
    Ok(g)
}

struct Embedded {
    t: Vec<f64>,
    pos: Vec<f64>,
    negs: Vec<Vec<f64>>,
}

fn embed(p: &ModelParams<f64>, x: &Inputs) -> Result<Embedded> {
    let items: Vec<&[f64]> = x.outfit.iter().map(Vec::as_slice).collect();
    Ok(Embedded {
        t: model::forward_cir(p, &items, &x.token, &mut Mode::Eval)?,
        pos: model::item_index_embedding(p, &x.positive)?,
        negs: x
            .negatives
            .iter()
            .map(|n| model::item_index_embedding(p, n))
            .collect::<Result<_>>()?,
    })
}

fn ranking_value(p: &ModelParams<f64>, x: &Inputs) -> Result<f64> {
    let e = embed(p, x)?;
    Ok(ranking_loss(&e.t, &e.pos, &e.negs, CHECK_MARGIN)?.loss)
}

fn ranking_grad(p: &ModelParams<f64>, x: &Inputs) -> Result<ModelParams<f64>> {
    let items: Vec<&[f64]> = x.outfit.iter().map(Vec::as_slice).collect();
    let cir = model::forward_cir_cached(p, &items, &x.token, &mut Mode::Eval)?;
    let pos = model::index_embedding_cached(p, &x.positive)?;
    let negs = x
        .negatives
        .iter()
        .map(|n| model::index_embedding_cached(p, n))
        .collect::<Result<Vec<_>>>()?;
    let neg_f: Vec<&[f64]> = negs.iter().map(|n| n.f.as_slice()).collect();
    let out = ranking_loss(&cir.t, &pos.f, &neg_f, CHECK_MARGIN)?;
    let mut g = p.zeros_like();
    model::backward_cir(p, &cir, &out.grad_t, &mut g)?;
    model::backward_index(p, &pos, &out.grad_positive, &mut g)?;
    for (pass, dn) in negs.iter().zip(&out.grad_negatives) {
        model::backward_index(p, pass, dn, &mut g)?;
    }
    Ok(g)
}

/// Smallest distance from any hinge argument or closest-negative tie to zero.
fn kink_distance(p: &ModelParams<f64>, x: &Inputs) -> Result<f64> {
    let e = embed(p, x)?;
    let d_pos = squared_euclidean(&e.t, &e.pos);
    let mut d_negs: Vec<f64> = e.negs.iter().map(|n| squared_euclidean(&e.t, n)).collect();
    let terms = ranking_terms(d_pos, &d_negs, CHECK_MARGIN)?;
    let mut gap = d_negs
        .iter()
        .map(|&dj| (d_pos - dj + CHECK_MARGIN).abs())
        .fold(f64::INFINITY, f64::min);
    gap = gap.min((terms.hard).abs());
    d_negs.sort_by(f64::total_cmp);
    if d_negs.len() > 1 {
        gap = gap.min(d_negs[1] - d_negs[0]);
    }
    Ok(gap)
}

fn compare(
    p: &ModelParams<f64>,
    analytic: &ModelParams<f64>,
    value: impl Fn(&ModelParams<f64>) -> Result<f64>,
) -> Result<Vec<TensorError>> {
    let mut work = p.clone();
    let mut rows = Vec::new();
    for spec in p.specs() {
        let a = &analytic.data()[spec.offset..spec.offset + spec.numel()];
        let mut numeric = Vec::with_capacity(spec.numel());
        for i in spec.offset..spec.offset + spec.numel() {
            let orig = work.data()[i];
            work.data_mut()[i] = orig + STEP;
            let up = value(&work)?;
            work.data_mut()[i] = orig - STEP;
            let down = value(&work)?;
            work.data_mut()[i] = orig;
            numeric.push((up - down) / (2.0 * STEP));
        }
        let diff: Vec<f64> = a.iter().zip(&numeric).map(|(x, y)| x - y).collect();
        let denom = l2_norm(a).max(l2_norm(&numeric)).max(NORM_FLOOR);
        rows.push(TensorError {
            name: spec.name.clone(),
            numel: spec.numel(),
            rel_error: l2_norm(&diff) / denom,
            max_abs_error: diff.iter().fold(0.0, |m, d| m.max(d.abs())),
        });
    }
    Ok(rows)
}

/// Checks every parameter on both loss paths for a model initialized from `seed`.
pub fn gradcheck(seed: u64) -> Result<GradcheckReport> {
    let cfg = check_config(seed);
    let params = ModelParams::<f64>::init(&cfg)?;
    let mut rng = SeedRng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut x = inputs(&cfg, &mut rng);
    let mut attempts = 0;
    while kink_distance(&params, &x)? < KINK_GUARD {
        attempts += 1;
        if attempts > 64 {
            return Err(Error::Sampling(format!(
                "no kink-free ranking inputs found for seed {seed}"
            )));
        }
        x = inputs(&cfg, &mut rng);
    }
    let focal = compare(&params, &focal_grad(&params, &x)?, |p| focal_value(p, &x))?;
    let ranking = compare(&params, &ranking_grad(&params, &x)?, |p| {
        ranking_value(p, &x)
    })?;
    Ok(GradcheckReport { focal, ranking })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_paths_within_tolerance() {
        let report = gradcheck(3).unwrap();
        for row in report.focal.iter().chain(&report.ranking) {
            assert!(
                row.rel_error <= TOLERANCE,
                "{}: {}",
                row.name,
                row.rel_error
            );
        }
    }

    #[test]
    fn unused_heads_are_exactly_zero_on_the_focal_path() {
        let report = gradcheck(5).unwrap();
        for row in &report.focal {
            if row.name.starts_with("cir_head") || row.name.starts_with("index_head") {
                assert_eq!(row.max_abs_error, 0.0, "{}", row.name);
            }
        }
    }
}
