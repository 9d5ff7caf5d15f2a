//! Training loops for compatibility prediction and complementary item
//! retrieval.
//!
//! Both loops are fully determined by their seed: it fixes the shuffle order,
//! sampled negatives and dropout masks. The best epoch is selected on the
//! validation split (AUC for compatibility, FITB accuracy for retrieval).

mod log;
mod negatives;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

pub use log::{MetricLog, MetricRow};
pub use negatives::{sample_negatives, NegativeSampler};

use crate::corpus::{Corpus, FitbQuestion, ItemId, OutfitExample, Split};
use crate::embeddings::{feature_as, target_token_for_item, EmbeddingStore};
use crate::error::{Error, Result};
use crate::losses::{focal_loss, ranking_loss, squared_euclidean, LossConfig};
use crate::metrics::{accuracy_at, auc};
use crate::model::{self, Batch, Mode, ModelConfig, ModelParams};
use crate::optim::{Adam, AdamConfig};
use crate::retrieval::{evaluate_fitb, FitbScoring};
use crate::scalar::{convert, Scalar};
use crate::SeedRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Checkpoint to start from; resolved by the caller.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pretrained_checkpoint: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            epochs: 60,
            batch_size: 32,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            weight_decay: adam.weight_decay,
            seed: 0,
            pretrained_checkpoint: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "train.learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("train.beta1/beta2 must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters from the best validation epoch (the initialization if no
    /// epoch improved on it).
    pub best: ModelParams<T>,
    pub last: ModelParams<T>,
    pub best_epoch: usize,
    pub best_metric: Option<f64>,
    pub log: MetricLog,
}

/// Summed and mean loss with the matching gradient registry.
pub struct StepGradients<T> {
    pub loss_sum: T,
    pub grads: ModelParams<T>,
    pub scores: Vec<T>,
}

/// Focal-loss gradient of a compatibility batch. `scale` multiplies the
/// gradient (use `1/B` for a mean, `1` for a sum).
pub fn cp_step_gradients<T: Scalar>(
    params: &ModelParams<T>,
    batch: &Batch<T>,
    labels: &[u8],
    gamma: f64,
    scale: T,
    mode: &mut Mode<'_>,
) -> Result<StepGradients<T>> {
    let pass = model::forward_cp_cached(params, batch, mode)?;
    let focal = focal_loss(&pass.scores, labels, T::of(gamma))?;
    let dscores: Vec<T> = focal.grad.iter().map(|&g| g * scale).collect();
    let mut grads = params.zeros_like();
    model::backward_cp(params, &pass, &dscores, &mut grads)?;
    Ok(StepGradients {
        loss_sum: focal.loss,
        grads,
        scores: pass.scores,
    })
}

/// One retrieval example: outfit features, target token, positive and negative
/// item features.
pub struct CirExample<T> {
    pub outfit: Vec<Vec<T>>,
    pub target_token: Vec<T>,
    pub positive: Vec<T>,
    pub negatives: Vec<Vec<T>>,
}

impl<T: Scalar> CirExample<T> {
    pub fn from_store(
        store: &EmbeddingStore,
        outfit: &[ItemId],
        positive: &str,
        negatives: &[ItemId],
    ) -> Result<Self> {
        let token = target_token_for_item(store, positive)?;
        Ok(CirExample {
            outfit: outfit
                .iter()
                .map(|id| feature_as::<T>(store, id))
                .collect::<Result<_>>()?,
            target_token: convert(token.as_slice()),
            positive: feature_as(store, positive)?,
            negatives: negatives
                .iter()
                .map(|id| feature_as::<T>(store, id))
                .collect::<Result<_>>()?,
        })
    }
}

/// Ranking loss of one retrieval example; gradients are scaled by `scale`
/// and accumulated into `grads`. Returns the loss and the query `t`.
pub fn cir_accumulate<T: Scalar>(
    params: &ModelParams<T>,
    example: &CirExample<T>,
    margin: f64,
    scale: T,
    grads: &mut ModelParams<T>,
    mode: &mut Mode<'_>,
) -> Result<(T, Vec<T>)> {
    let outfit: Vec<&[T]> = example.outfit.iter().map(Vec::as_slice).collect();
    let cir = model::forward_cir_cached(params, &outfit, &example.target_token, mode)?;
    let pos = model::index_embedding_cached(params, &example.positive)?;
    let negs = example
        .negatives
        .iter()
        .map(|f| model::index_embedding_cached(params, f))
        .collect::<Result<Vec<_>>>()?;
    let neg_vecs: Vec<&[T]> = negs.iter().map(|p| p.f.as_slice()).collect();
    let out = ranking_loss(&cir.t, &pos.f, &neg_vecs, T::of(margin))?;
    let sc = |v: &[T]| -> Vec<T> { v.iter().map(|&x| x * scale).collect() };
    model::backward_cir(params, &cir, &sc(&out.grad_t), grads)?;
    model::backward_index(params, &pos, &sc(&out.grad_positive), grads)?;
    for (pass, g) in negs.iter().zip(&out.grad_negatives) {
        model::backward_index(params, pass, &sc(g), grads)?;
    }
    Ok((out.loss, cir.t))
}

fn check_model_dims(store: &EmbeddingStore, cfg: &ModelConfig) -> Result<()> {
    if cfg.input_dim != store.feature_dim() || cfg.image_dim != store.image_dim() {
        return Err(Error::Config(format!(
            "model expects image_dim={} input_dim={}, embeddings provide image_dim={} input_dim={}",
            cfg.image_dim,
            cfg.input_dim,
            store.image_dim(),
            store.feature_dim()
        )));
    }
    Ok(())
}

fn check_embeddings<'a>(
    store: &EmbeddingStore,
    ids: impl IntoIterator<Item = &'a ItemId>,
) -> Result<()> {
    let mut missing = store.missing(ids);
    missing.sort();
    missing.dedup();
    if missing.is_empty() {
        Ok(())
    } else {
        let shown: Vec<&str> = missing.iter().take(10).map(String::as_str).collect();
        Err(Error::Lookup(format!(
            "missing embeddings for {} item(s): {}{}",
            missing.len(),
            shown.join(", "),
            if missing.len() > 10 { ", ..." } else { "" }
        )))
    }
}

fn initial_params<T: Scalar>(
    model_cfg: &ModelConfig,
    init: Option<ModelParams<T>>,
) -> Result<ModelParams<T>> {
    match init {
        None => ModelParams::init(model_cfg),
        Some(p) => {
            let fresh = ModelParams::<T>::zeros(model_cfg)?;
            if let Some(diff) = fresh.shape_diff(&p) {
                return Err(Error::Config(format!(
                    "initial parameters do not match the model config: {diff}"
                )));
            }
            Ok(p)
        }
    }
}

/// Feature table for every id the loop will touch.
fn feature_table<'a, T: Scalar>(
    store: &EmbeddingStore,
    ids: impl IntoIterator<Item = &'a ItemId>,
) -> Result<BTreeMap<&'a str, Vec<T>>> {
    let mut table = BTreeMap::new();
    for id in ids {
        if !table.contains_key(id.as_str()) {
            table.insert(id.as_str(), feature_as::<T>(store, id)?);
        }
    }
    Ok(table)
}

fn labels_of(examples: &[&OutfitExample]) -> Vec<u8> {
    examples.iter().map(|e| e.label.as_u8()).collect()
}

fn cp_batch<'a, T: Scalar>(
    table: &'a BTreeMap<&str, Vec<T>>,
    input_dim: usize,
    examples: &[&OutfitExample],
) -> Result<Batch<T>> {
    let rows: Vec<Vec<&'a [T]>> = examples
        .iter()
        .map(|ex| {
            ex.items
                .iter()
                .map(|id| table[id.as_str()].as_slice())
                .collect()
        })
        .collect();
    Batch::from_rows(input_dim, &rows)
}

fn non_finite(epoch: usize, batch: usize) -> Error {
    Error::NonFinite(format!("loss at epoch {epoch}, batch {batch}"))
}

/// Evaluates compatibility scores, focal loss, accuracy and AUC on `examples`.
pub fn evaluate_cp<T: Scalar>(
    params: &ModelParams<T>,
    store: &EmbeddingStore,
    examples: &[OutfitExample],
    gamma: f64,
    batch_size: usize,
) -> Result<CpEvaluation> {
    check_embeddings(store, examples.iter().flat_map(|e| e.items.iter()))?;
    let table = feature_table::<T>(store, examples.iter().flat_map(|e| e.items.iter()))?;
    let refs: Vec<&OutfitExample> = examples.iter().collect();
    let mut scores = Vec::with_capacity(examples.len());
    let mut loss_sum = 0.0;
    for chunk in refs.chunks(batch_size.max(1)) {
        let batch = cp_batch(&table, params.config().input_dim, chunk)?;
        let s = model::forward_cp(params, &batch, &mut Mode::Eval)?;
        loss_sum += focal_loss(&s, &labels_of(chunk), T::of(gamma))?.loss.f64();
        scores.extend(s.into_iter().map(Scalar::f64));
    }
    let labels = labels_of(&refs);
    Ok(CpEvaluation {
        auc: auc(&scores, &labels)?,
        accuracy: accuracy_at(&scores, &labels, 0.5),
        loss_sum,
        scores,
        labels,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpEvaluation {
    pub auc: f64,
    /// At threshold 0.5.
    pub accuracy: f64,
    pub loss_sum: f64,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

/// Trains the outfit-token compatibility model with focal loss and Adam.
pub fn train_cp<T: Scalar>(
    corpus: &Corpus,
    store: &EmbeddingStore,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    init: Option<ModelParams<T>>,
) -> Result<TrainOutcome<T>> {
    train_cfg.validate()?;
    loss_cfg.validate()?;
    check_model_dims(store, model_cfg)?;
    let train = &corpus.cp.train;
    let valid = &corpus.cp.valid;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Validation(
            "compatibility training needs non-empty train and valid splits".into(),
        ));
    }
    let used = || train.iter().chain(valid).flat_map(|e| e.items.iter());
    check_embeddings(store, used())?;
    let table = feature_table::<T>(store, used())?;

    let mut params = initial_params(model_cfg, init)?;
    let mut best = params.clone();
    let mut best_metric = None;
    let mut best_epoch = 0;
    let mut log = MetricLog::default();
    let mut rng = SeedRng::seed_from_u64(train_cfg.seed);
    let mut adam = Adam::<T>::new(train_cfg.adam(), params.data().len());
    let mut order: Vec<&OutfitExample> = train.iter().collect();

    for epoch in 1..=train_cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut scores = Vec::with_capacity(order.len());
        for (bi, chunk) in order.chunks(train_cfg.batch_size).enumerate() {
            let batch = cp_batch(&table, model_cfg.input_dim, chunk)?;
            let labels = labels_of(chunk);
            let scale = T::one() / T::of(chunk.len() as f64);
            let step = cp_step_gradients(
                &params,
                &batch,
                &labels,
                loss_cfg.gamma,
                scale,
                &mut Mode::Train(&mut rng),
            )?;
            if !step.loss_sum.is_finite() || !step.grads.is_finite() {
                return Err(non_finite(epoch, bi));
            }
            loss_sum += step.loss_sum.f64();
            scores.extend(step.scores.iter().map(|s| s.f64()));
            adam.step(params.data_mut(), step.grads.data());
        }
        let labels = labels_of(&order);
        let mut row = MetricRow::new(epoch, Split::Train, loss_sum, order.len());
        row.accuracy = Some(accuracy_at(&scores, &labels, 0.5));
        row.auc = auc(&scores, &labels).ok();
        log.push(row)?;

        let eval = evaluate_cp(&params, store, valid, loss_cfg.gamma, train_cfg.batch_size)?;
        let mut row = MetricRow::new(epoch, Split::Valid, eval.loss_sum, valid.len());
        row.accuracy = Some(eval.accuracy);
        row.auc = Some(eval.auc);
        log.push(row)?;
        if best_metric.is_none_or(|b| eval.auc > b) {
            best_metric = Some(eval.auc);
            best_epoch = epoch;
            best = params.clone();
        }
    }
    Ok(TrainOutcome {
        best,
        last: params,
        best_epoch,
        best_metric,
        log,
    })
}

/// Trains the target-token retrieval head with the set-based ranking loss.
/// `init` is typically the compatibility checkpoint.
pub fn train_cir<T: Scalar>(
    corpus: &Corpus,
    store: &EmbeddingStore,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    init: Option<ModelParams<T>>,
) -> Result<TrainOutcome<T>> {
    train_cfg.validate()?;
    loss_cfg.validate()?;
    check_model_dims(store, model_cfg)?;
    let train = &corpus.fitb.train;
    let valid = &corpus.fitb.valid;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Validation(
            "retrieval training needs non-empty FITB train and valid splits".into(),
        ));
    }
    // negatives come from the whole corpus
    check_embeddings(store, corpus.items.keys())?;
    let table = feature_table::<T>(store, corpus.items.keys())?;
    let sampler = NegativeSampler::new(corpus);

    let mut params = initial_params(model_cfg, init)?;
    let mut best = params.clone();
    let mut best_metric = None;
    let mut best_epoch = 0;
    let mut log = MetricLog::default();
    let mut rng = SeedRng::seed_from_u64(train_cfg.seed);
    let mut adam = Adam::<T>::new(train_cfg.adam(), params.data().len());
    let mut order: Vec<&FitbQuestion> = train.iter().collect();
    let feature = |id: &str| table[id].clone();

    for epoch in 1..=train_cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (bi, chunk) in order.chunks(train_cfg.batch_size).enumerate() {
            let scale = T::one() / T::of(chunk.len() as f64);
            let mut grads = params.zeros_like();
            for q in chunk {
                let positive = q.answer();
                let neg_ids = sampler.sample(positive, loss_cfg.n_negatives, &mut rng)?;
                let example = CirExample {
                    outfit: q.question_items.iter().map(|id| feature(id)).collect(),
                    target_token: convert(target_token_for_item(store, positive)?.as_slice()),
                    positive: feature(positive),
                    negatives: neg_ids.iter().map(|id| feature(id)).collect(),
                };
                let (loss, t) = cir_accumulate(
                    &params,
                    &example,
                    loss_cfg.margin,
                    scale,
                    &mut grads,
                    &mut Mode::Train(&mut rng),
                )?;
                if !loss.is_finite() {
                    return Err(non_finite(epoch, bi));
                }
                loss_sum += loss.f64();
                if fitb_pick(&params, &t, q, &table)? == q.answer_index {
                    correct += 1;
                }
            }
            if !grads.is_finite() {
                return Err(non_finite(epoch, bi));
            }
            adam.step(params.data_mut(), grads.data());
        }
        let mut row = MetricRow::new(epoch, Split::Train, loss_sum, order.len());
        row.fitb_accuracy = Some(correct as f64 / order.len() as f64);
        log.push(row)?;

        let report = evaluate_fitb(&params, store, valid, FitbScoring::Distance)?;
        let valid_loss = fitb_ranking_loss(&params, store, valid, loss_cfg.margin)?;
        let mut row = MetricRow::new(epoch, Split::Valid, valid_loss, valid.len());
        row.fitb_accuracy = Some(report.accuracy);
        log.push(row)?;
        if best_metric.is_none_or(|b| report.accuracy > b) {
            best_metric = Some(report.accuracy);
            best_epoch = epoch;
            best = params.clone();
        }
    }
    Ok(TrainOutcome {
        best,
        last: params,
        best_epoch,
        best_metric,
        log,
    })
}

/// Nearest candidate to `t` (first on ties).
fn fitb_pick<T: Scalar>(
    params: &ModelParams<T>,
    t: &[T],
    q: &FitbQuestion,
    table: &BTreeMap<&str, Vec<T>>,
) -> Result<usize> {
    let mut best = (0usize, T::infinity());
    for (i, c) in q.candidates.iter().enumerate() {
        let f = model::item_index_embedding(params, &table[c.as_str()])?;
        let d = squared_euclidean(t, &f);
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best.0)
}

/// Summed ranking loss using each question's distractors as negatives.
pub fn fitb_ranking_loss<T: Scalar>(
    params: &ModelParams<T>,
    store: &EmbeddingStore,
    questions: &[FitbQuestion],
    margin: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for q in questions {
        let outfit = q
            .question_items
            .iter()
            .map(|id| feature_as::<T>(store, id))
            .collect::<Result<Vec<_>>>()?;
        let outfit: Vec<&[T]> = outfit.iter().map(Vec::as_slice).collect();
        let token: Vec<T> = convert(target_token_for_item(store, q.answer())?.as_slice());
        let t = model::forward_cir(params, &outfit, &token, &mut Mode::Eval)?;
        let embed = |id: &str| -> Result<Vec<T>> {
            model::item_index_embedding(params, &feature_as::<T>(store, id)?)
        };
        let positive = embed(q.answer())?;
        let negatives = q
            .candidates
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != q.answer_index)
            .map(|(_, c)| embed(c))
            .collect::<Result<Vec<_>>>()?;
        total += ranking_loss(&t, &positive, &negatives, T::of(margin))?
            .loss
            .f64();
    }
    Ok(total)
}

#[cfg(test)]
mod tests;
