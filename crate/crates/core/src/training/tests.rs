use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::embeddings::stub_encode;
use crate::synth::{generate_synthetic, SynthConfig};

struct Fixture {
    corpus: Corpus,
    store: EmbeddingStore,
    model: ModelConfig,
}

fn fixture() -> Fixture {
    let synth = generate_synthetic(&SynthConfig {
        n_styles: 3,
        n_categories: 4,
        items_per_style_category: 3,
        latent_dim: 4,
        n_outfits: 30,
        ..SynthConfig::default()
    })
    .unwrap();
    let store = stub_encode(&synth.corpus, 4, 4, 0, Some(&synth.truth)).unwrap();
    let model = ModelConfig {
        input_dim: 8,
        image_dim: 4,
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        ff_dim: 8,
        head_hidden_dim: 4,
        index_dim: 4,
        ..ModelConfig::default()
    };
    Fixture {
        corpus: synth.corpus,
        store,
        model,
    }
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_learning_rate_keeps_parameters_bit_identical() {
    let f = fixture();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..quick(2)
    };
    let init = ModelParams::<f32>::init(&f.model).unwrap();
    let cp = train_cp(
        &f.corpus,
        &f.store,
        &f.model,
        &cfg,
        &LossConfig::default(),
        Some(init.clone()),
    )
    .unwrap();
    assert_eq!(cp.last.data(), init.data());
    let cir = train_cir(
        &f.corpus,
        &f.store,
        &f.model,
        &cfg,
        &LossConfig::default(),
        Some(init.clone()),
    )
    .unwrap();
    assert_eq!(cir.last.data(), init.data());
}

#[test]
fn zero_epochs_return_the_initialization() {
    let f = fixture();
    let init = ModelParams::<f32>::init(&f.model).unwrap();
    let out = train_cir(
        &f.corpus,
        &f.store,
        &f.model,
        &quick(0),
        &LossConfig::default(),
        Some(init.clone()),
    )
    .unwrap();
    assert_eq!(out.best.data(), init.data());
    assert_eq!(out.last.data(), init.data());
    assert!(out.log.rows().is_empty());
    assert_eq!(out.best_metric, None);
}

#[test]
fn runs_are_reproducible() {
    let f = fixture();
    let run = || {
        let cp = train_cp::<f32>(
            &f.corpus,
            &f.store,
            &f.model,
            &quick(2),
            &LossConfig::default(),
            None,
        )
        .unwrap();
        let cir = train_cir(
            &f.corpus,
            &f.store,
            &f.model,
            &quick(2),
            &LossConfig::default(),
            Some(cp.best.clone()),
        )
        .unwrap();
        (cp.log, cp.last, cir.log, cir.last)
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0, b.0);
    assert_eq!(a.1.data(), b.1.data());
    assert_eq!(a.2, b.2);
    assert_eq!(a.3.data(), b.3.data());
    assert_eq!(a.0.split(Split::Valid).count(), 2);
    assert!(a.2.last(Split::Valid).unwrap().fitb_accuracy.is_some());
}

#[test]
fn missing_embedding_fails_before_training() {
    let f = fixture();
    let dropped = &f.corpus.cp.train[0].items[0];
    let mut store = EmbeddingStore::new(4, 4).unwrap();
    for (id, e) in f.store.iter().filter(|(id, _)| *id != dropped) {
        store
            .insert(id.clone(), e.image.clone(), e.text.clone())
            .unwrap();
    }
    let cp = train_cp::<f32>(
        &f.corpus,
        &store,
        &f.model,
        &quick(1),
        &LossConfig::default(),
        None,
    );
    assert!(matches!(cp, Err(Error::Lookup(ref m)) if m.contains(dropped.as_str())));
    let cir = train_cir::<f32>(
        &f.corpus,
        &store,
        &f.model,
        &quick(1),
        &LossConfig::default(),
        None,
    );
    assert!(matches!(cir, Err(Error::Lookup(_))));
}

#[test]
fn incompatible_initialization_is_rejected() {
    let f = fixture();
    let other = ModelParams::<f32>::init(&ModelConfig {
        d_model: 4,
        ..f.model.clone()
    })
    .unwrap();
    let err = train_cir(
        &f.corpus,
        &f.store,
        &f.model,
        &quick(1),
        &LossConfig::default(),
        Some(other),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn full_batch_gradient_equals_accumulated_sub_batches() {
    let f = fixture();
    let p = ModelParams::<f64>::init(&f.model).unwrap();
    let examples: Vec<&OutfitExample> = f.corpus.cp.train.iter().take(6).collect();
    let table =
        feature_table::<f64>(&f.store, examples.iter().flat_map(|e| e.items.iter())).unwrap();
    let grads = |chunk: &[&OutfitExample]| {
        let batch = cp_batch(&table, 8, chunk).unwrap();
        cp_step_gradients(&p, &batch, &labels_of(chunk), 2.0, 1.0, &mut Mode::Eval)
            .unwrap()
            .grads
    };
    let full = grads(&examples);
    let mut acc = p.zeros_like();
    for chunk in examples.chunks(4) {
        acc.add_assign(&grads(chunk));
    }
    for (a, b) in full.data().iter().zip(acc.data()) {
        assert!((a - b).abs() <= 1e-6, "{a} {b}");
    }
}

#[test]
fn ranking_gradient_accumulates_linearly() {
    let f = fixture();
    let p = ModelParams::<f64>::init(&f.model).unwrap();
    let q = &f.corpus.fitb.train[0];
    let negatives: Vec<ItemId> = q
        .candidates
        .iter()
        .filter(|c| *c != q.answer())
        .cloned()
        .collect();
    let ex =
        CirExample::<f64>::from_store(&f.store, &q.question_items, q.answer(), &negatives).unwrap();
    let mut once = p.zeros_like();
    cir_accumulate(&p, &ex, 4.0, 2.0, &mut once, &mut Mode::Eval).unwrap();
    let mut twice = p.zeros_like();
    for _ in 0..2 {
        cir_accumulate(&p, &ex, 4.0, 1.0, &mut twice, &mut Mode::Eval).unwrap();
    }
    for (a, b) in once.data().iter().zip(twice.data()) {
        assert!((a - b).abs() <= 1e-12, "{a} {b}");
    }
}

#[test]
fn invalid_train_config_is_rejected() {
    let f = fixture();
    for cfg in [
        TrainConfig {
            batch_size: 0,
            ..quick(1)
        },
        TrainConfig {
            learning_rate: -1.0,
            ..quick(1)
        },
    ] {
        let err = train_cp::<f32>(
            &f.corpus,
            &f.store,
            &f.model,
            &cfg,
            &LossConfig::default(),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}

#[test]
fn valid_split_loss_uses_distractors() {
    let f = fixture();
    let p = ModelParams::<f64>::init(&f.model).unwrap();
    let loss = fitb_ranking_loss(&p, &f.store, &f.corpus.fitb.valid, 0.2).unwrap();
    assert!(loss.is_finite() && loss >= 0.0);
    let empty: Vec<FitbQuestion> = vec![];
    assert_eq!(fitb_ranking_loss(&p, &f.store, &empty, 0.2).unwrap(), 0.0);
}
