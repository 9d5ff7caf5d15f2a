use std::path::Path;

use fashionrec::{checkpoint, emb, orix, Error};
use fashionrec_core::embeddings::EmbeddingStore;
use fashionrec_core::model::{ModelConfig, ModelParams};
use fashionrec_core::retrieval::{IndexEntry, KnnIndex};
use proptest::prelude::*;

fn finite_f32() -> impl Strategy<Value = f32> {
    any::<u32>()
        .prop_map(f32::from_bits)
        .prop_filter("finite", |x| x.is_finite())
}

fn store_strategy() -> impl Strategy<Value = EmbeddingStore> {
    (1usize..5, 1usize..5).prop_flat_map(|(di, dt)| {
        prop::collection::btree_map(
            "[a-z0-9_]{1,8}",
            (
                prop::collection::vec(finite_f32(), di),
                prop::collection::vec(finite_f32(), dt),
            ),
            0..6,
        )
        .prop_map(move |rows| {
            let mut store = EmbeddingStore::new(di, dt).unwrap();
            for (id, (img, txt)) in rows {
                store.insert(id, img, txt).unwrap();
            }
            store
        })
    })
}

fn unit(v: Vec<f32>) -> Vec<f32> {
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn index_strategy() -> impl Strategy<Value = KnnIndex> {
    (1usize..6, any::<bool>()).prop_flat_map(|(dim, with_cat)| {
        prop::collection::btree_map(
            "[a-zA-Z0-9]{1,6}",
            (
                prop::collection::vec(0.1f32..1.0, dim),
                prop::option::of("[a-z ]{0,5}"),
            ),
            0..8,
        )
        .prop_map(move |rows| {
            let entries = rows.into_iter().map(|(id, (v, cat))| IndexEntry {
                item_id: id,
                vector: unit(v),
                category: if with_cat { cat } else { None },
            });
            KnnIndex::from_entries(dim, entries).unwrap()
        })
    })
}

fn small_model(seed: u64) -> ModelConfig {
    ModelConfig {
        input_dim: 6,
        image_dim: 3,
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        ff_dim: 8,
        head_hidden_dim: 4,
        index_dim: 3,
        seed,
        ..ModelConfig::default()
    }
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn assert_same_store(a: &EmbeddingStore, b: &EmbeddingStore) {
    assert_eq!(a.len(), b.len());
    for ((ia, ea), (ib, eb)) in a.iter().zip(b.iter()) {
        assert_eq!(ia, ib);
        assert_eq!(bits(&ea.image), bits(&eb.image));
        assert_eq!(bits(&ea.text), bits(&eb.text));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn emb_v1_round_trip_is_bit_exact(store in store_strategy()) {
        let header = emb::Header::new(store.image_dim(), store.text_dim());
        let text = emb::render(&store, &header).unwrap();
        let parsed = emb::parse(&text, Path::new("mem")).unwrap();
        assert_same_store(&store, &parsed.store);
        prop_assert_eq!(emb::render(&parsed.store, &parsed.header).unwrap(), text);
    }

    #[test]
    fn orix_round_trip_is_bit_exact(index in index_strategy()) {
        let bytes = orix::encode(&index);
        let back = orix::decode(&bytes).unwrap();
        prop_assert_eq!(back.dim(), index.dim());
        for (a, b) in back.entries().iter().zip(index.entries()) {
            prop_assert_eq!(&a.item_id, &b.item_id);
            prop_assert_eq!(&a.category, &b.category);
            prop_assert_eq!(bits(&a.vector), bits(&b.vector));
        }
        prop_assert_eq!(orix::encode(&back), bytes);
    }

    #[test]
    fn orix_rejects_every_truncation(index in index_strategy(), cut in any::<prop::sample::Index>()) {
        let bytes = orix::encode(&index);
        let at = cut.index(bytes.len());
        prop_assert!(matches!(orix::decode(&bytes[..at]), Err(Error::Format(_))));
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..4 {
        let params = ModelParams::<f32>::init(&small_model(seed)).unwrap();
        let path = dir.path().join(format!("ckpt{seed}"));
        checkpoint::save(&params, &path).unwrap();
        let back = checkpoint::load(&path).unwrap();
        assert_eq!(back.config(), params.config());
        assert_eq!(bits(back.data()), bits(params.data()));

        let again = dir.path().join(format!("again{seed}"));
        checkpoint::save(&back, &again).unwrap();
        for file in [checkpoint::MANIFEST, checkpoint::BLOB] {
            assert_eq!(
                std::fs::read(path.join(file)).unwrap(),
                std::fs::read(again.join(file)).unwrap()
            );
        }
    }
}

#[test]
fn checkpoint_detects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let params = ModelParams::<f32>::init(&small_model(1)).unwrap();
    checkpoint::save(&params, dir.path()).unwrap();
    let blob = dir.path().join(checkpoint::BLOB);
    let mut bytes = std::fs::read(&blob).unwrap();
    bytes[5] ^= 0x40;
    std::fs::write(&blob, &bytes).unwrap();
    assert!(matches!(
        checkpoint::load(dir.path()),
        Err(Error::Format(_))
    ));
}

#[test]
fn incompatible_checkpoint_names_the_differing_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let params = ModelParams::<f32>::init(&small_model(0)).unwrap();
    checkpoint::save(&params, dir.path()).unwrap();
    let wanted = ModelConfig {
        d_model: 12,
        ..small_model(0)
    };
    let err = checkpoint::load_for(dir.path(), &wanted).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, Error::Format(_)), "{msg}");
    assert!(
        msg.contains("input_projection.weight") && msg.contains("[12, 6]"),
        "{msg}"
    );
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn emb_file_with_wrong_width_reports_the_line() {
    let text = "{\"format\":\"emb-v1\",\"image_dim\":2,\"text_dim\":1}\n\
                {\"item_id\":\"a\",\"image_embedding\":[1,2],\"text_embedding\":[3]}\n\
                {\"item_id\":\"b\",\"image_embedding\":[1],\"text_embedding\":[3]}\n";
    let err = emb::parse(text, Path::new("x.jsonl")).unwrap_err();
    let msg = err.to_string();
    assert!(
        msg.contains("line 3") && msg.contains("expected 2"),
        "{msg}"
    );
}
