//! Frozen per-item image/text embeddings and the feature vectors built from them.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, ItemId};
use crate::error::{Error, Result};
use crate::scalar::{convert, Scalar};
use crate::synth::GroundTruth;
use crate::SeedRng;

#[derive(Debug, Clone, PartialEq)]
pub struct ItemEmbedding {
    pub image: Vec<f32>,
    pub text: Vec<f32>,
}

/// Item id -> (image vector, text vector) with fixed dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    image_dim: usize,
    text_dim: usize,
    entries: BTreeMap<ItemId, ItemEmbedding>,
}

impl EmbeddingStore {
    pub fn new(image_dim: usize, text_dim: usize) -> Result<Self> {
        if image_dim == 0 || text_dim == 0 {
            return Err(Error::Validation(format!(
                "embedding dims must be positive, got image_dim={image_dim} text_dim={text_dim}"
            )));
        }
        Ok(EmbeddingStore {
            image_dim,
            text_dim,
            entries: BTreeMap::new(),
        })
    }

    pub fn image_dim(&self) -> usize {
        self.image_dim
    }

    pub fn text_dim(&self) -> usize {
        self.text_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.image_dim + self.text_dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    /// Inserts a new entry. Dimensions must match and values must be finite;
    /// an id may only be inserted once.
    pub fn insert(&mut self, id: impl Into<ItemId>, image: Vec<f32>, text: Vec<f32>) -> Result<()> {
        let id = id.into();
        if image.len() != self.image_dim {
            return Err(Error::Validation(format!(
                "item `{id}`: image embedding has {} values, expected {}",
                image.len(),
                self.image_dim
            )));
        }
        if text.len() != self.text_dim {
            return Err(Error::Validation(format!(
                "item `{id}`: text embedding has {} values, expected {}",
                text.len(),
                self.text_dim
            )));
        }
        if !image.iter().chain(&text).all(|x| x.is_finite()) {
            return Err(Error::Validation(format!(
                "item `{id}`: non-finite embedding value"
            )));
        }
        if self.entries.contains_key(&id) {
            return Err(Error::Validation(format!("duplicate item_id `{id}`")));
        }
        self.entries.insert(id, ItemEmbedding { image, text });
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&ItemEmbedding> {
        self.entries
            .get(id)
            .ok_or_else(|| Error::UnknownItem(id.into()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ItemId, &ItemEmbedding)> {
        self.entries.iter()
    }

    /// Ids from `ids` that have no entry, in input order.
    pub fn missing<'a>(&self, ids: impl IntoIterator<Item = &'a ItemId>) -> Vec<ItemId> {
        ids.into_iter()
            .filter(|id| !self.entries.contains_key(*id))
            .cloned()
            .collect()
    }
}

/// `u_i`: image embedding followed by text embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemFeature(Vec<f32>);

impl ItemFeature {
    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.0
    }
}

pub fn assemble_feature(store: &EmbeddingStore, item_id: &str) -> Result<ItemFeature> {
    let e = store.get(item_id)?;
    let mut v = Vec::with_capacity(store.feature_dim());
    v.extend_from_slice(&e.image);
    v.extend_from_slice(&e.text);
    Ok(ItemFeature(v))
}

/// Item feature converted to the model's working precision.
pub fn feature_as<T: Scalar>(store: &EmbeddingStore, item_id: &str) -> Result<Vec<T>> {
    let e = store.get(item_id)?;
    let mut v = convert::<T>(&e.image);
    v.extend(convert::<T>(&e.text));
    Ok(v)
}

/// Target-item token input: blank image placeholder followed by a description
/// embedding. The placeholder segment is all zeros; a learnable placeholder,
/// when enabled, is substituted by the model.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTokenInput {
    vec: Vec<f32>,
    image_dim: usize,
}

impl TargetTokenInput {
    pub fn as_slice(&self) -> &[f32] {
        &self.vec
    }

    pub fn image_segment(&self) -> &[f32] {
        &self.vec[..self.image_dim]
    }

    pub fn text_segment(&self) -> &[f32] {
        &self.vec[self.image_dim..]
    }
}

pub fn assemble_target_token(
    store: &EmbeddingStore,
    description_embedding: &[f32],
) -> Result<TargetTokenInput> {
    target_token_with_dims(store.image_dim, store.text_dim, description_embedding)
}

pub fn target_token_with_dims(
    image_dim: usize,
    text_dim: usize,
    description_embedding: &[f32],
) -> Result<TargetTokenInput> {
    if description_embedding.len() != text_dim {
        return Err(Error::Validation(format!(
            "description embedding has {} values, expected text_dim={text_dim}",
            description_embedding.len()
        )));
    }
    let mut vec = alloc::vec![0.0f32; image_dim];
    vec.extend_from_slice(description_embedding);
    Ok(TargetTokenInput { vec, image_dim })
}

/// Target token built from an item's own text embedding (the FITB protocol's
/// stand-in for a target description).
pub fn target_token_for_item(store: &EmbeddingStore, item_id: &str) -> Result<TargetTokenInput> {
    let e = store.get(item_id)?;
    assemble_target_token(store, &e.text)
}

/// Deterministic stand-in for the image and text encoders.
///
/// Items with synthetic latents are passed through, zero-padded when the
/// target dimension is larger and randomly projected when it is smaller.
/// Other items get a pseudo-random unit vector seeded by a SHA-256 digest of
/// `(seed, item_id, category, description)`.
pub fn stub_encode(
    corpus: &Corpus,
    image_dim: usize,
    text_dim: usize,
    seed: u64,
    truth: Option<&GroundTruth>,
) -> Result<EmbeddingStore> {
    let mut store = EmbeddingStore::new(image_dim, text_dim)?;
    let projections = truth.map(|t| {
        (
            Projection::new(t.latent_dim, image_dim, seed, b"image"),
            Projection::new(t.latent_dim, text_dim, seed, b"text"),
        )
    });
    for (id, item) in &corpus.items {
        let latent = truth.and_then(|t| t.embeddings.get(id));
        let (image, text) = match (latent, &projections) {
            (Some(l), Some((pi, pt))) => (pi.apply(&l.image), pt.apply(&l.text)),
            _ => (
                hashed_unit_vector(
                    seed,
                    b"image",
                    id,
                    &item.category,
                    &item.description,
                    image_dim,
                ),
                hashed_unit_vector(
                    seed,
                    b"text",
                    id,
                    &item.category,
                    &item.description,
                    text_dim,
                ),
            ),
        };
        store.insert(id.clone(), image, text)?;
    }
    Ok(store)
}

struct Projection {
    from: usize,
    to: usize,
    /// `to x from`, absent when padding.
    matrix: Option<Vec<f64>>,
}

impl Projection {
    fn new(from: usize, to: usize, seed: u64, stream: &[u8]) -> Self {
        let matrix = (to < from).then(|| {
            let mut rng = SeedRng::from_seed(digest(&[&seed.to_le_bytes(), b"projection", stream]));
            let scale = 1.0 / libm::sqrt(to as f64);
            (0..to * from)
                .map(|_| {
                    let x: f64 = StandardNormal.sample(&mut rng);
                    scale * x
                })
                .collect()
        });
        Projection { from, to, matrix }
    }

    fn apply(&self, v: &[f32]) -> Vec<f32> {
        match &self.matrix {
            None => {
                let mut out = alloc::vec![0.0f32; self.to];
                out[..v.len()].copy_from_slice(v);
                out
            }
            Some(m) => (0..self.to)
                .map(|r| {
                    let row = &m[r * self.from..(r + 1) * self.from];
                    row.iter().zip(v).map(|(a, &b)| a * b as f64).sum::<f64>() as f32
                })
                .collect(),
        }
    }
}

fn digest(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

fn hashed_unit_vector(
    seed: u64,
    stream: &[u8],
    id: &str,
    category: &str,
    description: &str,
    dim: usize,
) -> Vec<f32> {
    let key = digest(&[
        &seed.to_le_bytes(),
        stream,
        id.as_bytes(),
        category.as_bytes(),
        description.as_bytes(),
    ]);
    let mut rng = SeedRng::from_seed(key);
    let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = libm::sqrt(raw.iter().map(|x| x * x).sum::<f64>());
    raw.into_iter().map(|x| (x / norm) as f32).collect()
}
