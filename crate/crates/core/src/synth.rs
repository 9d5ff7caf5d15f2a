//! Seeded synthetic corpus with planted style clusters.
//!
//! Every style owns a latent vector. An item's image embedding is its style
//! latent plus a category offset plus noise; its text embedding is a fixed
//! random linear map of the style latent plus noise. Compatible outfits draw
//! all items from one style, incompatible ones mix at least two styles, and
//! FITB distractors are same-category items from other styles.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, FitbQuestion, Item, ItemId, Label, OutfitExample, Split};
use crate::error::{Error, Result};
use crate::SeedRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_styles: usize,
    pub n_categories: usize,
    pub items_per_style_category: usize,
    pub latent_dim: usize,
    pub noise_sigma: f64,
    pub n_outfits: usize,
    pub fitb_candidates: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_styles: 8,
            n_categories: 5,
            items_per_style_category: 10,
            latent_dim: 16,
            noise_sigma: 0.3,
            n_outfits: 600,
            fitb_candidates: 4,
            seed: 0,
        }
    }
}

const MIN_OUTFIT_LEN: usize = 3;
const MAX_OUTFIT_LEN: usize = 5;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_styles", self.n_styles),
            ("n_categories", self.n_categories),
            ("items_per_style_category", self.items_per_style_category),
            ("latent_dim", self.latent_dim),
            ("n_outfits", self.n_outfits),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.fitb_candidates < 2 {
            return Err(Error::Config("fitb_candidates must be at least 2".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise_sigma must be finite and >= 0".into()));
        }
        if self.n_styles < 2 {
            return Err(Error::Config(
                "n_styles must be at least 2: incompatible outfits and distractors need a second style"
                    .into(),
            ));
        }
        if self.n_categories < 2 {
            return Err(Error::Config(
                "n_categories must be at least 2: outfits use distinct categories".into(),
            ));
        }
        let pool = (self.n_styles - 1) * self.items_per_style_category;
        if self.fitb_candidates - 1 > pool {
            return Err(Error::Config(format!(
                "fitb_candidates - 1 = {} distractors needed but only {pool} same-category items exist in other styles",
                self.fitb_candidates - 1
            )));
        }
        Ok(())
    }

    pub fn n_items(&self) -> usize {
        self.n_styles * self.n_categories * self.items_per_style_category
    }

    fn outfit_len_range(&self) -> (usize, usize) {
        let hi = MAX_OUTFIT_LEN.min(self.n_categories);
        (MIN_OUTFIT_LEN.min(hi), hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentEmbedding {
    pub image: Vec<f32>,
    pub text: Vec<f32>,
}

/// Construction record for a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub latent_dim: usize,
    pub style_of: BTreeMap<ItemId, usize>,
    pub embeddings: BTreeMap<ItemId, LatentEmbedding>,
}

impl GroundTruth {
    /// Distinct styles used by an outfit.
    pub fn styles_in(&self, items: &[ItemId]) -> Result<Vec<usize>> {
        let mut styles = Vec::with_capacity(items.len());
        for id in items {
            let s = *self
                .style_of
                .get(id)
                .ok_or_else(|| Error::UnknownItem(id.clone()))?;
            if !styles.contains(&s) {
                styles.push(s);
            }
        }
        styles.sort_unstable();
        Ok(styles)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub truth: GroundTruth,
}

fn gaussian_vec(rng: &mut SeedRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn item_id(index: usize) -> ItemId {
    format!("syn{index:05}")
}

fn category_name(c: usize) -> String {
    format!("category{c}")
}

pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticCorpus> {
    config.validate()?;
    let mut rng = SeedRng::seed_from_u64(config.seed);
    let d = config.latent_dim;

    let styles: Vec<Vec<f64>> = (0..config.n_styles)
        .map(|_| gaussian_vec(&mut rng, d))
        .collect();
    let offsets: Vec<Vec<f64>> = (0..config.n_categories)
        .map(|_| gaussian_vec(&mut rng, d))
        .collect();
    let scale = 1.0 / libm::sqrt(d as f64);
    let text_map: Vec<f64> = gaussian_vec(&mut rng, d * d)
        .into_iter()
        .map(|x| x * scale)
        .collect();

    // members[style][category] -> ids
    let mut members: Vec<Vec<Vec<ItemId>>> =
        alloc::vec![alloc::vec![Vec::new(); config.n_categories]; config.n_styles];
    let mut items = Vec::with_capacity(config.n_items());
    let mut style_of = BTreeMap::new();
    let mut embeddings = BTreeMap::new();
    let sigma = config.noise_sigma;
    let mut next = 0usize;
    for (s, z) in styles.iter().enumerate() {
        for (c, offset) in offsets.iter().enumerate() {
            for k in 0..config.items_per_style_category {
                let id = item_id(next);
                next += 1;
                let image: Vec<f32> = (0..d)
                    .map(|i| {
                        let eps: f64 = StandardNormal.sample(&mut rng);
                        (z[i] + offset[i] + sigma * eps) as f32
                    })
                    .collect();
                let text: Vec<f32> = (0..d)
                    .map(|r| {
                        let row = &text_map[r * d..(r + 1) * d];
                        let az: f64 = row.iter().zip(z).map(|(a, b)| a * b).sum();
                        let eps: f64 = StandardNormal.sample(&mut rng);
                        (az + sigma * eps) as f32
                    })
                    .collect();
                let mut item = Item::new(
                    id.clone(),
                    category_name(c),
                    format!("{} piece {k}", category_name(c)),
                )?;
                item.image_ref = Some(format!("images/{id}.jpg"));
                items.push(item);
                style_of.insert(id.clone(), s);
                embeddings.insert(id.clone(), LatentEmbedding { image, text });
                members[s][c].push(id);
            }
        }
    }

    let (lo, hi) = config.outfit_len_range();
    let mut categories: Vec<usize> = (0..config.n_categories).collect();
    let mut pick_categories = |rng: &mut SeedRng| -> Vec<usize> {
        let len = rng.random_range(lo..=hi);
        categories.shuffle(rng);
        categories[..len].to_vec()
    };

    let mut compatible = Vec::with_capacity(config.n_outfits);
    let mut compatible_style = Vec::with_capacity(config.n_outfits);
    for _ in 0..config.n_outfits {
        let s = rng.random_range(0..config.n_styles);
        let outfit: Vec<(usize, ItemId)> = pick_categories(&mut rng)
            .into_iter()
            .map(|c| {
                let pool = &members[s][c];
                (c, pool[rng.random_range(0..pool.len())].clone())
            })
            .collect();
        compatible.push(outfit);
        compatible_style.push(s);
    }

    let mut examples = Vec::with_capacity(config.n_outfits);
    for (i, outfit) in compatible.iter().enumerate() {
        if i % 2 == 0 {
            let ids = outfit.iter().map(|(_, id)| id.clone()).collect();
            examples.push(OutfitExample::new(ids, Label::Compatible)?);
        } else {
            let cats = pick_categories(&mut rng);
            let mut chosen_styles: Vec<usize> = cats
                .iter()
                .map(|_| rng.random_range(0..config.n_styles))
                .collect();
            if chosen_styles.iter().all(|&s| s == chosen_styles[0]) {
                let last = chosen_styles.len() - 1;
                let shift = rng.random_range(1..config.n_styles);
                chosen_styles[last] = (chosen_styles[0] + shift) % config.n_styles;
            }
            let ids = cats
                .iter()
                .zip(&chosen_styles)
                .map(|(&c, &s)| {
                    let pool = &members[s][c];
                    pool[rng.random_range(0..pool.len())].clone()
                })
                .collect();
            examples.push(OutfitExample::new(ids, Label::Incompatible)?);
        }
    }

    let mut questions = Vec::with_capacity(config.n_outfits);
    for (outfit, &s) in compatible.iter().zip(&compatible_style) {
        let blank = rng.random_range(0..outfit.len());
        let (category, answer) = outfit[blank].clone();
        let question_items: Vec<ItemId> = outfit
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != blank)
            .map(|(_, (_, id))| id.clone())
            .collect();
        let mut pool: Vec<&ItemId> = (0..config.n_styles)
            .filter(|&other| other != s)
            .flat_map(|other| members[other][category].iter())
            .collect();
        pool.shuffle(&mut rng);
        let mut candidates: Vec<ItemId> = pool[..config.fitb_candidates - 1]
            .iter()
            .map(|id| (*id).clone())
            .collect();
        let answer_index = rng.random_range(0..config.fitb_candidates);
        candidates.insert(answer_index, answer);
        questions.push(FitbQuestion::new(
            question_items,
            blank,
            candidates,
            answer_index,
        )?);
    }

    let mut corpus = Corpus::from_items(items)?;
    let assignment = split_assignment(config.n_outfits, &mut rng);
    for (i, (ex, q)) in examples.into_iter().zip(questions).enumerate() {
        corpus.cp.get_mut(assignment[i]).push(ex);
        corpus.fitb.get_mut(assignment[i]).push(q);
    }

    Ok(SyntheticCorpus {
        corpus,
        truth: GroundTruth {
            latent_dim: d,
            style_of,
            embeddings,
        },
    })
}

/// 70/15/15 assignment of outfit indices; order within a split follows index order.
fn split_assignment(n: usize, rng: &mut SeedRng) -> Vec<Split> {
    let n_train = (n * 70 + 50) / 100;
    let n_valid = ((n * 15 + 50) / 100).min(n - n_train);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut out = alloc::vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_valid {
            Split::Valid
        } else {
            Split::Test
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::corpus_validate;

    fn small() -> SynthConfig {
        SynthConfig {
            n_outfits: 120,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn reference_counts() {
        let cfg = SynthConfig {
            n_styles: 8,
            n_categories: 5,
            items_per_style_category: 10,
            n_outfits: 600,
            ..SynthConfig::default()
        };
        let syn = generate_synthetic(&cfg).unwrap();
        assert_eq!(syn.corpus.items.len(), 400);
        assert_eq!(syn.corpus.cp.total(), 600);
        assert_eq!(syn.corpus.fitb.total(), 600);
        assert_eq!(syn.corpus.cp.counts().train, 420);
        assert_eq!(syn.corpus.cp.counts().valid, 90);
        assert_eq!(syn.corpus.cp.counts().test, 90);
        assert!(corpus_validate(&syn.corpus).unresolved_ids.is_empty());
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SynthConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.truth.embeddings, c.truth.embeddings);
    }

    #[test]
    fn zero_noise_collapses_style_category_groups() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            ..small()
        };
        let syn = generate_synthetic(&cfg).unwrap();
        let mut groups: BTreeMap<(usize, String), &LatentEmbedding> = BTreeMap::new();
        for (id, item) in &syn.corpus.items {
            let key = (syn.truth.style_of[id], item.category.clone());
            let emb = &syn.truth.embeddings[id];
            match groups.get(&key) {
                Some(first) => assert_eq!(*first, emb),
                None => {
                    groups.insert(key, emb);
                }
            }
        }
        assert_eq!(groups.len(), cfg.n_styles * cfg.n_categories);
    }

    #[test]
    fn labels_match_construction() {
        let syn = generate_synthetic(&small()).unwrap();
        for split in Split::ALL {
            for ex in syn.corpus.cp.get(split) {
                let styles = syn.truth.styles_in(&ex.items).unwrap();
                match ex.label {
                    Label::Compatible => assert_eq!(styles.len(), 1),
                    Label::Incompatible => assert!(styles.len() >= 2),
                }
                let cats: alloc::collections::BTreeSet<_> = ex
                    .items
                    .iter()
                    .map(|id| syn.corpus.items[id].category.clone())
                    .collect();
                assert_eq!(cats.len(), ex.items.len());
                assert!((3..=5).contains(&ex.items.len()));
            }
        }
    }

    #[test]
    fn fitb_has_exactly_one_true_answer() {
        let syn = generate_synthetic(&small()).unwrap();
        for split in Split::ALL {
            for q in syn.corpus.fitb.get(split) {
                let style = syn.truth.styles_in(&q.question_items).unwrap();
                assert_eq!(style.len(), 1);
                let answer_cat = &syn.corpus.items[q.answer()].category;
                let matching: Vec<_> = q
                    .candidates
                    .iter()
                    .filter(|c| syn.truth.style_of[*c] == style[0])
                    .collect();
                assert_eq!(matching, alloc::vec![q.answer()]);
                for c in &q.candidates {
                    assert_eq!(&syn.corpus.items[c].category, answer_cat);
                }
            }
        }
    }

    #[test]
    fn infeasible_configs_are_named() {
        let err = generate_synthetic(&SynthConfig {
            n_styles: 2,
            items_per_style_category: 1,
            fitb_candidates: 4,
            ..small()
        })
        .unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("fitb_candidates")));
        assert!(generate_synthetic(&SynthConfig {
            n_styles: 1,
            ..small()
        })
        .is_err());
        assert!(generate_synthetic(&SynthConfig {
            fitb_candidates: 1,
            ..small()
        })
        .is_err());
        assert!(generate_synthetic(&SynthConfig {
            noise_sigma: -1.0,
            ..small()
        })
        .is_err());
        assert!(generate_synthetic(&SynthConfig {
            n_outfits: 0,
            ..small()
        })
        .is_err());
    }
}
