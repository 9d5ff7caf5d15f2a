use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::corpus::{Corpus, ItemId};
use crate::error::{Error, Result};
use crate::SeedRng;

/// Draws negatives for a positive item: same-category items first, topped up
/// uniformly from the rest of the corpus when the category runs short.
pub struct NegativeSampler<'a> {
    all: Vec<&'a ItemId>,
    by_category: BTreeMap<&'a str, Vec<&'a ItemId>>,
    corpus: &'a Corpus,
}

const REJECTION_ROUNDS: usize = 32;

impl<'a> NegativeSampler<'a> {
    pub fn new(corpus: &'a Corpus) -> Self {
        let mut by_category: BTreeMap<&str, Vec<&ItemId>> = BTreeMap::new();
        for (id, item) in &corpus.items {
            by_category
                .entry(item.category.as_str())
                .or_default()
                .push(id);
        }
        NegativeSampler {
            all: corpus.items.keys().collect(),
            by_category,
            corpus,
        }
    }

    pub fn sample(&self, positive: &str, n: usize, rng: &mut SeedRng) -> Result<Vec<ItemId>> {
        if n == 0 {
            return Err(Error::Validation(
                "number of negatives must be at least 1".into(),
            ));
        }
        let category = self.corpus.item(positive)?.category.as_str();
        if self.all.len() < 2 {
            return Err(Error::Sampling(
                "corpus has only one item; no negatives exist".into(),
            ));
        }
        let same: Vec<&ItemId> = self.by_category[category]
            .iter()
            .copied()
            .filter(|id| id.as_str() != positive)
            .collect();
        if same.len() >= n {
            return Ok(index::sample(rng, same.len(), n)
                .into_iter()
                .map(|i| same[i].clone())
                .collect());
        }

        let mut out: Vec<ItemId> = same.iter().map(|id| (*id).clone()).collect();
        out.shuffle(rng);
        let need = n - out.len();
        let others = self.all.len() - 1 - same.len();
        if others < need {
            return Err(Error::Sampling(format!(
                "need {n} negatives for `{positive}` but only {} other items exist",
                self.all.len() - 1
            )));
        }
        let eligible =
            |id: &ItemId| id.as_str() != positive && self.corpus.items[id].category != category;
        let mut chosen = BTreeSet::new();
        let mut attempts = 0;
        while chosen.len() < need && attempts < REJECTION_ROUNDS * need {
            attempts += 1;
            let id = self.all[rng.random_range(0..self.all.len())];
            if eligible(id) && chosen.insert(id) {
                out.push(id.clone());
            }
        }
        if chosen.len() < need {
            let rest: Vec<&ItemId> = self
                .all
                .iter()
                .copied()
                .filter(|id| eligible(id) && !chosen.contains(id))
                .collect();
            let k = need - chosen.len();
            out.extend(
                index::sample(rng, rest.len(), k)
                    .into_iter()
                    .map(|i| rest[i].clone()),
            );
        }
        Ok(out)
    }
}

pub fn sample_negatives(
    corpus: &Corpus,
    positive: &str,
    n: usize,
    rng: &mut SeedRng,
) -> Result<Vec<ItemId>> {
    NegativeSampler::new(corpus).sample(positive, n, rng)
}
