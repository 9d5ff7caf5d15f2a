//! Exact nearest-neighbour retrieval over item index embeddings and
//! fill-in-the-blank evaluation.

use alloc::collections::{BTreeSet, BinaryHeap};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::corpus::{Corpus, FitbQuestion, ItemId};
use crate::embeddings::{feature_as, target_token_for_item, EmbeddingStore};
use crate::error::{Error, Result};
use crate::losses::{check_unit, squared_euclidean, UNIT_NORM_TOL};
use crate::model::{self, Batch, Mode, ModelParams};
use crate::scalar::{convert, l2_norm, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub item_id: ItemId,
    pub vector: Vec<f32>,
    pub category: Option<String>,
}

/// Unit vectors keyed by unique item id, scanned linearly at query time.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnIndex {
    dim: usize,
    entries: Vec<IndexEntry>,
    ids: BTreeSet<ItemId>,
}

impl KnnIndex {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("index dimension must be positive".into()));
        }
        Ok(KnnIndex {
            dim,
            entries: Vec::new(),
            ids: BTreeSet::new(),
        })
    }

    pub fn from_entries(dim: usize, entries: impl IntoIterator<Item = IndexEntry>) -> Result<Self> {
        let mut idx = Self::new(dim)?;
        for e in entries {
            idx.push(e)?;
        }
        Ok(idx)
    }

    pub fn push(&mut self, entry: IndexEntry) -> Result<()> {
        if entry.vector.len() != self.dim {
            return Err(Error::Validation(format!(
                "index entry `{}` has dimension {}, expected {}",
                entry.item_id,
                entry.vector.len(),
                self.dim
            )));
        }
        check_unit(
            &entry.vector,
            &format!("index vector for `{}`", entry.item_id),
        )?;
        if !self.ids.insert(entry.item_id.clone()) {
            return Err(Error::Validation(format!(
                "duplicate index item_id `{}`",
                entry.item_id
            )));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn has_categories(&self) -> bool {
        self.entries.iter().any(|e| e.category.is_some())
    }
}

/// Index embeddings for `item_ids`, tagged with categories when a corpus is given.
pub fn build_index<T: Scalar>(
    params: &ModelParams<T>,
    store: &EmbeddingStore,
    corpus: Option<&Corpus>,
    item_ids: &[ItemId],
) -> Result<KnnIndex> {
    let missing = store.missing(item_ids);
    if !missing.is_empty() {
        return Err(Error::Lookup(format!(
            "missing embeddings for {} item(s): {}",
            missing.len(),
            missing.join(", ")
        )));
    }
    let mut index = KnnIndex::new(params.config().index_dim)?;
    for id in item_ids {
        let f = model::item_index_embedding(params, &feature_as::<T>(store, id)?)?;
        let category = corpus
            .and_then(|c| c.items.get(id))
            .map(|item| item.category.clone());
        index.push(IndexEntry {
            item_id: id.clone(),
            vector: f.iter().map(|x| x.f64() as f32).collect(),
            category,
        })?;
    }
    Ok(index)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub item_id: ItemId,
    pub distance: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    /// Ascending distance, ties by item id.
    pub hits: Vec<Hit>,
    /// Fewer than `k` candidates were available.
    pub pool_exhausted: bool,
}

struct Ranked<'a> {
    distance: f32,
    id: &'a str,
}

impl Ord for Ranked<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then_with(|| self.id.cmp(other.id))
    }
}

impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Ranked<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked<'_> {}

/// Exact `k` nearest entries to the unit vector `t`.
pub fn query(
    index: &KnnIndex,
    t: &[f32],
    k: usize,
    category_filter: Option<&str>,
) -> Result<RetrievalResult> {
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    if t.len() != index.dim {
        return Err(Error::Validation(format!(
            "query has dimension {}, index has {}",
            t.len(),
            index.dim
        )));
    }
    if (l2_norm(t).f64() - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::Validation("query vector must be unit-norm".into()));
    }
    // max-heap of the best k seen so far
    let mut heap: BinaryHeap<Ranked<'_>> = BinaryHeap::with_capacity(k + 1);
    let mut pool = 0usize;
    for e in &index.entries {
        if let Some(cat) = category_filter {
            if e.category.as_deref() != Some(cat) {
                continue;
            }
        }
        pool += 1;
        let cand = Ranked {
            distance: squared_euclidean(t, &e.vector),
            id: &e.item_id,
        };
        if heap.len() < k {
            heap.push(cand);
        } else if heap.peek().is_some_and(|worst| cand < *worst) {
            heap.pop();
            heap.push(cand);
        }
    }
    let hits = heap
        .into_sorted_vec()
        .into_iter()
        .map(|r| Hit {
            item_id: r.id.into(),
            distance: r.distance,
        })
        .collect();
    Ok(RetrievalResult {
        hits,
        pool_exhausted: pool < k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitbScoring {
    /// Nearest candidate to the retrieval query `t`.
    #[default]
    Distance,
    /// Candidate whose completed outfit gets the highest compatibility score.
    Compatibility,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitbRecord {
    pub question_index: usize,
    pub predicted: usize,
    pub answer: usize,
    /// Distances (or compatibility scores) per candidate.
    pub scores: Vec<f64>,
}

impl FitbRecord {
    pub fn correct(&self) -> bool {
        self.predicted == self.answer
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitbReport {
    pub accuracy: f64,
    pub records: Vec<FitbRecord>,
}

fn in_question<E>(i: usize) -> impl Fn(E) -> Error
where
    E: core::fmt::Display,
{
    move |e| Error::Lookup(format!("FITB question {i}: {e}"))
}

/// Picks the smallest score, first candidate on ties.
fn argmin(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
    }
    best
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn question_features<T: Scalar>(store: &EmbeddingStore, q: &FitbQuestion) -> Result<Vec<Vec<T>>> {
    q.question_items
        .iter()
        .map(|id| feature_as::<T>(store, id))
        .collect()
}

/// Retrieval query for a question: the incomplete outfit plus a target token
/// carrying the ground-truth item's text embedding.
pub fn fitb_query<T: Scalar>(
    params: &ModelParams<T>,
    store: &EmbeddingStore,
    q: &FitbQuestion,
) -> Result<Vec<T>> {
    let feats = question_features::<T>(store, q)?;
    let refs: Vec<&[T]> = feats.iter().map(Vec::as_slice).collect();
    let token = target_token_for_item(store, q.answer())?;
    model::forward_cir(
        params,
        &refs,
        &convert::<T>(token.as_slice()),
        &mut Mode::Eval,
    )
}

/// FITB accuracy with queries supplied by `query_for`; candidates are ranked
/// by distance to their index embeddings.
pub fn evaluate_fitb_with_queries<T, F>(
    params: &ModelParams<T>,
    store: &EmbeddingStore,
    questions: &[FitbQuestion],
    mut query_for: F,
) -> Result<FitbReport>
where
    T: Scalar,
    F: FnMut(usize, &FitbQuestion) -> Result<Vec<T>>,
{
    if questions.is_empty() {
        return Err(Error::UndefinedMetric("no FITB questions".into()));
    }
    let mut records = Vec::with_capacity(questions.len());
    for (i, q) in questions.iter().enumerate() {
        let t = query_for(i, q).map_err(in_question(i))?;
        let mut scores = Vec::with_capacity(q.candidates.len());
        for c in &q.candidates {
            let feat = feature_as::<T>(store, c).map_err(in_question(i))?;
            let f = model::item_index_embedding(params, &feat)?;
            scores.push(squared_euclidean(&t, &f).f64());
        }
        records.push(FitbRecord {
            question_index: i,
            predicted: argmin(&scores),
            answer: q.answer_index,
            scores,
        });
    }
    Ok(report(records))
}

fn report(records: Vec<FitbRecord>) -> FitbReport {
    let correct = records.iter().filter(|r| r.correct()).count();
    FitbReport {
        accuracy: correct as f64 / records.len() as f64,
        records,
    }
}

pub fn evaluate_fitb<T: Scalar>(
    params: &ModelParams<T>,
    store: &EmbeddingStore,
    questions: &[FitbQuestion],
    scoring: FitbScoring,
) -> Result<FitbReport> {
    match scoring {
        FitbScoring::Distance => evaluate_fitb_with_queries(params, store, questions, |_, q| {
            fitb_query(params, store, q)
        }),
        FitbScoring::Compatibility => {
            if questions.is_empty() {
                return Err(Error::UndefinedMetric("no FITB questions".into()));
            }
            let mut records = Vec::with_capacity(questions.len());
            for (i, q) in questions.iter().enumerate() {
                let outfit = question_features::<T>(store, q).map_err(in_question(i))?;
                let candidates = q
                    .candidates
                    .iter()
                    .map(|c| feature_as::<T>(store, c).map_err(in_question(i)))
                    .collect::<Result<Vec<_>>>()?;
                let completed: Vec<Vec<&[T]>> = candidates
                    .iter()
                    .map(|feat| {
                        let mut row: Vec<&[T]> = outfit.iter().map(Vec::as_slice).collect();
                        row.push(feat.as_slice());
                        row
                    })
                    .collect();
                let batch = Batch::from_rows(params.config().input_dim, &completed)?;
                let scores: Vec<f64> = model::forward_cp(params, &batch, &mut Mode::Eval)?
                    .into_iter()
                    .map(Scalar::f64)
                    .collect();
                records.push(FitbRecord {
                    question_index: i,
                    predicted: argmax(&scores),
                    answer: q.answer_index,
                    scores,
                });
            }
            Ok(report(records))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn e(id: &str, v: Vec<f32>, cat: Option<&str>) -> IndexEntry {
        IndexEntry {
            item_id: id.into(),
            vector: v,
            category: cat.map(Into::into),
        }
    }

    fn sample_index() -> KnnIndex {
        KnnIndex::from_entries(
            2,
            vec![
                e("b", vec![1.0, 0.0], Some("tops")),
                e("a", vec![0.0, 1.0], Some("tops")),
                e("c", vec![-1.0, 0.0], Some("shoes")),
                e("d", vec![0.0, -1.0], Some("tops")),
            ],
        )
        .unwrap()
    }

    #[test]
    fn self_retrieval_first() {
        let idx = sample_index();
        let r = query(&idx, &[-1.0, 0.0], 2, None).unwrap();
        assert_eq!(r.hits[0].item_id, "c");
        assert_eq!(r.hits[0].distance, 0.0);
        assert!(!r.pool_exhausted);
    }

    #[test]
    fn ties_break_by_id() {
        let idx = sample_index();
        // equidistant from "a" and "b"
        let s = core::f32::consts::FRAC_1_SQRT_2;
        let r = query(&idx, &[s, s], 2, None).unwrap();
        assert_eq!(r.hits[0].item_id, "a");
        assert_eq!(r.hits[1].item_id, "b");
    }

    #[test]
    fn category_filter_exhausts_pool() {
        let idx = sample_index();
        let r = query(&idx, &[1.0, 0.0], 10, Some("tops")).unwrap();
        assert_eq!(r.hits.len(), 3);
        assert!(r.pool_exhausted);
        assert!(r.hits.iter().all(|h| h.item_id != "c"));
    }

    #[test]
    fn top_k_is_prefix_of_top_k_plus_one() {
        let idx = sample_index();
        let t = [0.6, 0.8];
        for k in 1..4 {
            let a = query(&idx, &t, k, None).unwrap();
            let b = query(&idx, &t, k + 1, None).unwrap();
            assert_eq!(&b.hits[..k], &a.hits[..]);
        }
    }

    #[test]
    fn index_rejects_bad_entries() {
        let mut idx = KnnIndex::new(2).unwrap();
        assert!(idx.push(e("x", vec![2.0, 0.0], None)).is_err());
        assert!(idx.push(e("x", vec![1.0, 0.0, 0.0], None)).is_err());
        idx.push(e("x", vec![1.0, 0.0], None)).unwrap();
        assert!(idx.push(e("x", vec![0.0, 1.0], None)).is_err());
        assert!(query(&idx, &[1.0, 0.0], 0, None).is_err());
        assert!(query(&idx, &[3.0, 0.0], 1, None).is_err());
    }

    #[test]
    fn argmin_prefers_first_on_ties() {
        assert_eq!(argmin(&[0.5, 0.2, 0.2]), 1);
        assert_eq!(argmax(&[0.5, 0.9, 0.9]), 1);
    }
}
