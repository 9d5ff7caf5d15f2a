//! Dataset model: items, labeled outfits, fill-in-the-blank questions and
//! their train/valid/test splits.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ItemId = String;

/// One fashion item. Tags and popularity from the source metadata are not kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub item_id: ItemId,
    pub category: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

impl Item {
    pub fn new(
        item_id: impl Into<ItemId>,
        category: impl Into<String>,
        description: impl Into<String>,
    ) -> Result<Self> {
        let item = Item {
            item_id: item_id.into(),
            category: category.into(),
            description: description.into(),
            image_ref: None,
        };
        item.check()?;
        Ok(item)
    }

    fn check(&self) -> Result<()> {
        if self.item_id.is_empty() {
            return Err(Error::Validation("item_id must be non-empty".into()));
        }
        if self.category.is_empty() {
            return Err(Error::Validation(format!(
                "item `{}` has an empty category",
                self.item_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Incompatible,
    Compatible,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Incompatible => 0,
            Label::Compatible => 1,
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l.as_u8()
    }
}

impl TryFrom<u8> for Label {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::Incompatible),
            1 => Ok(Label::Compatible),
            other => Err(Error::Validation(format!(
                "label must be 0 or 1, got {other}"
            ))),
        }
    }
}

/// A labeled outfit for compatibility prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutfitExample {
    pub items: Vec<ItemId>,
    pub label: Label,
}

impl OutfitExample {
    pub fn new(items: Vec<ItemId>, label: Label) -> Result<Self> {
        if items.len() < 2 {
            return Err(Error::Validation(format!(
                "outfit needs at least 2 items, got {}",
                items.len()
            )));
        }
        Ok(OutfitExample { items, label })
    }
}

/// An incomplete outfit plus candidate completions, exactly one of which is right.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitbQuestion {
    pub question_items: Vec<ItemId>,
    /// Zero-based position of the removed item in the original outfit.
    pub blank_position: usize,
    pub candidates: Vec<ItemId>,
    pub answer_index: usize,
}

impl FitbQuestion {
    pub fn new(
        question_items: Vec<ItemId>,
        blank_position: usize,
        candidates: Vec<ItemId>,
        answer_index: usize,
    ) -> Result<Self> {
        if question_items.is_empty() {
            return Err(Error::Validation(
                "FITB question has no outfit items".into(),
            ));
        }
        if candidates.len() < 2 {
            return Err(Error::Validation(format!(
                "FITB question needs at least 2 candidates, got {}",
                candidates.len()
            )));
        }
        if answer_index >= candidates.len() {
            return Err(Error::Validation(format!(
                "answer_index {answer_index} out of range for {} candidates",
                candidates.len()
            )));
        }
        if blank_position > question_items.len() {
            return Err(Error::Validation(format!(
                "blank_position {blank_position} out of range for an outfit of {} items",
                question_items.len() + 1
            )));
        }
        let distinct: BTreeSet<&ItemId> = candidates.iter().collect();
        if distinct.len() != candidates.len() {
            return Err(Error::Validation(
                "FITB candidates must be pairwise distinct".into(),
            ));
        }
        Ok(FitbQuestion {
            question_items,
            blank_position,
            candidates,
            answer_index,
        })
    }

    pub fn answer(&self) -> &ItemId {
        &self.candidates[self.answer_index]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::Validation(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub valid: Vec<T>,
    pub test: Vec<T>,
}

impl<T> Default for Splits<T> {
    fn default() -> Self {
        Splits {
            train: Vec::new(),
            valid: Vec::new(),
            test: Vec::new(),
        }
    }
}

impl<T> Splits<T> {
    pub fn get(&self, split: Split) -> &[T] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn get_mut(&mut self, split: Split) -> &mut Vec<T> {
        match split {
            Split::Train => &mut self.train,
            Split::Valid => &mut self.valid,
            Split::Test => &mut self.test,
        }
    }

    pub fn total(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn counts(&self) -> SplitCounts {
        SplitCounts {
            train: self.train.len(),
            valid: self.valid.len(),
            test: self.test.len(),
        }
    }
}

/// Immutable once built. Split membership is by outfit, so items may recur
/// across splits.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Corpus {
    pub items: BTreeMap<ItemId, Item>,
    pub cp: Splits<OutfitExample>,
    pub fitb: Splits<FitbQuestion>,
}

impl Corpus {
    /// Builds the item table, rejecting duplicate or malformed items.
    pub fn from_items(items: impl IntoIterator<Item = Item>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for item in items {
            item.check()?;
            if map.contains_key(&item.item_id) {
                return Err(Error::Validation(format!(
                    "duplicate item_id `{}`",
                    item.item_id
                )));
            }
            map.insert(item.item_id.clone(), item);
        }
        Ok(Corpus {
            items: map,
            ..Default::default()
        })
    }

    pub fn item(&self, id: &str) -> Result<&Item> {
        self.items
            .get(id)
            .ok_or_else(|| Error::UnknownItem(id.into()))
    }

    pub fn validate(&self) -> ValidationReport {
        corpus_validate(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.valid + self.test
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_items: usize,
    pub n_outfits: SplitCounts,
    pub n_fitb_questions: SplitCounts,
    /// Referenced ids missing from the item table, sorted and deduplicated.
    pub unresolved_ids: Vec<ItemId>,
    /// Compatibility outfit length -> count.
    pub length_histogram: BTreeMap<usize, usize>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.unresolved_ids.is_empty()
    }
}

/// Reports dangling references and the outfit length distribution.
pub fn corpus_validate(corpus: &Corpus) -> ValidationReport {
    let mut unresolved = BTreeSet::new();
    let mut histogram = BTreeMap::new();
    let mut check = |id: &ItemId| {
        if !corpus.items.contains_key(id) {
            unresolved.insert(id.clone());
        }
    };
    for split in Split::ALL {
        for ex in corpus.cp.get(split) {
            *histogram.entry(ex.items.len()).or_insert(0) += 1;
            ex.items.iter().for_each(&mut check);
        }
        for q in corpus.fitb.get(split) {
            q.question_items.iter().for_each(&mut check);
            q.candidates.iter().for_each(&mut check);
        }
    }
    ValidationReport {
        n_items: corpus.items.len(),
        n_outfits: corpus.cp.counts(),
        n_fitb_questions: corpus.fitb.counts(),
        unresolved_ids: unresolved.into_iter().collect(),
        length_histogram: histogram,
    }
}
