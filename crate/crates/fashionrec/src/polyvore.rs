//! Polyvore-style corpus files.
//!
//! A corpus directory holds, per split, `compatibility_{split}.json` (or the
//! whitespace-separated `.txt` variant) and `fill_in_blank_{split}.json`, plus
//! an item metadata file. Outfit-local ids of the form `setid_index` are
//! resolved through an optional outfit listing (`{split}.json` or
//! `outfits_{split}.json`).
//!
//! FITB `blank_position` is 1-based in files and 0-based in memory.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use fashionrec_core::corpus::{Corpus, FitbQuestion, Item, ItemId, Label, OutfitExample, Split};
use fashionrec_core::synth::GroundTruth;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::io::{read_text, write_atomic};

pub const ITEMS_FILE: &str = "items.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
const METADATA_FILES: [&str; 2] = [ITEMS_FILE, "polyvore_item_metadata.json"];

pub fn compatibility_file(split: Split) -> String {
    format!("compatibility_{}.json", split.name())
}

pub fn fitb_file(split: Split) -> String {
    format!("fill_in_blank_{}.json", split.name())
}

fn parse_err(path: &Path, entry: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        entry,
        message: message.into(),
    }
}

fn id_of(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) if n.is_u64() => Some(n.to_string()),
        _ => None,
    }
}

fn label_of(v: &Value) -> Option<Label> {
    let n = match v {
        Value::Number(n) => n.as_u64()?,
        Value::String(s) => s.trim().parse().ok()?,
        Value::Bool(b) => u64::from(*b),
        _ => return None,
    };
    u8::try_from(n).ok().and_then(|n| Label::try_from(n).ok())
}

fn outfit(path: &Path, entry: usize, label: Label, items: Vec<ItemId>) -> Result<OutfitExample> {
    OutfitExample::new(items, label).map_err(|e| parse_err(path, entry, e.to_string()))
}

/// Compatibility entries: a JSON array of `[label, id, id, ...]` arrays, or
/// one `label id id ...` line per outfit. Entries are numbered from 1.
pub fn parse_compatibility(text: &str, path: &Path) -> Result<Vec<OutfitExample>> {
    if text.trim_start().starts_with('[') {
        let entries: Vec<Value> = serde_json::from_str(text).map_err(|e| Error::json(path, e))?;
        entries
            .iter()
            .enumerate()
            .map(|(i, entry)| {
                let n = i + 1;
                let arr = entry
                    .as_array()
                    .ok_or_else(|| parse_err(path, n, "expected an array [label, item ids...]"))?;
                let (first, rest) = arr
                    .split_first()
                    .ok_or_else(|| parse_err(path, n, "empty entry"))?;
                let label = label_of(first).ok_or_else(|| {
                    parse_err(path, n, format!("label must be 0 or 1, got {first}"))
                })?;
                let items = rest
                    .iter()
                    .map(|v| id_of(v).ok_or_else(|| parse_err(path, n, format!("bad item id {v}"))))
                    .collect::<Result<Vec<_>>>()?;
                outfit(path, n, label, items)
            })
            .collect()
    } else {
        text.lines()
            .enumerate()
            .filter(|(_, line)| !line.trim().is_empty())
            .map(|(i, line)| {
                let n = i + 1;
                let mut tokens = line.split_whitespace();
                let first = tokens.next().unwrap_or_default();
                let label = match first {
                    "0" => Label::Incompatible,
                    "1" => Label::Compatible,
                    other => {
                        return Err(parse_err(
                            path,
                            n,
                            format!("label must be 0 or 1, got `{other}`"),
                        ))
                    }
                };
                outfit(path, n, label, tokens.map(String::from).collect())
            })
            .collect()
    }
}

/// Canonical JSON form, one entry per line.
pub fn write_compatibility(examples: &[OutfitExample]) -> String {
    let mut out = String::from("[\n");
    for (i, ex) in examples.iter().enumerate() {
        let mut entry = vec![Value::from(ex.label.as_u8())];
        entry.extend(ex.items.iter().map(|id| Value::from(id.as_str())));
        out.push_str(&Value::Array(entry).to_string());
        out.push_str(if i + 1 < examples.len() { ",\n" } else { "\n" });
    }
    out.push_str("]\n");
    out
}

fn set_id(id: &str) -> Option<&str> {
    id.rsplit_once('_').map(|(set, _)| set)
}

/// Identifies the correct candidate: explicit `answer_index`, then an
/// `answer` id, then the unique candidate sharing the question's outfit id,
/// then the first candidate.
fn answer_index(
    obj: &Map<String, Value>,
    question: &[ItemId],
    answers: &[ItemId],
) -> std::result::Result<usize, String> {
    if let Some(v) = obj.get("answer_index") {
        return v
            .as_u64()
            .map(|i| i as usize)
            .ok_or_else(|| format!("answer_index must be a non-negative integer, got {v}"));
    }
    if let Some(v) = obj.get("answer") {
        let id = id_of(v).ok_or_else(|| format!("bad answer id {v}"))?;
        return answers
            .iter()
            .position(|a| *a == id)
            .ok_or_else(|| format!("answer `{id}` is not among the candidates"));
    }
    let sets: Vec<Option<&str>> = question.iter().map(|q| set_id(q)).collect();
    if let Some(Some(set)) = sets.first() {
        if sets.iter().all(|s| s == &Some(*set)) {
            let matching: Vec<usize> = answers
                .iter()
                .enumerate()
                .filter(|(_, a)| set_id(a) == Some(*set))
                .map(|(i, _)| i)
                .collect();
            if let [only] = matching[..] {
                return Ok(only);
            }
        }
    }
    Ok(0)
}

fn id_list(obj: &Map<String, Value>, key: &str) -> std::result::Result<Vec<ItemId>, String> {
    let arr = obj
        .get(key)
        .ok_or_else(|| format!("missing key `{key}`"))?
        .as_array()
        .ok_or_else(|| format!("`{key}` must be an array"))?;
    arr.iter()
        .map(|v| id_of(v).ok_or_else(|| format!("bad item id {v} in `{key}`")))
        .collect()
}

/// FITB entries: objects with `question`, `answers` and a 1-based
/// `blank_position`.
pub fn parse_fitb(text: &str, path: &Path) -> Result<Vec<FitbQuestion>> {
    let entries: Vec<Value> = serde_json::from_str(text).map_err(|e| Error::json(path, e))?;
    entries
        .iter()
        .enumerate()
        .map(|(i, entry)| {
            let n = i + 1;
            let err = |m: String| parse_err(path, n, m);
            let obj = entry
                .as_object()
                .ok_or_else(|| err("expected an object".into()))?;
            let question = id_list(obj, "question").map_err(err)?;
            let answers = id_list(obj, "answers").map_err(err)?;
            let blank = obj
                .get("blank_position")
                .ok_or_else(|| err("missing key `blank_position`".into()))?;
            let blank = blank.as_u64().ok_or_else(|| {
                err(format!(
                    "blank_position must be a positive integer, got {blank}"
                ))
            })? as usize;
            if blank == 0 || blank > question.len() + 1 {
                return Err(fashionrec_core::Error::Validation(format!(
                    "{}: entry {n}: blank_position {blank} out of range 1..={}",
                    path.display(),
                    question.len() + 1
                ))
                .into());
            }
            let idx = answer_index(obj, &question, &answers).map_err(err)?;
            FitbQuestion::new(question, blank - 1, answers, idx).map_err(|e| err(e.to_string()))
        })
        .collect()
}

#[derive(Serialize)]
struct FitbRecord<'a> {
    question: &'a [ItemId],
    answers: &'a [ItemId],
    blank_position: usize,
    answer_index: usize,
}

pub fn write_fitb(questions: &[FitbQuestion]) -> String {
    let mut out = String::from("[\n");
    for (i, q) in questions.iter().enumerate() {
        let rec = FitbRecord {
            question: &q.question_items,
            answers: &q.candidates,
            blank_position: q.blank_position + 1,
            answer_index: q.answer_index,
        };
        out.push_str(&serde_json::to_string(&rec).expect("FITB record serializes"));
        out.push_str(if i + 1 < questions.len() { ",\n" } else { "\n" });
    }
    out.push_str("]\n");
    out
}

fn str_field<'a>(obj: &'a Map<String, Value>, keys: &[&str]) -> Option<&'a str> {
    keys.iter()
        .find_map(|k| obj.get(*k).and_then(Value::as_str))
}

fn item_from(id: String, obj: &Map<String, Value>) -> fashionrec_core::Result<Item> {
    let mut item = Item::new(
        id,
        str_field(obj, &["category", "semantic_category"]).unwrap_or_default(),
        str_field(obj, &["description", "title"]).unwrap_or_default(),
    )?;
    item.image_ref = str_field(obj, &["image_ref", "image"]).map(String::from);
    Ok(item)
}

/// Item metadata: an array of objects carrying `item_id`, or an object keyed
/// by item id. `semantic_category` and `title` stand in for missing
/// `category` and `description`; other keys are ignored.
pub fn parse_items(text: &str, path: &Path) -> Result<Vec<Item>> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::json(path, e))?;
    let wrap = |n: usize, e: fashionrec_core::Error| parse_err(path, n, e.to_string());
    match value {
        Value::Array(entries) => entries
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let obj = v
                    .as_object()
                    .ok_or_else(|| parse_err(path, i + 1, "expected an object"))?;
                let id = obj
                    .get("item_id")
                    .or_else(|| obj.get("id"))
                    .and_then(id_of)
                    .ok_or_else(|| parse_err(path, i + 1, "missing key `item_id`"))?;
                item_from(id, obj).map_err(|e| wrap(i + 1, e))
            })
            .collect(),
        Value::Object(map) => map
            .iter()
            .enumerate()
            .map(|(i, (id, v))| {
                let obj = v
                    .as_object()
                    .ok_or_else(|| parse_err(path, i + 1, "expected an object"))?;
                item_from(id.clone(), obj).map_err(|e| wrap(i + 1, e))
            })
            .collect(),
        _ => Err(Error::Format(format!(
            "{}: item metadata must be a JSON array or object",
            path.display()
        ))),
    }
}

pub fn write_items<'a>(items: impl IntoIterator<Item = &'a Item>) -> String {
    let mut out = String::from("[\n");
    let lines: Vec<String> = items
        .into_iter()
        .map(|it| serde_json::to_string(it).expect("item serializes"))
        .collect();
    out.push_str(&lines.join(",\n"));
    out.push_str("\n]\n");
    out
}

/// `setid_index` -> global item id, from `[{set_id, items: [{item_id, index}]}]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutfitListing {
    map: HashMap<String, ItemId>,
}

impl OutfitListing {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let entries: Vec<Value> = serde_json::from_str(text).map_err(|e| Error::json(path, e))?;
        let mut map = HashMap::new();
        for (i, entry) in entries.iter().enumerate() {
            let err = |m: &str| parse_err(path, i + 1, m);
            let set = entry
                .get("set_id")
                .and_then(id_of)
                .ok_or_else(|| err("missing key `set_id`"))?;
            let items = entry
                .get("items")
                .and_then(Value::as_array)
                .ok_or_else(|| err("missing key `items`"))?;
            for it in items {
                let id = it
                    .get("item_id")
                    .and_then(id_of)
                    .ok_or_else(|| err("outfit item without `item_id`"))?;
                let index = it
                    .get("index")
                    .and_then(Value::as_u64)
                    .ok_or_else(|| err("outfit item without `index`"))?;
                map.insert(format!("{set}_{index}"), id);
            }
        }
        Ok(OutfitListing { map })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn resolve(&self, id: &mut ItemId) {
        if let Some(global) = self.map.get(id.as_str()) {
            id.clone_from(global);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub truth: Option<GroundTruth>,
    /// Files that were read, in load order.
    pub files: Vec<PathBuf>,
}

fn first_existing(dir: &Path, names: &[String]) -> Option<PathBuf> {
    names.iter().map(|n| dir.join(n)).find(|p| p.is_file())
}

/// Loads a corpus directory. Splits without files are left empty.
pub fn load_corpus_dir(dir: &Path) -> Result<LoadedCorpus> {
    let mut files = Vec::new();
    let meta_names: Vec<String> = METADATA_FILES.iter().map(|s| s.to_string()).collect();
    let meta = first_existing(dir, &meta_names).ok_or_else(|| {
        Error::Format(format!(
            "{}: no item metadata file (expected one of {})",
            dir.display(),
            METADATA_FILES.join(", ")
        ))
    })?;
    let mut corpus = Corpus::from_items(parse_items(&read_text(&meta)?, &meta)?)?;
    files.push(meta);

    for split in Split::ALL {
        let name = split.name();
        let listing = match first_existing(
            dir,
            &[format!("{name}.json"), format!("outfits_{name}.json")],
        ) {
            Some(p) => {
                let l = OutfitListing::parse(&read_text(&p)?, &p)?;
                files.push(p);
                Some(l)
            }
            None => None,
        };
        let compat = first_existing(
            dir,
            &[
                compatibility_file(split),
                format!("compatibility_{name}.txt"),
            ],
        );
        if let Some(p) = compat {
            let mut examples = parse_compatibility(&read_text(&p)?, &p)?;
            if let Some(l) = &listing {
                examples
                    .iter_mut()
                    .flat_map(|e| e.items.iter_mut())
                    .for_each(|id| l.resolve(id));
            }
            *corpus.cp.get_mut(split) = examples;
            files.push(p);
        }
        if let Some(p) = first_existing(dir, &[fitb_file(split)]) {
            let mut questions = parse_fitb(&read_text(&p)?, &p)?;
            if let Some(l) = &listing {
                for q in &mut questions {
                    q.question_items.iter_mut().for_each(|id| l.resolve(id));
                    q.candidates.iter_mut().for_each(|id| l.resolve(id));
                }
            }
            *corpus.fitb.get_mut(split) = questions;
            files.push(p);
        }
    }

    let gt = dir.join(GROUND_TRUTH_FILE);
    let truth = if gt.is_file() {
        let t = serde_json::from_str(&read_text(&gt)?).map_err(|e| Error::json(&gt, e))?;
        files.push(gt);
        Some(t)
    } else {
        None
    };
    Ok(LoadedCorpus {
        corpus,
        truth,
        files,
    })
}

/// Writes the canonical file set; returns the paths written.
pub fn write_corpus_dir(
    dir: &Path,
    corpus: &Corpus,
    truth: Option<&GroundTruth>,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> Result<()> {
        let p = dir.join(name);
        write_atomic(&p, text.as_bytes())?;
        written.push(p);
        Ok(())
    };
    put(ITEMS_FILE.into(), write_items(corpus.items.values()))?;
    for split in Split::ALL {
        put(
            compatibility_file(split),
            write_compatibility(corpus.cp.get(split)),
        )?;
        put(fitb_file(split), write_fitb(corpus.fitb.get(split)))?;
    }
    if let Some(t) = truth {
        let text = serde_json::to_string(t).map_err(|e| Error::Internal(e.to_string()))?;
        put(GROUND_TRUTH_FILE.into(), text)?;
    }
    Ok(written)
}
