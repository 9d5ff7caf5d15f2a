//! `emb-v1` embedding interchange: a JSON header line followed by one JSON
//! object per item.
//!
//! ```text
//! {"format":"emb-v1","image_dim":64,"text_dim":64}
//! {"item_id":"a","image_embedding":[...],"text_embedding":[...]}
//! ```
//!
//! Extra header keys (encoder name, normalization flag) are kept verbatim.

use std::path::Path;

use fashionrec_core::embeddings::EmbeddingStore;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::io::{read_text, write_atomic};

pub const FORMAT: &str = "emb-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub image_dim: usize,
    pub text_dim: usize,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Header {
    pub fn new(image_dim: usize, text_dim: usize) -> Self {
        Header {
            format: FORMAT.into(),
            image_dim,
            text_dim,
            extra: Map::new(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Row<'a> {
    #[serde(borrow)]
    item_id: std::borrow::Cow<'a, str>,
    image_embedding: Vec<f32>,
    text_embedding: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub header: Header,
    pub store: EmbeddingStore,
}

fn format_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: line {line}: {msg}", path.display()))
}

pub fn parse(text: &str, path: &Path) -> Result<EmbeddingFile> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines
        .next()
        .ok_or_else(|| format_err(path, 1, "missing emb-v1 header"))?;
    let header: Header = serde_json::from_str(first).map_err(|e| format_err(path, 1, e))?;
    if header.format != FORMAT {
        return Err(format_err(
            path,
            1,
            format!("expected format \"{FORMAT}\", found \"{}\"", header.format),
        ));
    }
    let mut store = EmbeddingStore::new(header.image_dim, header.text_dim)
        .map_err(|e| format_err(path, 1, e))?;
    for (i, line) in lines {
        let n = i + 1;
        let row: Row = serde_json::from_str(line).map_err(|e| format_err(path, n, e))?;
        for (what, v, dim) in [
            ("image_embedding", &row.image_embedding, header.image_dim),
            ("text_embedding", &row.text_embedding, header.text_dim),
        ] {
            if v.len() != dim {
                return Err(format_err(
                    path,
                    n,
                    format!(
                        "{what} of `{}`: expected {dim} values, found {}",
                        row.item_id,
                        v.len()
                    ),
                ));
            }
        }
        if store.contains(&row.item_id) {
            return Err(format_err(
                path,
                n,
                format!("duplicate item_id `{}`", row.item_id),
            ));
        }
        store
            .insert(
                row.item_id.into_owned(),
                row.image_embedding,
                row.text_embedding,
            )
            .map_err(|e| format_err(path, n, e))?;
    }
    Ok(EmbeddingFile { header, store })
}

pub fn load(path: &Path) -> Result<EmbeddingFile> {
    parse(&read_text(path)?, path)
}

pub fn load_store(path: &Path) -> Result<EmbeddingStore> {
    load(path).map(|f| f.store)
}

/// Rows are written in item-id order.
pub fn render(store: &EmbeddingStore, header: &Header) -> Result<String> {
    if header.image_dim != store.image_dim() || header.text_dim != store.text_dim() {
        return Err(Error::Format(format!(
            "header declares {}/{} dims, store has {}/{}",
            header.image_dim,
            header.text_dim,
            store.image_dim(),
            store.text_dim()
        )));
    }
    let mut out = to_line(header)?;
    out.push('\n');
    for (id, e) in store.iter() {
        let row = Row {
            item_id: id.as_str().into(),
            image_embedding: e.image.clone(),
            text_embedding: e.text.clone(),
        };
        out.push_str(&to_line(&row)?);
        out.push('\n');
    }
    Ok(out)
}

fn to_line<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::Internal(e.to_string()))
}

pub fn save(store: &EmbeddingStore, path: &Path) -> Result<()> {
    save_with_header(
        store,
        &Header::new(store.image_dim(), store.text_dim()),
        path,
    )
}

pub fn save_with_header(store: &EmbeddingStore, header: &Header, path: &Path) -> Result<()> {
    write_atomic(path, render(store, header)?.as_bytes())
}
