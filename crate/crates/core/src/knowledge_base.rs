//! Didactic units indexed by representative netlists.
//!
//! Directory layout:
//!
//! ```text
//! <kb>/units/<id>/unit.md        first `# ` heading is the title
//! <kb>/units/<id>/index-*.net    one or more index netlists
//! <kb>/kb.index                  embeddings, written by `write_index`
//! ```
//!
//! A query circuit is embedded with the same model as the index; each unit
//! scores the best cosine similarity among its index netlists.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine_similarity, embed_circuit, EmbeddingError, EmbeddingVector, EMBEDDING_DIM};
use crate::features_meta::metadata_vector;
use crate::gnn::{model_hash, GnnModel};
use crate::netlist::{parse_netlist, Netlist, NetlistError};

pub const INDEX_FILE: &str = "kb.index";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KbError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("unit id `{0}` appears more than once")]
    DuplicateId(String),
    #[error("unit id `{0}` must be lowercase letters, digits, `-` or `_`")]
    BadId(String),
    #[error("unit `{0}` has no index-*.net file")]
    MissingIndexNetlist(String),
    #[error("unit `{0}` has no unit.md")]
    MissingBody(String),
    #[error("{file}: {source}")]
    Netlist { file: String, source: NetlistError },
    #[error("{file}: index netlist needs at least one source")]
    IndexWithoutSource { file: String },
    #[error("knowledge base has no units")]
    EmptyKb,
    #[error("index was built with model {found}, current model is {expected}; rebuild the index")]
    StaleIndex { expected: String, found: String },
    #[error("kb.index line {line}: {message}")]
    BadIndex { line: usize, message: String },
    #[error("index has not been built")]
    NotIndexed,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeUnit {
    pub id: String,
    pub title: String,
    pub body: String,
    /// `(file name, netlist)` in file-name order.
    pub index_netlists: Vec<(String, Netlist)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexEntry {
    pub unit_id: String,
    pub netlist_file: String,
    pub embedding: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct KnowledgeBase {
    /// Sorted by id.
    pub units: Vec<KnowledgeUnit>,
    pub index: Vec<IndexEntry>,
    pub model_hash: Option<String>,
}

fn io_err(path: &Path, e: std::io::Error) -> KbError {
    KbError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-' || b == b'_')
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, KbError> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| io_err(dir, e)))
        .collect::<Result<_, _>>()?;
    out.sort();
    Ok(out)
}

pub fn load_unit(dir: &Path) -> Result<KnowledgeUnit, KbError> {
    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    if !valid_id(&id) {
        return Err(KbError::BadId(id));
    }
    let body_path = dir.join("unit.md");
    if !body_path.is_file() {
        return Err(KbError::MissingBody(id));
    }
    let body = fs::read_to_string(&body_path).map_err(|e| io_err(&body_path, e))?;
    let title = body
        .lines()
        .find_map(|l| l.strip_prefix("# "))
        .map(|t| t.trim().to_string())
        .unwrap_or_else(|| id.clone());
    let mut index_netlists = Vec::new();
    for path in sorted_entries(dir)? {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if !(name.starts_with("index-") && name.ends_with(".net")) {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let file = format!("{id}/{name}");
        let netlist = parse_netlist(&text).map_err(|source| KbError::Netlist {
            file: file.clone(),
            source,
        })?;
        if metadata_vector(&netlist).is_err() {
            return Err(KbError::IndexWithoutSource { file });
        }
        index_netlists.push((name, netlist));
    }
    if index_netlists.is_empty() {
        return Err(KbError::MissingIndexNetlist(id));
    }
    Ok(KnowledgeUnit {
        id,
        title,
        body,
        index_netlists,
    })
}

/// Loads every unit under `<dir>/units`. A directory without `units/` is an
/// empty knowledge base.
pub fn load_kb(dir: &Path) -> Result<KnowledgeBase, KbError> {
    let units_dir = dir.join("units");
    if !units_dir.is_dir() {
        return Ok(KnowledgeBase::default());
    }
    let mut units = Vec::new();
    for path in sorted_entries(&units_dir)? {
        if path.is_dir() {
            units.push(load_unit(&path)?);
        }
    }
    KnowledgeBase::from_units(units)
}

impl KnowledgeBase {
    pub fn from_units(mut units: Vec<KnowledgeUnit>) -> Result<Self, KbError> {
        units.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = units.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(KbError::DuplicateId(w[0].id.clone()));
        }
        Ok(KnowledgeBase {
            units,
            index: Vec::new(),
            model_hash: None,
        })
    }

    pub fn unit(&self, id: &str) -> Option<&KnowledgeUnit> {
        self.units
            .binary_search_by(|u| u.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.units[i])
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

/// Embeds every index netlist; the result records the model hash.
pub fn build_index(kb: &KnowledgeBase, model: &GnnModel) -> Result<KnowledgeBase, KbError> {
    let mut index = Vec::new();
    for unit in &kb.units {
        for (file, net) in &unit.index_netlists {
            let source = format!("{}/{}", unit.id, file);
            index.push(IndexEntry {
                unit_id: unit.id.clone(),
                netlist_file: file.clone(),
                embedding: embed_circuit(net, model, &source)?,
            });
        }
    }
    Ok(KnowledgeBase {
        units: kb.units.clone(),
        index,
        model_hash: Some(model_hash(model)),
    })
}

/// TSV rendering of the index: a `# model-hash` line, a column header, one
/// row per index netlist. Numbers use the shortest text that parses back to
/// the same value.
pub fn index_to_tsv(kb: &KnowledgeBase) -> Result<String, KbError> {
    let hash = kb.model_hash.as_deref().ok_or(KbError::NotIndexed)?;
    let mut out = format!("# model-hash\t{hash}\nunit\tnetlist");
    for i in 0..EMBEDDING_DIM {
        let _ = write!(out, "\te{i}");
    }
    out.push('\n');
    for e in &kb.index {
        let _ = write!(out, "{}\t{}", e.unit_id, e.netlist_file);
        for v in &e.embedding.values {
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_index(dir: &Path, kb: &KnowledgeBase) -> Result<(), KbError> {
    let path = dir.join(INDEX_FILE);
    fs::write(&path, index_to_tsv(kb)?).map_err(|e| io_err(&path, e))
}

/// Attaches a persisted index to `kb`, refusing it when it was built by a
/// different model or does not cover every index netlist exactly once.
pub fn attach_index(kb: &KnowledgeBase, tsv: &str, model: &GnnModel) -> Result<KnowledgeBase, KbError> {
    let bad = |line: usize, message: &str| KbError::BadIndex {
        line,
        message: message.to_string(),
    };
    let mut lines = tsv.lines();
    let found = lines
        .next()
        .and_then(|l| l.strip_prefix("# model-hash\t"))
        .ok_or_else(|| bad(1, "missing `# model-hash` header"))?
        .trim()
        .to_string();
    let expected = model_hash(model);
    if found != expected {
        return Err(KbError::StaleIndex { expected, found });
    }
    lines.next().ok_or_else(|| bad(2, "missing column header"))?;
    let mut index = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 3;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 + EMBEDDING_DIM {
            return Err(bad(line_no, &format!("expected {} fields", 2 + EMBEDDING_DIM)));
        }
        let values: Vec<f64> = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(line_no, &e.to_string()))?;
        index.push(IndexEntry {
            unit_id: fields[0].to_string(),
            netlist_file: fields[1].to_string(),
            embedding: EmbeddingVector {
                values,
                source: format!("{}/{}", fields[0], fields[1]),
            },
        });
    }
    let mut have: Vec<(&str, &str)> = index
        .iter()
        .map(|e| (e.unit_id.as_str(), e.netlist_file.as_str()))
        .collect();
    have.sort_unstable();
    let mut want: Vec<(&str, &str)> = kb
        .units
        .iter()
        .flat_map(|u| u.index_netlists.iter().map(|(f, _)| (u.id.as_str(), f.as_str())))
        .collect();
    want.sort_unstable();
    if have != want {
        return Err(bad(0, "index entries do not match the unit netlists; rebuild the index"));
    }
    Ok(KnowledgeBase {
        units: kb.units.clone(),
        index,
        model_hash: Some(found),
    })
}

/// Loads `kb.index` next to the units when it exists and is current,
/// otherwise builds the index in memory.
pub fn load_or_build_index(dir: &Path, kb: &KnowledgeBase, model: &GnnModel) -> Result<KnowledgeBase, KbError> {
    let path = dir.join(INDEX_FILE);
    match fs::read_to_string(&path) {
        Ok(text) => attach_index(kb, &text, model),
        Err(_) => build_index(kb, model),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievedUnit {
    pub unit_id: String,
    pub title: String,
    pub score: f64,
    /// Index netlist that produced the score.
    pub matched_netlist: String,
}

fn rank(a: &RetrievedUnit, b: &RetrievedUnit) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.unit_id.cmp(&b.unit_id))
}

/// Scores every unit by its best-matching index netlist and returns the
/// top `k`, best first, ties broken by unit id.
pub fn retrieve_units(
    kb: &KnowledgeBase,
    query: &Netlist,
    model: &GnnModel,
    k: usize,
) -> Result<Vec<RetrievedUnit>, KbError> {
    if kb.units.is_empty() {
        return Err(KbError::EmptyKb);
    }
    let hash = kb.model_hash.as_deref().ok_or(KbError::NotIndexed)?;
    let expected = model_hash(model);
    if hash != expected {
        return Err(KbError::StaleIndex {
            expected,
            found: hash.to_string(),
        });
    }
    let q = embed_circuit(query, model, "query")?;
    retrieve_by_embedding(kb, &q, k)
}

pub fn retrieve_by_embedding(
    kb: &KnowledgeBase,
    query: &EmbeddingVector,
    k: usize,
) -> Result<Vec<RetrievedUnit>, KbError> {
    if kb.units.is_empty() {
        return Err(KbError::EmptyKb);
    }
    let mut best: Vec<Option<(f64, &str)>> = vec![None; kb.units.len()];
    for e in &kb.index {
        let Some(slot) = kb.units.iter().position(|u| u.id == e.unit_id) else {
            continue;
        };
        let s = cosine_similarity(query, &e.embedding)?;
        if best[slot].is_none_or(|(b, _)| s > b) {
            best[slot] = Some((s, &e.netlist_file));
        }
    }
    let mut out: Vec<RetrievedUnit> = kb
        .units
        .iter()
        .zip(best)
        .filter_map(|(u, b)| {
            b.map(|(score, file)| RetrievedUnit {
                unit_id: u.id.clone(),
                title: u.title.clone(),
                score,
                matched_netlist: file.to_string(),
            })
        })
        .collect();
    out.sort_by(rank);
    out.truncate(k.max(1));
    Ok(out)
}
