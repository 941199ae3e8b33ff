//! Author names → graph entities → 200-dimensional embeddings.
//!
//! Resolution is an exact lookup of the normalized name in a precomputed
//! entity map. A record's author embedding comes from the first author, in
//! record order, whose entity has a row in the embedding table.

use std::collections::BTreeMap;
use std::path::Path;

use crate::corpus::BookRecord;
use crate::error::{self, Error, Result};
use crate::metadata::HONORIFICS;

pub const EMBEDDING_DIM: usize = 200;

/// Trims, collapses whitespace and drops honorific tokens. Case and
/// diacritics are kept.
pub fn normalize_name(name: &str) -> String {
    name.split_whitespace()
        .filter(|tok| !HONORIFICS.contains(tok))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntityMap {
    by_name: BTreeMap<String, String>,
}

impl EntityMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, entity_id: &str) -> Result<()> {
        let key = normalize_name(name);
        if self.by_name.insert(key.clone(), entity_id.to_string()).is_some() {
            return Err(Error::DuplicateKey(key));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }

    /// Tab-separated `name`, `entity_id`; a leading `name\tentity_id`
    /// header line is accepted.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut map = EntityMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || (idx == 0 && line == "name\tentity_id") {
                continue;
            }
            let (name, id) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(source_name, idx + 1, "expected `name<TAB>entity_id`"))?;
            map.insert(name, id.trim())
                .map_err(|e| Error::parse(source_name, idx + 1, e.to_string()))?;
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&error::read_to_string(path)?, &path.display().to_string())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("name\tentity_id\n");
        for (name, id) in &self.by_name {
            out.push_str(&format!("{name}\t{id}\n"));
        }
        out
    }
}

pub fn resolve_author<'a>(name: &str, entities: &'a EntityMap) -> Option<&'a str> {
    entities.by_name.get(&normalize_name(name)).map(String::as_str)
}

/// Entity id → embedding row; every row has the table's dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    rows: BTreeMap<String, Vec<f64>>,
}

impl Default for EmbeddingTable {
    fn default() -> Self {
        EmbeddingTable::with_dim(EMBEDDING_DIM)
    }
}

impl EmbeddingTable {
    pub fn with_dim(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            rows: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, entity_id: &str) -> Option<&[f64]> {
        self.rows.get(entity_id).map(Vec::as_slice)
    }

    pub fn insert(&mut self, entity_id: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Dimension {
                entity: entity_id.to_string(),
                expected: self.dim,
                found: vector.len(),
            });
        }
        if self.rows.insert(entity_id.to_string(), vector).is_some() {
            return Err(Error::DuplicateKey(entity_id.to_string()));
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.rows.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        Self::parse_with_dim(text, source_name, EMBEDDING_DIM)
    }

    pub fn parse_with_dim(text: &str, source_name: &str, dim: usize) -> Result<Self> {
        let mut table = EmbeddingTable::with_dim(dim);
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let id = cols.next().unwrap_or_default().trim();
            let values = cols
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(source_name, idx + 1, format!("entity `{id}`: {e}")))?;
            match table.insert(id, values) {
                Err(e @ Error::Dimension { .. }) => return Err(e),
                Err(e) => return Err(Error::parse(source_name, idx + 1, e.to_string())),
                Ok(()) => {}
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&error::read_to_string(path)?, &path.display().to_string())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, row) in &self.rows {
            out.push_str(id);
            for v in row {
                out.push('\t');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuthorEmbedding {
    pub vector: Vec<f64>,
    pub available: bool,
    pub source_entity: Option<String>,
}

impl AuthorEmbedding {
    pub fn missing(dim: usize) -> Self {
        AuthorEmbedding {
            vector: vec![0.0; dim],
            available: false,
            source_entity: None,
        }
    }
}

pub fn author_embedding(
    record: &BookRecord,
    entities: &EntityMap,
    table: &EmbeddingTable,
) -> AuthorEmbedding {
    record
        .authors
        .iter()
        .filter_map(|a| resolve_author(a, entities))
        .find_map(|entity| {
            table.get(entity).map(|row| AuthorEmbedding {
                vector: row.to_vec(),
                available: true,
                source_entity: Some(entity.to_string()),
            })
        })
        .unwrap_or_else(|| AuthorEmbedding::missing(table.dim()))
}

pub fn has_author_embedding(
    record: &BookRecord,
    entities: &EntityMap,
    table: &EmbeddingTable,
) -> bool {
    record
        .authors
        .iter()
        .filter_map(|a| resolve_author(a, entities))
        .any(|e| table.get(e).is_some())
}

/// Fraction of records with a resolvable author embedding; 0 for no records.
pub fn embedding_coverage(
    records: &[BookRecord],
    entities: &EntityMap,
    table: &EmbeddingTable,
) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let hits = records
        .iter()
        .filter(|r| has_author_embedding(r, entities, table))
        .count();
    hits as f64 / records.len() as f64
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Top-`k` entities by cosine similarity to `entity_id`, excluding the query
/// itself. Ties are ordered by entity id.
pub fn nearest_neighbors(
    entity_id: &str,
    k: usize,
    table: &EmbeddingTable,
) -> Result<Vec<(String, f64)>> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let query = table
        .get(entity_id)
        .ok_or_else(|| Error::UnknownEntity(entity_id.to_string()))?;
    let mut scored: Vec<(String, f64)> = table
        .iter()
        .filter(|(id, _)| *id != entity_id)
        .map(|(id, row)| (id.to_string(), cosine_similarity(query, row)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}
