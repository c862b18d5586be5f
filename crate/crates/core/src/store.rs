//! Precomputed embeddings keyed by id, with a compact binary encoding.

use std::collections::{BTreeMap, HashMap};

use crate::codec::Reader;
use crate::encoder::TextEncoder;
use crate::{Error, Result};

const STORE_MAGIC: &[u8; 4] = b"MIRE";
const STORE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    matrix: Vec<f32>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        Self {
            ids: Vec::new(),
            index: HashMap::new(),
            dim,
            matrix: Vec::new(),
        }
    }

    pub fn push(&mut self, id: impl Into<String>, row: &[f64]) -> Result<()> {
        let id = id.into();
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: row.len(),
            });
        }
        if id.len() > u16::MAX as usize {
            return Err(Error::InvalidConfig(format!("id longer than {} bytes", u16::MAX)));
        }
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateId {
                kind: "embedding",
                id,
                line: self.ids.len() + 1,
            });
        }
        let row: Vec<f32> = row.iter().map(|&v| v as f32).collect();
        if !row.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite embedding for `{id}`")));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.matrix.extend_from_slice(&row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.row(i))
    }

    /// Row widened to f64.
    pub fn vector(&self, id: &str) -> Option<Vec<f64>> {
        self.get(id).map(|r| r.iter().map(|&v| v as f64).collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), self.row(i)))
    }

    /// Embeds `(id, text)` pairs in the given order.
    pub fn from_texts<'a>(
        encoder: &dyn TextEncoder,
        items: impl IntoIterator<Item = (&'a str, String)>,
    ) -> Result<Self> {
        let mut store = Self::new(encoder.dim());
        for (id, text) in items {
            let v = encoder.embed_text(&text).map_err(|e| Error::Embedding {
                owner: id.to_owned(),
                reason: e.to_string(),
            })?;
            store.push(id, &v)?;
        }
        Ok(store)
    }

    pub fn to_map(&self) -> BTreeMap<String, Vec<f64>> {
        self.ids
            .iter()
            .map(|id| (id.clone(), self.vector(id).unwrap()))
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.matrix.len() * 4 + self.ids.len() * 10);
        out.extend_from_slice(STORE_MAGIC);
        out.extend_from_slice(&STORE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        for (i, id) in self.ids.iter().enumerate() {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for v in self.row(i) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Decodes a store; never panics on malformed input.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(STORE_MAGIC)?;
        let version = r.u32("version")?;
        if version != STORE_VERSION {
            return Err(Error::Format(format!("unsupported store version {version}")));
        }
        let dim = r.u32("dim")? as usize;
        let count = r.u64("count")?;
        let row_bytes = (dim as u64).saturating_mul(4).saturating_add(2);
        if count.saturating_mul(row_bytes) > r.remaining() as u64 {
            return Err(Error::Format(format!("{count} rows exceed input")));
        }
        let mut store = Self::new(dim);
        for _ in 0..count {
            let len = r.u16("id length")? as usize;
            let id = r.utf8(len, "id")?;
            let row = r.f32s(dim, "row")?;
            store.push(id, &row).map_err(|e| Error::Format(e.to_string()))?;
        }
        r.finish("store")?;
        Ok(store)
    }
}
