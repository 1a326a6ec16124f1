use std::cmp::Ordering;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ProviderError, Result};
use crate::units::CodeUnit;

use super::{check_batch, dot, provider_input, EmbeddingProvider, EmbeddingProviderSpec, EmbeddingVector};

const MAGIC: &[u8; 8] = b"ILVIDX01";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SnapshotBinding {
    pub repo_id: String,
    pub commit_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub unit_id: String,
    pub score: f64,
}

/// Candidates ordered by non-increasing score.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn new(query_id: impl Into<String>, entries: Vec<RankedEntry>) -> Self {
        Self {
            query_id: query_id.into(),
            entries,
        }
    }

    pub fn with_query_id(mut self, query_id: impl Into<String>) -> Self {
        self.query_id = query_id.into();
        self
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.unit_id.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorts by score descending, ties by id ascending.
    pub fn sort(&mut self) {
        self.entries.sort_by(compare_entries);
    }
}

pub(crate) fn compare_entries(a: &RankedEntry, b: &RankedEntry) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.unit_id.cmp(&b.unit_id))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexHeader {
    spec: EmbeddingProviderSpec,
    binding: SnapshotBinding,
    count: usize,
    dimension: usize,
}

/// Exhaustive cosine index over one snapshot's units. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    spec: EmbeddingProviderSpec,
    binding: SnapshotBinding,
    ids: Vec<String>,
    data: Vec<f32>,
}

impl VectorIndex {
    pub fn from_entries(
        spec: EmbeddingProviderSpec,
        binding: SnapshotBinding,
        entries: Vec<(String, EmbeddingVector)>,
    ) -> Result<Self> {
        let dim = spec.dimension;
        let mut ids = Vec::with_capacity(entries.len());
        let mut data = Vec::with_capacity(entries.len() * dim);
        let mut seen = std::collections::HashSet::new();
        for (id, v) in entries {
            if v.dimension() != dim {
                return Err(Error::Config(format!(
                    "vector for {id} has dimension {}, index expects {dim}",
                    v.dimension()
                )));
            }
            if !seen.insert(id.clone()) {
                return Err(Error::Integrity(format!("duplicate unit id {id} in index")));
            }
            ids.push(id);
            data.extend_from_slice(v.values());
        }
        Ok(Self {
            spec,
            binding,
            ids,
            data,
        })
    }

    pub fn spec(&self) -> &EmbeddingProviderSpec {
        &self.spec
    }

    pub fn binding(&self) -> &SnapshotBinding {
        &self.binding
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.spec.dimension
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        let d = self.dimension();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn position(&self, unit_id: &str) -> Option<usize> {
        self.ids.iter().position(|id| id == unit_id)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = IndexHeader {
            spec: self.spec.clone(),
            binding: self.binding.clone(),
            count: self.ids.len(),
            dimension: self.dimension(),
        };
        let header = serde_json::to_vec(&header).expect("index header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for id in &self.ids {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::IndexFormat("bad magic".into()));
        }
        let header_len = read_u32(&mut r)? as usize;
        if header_len > r.len() {
            return Err(Error::IndexFormat("truncated header".into()));
        }
        let header: IndexHeader = serde_json::from_slice(&r[..header_len])
            .map_err(|e| Error::IndexFormat(format!("bad header: {e}")))?;
        r = &r[header_len..];
        if header.dimension != header.spec.dimension {
            return Err(Error::IndexFormat("header dimension disagrees with spec".into()));
        }
        let floats = header
            .count
            .checked_mul(header.dimension)
            .filter(|n| n.saturating_mul(4) <= r.len())
            .ok_or_else(|| Error::IndexFormat("truncated vector block".into()))?;
        let data = r[..floats * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        r = &r[floats * 4..];
        let mut ids = Vec::with_capacity(header.count);
        for _ in 0..header.count {
            let len = read_u32(&mut r)? as usize;
            if len > r.len() {
                return Err(Error::IndexFormat("truncated id table".into()));
            }
            let id = std::str::from_utf8(&r[..len])
                .map_err(|_| Error::IndexFormat("unit id is not UTF-8".into()))?;
            ids.push(id.to_string());
            r = &r[len..];
        }
        if !r.is_empty() {
            return Err(Error::IndexFormat("trailing bytes after id table".into()));
        }
        Ok(Self {
            spec: header.spec,
            binding: header.binding,
            ids,
            data,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::IndexFormat("unexpected end of file".into()))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Embeds `document_prefix + source_text` for every unit. If any batch
/// fails, no index is returned and the error lists the affected unit ids.
pub fn build_index(
    units: &[CodeUnit],
    spec: &EmbeddingProviderSpec,
    provider: &dyn EmbeddingProvider,
    binding: SnapshotBinding,
) -> Result<VectorIndex> {
    use rayon::prelude::*;

    spec.validate()?;
    let inputs: Vec<String> = units
        .iter()
        .map(|u| provider_input(&u.source_text, &spec.document_prefix, spec, provider))
        .collect();
    let batch = spec.max_batch_size;
    let results: Vec<(usize, std::result::Result<Vec<EmbeddingVector>, Error>)> = inputs
        .par_chunks(batch)
        .enumerate()
        .map(|(bi, chunk)| {
            let res = provider
                .embed_batch(chunk)
                .map_err(Error::from)
                .and_then(|raw| check_batch(chunk, raw, spec));
            (bi, res)
        })
        .collect();

    let mut vectors = Vec::with_capacity(units.len());
    let mut failed = Vec::new();
    let mut first_error: Option<ProviderError> = None;
    for (bi, res) in results {
        match res {
            Ok(vs) => vectors.extend(vs),
            Err(Error::Provider(pe)) => {
                let lo = bi * batch;
                let hi = (lo + batch).min(units.len());
                failed.extend(units[lo..hi].iter().map(|u| u.unit_id.clone()));
                first_error.get_or_insert(pe);
            }
            Err(other) => return Err(other),
        }
    }
    if let Some(first_error) = first_error {
        return Err(Error::PartialIndexFailure {
            failed_unit_ids: failed,
            first_error,
        });
    }
    VectorIndex::from_entries(
        spec.clone(),
        binding,
        units.iter().map(|u| u.unit_id.clone()).zip(vectors).collect(),
    )
}

/// Top `top_k` entries by cosine similarity (dot product of unit vectors).
pub fn retrieve(index: &VectorIndex, query: &EmbeddingVector, top_k: usize) -> Result<RankedList> {
    if query.dimension() != index.dimension() {
        return Err(Error::Config(format!(
            "query dimension {} does not match index dimension {}",
            query.dimension(),
            index.dimension()
        )));
    }
    if top_k == 0 {
        return Err(Error::InvalidInput("top_k must be >= 1".into()));
    }
    let mut entries: Vec<RankedEntry> = (0..index.len())
        .map(|i| RankedEntry {
            unit_id: index.ids[i].clone(),
            score: dot(query.values(), index.vector(i)),
        })
        .collect();
    let k = top_k.min(entries.len());
    if k < entries.len() && k > 0 {
        entries.select_nth_unstable_by(k - 1, compare_entries);
        entries.truncate(k);
    }
    entries.sort_by(compare_entries);
    Ok(RankedList::new(String::new(), entries))
}
