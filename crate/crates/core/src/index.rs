//! Lexical (BM25) and exact vector indexes over a collection's chunks.
//!
//! BM25 scoring:
//!
//! ```text
//! score(c, q) = Σ_{t ∈ q} idf(t) · tf(t,c)·(k1 + 1) / (tf(t,c) + k1·(1 − b + b·|c|/avgdl))
//! idf(t)      = ln((N − df(t) + 0.5) / (df(t) + 0.5) + 1)
//! ```
//!
//! with k1 = 1.2 and b = 0.75. Query terms are deduplicated. Every ranking
//! in this module breaks score ties by ascending chunk id.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chunking::{chunk_fixed, normalized_terms, Chunk, ChunkingParams};
use crate::corpus::{write_file, Collection};
use crate::embedding::{cosine_slices, Embedder, EmbeddingVector};
use crate::error::{Error, Result};

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub score: f64,
    /// 1-based position in the result list.
    pub rank: usize,
}

/// Sort `(chunk_id, doc_id, score)` triples by score descending then chunk id
/// ascending, keep `k`, and assign ranks.
pub(crate) fn rank_top_k(mut hits: Vec<(String, String, f64)>, k: usize) -> Vec<ScoredChunk> {
    hits.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    hits.truncate(k);
    hits.into_iter()
        .enumerate()
        .map(|(i, (chunk_id, doc_id, score))| ScoredChunk { chunk_id, doc_id, score, rank: i + 1 })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub chunk_id: String,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    chunk_lengths: BTreeMap<String, usize>,
    chunk_docs: BTreeMap<String, String>,
    avg_chunk_length: f64,
}

impl InvertedIndex {
    pub fn build<'a>(chunks: impl IntoIterator<Item = &'a Chunk>) -> Self {
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut chunk_lengths = BTreeMap::new();
        let mut chunk_docs = BTreeMap::new();
        for chunk in chunks {
            let terms = normalized_terms(&chunk.text);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for term in &terms {
                *tf.entry(term.clone()).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push(Posting {
                    chunk_id: chunk.chunk_id.clone(),
                    tf: count,
                });
            }
            chunk_lengths.insert(chunk.chunk_id.clone(), terms.len());
            chunk_docs.insert(chunk.chunk_id.clone(), chunk.doc_id.clone());
        }
        for list in postings.values_mut() {
            list.sort_by(|a, b| a.chunk_id.cmp(&b.chunk_id));
        }
        Self::from_parts(postings, chunk_lengths, chunk_docs)
    }

    fn from_parts(
        postings: BTreeMap<String, Vec<Posting>>,
        chunk_lengths: BTreeMap<String, usize>,
        chunk_docs: BTreeMap<String, String>,
    ) -> Self {
        let avg_chunk_length = if chunk_lengths.is_empty() {
            0.0
        } else {
            chunk_lengths.values().sum::<usize>() as f64 / chunk_lengths.len() as f64
        };
        InvertedIndex { postings, chunk_lengths, chunk_docs, avg_chunk_length }
    }

    pub fn chunk_count(&self) -> usize {
        self.chunk_lengths.len()
    }

    pub fn avg_chunk_length(&self) -> f64 {
        self.avg_chunk_length
    }

    pub fn chunk_length(&self, chunk_id: &str) -> Option<usize> {
        self.chunk_lengths.get(chunk_id).copied()
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, &[Posting])> {
        self.postings.iter().map(|(t, p)| (t.as_str(), p.as_slice()))
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.chunk_count() as f64;
        let df = self.postings(term).len() as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn term_weight(&self, tf: u32, len: usize) -> f64 {
        let tf = f64::from(tf);
        let norm = if self.avg_chunk_length > 0.0 {
            len as f64 / self.avg_chunk_length
        } else {
            1.0
        };
        tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * (1.0 - BM25_B + BM25_B * norm))
    }

    /// BM25 top-k. Chunks with zero score are never returned.
    pub fn search(&self, query: &str, k: usize) -> Vec<ScoredChunk> {
        let terms: BTreeSet<String> = normalized_terms(query).into_iter().collect();
        let mut scores: HashMap<&str, f64> = HashMap::new();
        for term in &terms {
            let Some(list) = self.postings.get(term) else { continue };
            let idf = self.idf(term);
            for posting in list {
                let len = self.chunk_lengths[&posting.chunk_id];
                *scores.entry(posting.chunk_id.as_str()).or_default() += idf * self.term_weight(posting.tf, len);
            }
        }
        let hits = scores
            .into_iter()
            .filter(|(_, s)| *s > 0.0)
            .map(|(id, s)| (id.to_string(), self.chunk_docs[id].clone(), s))
            .collect();
        rank_top_k(hits, k)
    }
}

/// Exact cosine search over f32 rows stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    ids: Vec<String>,
    doc_ids: Vec<String>,
    rows: Vec<f32>,
}

impl VectorIndex {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("vector index dimension must be positive"));
        }
        Ok(VectorIndex { dim, ids: Vec::new(), doc_ids: Vec::new(), rows: Vec::new() })
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

    pub fn insert(&mut self, chunk_id: &str, doc_id: &str, vector: &EmbeddingVector) -> Result<()> {
        if vector.dim() != self.dim {
            return Err(Error::invalid(format!(
                "vector for {chunk_id} has dimension {}, index expects {}",
                vector.dim(),
                self.dim
            )));
        }
        self.ids.push(chunk_id.to_string());
        self.doc_ids.push(doc_id.to_string());
        self.rows.extend(vector.values().iter().map(|&v| v as f32));
        Ok(())
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// Stored vector widened back to f64.
    pub fn vector(&self, i: usize) -> EmbeddingVector {
        EmbeddingVector::new(self.row(i).iter().map(|&v| f64::from(v)).collect()).expect("stored rows are finite")
    }

    pub fn position(&self, chunk_id: &str) -> Option<usize> {
        self.ids.iter().position(|id| id == chunk_id)
    }

    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<ScoredChunk>> {
        self.search_rows(query, k, 0..self.len())
    }

    /// Exact top-k over a subset of rows.
    pub fn search_rows(
        &self,
        query: &EmbeddingVector,
        k: usize,
        rows: impl IntoIterator<Item = usize>,
    ) -> Result<Vec<ScoredChunk>> {
        if query.dim() != self.dim {
            return Err(Error::invalid(format!(
                "query has dimension {}, index expects {}",
                query.dim(),
                self.dim
            )));
        }
        if query.is_zero() {
            return Err(Error::invalid("query vector is all zeros"));
        }
        let mut buf = vec![0.0f64; self.dim];
        let mut hits = Vec::new();
        for i in rows {
            for (b, &v) in buf.iter_mut().zip(self.row(i)) {
                *b = f64::from(v);
            }
            // zero rows cannot be compared; treat them as unrelated
            let score = cosine_slices(query.values(), &buf).unwrap_or(0.0);
            hits.push((self.ids[i].clone(), self.doc_ids[i].clone(), score));
        }
        Ok(rank_top_k(hits, k))
    }
}

/// Everything retrieval needs: the chunk table, the global lexical and
/// vector indexes, and per-document lexical indexes for SHy.
#[derive(Debug, Clone, PartialEq)]
pub struct Indexes {
    chunks: Vec<Chunk>,
    positions: HashMap<String, usize>,
    inverted: InvertedIndex,
    vectors: VectorIndex,
    doc_order: Vec<String>,
    doc_rows: HashMap<String, Vec<usize>>,
    doc_lexical: HashMap<String, InvertedIndex>,
    meta: IndexMeta,
}

/// Build parameters recorded with a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub collection_id: String,
    pub chunking: ChunkingParams,
    pub embedder: String,
}

const EMBED_BATCH: usize = 32;

pub fn build_indexes(
    collection: &Collection,
    params: &ChunkingParams,
    embedder: &dyn Embedder,
    embedder_key: &str,
) -> Result<Indexes> {
    if collection.is_empty() {
        return Err(Error::invalid(format!("collection {} is empty", collection.name)));
    }
    params.validate()?;
    let mut chunks = Vec::new();
    for doc in collection.documents() {
        chunks.extend(chunk_fixed(doc, params)?);
    }
    let total = chunks.len();
    let mut vectors: Option<VectorIndex> = None;
    for (batch_no, batch) in chunks.chunks(EMBED_BATCH).enumerate() {
        let texts: Vec<&str> = batch.iter().map(|c| c.text.as_str()).collect();
        let embedded = embedder.embed_batch(&texts).map_err(|e| Error::IndexBuild {
            completed: batch_no * EMBED_BATCH,
            total,
            source: Box::new(e),
        })?;
        for (chunk, vec) in batch.iter().zip(&embedded) {
            let index = match vectors.as_mut() {
                Some(index) => index,
                None => vectors.insert(VectorIndex::new(vec.dim())?),
            };
            index.insert(&chunk.chunk_id, &chunk.doc_id, vec)?;
        }
    }
    let vectors = vectors.ok_or_else(|| Error::invalid("collection produced no chunks"))?;
    let meta = IndexMeta {
        collection_id: collection.collection_id.clone(),
        chunking: *params,
        embedder: embedder_key.to_string(),
    };
    Ok(Indexes::assemble(chunks, vectors, meta))
}

impl Indexes {
    fn assemble(chunks: Vec<Chunk>, vectors: VectorIndex, meta: IndexMeta) -> Self {
        let inverted = InvertedIndex::build(&chunks);
        Self::assemble_with(chunks, inverted, vectors, meta)
    }

    fn assemble_with(chunks: Vec<Chunk>, inverted: InvertedIndex, vectors: VectorIndex, meta: IndexMeta) -> Self {
        let positions = chunks.iter().enumerate().map(|(i, c)| (c.chunk_id.clone(), i)).collect();
        let mut doc_order: Vec<String> = Vec::new();
        let mut doc_rows: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, c) in chunks.iter().enumerate() {
            if doc_order.last() != Some(&c.doc_id) && !doc_rows.contains_key(&c.doc_id) {
                doc_order.push(c.doc_id.clone());
            }
            doc_rows.entry(c.doc_id.clone()).or_default().push(i);
        }
        let doc_lexical = doc_rows
            .iter()
            .map(|(doc, rows)| (doc.clone(), InvertedIndex::build(rows.iter().map(|&i| &chunks[i]))))
            .collect();
        Indexes { chunks, positions, inverted, vectors, doc_order, doc_rows, doc_lexical, meta }
    }

    pub fn meta(&self) -> &IndexMeta {
        &self.meta
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.positions.get(chunk_id).map(|&i| &self.chunks[i])
    }

    pub fn inverted(&self) -> &InvertedIndex {
        &self.inverted
    }

    pub fn vectors(&self) -> &VectorIndex {
        &self.vectors
    }

    /// Documents with at least one chunk, in collection order.
    pub fn documents(&self) -> &[String] {
        &self.doc_order
    }

    pub fn fulltext_search(&self, query: &str, k: usize) -> Vec<ScoredChunk> {
        self.inverted.search(query, k)
    }

    pub fn vector_search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<ScoredChunk>> {
        self.vectors.search(query, k)
    }

    /// BM25 with the document treated as its own collection.
    pub fn doc_fulltext_search(&self, doc_id: &str, query: &str, k: usize) -> Vec<ScoredChunk> {
        self.doc_lexical.get(doc_id).map(|idx| idx.search(query, k)).unwrap_or_default()
    }

    pub fn doc_vector_search(&self, doc_id: &str, query: &EmbeddingVector, k: usize) -> Result<Vec<ScoredChunk>> {
        let rows = self.doc_rows.get(doc_id).map(Vec::as_slice).unwrap_or(&[]);
        self.vectors.search_rows(query, k, rows.iter().copied())
    }

    /// Write `chunks.jsonl`, `postings.jsonl`, `vectors.bin` and `meta.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let mut chunks = String::new();
        for c in &self.chunks {
            chunks.push_str(&serde_json::to_string(c)?);
            chunks.push('\n');
        }
        write_file(&dir.join(CHUNKS_FILE), chunks.as_bytes())?;

        let mut postings = String::new();
        for (term, list) in &self.inverted.postings {
            let line = PostingsLine {
                term: term.clone(),
                postings: list.iter().map(|p| (p.chunk_id.clone(), p.tf)).collect(),
            };
            postings.push_str(&serde_json::to_string(&line)?);
            postings.push('\n');
        }
        write_file(&dir.join(POSTINGS_FILE), postings.as_bytes())?;

        let mut bin = serde_json::to_vec(&self.vectors.ids)?;
        bin.push(b'\n');
        bin.reserve(self.vectors.rows.len() * 4);
        for v in &self.vectors.rows {
            bin.extend_from_slice(&v.to_le_bytes());
        }
        write_file(&dir.join(VECTORS_FILE), &bin)?;

        let mut meta = serde_json::to_string_pretty(&self.meta)?;
        meta.push('\n');
        write_file(&dir.join(META_FILE), meta.as_bytes())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta_path = dir.join(META_FILE);
        let meta: IndexMeta = serde_json::from_str(&fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?)?;

        let chunks: Vec<Chunk> = read_jsonl(&dir.join(CHUNKS_FILE))?;
        let chunk_docs: BTreeMap<String, String> =
            chunks.iter().map(|c| (c.chunk_id.clone(), c.doc_id.clone())).collect();
        let chunk_lengths: BTreeMap<String, usize> = chunks
            .iter()
            .map(|c| (c.chunk_id.clone(), normalized_terms(&c.text).len()))
            .collect();

        let lines: Vec<PostingsLine> = read_jsonl(&dir.join(POSTINGS_FILE))?;
        let mut postings = BTreeMap::new();
        for (i, line) in lines.into_iter().enumerate() {
            if let Some((id, _)) = line.postings.iter().find(|(id, _)| !chunk_docs.contains_key(id)) {
                return Err(Error::Parse { line: i + 1, message: format!("posting references unknown chunk {id}") });
            }
            let list = line.postings.into_iter().map(|(chunk_id, tf)| Posting { chunk_id, tf }).collect();
            postings.insert(line.term, list);
        }
        let inverted = InvertedIndex::from_parts(postings, chunk_lengths, chunk_docs.clone());

        let vec_path = dir.join(VECTORS_FILE);
        let file = fs::File::open(&vec_path).map_err(|e| Error::io(&vec_path, e))?;
        let mut reader = BufReader::new(file);
        let mut header = String::new();
        reader.read_line(&mut header).map_err(|e| Error::io(&vec_path, e))?;
        let ids: Vec<String> = serde_json::from_str(header.trim_end()).map_err(|e| Error::Parse {
            line: 1,
            message: format!("vectors header: {e}"),
        })?;
        let mut raw = Vec::new();
        reader.read_to_end(&mut raw).map_err(|e| Error::io(&vec_path, e))?;
        if ids.is_empty() || raw.len() % (4 * ids.len()) != 0 {
            return Err(Error::invalid(format!(
                "{}: {} bytes of vectors do not divide into {} rows",
                vec_path.display(),
                raw.len(),
                ids.len()
            )));
        }
        let dim = raw.len() / 4 / ids.len();
        let mut vectors = VectorIndex::new(dim)?;
        vectors.rows = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        for id in &ids {
            let doc = chunk_docs
                .get(id)
                .ok_or_else(|| Error::invalid(format!("vector row for unknown chunk {id}")))?;
            vectors.doc_ids.push(doc.clone());
        }
        vectors.ids = ids;

        Ok(Self::assemble_with(chunks, inverted, vectors, meta))
    }
}

pub const CHUNKS_FILE: &str = "chunks.jsonl";
pub const POSTINGS_FILE: &str = "postings.jsonl";
pub const VECTORS_FILE: &str = "vectors.bin";
pub const META_FILE: &str = "meta.json";

#[derive(Serialize, Deserialize)]
struct PostingsLine {
    term: String,
    postings: Vec<(String, u32)>,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    body.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })
        })
        .collect()
}
