//! Browser demo: chunk a document, compare retrieval pipelines over a small
//! corpus, and score an answer against a reference.
//!
//! Each operation has a plain Rust entry point returning JSON (used by the
//! native tests) and a `#[wasm_bindgen]` wrapper for the page.

use ragev_core::chunking::{chunk_fixed, ChunkingParams};
use ragev_core::corpus::{Collection, CollectionKind, Document};
use ragev_core::embedding::{HashedNgramEmbedder, DEFAULT_HASHED_DIM};
use ragev_core::index::build_indexes;
use ragev_core::metrics::{bert_score_texts, rouge_l, rouge_lsum, rouge_n, RougeScore};
use ragev_core::retrieval::{retrieve, PipelineKind, RetrievalParams};
use serde::{Deserialize, Serialize};
use serde_json::json;
use wasm_bindgen::prelude::*;

#[derive(Debug, Deserialize)]
struct DocInput {
    id: String,
    #[serde(default)]
    title: String,
    text: String,
}

#[derive(Serialize)]
struct ChunkView {
    id: String,
    start: usize,
    end: usize,
    text: String,
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

pub fn chunk_preview(text: &str, size: usize, overlap: usize) -> Result<String, String> {
    let params = ChunkingParams::new(size, overlap).map_err(err)?;
    let doc = Document::new("doc", "", text);
    if text.trim().is_empty() {
        return Err("text is empty".into());
    }
    let chunks: Vec<ChunkView> = chunk_fixed(&doc, &params)
        .map_err(err)?
        .into_iter()
        .map(|c| ChunkView { id: c.chunk_id, start: c.token_span.0, end: c.token_span.1, text: c.text })
        .collect();
    Ok(json!({ "stride": params.stride(), "chunks": chunks }).to_string())
}

pub fn compare_pipelines(
    docs_json: &str,
    query: &str,
    top_k: usize,
    per_doc_m: usize,
    chunk_size: usize,
) -> Result<String, String> {
    let docs: Vec<DocInput> = serde_json::from_str(docs_json).map_err(|e| format!("documents: {e}"))?;
    let mut collection = Collection::create("demo", CollectionKind::Relevant).map_err(err)?;
    for d in docs {
        let title = if d.title.is_empty() { d.id.clone() } else { d.title };
        collection.add_document(Document::new(d.id, title, d.text)).map_err(err)?;
    }
    let chunking = ChunkingParams::new(chunk_size, chunk_size / 8).map_err(err)?;
    let embedder = HashedNgramEmbedder::new(DEFAULT_HASHED_DIM).map_err(err)?;
    let indexes = build_indexes(&collection, &chunking, &embedder, "hashed").map_err(err)?;
    let params = RetrievalParams { top_k, per_doc_m, ..RetrievalParams::default() };

    let mut out = serde_json::Map::new();
    for kind in [PipelineKind::Vector, PipelineKind::FullText, PipelineKind::HybridRRF, PipelineKind::SHy] {
        let ctx = retrieve(kind, query, &indexes, &params, &embedder).map_err(err)?;
        let hits: Vec<_> = ctx
            .items
            .iter()
            .map(|i| json!({ "chunk": i.hit.chunk_id, "doc": i.hit.doc_id, "score": i.hit.score, "text": i.text }))
            .collect();
        out.insert(kind.cli_name().to_string(), hits.into());
    }
    Ok(serde_json::Value::Object(out).to_string())
}

fn rouge_json(s: RougeScore) -> serde_json::Value {
    json!({ "recall": s.recall, "precision": s.precision, "f1": s.f1 })
}

pub fn score_answer(candidate: &str, reference: &str) -> Result<String, String> {
    let embedder = HashedNgramEmbedder::new(DEFAULT_HASHED_DIM).map_err(err)?;
    let bert = bert_score_texts(&embedder, candidate, reference).map_err(err)?;
    Ok(json!({
        "rouge1": rouge_json(rouge_n(candidate, reference, 1).map_err(err)?),
        "rouge2": rouge_json(rouge_n(candidate, reference, 2).map_err(err)?),
        "rougeL": rouge_json(rouge_l(candidate, reference)),
        "rougeLsum": rouge_json(rouge_lsum(candidate, reference)),
        "bert": { "recall": bert.recall, "precision": bert.precision, "f1": bert.f1 },
    })
    .to_string())
}

#[wasm_bindgen(js_name = chunkPreview)]
pub fn chunk_preview_js(text: &str, size: usize, overlap: usize) -> Result<String, JsError> {
    chunk_preview(text, size, overlap).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = comparePipelines)]
pub fn compare_pipelines_js(
    docs_json: &str,
    query: &str,
    top_k: usize,
    per_doc_m: usize,
    chunk_size: usize,
) -> Result<String, JsError> {
    compare_pipelines(docs_json, query, top_k, per_doc_m, chunk_size).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = scoreAnswer)]
pub fn score_answer_js(candidate: &str, reference: &str) -> Result<String, JsError> {
    score_answer(candidate, reference).map_err(|e| JsError::new(&e))
}
