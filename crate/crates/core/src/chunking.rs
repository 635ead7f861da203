//! Fixed-size token chunking with an optional sliding-window overlap.
//!
//! A token is a maximal run of non-whitespace characters (Unicode
//! whitespace). The same definition is used by the lexical index and by the
//! metrics, so chunk lengths and metric token counts agree.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};

/// A token with its byte offsets into the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

pub fn tokenize_with_offsets(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                tokens.push(Token { text: &text[s..i], start: s, end: i });
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push(Token { text: &text[s..], start: s, end: text.len() });
    }
    tokens
}

/// Lowercased tokens with leading and trailing non-alphanumeric characters
/// stripped; tokens that strip to nothing are dropped. Shared by the lexical
/// index and the lexical metrics.
pub fn normalized_terms(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingParams {
    pub size_tokens: usize,
    pub overlap_tokens: usize,
}

impl ChunkingParams {
    pub fn new(size_tokens: usize, overlap_tokens: usize) -> Result<Self> {
        let params = ChunkingParams { size_tokens, overlap_tokens };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size_tokens == 0 {
            return Err(Error::invalid("chunk size must be positive"));
        }
        if self.overlap_tokens >= self.size_tokens {
            return Err(Error::invalid(format!(
                "chunk overlap {} must be smaller than chunk size {}",
                self.overlap_tokens, self.size_tokens
            )));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.size_tokens - self.overlap_tokens
    }
}

impl Default for ChunkingParams {
    fn default() -> Self {
        ChunkingParams { size_tokens: 256, overlap_tokens: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub ordinal: usize,
    /// Half-open token range `[start, end)` within the document.
    pub token_span: (usize, usize),
    pub text: String,
}

impl Chunk {
    pub fn span(&self) -> Range<usize> {
        self.token_span.0..self.token_span.1
    }

    pub fn token_count(&self) -> usize {
        self.token_span.1 - self.token_span.0
    }
}

/// Chunk ids sort in ordinal order within a document.
pub fn chunk_id(doc_id: &str, ordinal: usize) -> String {
    format!("{doc_id}#{ordinal:05}")
}

/// Token spans for a document of `token_count` tokens.
///
/// Windows start at 0, stride, 2·stride, ... while the start is inside the
/// document; a trailing window that lies entirely inside its predecessor is
/// dropped.
pub fn chunk_spans(token_count: usize, params: &ChunkingParams) -> Vec<Range<usize>> {
    let stride = params.stride();
    let mut spans: Vec<Range<usize>> = Vec::new();
    let mut start = 0;
    while start < token_count {
        let end = (start + params.size_tokens).min(token_count);
        if spans.last().is_some_and(|prev| end <= prev.end) {
            break;
        }
        spans.push(start..end);
        start += stride;
    }
    spans
}

pub fn chunk_fixed(doc: &Document, params: &ChunkingParams) -> Result<Vec<Chunk>> {
    params.validate()?;
    let tokens = tokenize(&doc.text);
    Ok(chunk_spans(tokens.len(), params)
        .into_iter()
        .enumerate()
        .map(|(ordinal, span)| Chunk {
            chunk_id: chunk_id(&doc.doc_id, ordinal),
            doc_id: doc.doc_id.clone(),
            ordinal,
            token_span: (span.start, span.end),
            text: tokens[span].join(" "),
        })
        .collect())
}
