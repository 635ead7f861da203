//! Retrieval pipelines: Vanilla (no retrieval), Vector, FullText, HybridRRF
//! and SHy (per-document hybrid).

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::Embedder;
use crate::error::{Error, Result};
use crate::index::{Indexes, ScoredChunk};

pub const DEFAULT_RRF_K: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PipelineKind {
    Vanilla,
    Vector,
    FullText,
    HybridRRF,
    SHy,
}

impl PipelineKind {
    pub const ALL: [PipelineKind; 5] = [
        PipelineKind::Vanilla,
        PipelineKind::Vector,
        PipelineKind::FullText,
        PipelineKind::HybridRRF,
        PipelineKind::SHy,
    ];

    /// Three-letter level code used in experiment mnemonics.
    pub fn code(self) -> &'static str {
        match self {
            PipelineKind::Vanilla => "VAN",
            PipelineKind::Vector => "VEC",
            PipelineKind::FullText => "TEX",
            PipelineKind::HybridRRF => "HYB",
            PipelineKind::SHy => "SHY",
        }
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            PipelineKind::Vanilla => "vanilla",
            PipelineKind::Vector => "vector",
            PipelineKind::FullText => "fulltext",
            PipelineKind::HybridRRF => "hybrid",
            PipelineKind::SHy => "shy",
        }
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for PipelineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vanilla" | "van" => Ok(PipelineKind::Vanilla),
            "vector" | "vec" => Ok(PipelineKind::Vector),
            "fulltext" | "full-text" | "tex" | "text" => Ok(PipelineKind::FullText),
            "hybrid" | "hyb" | "hybridrrf" | "rrf" => Ok(PipelineKind::HybridRRF),
            "shy" => Ok(PipelineKind::SHy),
            other => Err(Error::invalid(format!("unknown pipeline {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalParams {
    /// Chunks returned by Vector, FullText and HybridRRF (the `#c` level).
    pub top_k: usize,
    pub rrf_k: f64,
    /// Chunks kept per document by SHy.
    pub per_doc_m: usize,
    /// Fuse hybrid candidates with RRF. When off, candidates are interleaved
    /// (vector first) and deduplicated instead.
    pub rerank: bool,
    /// Drop items whose pipeline score is below this value. 0 disables it.
    pub min_score: f64,
    /// SHy only: drop chunks that matched no query term.
    pub shy_drop_zero: bool,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        RetrievalParams {
            top_k: 10,
            rrf_k: DEFAULT_RRF_K,
            per_doc_m: 2,
            rerank: true,
            min_score: 0.0,
            shy_drop_zero: false,
        }
    }
}

impl RetrievalParams {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::invalid("top_k must be positive"));
        }
        if self.per_doc_m == 0 {
            return Err(Error::invalid("per_doc_m must be positive"));
        }
        if !(self.rrf_k.is_finite() && self.rrf_k > 0.0) {
            return Err(Error::invalid("rrf_k must be a positive number"));
        }
        if !self.min_score.is_finite() {
            return Err(Error::invalid("min_score must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextItem {
    #[serde(flatten)]
    pub hit: ScoredChunk,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocGroup {
    pub doc_id: String,
    pub items: Vec<ContextItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedContext {
    pub pipeline: PipelineKind,
    pub query: String,
    pub items: Vec<ContextItem>,
    /// Per-document groups, SHy only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<DocGroup>>,
}

impl RetrievedContext {
    pub fn empty(pipeline: PipelineKind, query: &str) -> Self {
        RetrievedContext { pipeline, query: query.to_string(), items: Vec::new(), groups: None }
    }

    pub fn chunk_ids(&self) -> Vec<String> {
        self.items.iter().map(|i| i.hit.chunk_id.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedItem {
    pub chunk_id: String,
    pub score: f64,
    pub rank: usize,
}

/// Reciprocal rank fusion: `score(c) = Σ 1 / (rrf_k + rank_i(c))` over the
/// lists containing `c`, ranks 1-based. Sorted by score descending, ties by
/// ascending id. A repeated id within one list counts at its first position.
pub fn rrf_fuse<S: AsRef<str>>(rankings: &[Vec<S>], rrf_k: f64) -> Result<Vec<FusedItem>> {
    if rankings.is_empty() {
        return Err(Error::invalid("rrf_fuse needs at least one ranking"));
    }
    if !(rrf_k.is_finite() && rrf_k > 0.0) {
        return Err(Error::invalid("rrf_k must be a positive number"));
    }
    let mut scores: HashMap<&str, f64> = HashMap::new();
    for list in rankings {
        let mut seen = std::collections::HashSet::new();
        for (i, id) in list.iter().enumerate() {
            let id = id.as_ref();
            if seen.insert(id) {
                *scores.entry(id).or_default() += 1.0 / (rrf_k + (i + 1) as f64);
            }
        }
    }
    let mut fused: Vec<(&str, f64)> = scores.into_iter().collect();
    fused.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(b.0)));
    Ok(fused
        .into_iter()
        .enumerate()
        .map(|(i, (id, score))| FusedItem { chunk_id: id.to_string(), score, rank: i + 1 })
        .collect())
}

/// Round-robin merge of two ranked lists without duplicates.
fn interleave(first: &[ScoredChunk], second: &[ScoredChunk]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for i in 0..first.len().max(second.len()) {
        for list in [first, second] {
            if let Some(hit) = list.get(i) {
                if !out.contains(&hit.chunk_id) {
                    out.push(hit.chunk_id.clone());
                }
            }
        }
    }
    out
}

fn ids(hits: &[ScoredChunk]) -> Vec<&str> {
    hits.iter().map(|h| h.chunk_id.as_str()).collect()
}

/// Fuse vector and lexical candidate lists into a ranked hybrid list.
fn hybrid_merge(
    indexes: &Indexes,
    vector_hits: &[ScoredChunk],
    text_hits: &[ScoredChunk],
    params: &RetrievalParams,
    limit: usize,
) -> Result<Vec<ScoredChunk>> {
    let fused: Vec<(String, f64)> = if params.rerank {
        rrf_fuse(&[ids(vector_hits), ids(text_hits)], params.rrf_k)?
            .into_iter()
            .map(|f| (f.chunk_id, f.score))
            .collect()
    } else {
        let merged = interleave(vector_hits, text_hits);
        let n = merged.len() as f64;
        // descending positional score so that rank order and score order agree
        merged.into_iter().enumerate().map(|(i, id)| (id, (n - i as f64) / n)).collect()
    };
    Ok(fused
        .into_iter()
        .take(limit)
        .enumerate()
        .map(|(i, (chunk_id, score))| {
            let doc_id = indexes.chunk(&chunk_id).map(|c| c.doc_id.clone()).unwrap_or_default();
            ScoredChunk { chunk_id, doc_id, score, rank: i + 1 }
        })
        .collect())
}

fn resolve(indexes: &Indexes, hits: Vec<ScoredChunk>) -> Vec<ContextItem> {
    hits.into_iter()
        .map(|hit| {
            let text = indexes.chunk(&hit.chunk_id).map(|c| c.text.clone()).unwrap_or_default();
            ContextItem { hit, text }
        })
        .collect()
}

fn apply_threshold(hits: Vec<ScoredChunk>, min_score: f64) -> Vec<ScoredChunk> {
    if min_score <= 0.0 {
        return hits;
    }
    hits.into_iter()
        .filter(|h| h.score >= min_score)
        .enumerate()
        .map(|(i, mut h)| {
            h.rank = i + 1;
            h
        })
        .collect()
}

pub fn retrieve(
    kind: PipelineKind,
    query: &str,
    indexes: &Indexes,
    params: &RetrievalParams,
    embedder: &dyn Embedder,
) -> Result<RetrievedContext> {
    params.validate()?;
    let hits = match kind {
        PipelineKind::Vanilla => return Ok(RetrievedContext::empty(kind, query)),
        PipelineKind::SHy => return shy_retrieve(query, indexes, params, embedder),
        PipelineKind::Vector => indexes.vector_search(&embedder.embed(query)?, params.top_k)?,
        PipelineKind::FullText => indexes.fulltext_search(query, params.top_k),
        PipelineKind::HybridRRF => {
            let depth = 2 * params.top_k;
            let vector_hits = indexes.vector_search(&embedder.embed(query)?, depth)?;
            let text_hits = indexes.fulltext_search(query, depth);
            hybrid_merge(indexes, &vector_hits, &text_hits, params, params.top_k)?
        }
    };
    let hits = apply_threshold(hits, params.min_score);
    Ok(RetrievedContext {
        pipeline: kind,
        query: query.to_string(),
        items: resolve(indexes, hits),
        groups: None,
    })
}

/// Hybrid retrieval run separately inside every document, keeping each
/// document's top `per_doc_m` chunks.
///
/// Each document gets its own lexical statistics; candidates are the
/// document's top `2·top_k` vector and lexical hits, fused exactly as in
/// HybridRRF. Groups are ordered by their best fused score (ties by doc id)
/// and flattened in that order, so the flat list is grouped by document
/// rather than globally sorted by score.
pub fn shy_retrieve(
    query: &str,
    indexes: &Indexes,
    params: &RetrievalParams,
    embedder: &dyn Embedder,
) -> Result<RetrievedContext> {
    params.validate()?;
    let query_vec = embedder.embed(query)?;
    let depth = 2 * params.top_k;
    let mut groups: Vec<(f64, DocGroup)> = Vec::new();
    for doc_id in indexes.documents() {
        let vector_hits = indexes.doc_vector_search(doc_id, &query_vec, depth)?;
        let text_hits = indexes.doc_fulltext_search(doc_id, query, depth);
        let mut fused = hybrid_merge(indexes, &vector_hits, &text_hits, params, params.top_k)?;
        if params.shy_drop_zero {
            fused.retain(|h| text_hits.iter().any(|t| t.chunk_id == h.chunk_id));
        }
        fused.truncate(params.per_doc_m);
        let fused = apply_threshold(fused, params.min_score);
        if fused.is_empty() {
            continue;
        }
        let best = fused[0].score;
        groups.push((best, DocGroup { doc_id: doc_id.clone(), items: resolve(indexes, fused) }));
    }
    groups.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.1.doc_id.cmp(&b.1.doc_id))
    });
    let groups: Vec<DocGroup> = groups.into_iter().map(|(_, g)| g).collect();
    let items = groups
        .iter()
        .flat_map(|g| g.items.iter().cloned())
        .enumerate()
        .map(|(i, mut item)| {
            item.hit.rank = i + 1;
            item
        })
        .collect();
    Ok(RetrievedContext {
        pipeline: PipelineKind::SHy,
        query: query.to_string(),
        items,
        groups: Some(groups),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunking::ChunkingParams;
    use crate::corpus::{Collection, CollectionKind, Document};
    use crate::embedding::HashedNgramEmbedder;
    use crate::index::build_indexes;
    use proptest::prelude::*;

    fn fused_order(items: &[FusedItem]) -> Vec<&str> {
        items.iter().map(|f| f.chunk_id.as_str()).collect()
    }

    #[test]
    fn rrf_hand_computed_fixture() {
        let fused = rrf_fuse(&[vec!["d1", "d2", "d3"], vec!["d3", "d1", "d2"]], 60.0).unwrap();
        assert_eq!(fused_order(&fused), vec!["d1", "d3", "d2"]);
        let expected = [1.0 / 61.0 + 1.0 / 62.0, 1.0 / 63.0 + 1.0 / 61.0, 1.0 / 62.0 + 1.0 / 63.0];
        for (f, e) in fused.iter().zip(expected) {
            assert!((f.score - e).abs() < 1e-12);
        }
        assert!((fused[0].score - 0.0325224).abs() < 1e-7);
        assert!((fused[1].score - 0.0322664).abs() < 1e-7);
        assert!((fused[2].score - 0.0320020).abs() < 1e-7);
    }

    #[test]
    fn rrf_identical_lists_double_scores() {
        let single = rrf_fuse(&[vec!["a", "b", "c"]], 60.0).unwrap();
        let double = rrf_fuse(&[vec!["a", "b", "c"], vec!["a", "b", "c"]], 60.0).unwrap();
        assert_eq!(fused_order(&single), vec!["a", "b", "c"]);
        assert_eq!(fused_order(&double), vec!["a", "b", "c"]);
        for (s, d) in single.iter().zip(&double) {
            assert!((d.score - 2.0 * s.score).abs() < 1e-15);
        }
        assert!((single[1].score - 1.0 / 62.0).abs() < 1e-15);
    }

    #[test]
    fn rrf_rejects_bad_input() {
        let empty: Vec<Vec<&str>> = Vec::new();
        assert!(rrf_fuse(&empty, 60.0).is_err());
        assert!(rrf_fuse(&[vec!["a"]], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn rrf_output_is_union_of_inputs(lists in prop::collection::vec(prop::collection::vec(0u8..30, 0..15), 1..4)) {
            let lists: Vec<Vec<String>> = lists.iter().map(|l| {
                let mut seen = std::collections::HashSet::new();
                l.iter().filter(|x| seen.insert(**x)).map(|x| format!("c{x:02}")).collect()
            }).collect();
            let fused = rrf_fuse(&lists, 60.0).unwrap();
            let mut got: Vec<String> = fused.iter().map(|f| f.chunk_id.clone()).collect();
            got.sort();
            let mut want: Vec<String> = lists.iter().flatten().cloned().collect();
            want.sort();
            want.dedup();
            prop_assert_eq!(got, want);
            for w in fused.windows(2) {
                prop_assert!(w[0].score >= w[1].score);
            }
        }
    }

    fn fixture(docs: &[(&str, &str)]) -> Indexes {
        let mut c = Collection::create("fixture", CollectionKind::Relevant).unwrap();
        for (id, text) in docs {
            c.add_document(Document::new(*id, format!("Title {id}"), *text)).unwrap();
        }
        build_indexes(&c, &ChunkingParams::new(8, 0).unwrap(), &HashedNgramEmbedder::new(128).unwrap(), "hashed:128")
            .unwrap()
    }

    #[test]
    fn vanilla_returns_nothing() {
        let idx = fixture(&[("a", "some text about anything")]);
        let e = HashedNgramEmbedder::new(128).unwrap();
        let ctx = retrieve(PipelineKind::Vanilla, "anything", &idx, &RetrievalParams::default(), &e).unwrap();
        assert!(ctx.items.is_empty());
        assert!(ctx.groups.is_none());
    }

    #[test]
    fn vector_and_fulltext_delegate_to_index() {
        let idx = fixture(&[
            ("a", "insulin resistance rises with obesity in adults over fifty years"),
            ("b", "bacteriophage therapy against resistant bacteria in hospital settings"),
        ]);
        let e = HashedNgramEmbedder::new(128).unwrap();
        let params = RetrievalParams { top_k: 3, ..Default::default() };
        let q = "resistance in bacteria";
        let v = retrieve(PipelineKind::Vector, q, &idx, &params, &e).unwrap();
        let direct: Vec<_> = idx.vector_search(&e.embed(q).unwrap(), 3).unwrap();
        assert_eq!(v.items.iter().map(|i| i.hit.clone()).collect::<Vec<_>>(), direct);
        let t = retrieve(PipelineKind::FullText, q, &idx, &params, &e).unwrap();
        assert_eq!(t.items.iter().map(|i| i.hit.clone()).collect::<Vec<_>>(), idx.fulltext_search(q, 3));
        assert!(t.items.iter().all(|i| idx.chunk(&i.hit.chunk_id).unwrap().text == i.text));
    }

    #[test]
    fn hybrid_unanimous_top_chunk_ranks_first() {
        let idx = fixture(&[
            ("a", "phage lysis of staphylococcus aureus biofilms"),
            ("b", "quarterly reporting of horizon grant budgets"),
            ("c", "virtual human twin models of the heart"),
        ]);
        let e = HashedNgramEmbedder::new(128).unwrap();
        let q = "phage lysis of staphylococcus aureus biofilms";
        let params = RetrievalParams { top_k: 2, ..Default::default() };
        let v = retrieve(PipelineKind::Vector, q, &idx, &params, &e).unwrap();
        let t = retrieve(PipelineKind::FullText, q, &idx, &params, &e).unwrap();
        assert_eq!(v.items[0].hit.chunk_id, t.items[0].hit.chunk_id);
        let h = retrieve(PipelineKind::HybridRRF, q, &idx, &params, &e).unwrap();
        assert_eq!(h.items[0].hit.chunk_id, v.items[0].hit.chunk_id);
        assert!(h.items.len() <= 2);
    }

    #[test]
    fn shy_three_docs_three_groups() {
        let idx = fixture(&[
            ("a", "one two three four five six seven eight nine ten eleven twelve thirteen fourteen fifteen sixteen seventeen"),
            ("b", "alpha beta gamma delta epsilon zeta eta theta iota kappa lambda mu nu xi omicron pi rho sigma"),
            ("c", "red green blue"),
        ]);
        let e = HashedNgramEmbedder::new(128).unwrap();
        let params = RetrievalParams { top_k: 5, per_doc_m: 2, ..Default::default() };
        let ctx = retrieve(PipelineKind::SHy, "three gamma", &idx, &params, &e).unwrap();
        let groups = ctx.groups.as_ref().unwrap();
        assert_eq!(groups.len(), 3);
        assert!(groups.iter().all(|g| !g.items.is_empty() && g.items.len() <= 2));
        let flat: usize = groups.iter().map(|g| g.items.len()).sum();
        assert_eq!(flat, ctx.items.len());
        for (i, item) in ctx.items.iter().enumerate() {
            assert_eq!(item.hit.rank, i + 1);
        }
    }

    #[test]
    fn shy_single_document_equals_truncated_hybrid() {
        let idx = fixture(&[(
            "solo",
            "microplastics fragment in the earthworm gut and some polymers depolymerize; \
             the mechanisms of depolymerization remain unclear and further research is needed \
             before bioremediation with earthworms can be evaluated at scale in real soils",
        )]);
        let e = HashedNgramEmbedder::new(128).unwrap();
        let params = RetrievalParams { top_k: 4, per_doc_m: 2, ..Default::default() };
        let q = "earthworm depolymerization mechanisms";
        let hybrid = retrieve(PipelineKind::HybridRRF, q, &idx, &params, &e).unwrap();
        let shy = retrieve(PipelineKind::SHy, q, &idx, &params, &e).unwrap();
        let want: Vec<_> = hybrid.items.iter().take(2).map(|i| (i.hit.chunk_id.clone(), i.hit.score)).collect();
        let got: Vec<_> = shy.items.iter().map(|i| (i.hit.chunk_id.clone(), i.hit.score)).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn shy_drop_zero_excludes_unmatched_documents() {
        let idx = fixture(&[("a", "kidney dialysis outcomes"), ("b", "unrelated astronomy notes")]);
        let e = HashedNgramEmbedder::new(128).unwrap();
        let params = RetrievalParams { shy_drop_zero: true, ..Default::default() };
        let ctx = retrieve(PipelineKind::SHy, "dialysis", &idx, &params, &e).unwrap();
        let groups = ctx.groups.unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].doc_id, "a");
    }

    #[test]
    fn threshold_filters_low_scores() {
        let idx = fixture(&[("a", "kidney dialysis outcomes"), ("b", "kidney stones and diet advice for adults")]);
        let e = HashedNgramEmbedder::new(128).unwrap();
        let all = retrieve(PipelineKind::FullText, "dialysis kidney", &idx, &RetrievalParams::default(), &e).unwrap();
        assert_eq!(all.items.len(), 2);
        let cut = (all.items[0].hit.score + all.items[1].hit.score) / 2.0;
        let params = RetrievalParams { min_score: cut, ..Default::default() };
        let some = retrieve(PipelineKind::FullText, "dialysis kidney", &idx, &params, &e).unwrap();
        assert_eq!(some.items.len(), 1);
    }

    #[test]
    fn hybrid_without_rerank_interleaves() {
        let a = vec![
            ScoredChunk { chunk_id: "v1".into(), doc_id: "d".into(), score: 0.9, rank: 1 },
            ScoredChunk { chunk_id: "x".into(), doc_id: "d".into(), score: 0.8, rank: 2 },
        ];
        let b = vec![
            ScoredChunk { chunk_id: "x".into(), doc_id: "d".into(), score: 3.0, rank: 1 },
            ScoredChunk { chunk_id: "t2".into(), doc_id: "d".into(), score: 1.0, rank: 2 },
        ];
        assert_eq!(interleave(&a, &b), vec!["v1", "x", "t2"]);
    }

    #[test]
    fn pipelines_are_deterministic() {
        let idx = fixture(&[("a", "first document text on sepsis"), ("b", "second document on sepsis care")]);
        let e = HashedNgramEmbedder::new(128).unwrap();
        for kind in PipelineKind::ALL {
            let x = retrieve(kind, "sepsis care", &idx, &RetrievalParams::default(), &e).unwrap();
            let y = retrieve(kind, "sepsis care", &idx, &RetrievalParams::default(), &e).unwrap();
            assert_eq!(serde_json::to_string(&x).unwrap(), serde_json::to_string(&y).unwrap());
        }
    }

    #[test]
    fn pipeline_names_parse() {
        for kind in PipelineKind::ALL {
            assert_eq!(kind.cli_name().parse::<PipelineKind>().unwrap(), kind);
            assert_eq!(kind.code().parse::<PipelineKind>().unwrap(), kind);
        }
    }
}
