//! Answer-quality metrics: Rouge-N, Rouge-L, Rouge-LSum, a BERTScore-style
//! greedy cosine alignment, and yes/no/maybe classification metrics.
//!
//! Lexical metrics share one normalization: lowercase, split on whitespace,
//! strip leading and trailing punctuation (see
//! [`normalized_terms`](crate::chunking::normalized_terms)).
//!
//! Rouge recall is the figure that follows the standard recall-oriented
//! definition,
//!
//! ```text
//! Rouge-N = Σ_{gram ∈ ref} Count_match(gram) / Σ_{gram ∈ ref} Count(gram)
//! ```
//!
//! where `Count_match` is the clipped co-occurrence count `min(cand, ref)`.
//! Precision divides the same numerator by the candidate's n-gram total.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chunking::normalized_terms;
use crate::embedding::{cosine, Embedder, EmbeddingVector};
use crate::error::{Error, Result};

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn new(recall: f64, precision: f64) -> Self {
        RougeScore { recall, precision, f1: harmonic(precision, recall) }
    }
}

/// Multiset of the n-grams of a token sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramMultiset<'a> {
    n: usize,
    counts: HashMap<&'a [String], usize>,
    total: usize,
}

impl<'a> NgramMultiset<'a> {
    pub fn new(tokens: &'a [String], n: usize) -> Self {
        let mut counts = HashMap::new();
        let mut total = 0;
        if n > 0 {
            for gram in tokens.windows(n) {
                *counts.entry(gram).or_insert(0) += 1;
                total += 1;
            }
        }
        NgramMultiset { n, counts, total }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn count(&self, gram: &[String]) -> usize {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    /// Σ over grams of min(self, other).
    pub fn clipped_overlap(&self, other: &NgramMultiset<'_>) -> usize {
        self.counts.iter().map(|(g, &c)| c.min(other.count(g))).sum()
    }
}

pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> Result<RougeScore> {
    if n == 0 {
        return Err(Error::invalid("rouge n must be at least 1"));
    }
    let cand_tokens = normalized_terms(candidate);
    let ref_tokens = normalized_terms(reference);
    let cand = NgramMultiset::new(&cand_tokens, n);
    let refs = NgramMultiset::new(&ref_tokens, n);
    let matched = refs.clipped_overlap(&cand);
    Ok(RougeScore::new(ratio(matched, refs.total()), ratio(matched, cand.total())))
}

fn lcs_table(a: &[String], b: &[String]) -> Vec<Vec<u32>> {
    let mut t = vec![vec![0u32; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut prev = vec![0u32; short.len() + 1];
    let mut cur = vec![0u32; short.len() + 1];
    for x in long {
        for (j, y) in short.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()] as usize
}

/// Indices into `reference` of one longest common subsequence with `candidate`.
fn lcs_indices(reference: &[String], candidate: &[String]) -> Vec<usize> {
    let t = lcs_table(reference, candidate);
    let (mut i, mut j) = (reference.len(), candidate.len());
    let mut out = Vec::new();
    while i > 0 && j > 0 {
        if reference[i - 1] == candidate[j - 1] {
            out.push(i - 1);
            i -= 1;
            j -= 1;
        } else if t[i - 1][j] >= t[i][j - 1] {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    out.reverse();
    out
}

pub fn rouge_l(candidate: &str, reference: &str) -> RougeScore {
    let cand = normalized_terms(candidate);
    let refs = normalized_terms(reference);
    let lcs = lcs_len(&cand, &refs);
    RougeScore::new(ratio(lcs, refs.len()), ratio(lcs, cand.len()))
}

/// Split on `.`, `!` or `?` followed by whitespace or the end of the text.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let at_boundary = chars.peek().is_none_or(|(_, next)| next.is_whitespace());
            if at_boundary {
                let end = i + c.len_utf8();
                let sentence = text[start..end].trim();
                if !sentence.is_empty() {
                    out.push(sentence);
                }
                start = end;
            }
        }
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        out.push(rest);
    }
    out
}

/// Summary-level Rouge-L: for every reference sentence, the union of its LCS
/// matches against each candidate sentence; matched tokens are clipped by
/// their remaining counts on both sides.
pub fn rouge_lsum(candidate: &str, reference: &str) -> RougeScore {
    let cand: Vec<Vec<String>> = split_sentences(candidate)
        .into_iter()
        .map(normalized_terms)
        .filter(|s| !s.is_empty())
        .collect();
    let refs: Vec<Vec<String>> = split_sentences(reference)
        .into_iter()
        .map(normalized_terms)
        .filter(|s| !s.is_empty())
        .collect();
    let cand_total: usize = cand.iter().map(Vec::len).sum();
    let ref_total: usize = refs.iter().map(Vec::len).sum();
    if cand_total == 0 || ref_total == 0 {
        return RougeScore::default();
    }
    let mut cand_left: HashMap<&str, usize> = HashMap::new();
    for t in cand.iter().flatten() {
        *cand_left.entry(t).or_default() += 1;
    }
    let mut ref_left: HashMap<&str, usize> = HashMap::new();
    for t in refs.iter().flatten() {
        *ref_left.entry(t).or_default() += 1;
    }
    let mut hits = 0;
    for r in &refs {
        let mut union: Vec<usize> = cand.iter().flat_map(|c| lcs_indices(r, c)).collect();
        union.sort_unstable();
        union.dedup();
        for i in union {
            let token = r[i].as_str();
            let (Some(c), Some(rf)) = (cand_left.get_mut(token), ref_left.get_mut(token)) else {
                continue;
            };
            if *c > 0 && *rf > 0 {
                *c -= 1;
                *rf -= 1;
                hits += 1;
            }
        }
    }
    RougeScore::new(ratio(hits, ref_total), ratio(hits, cand_total))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BertScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Greedy alignment: each token is matched to its most similar token on the
/// other side. Recall averages over reference tokens, precision over
/// candidate tokens. No IDF weighting, no baseline rescaling.
pub fn bert_score(cand: &[EmbeddingVector], reference: &[EmbeddingVector]) -> Result<BertScore> {
    if cand.is_empty() || reference.is_empty() {
        return Err(Error::invalid("bert_score needs non-empty token lists on both sides"));
    }
    let mut sim = vec![vec![0.0f64; reference.len()]; cand.len()];
    for (i, c) in cand.iter().enumerate() {
        for (j, r) in reference.iter().enumerate() {
            sim[i][j] = cosine(c, r)?;
        }
    }
    let precision = sim
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / cand.len() as f64;
    let recall = (0..reference.len())
        .map(|j| sim.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / reference.len() as f64;
    Ok(BertScore { precision, recall, f1: harmonic(precision, recall) })
}

/// BERTScore over the normalized tokens of two texts, embedding each token
/// with `embedder`.
pub fn bert_score_texts(embedder: &dyn Embedder, candidate: &str, reference: &str) -> Result<BertScore> {
    let cand = normalized_terms(candidate);
    let refs = normalized_terms(reference);
    if cand.is_empty() || refs.is_empty() {
        return Err(Error::invalid("bert_score needs non-empty token lists on both sides"));
    }
    let cand_refs: Vec<&str> = cand.iter().map(String::as_str).collect();
    let ref_refs: Vec<&str> = refs.iter().map(String::as_str).collect();
    bert_score(&embedder.embed_batch(&cand_refs)?, &embedder.embed_batch(&ref_refs)?)
}

/// Short answer label. `None` means no usable label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShortLabel {
    Yes,
    No,
    Maybe,
    None,
}

impl ShortLabel {
    pub const CLASSES: [ShortLabel; 3] = [ShortLabel::Yes, ShortLabel::No, ShortLabel::Maybe];

    pub fn as_str(self) -> &'static str {
        match self {
            ShortLabel::Yes => "yes",
            ShortLabel::No => "no",
            ShortLabel::Maybe => "maybe",
            ShortLabel::None => "none",
        }
    }

    fn class_index(self) -> Option<usize> {
        match self {
            ShortLabel::Yes => Some(0),
            ShortLabel::No => Some(1),
            ShortLabel::Maybe => Some(2),
            ShortLabel::None => None,
        }
    }

    /// yes ↔ no; maybe and none are unchanged.
    pub fn inverted(self) -> Self {
        match self {
            ShortLabel::Yes => ShortLabel::No,
            ShortLabel::No => ShortLabel::Yes,
            other => other,
        }
    }
}

impl fmt::Display for ShortLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ShortLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" => Ok(ShortLabel::Yes),
            "no" => Ok(ShortLabel::No),
            "maybe" => Ok(ShortLabel::Maybe),
            "none" => Ok(ShortLabel::None),
            other => Err(Error::invalid(format!("unknown short label {other:?}"))),
        }
    }
}

/// Rows are gold labels, columns predicted labels, both in yes/no/maybe
/// order. Predictions of `none` land in the per-row `unparsed` column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix3 {
    pub counts: [[u64; 3]; 3],
    pub unparsed: [u64; 3],
}

impl ConfusionMatrix3 {
    pub fn record(&mut self, gold: ShortLabel, pred: ShortLabel) {
        let Some(g) = gold.class_index() else { return };
        match pred.class_index() {
            Some(p) => self.counts[g][p] += 1,
            None => self.unparsed[g] += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum::<u64>() + self.unparsed.iter().sum::<u64>()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix3) {
        for g in 0..3 {
            for p in 0..3 {
                self.counts[g][p] += other.counts[g][p];
            }
            self.unparsed[g] += other.unparsed[g];
        }
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<10}{:>8}{:>8}{:>8}{:>10}\n", "gold\\pred", "yes", "no", "maybe", "unparsed");
        for (g, label) in ShortLabel::CLASSES.iter().enumerate() {
            out.push_str(&format!(
                "{:<10}{:>8}{:>8}{:>8}{:>10}\n",
                label.as_str(),
                self.counts[g][0],
                self.counts[g][1],
                self.counts[g][2],
                self.unparsed[g]
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix3,
    /// Items with a real gold class.
    pub scored: usize,
    /// Items whose gold label is `none`; not scored.
    pub skipped: usize,
}

/// Accuracy and macro-averaged precision/recall/F1 over yes/no/maybe.
///
/// Predictions of `none` are always wrong. Classes that never occur in the
/// gold labels are left out of the macro means.
pub fn classification_metrics(pred: &[ShortLabel], gold: &[ShortLabel]) -> Result<ClassificationReport> {
    if pred.len() != gold.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    let mut confusion = ConfusionMatrix3::default();
    for (&p, &g) in pred.iter().zip(gold) {
        confusion.record(g, p);
    }
    let scored = confusion.total() as usize;
    let accuracy = ratio(confusion.trace() as usize, scored);
    let (mut ps, mut rs, mut fs) = (Vec::new(), Vec::new(), Vec::new());
    for c in 0..3 {
        let gold_count: u64 = confusion.counts[c].iter().sum::<u64>() + confusion.unparsed[c];
        if gold_count == 0 {
            continue;
        }
        let tp = confusion.counts[c][c];
        let predicted: u64 = (0..3).map(|g| confusion.counts[g][c]).sum();
        let p = ratio(tp as usize, predicted as usize);
        let r = ratio(tp as usize, gold_count as usize);
        ps.push(p);
        rs.push(r);
        fs.push(harmonic(p, r));
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    Ok(ClassificationReport {
        accuracy,
        macro_precision: mean(&ps),
        macro_recall: mean(&rs),
        macro_f1: mean(&fs),
        confusion,
        scored,
        skipped: gold.len() - scored,
    })
}

/// Classification restricted to items whose gold label is yes or no.
pub fn binary_classification_metrics(pred: &[ShortLabel], gold: &[ShortLabel]) -> Result<ClassificationReport> {
    if pred.len() != gold.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    let (p, g): (Vec<ShortLabel>, Vec<ShortLabel>) = pred
        .iter()
        .zip(gold)
        .filter(|(_, g)| matches!(g, ShortLabel::Yes | ShortLabel::No))
        .map(|(p, g)| (*p, *g))
        .unzip();
    let mut report = classification_metrics(&p, &g)?;
    report.skipped = gold.len() - report.scored;
    Ok(report)
}
