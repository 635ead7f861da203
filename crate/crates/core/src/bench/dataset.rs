//! Benchmark question sets and human judgments, both as JSON Lines.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::generation::GoldAnswer;
use crate::metrics::ShortLabel;
use crate::{Error, Result};

/// Question category, 0 through 6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum QuestionType {
    GeneralSummary,
    YesNo,
    Numerical,
    Table,
    Focused,
    Figure,
    Subtitles,
}

impl QuestionType {
    pub const ALL: [QuestionType; 7] = [
        QuestionType::GeneralSummary,
        QuestionType::YesNo,
        QuestionType::Numerical,
        QuestionType::Table,
        QuestionType::Focused,
        QuestionType::Figure,
        QuestionType::Subtitles,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QuestionType::GeneralSummary => "General/Summary",
            QuestionType::YesNo => "Yes/No",
            QuestionType::Numerical => "Numerical",
            QuestionType::Table => "Table",
            QuestionType::Focused => "Focused",
            QuestionType::Figure => "Figure",
            QuestionType::Subtitles => "Subtitles",
        }
    }
}

impl TryFrom<u8> for QuestionType {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        QuestionType::ALL
            .get(v as usize)
            .copied()
            .ok_or_else(|| format!("question type {v} is outside 0..=6"))
    }
}

impl From<QuestionType> for u8 {
    fn from(t: QuestionType) -> u8 {
        t as u8
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAItem {
    #[serde(rename = "id")]
    pub item_id: String,
    pub question: String,
    #[serde(rename = "short")]
    pub gold_short: ShortLabel,
    #[serde(rename = "long")]
    pub gold_long: String,
    #[serde(rename = "type")]
    pub question_type: QuestionType,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contexts: Vec<String>,
    #[serde(rename = "source_docs", default, skip_serializing_if = "Vec::is_empty")]
    pub source_doc_ids: Vec<String>,
}

impl QAItem {
    pub fn gold(&self) -> GoldAnswer {
        GoldAnswer {
            short: match self.gold_short {
                ShortLabel::None => None,
                label => Some(label),
            },
            long: self.gold_long.clone(),
            contexts: self.contexts.clone(),
            source_doc_ids: self.source_doc_ids.clone(),
        }
    }
}

// Labels are read as plain strings first so a bad one gets its own error.
#[derive(Deserialize)]
struct RawItem {
    id: String,
    question: String,
    short: String,
    long: String,
    #[serde(rename = "type")]
    question_type: u8,
    #[serde(default)]
    contexts: Vec<String>,
    #[serde(default)]
    source_docs: Vec<String>,
}

pub fn parse_qa_dataset(text: &str) -> Result<Vec<QAItem>> {
    let mut items = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: line_no, message };
        let raw: RawItem = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let gold_short: ShortLabel = raw.short.parse().map_err(|_| Error::InvalidLabel {
            line: line_no,
            label: raw.short.clone(),
        })?;
        let question_type = QuestionType::try_from(raw.question_type).map_err(parse_err)?;
        if raw.question.trim().is_empty() {
            return Err(parse_err("question is empty".into()));
        }
        if !seen.insert(raw.id.clone()) {
            return Err(parse_err(format!("duplicate item id {:?}", raw.id)));
        }
        items.push(QAItem {
            item_id: raw.id,
            question: raw.question,
            gold_short,
            gold_long: raw.long,
            question_type,
            contexts: raw.contexts,
            source_doc_ids: raw.source_docs,
        });
    }
    Ok(items)
}

pub fn load_qa_dataset(path: impl AsRef<Path>) -> Result<Vec<QAItem>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_qa_dataset(&text)
}

pub fn qa_dataset_to_jsonl(items: &[QAItem]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

/// Usability rubric, 0 (no answer or incorrect) to 5 (correct and complete).
pub const SCORE_RUBRIC: [&str; 6] = [
    "No answer or incorrect answer",
    "The general topic is understood, but not the scope of the question.",
    "The information is misinterpreted.",
    "The answer is correct but is missing important information.",
    "The answer is correct but missing minor information.",
    "The answer is correct and complete.",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanJudgment {
    #[serde(rename = "id")]
    pub item_id: String,
    pub score: u8,
    #[serde(default)]
    pub comment: String,
}

pub fn parse_judgments(text: &str) -> Result<Vec<HumanJudgment>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let j: HumanJudgment = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if j.score as usize >= SCORE_RUBRIC.len() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("score {} is outside 0..=5", j.score),
            });
        }
        out.push(j);
    }
    Ok(out)
}

pub fn load_judgments(path: impl AsRef<Path>) -> Result<Vec<HumanJudgment>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_judgments(&text)
}
