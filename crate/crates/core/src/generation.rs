//! Grounded prompt assembly, chat backends and answer parsing.
//!
//! Prompts label every context chunk `[C1]`, `[C2]`, ... in retrieval order
//! and ask the model to open with a `SHORT: yes|no|maybe` line and to cite
//! labels after each statement. Besides the remote chat backend there are
//! deterministic stubs that answer from a gold reference, which makes whole
//! evaluation sweeps reproducible offline.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chunking::tokenize_with_offsets;
use crate::embedding::fnv1a64;
use crate::error::{Error, Result};
pub use crate::metrics::ShortLabel;
use crate::metrics::rouge_n;
use crate::retrieval::RetrievedContext;

pub const SYSTEM_WITH_CONTEXT: &str = "You are a careful research assistant. Answer the question using only \
the numbered context passages provided. If the passages do not contain the answer, say so.\n\
Begin your reply with a single line of the form `SHORT: yes`, `SHORT: no` or `SHORT: maybe`.\n\
Then give a detailed answer. After each statement, cite the passages that support it by their \
labels, for example [C1] or [C2][C3].";

pub const SYSTEM_WITHOUT_CONTEXT: &str = "You are a careful research assistant.\n\
Begin your reply with a single line of the form `SHORT: yes`, `SHORT: no` or `SHORT: maybe`.\n\
Then give a detailed answer.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: String,
    pub text: String,
}

impl Turn {
    pub fn user(text: impl Into<String>) -> Self {
        Turn { role: "user".into(), text: text.into() }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Turn { role: "assistant".into(), text: text.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBlock {
    pub label: String,
    pub text: String,
    pub doc_id: String,
    pub chunk_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_instruction: String,
    pub history: Vec<Turn>,
    pub context_blocks: Vec<ContextBlock>,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl PromptBundle {
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.context_blocks.iter().map(|b| b.label.as_str())
    }

    pub fn block(&self, label: &str) -> Option<&ContextBlock> {
        self.context_blocks.iter().find(|b| b.label == label)
    }

    fn user_message(&self) -> String {
        let mut out = String::new();
        if !self.context_blocks.is_empty() {
            out.push_str("Context:\n");
            for block in &self.context_blocks {
                out.push_str(&format!("{} (document {}) {}\n", block.label, block.doc_id, block.text));
            }
            out.push('\n');
        }
        out.push_str("Question: ");
        out.push_str(&self.question);
        out
    }

    /// Chat messages: system, then history verbatim, then the user turn.
    pub fn messages(&self) -> Vec<ChatMessage> {
        let mut messages = vec![ChatMessage { role: "system".into(), content: self.system_instruction.clone() }];
        messages.extend(self.history.iter().map(|t| ChatMessage { role: t.role.clone(), content: t.text.clone() }));
        messages.push(ChatMessage { role: "user".into(), content: self.user_message() });
        messages
    }

    /// Plain-text rendering of the full prompt.
    pub fn render(&self) -> String {
        self.messages()
            .iter()
            .map(|m| format!("### {}\n{}\n", m.role, m.content))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub fn assemble_prompt(query: &str, context: &RetrievedContext, history: &[Turn]) -> PromptBundle {
    let context_blocks: Vec<ContextBlock> = context
        .items
        .iter()
        .enumerate()
        .map(|(i, item)| ContextBlock {
            label: format!("[C{}]", i + 1),
            text: item.text.clone(),
            doc_id: item.hit.doc_id.clone(),
            chunk_id: item.hit.chunk_id.clone(),
        })
        .collect();
    let system_instruction = if context_blocks.is_empty() { SYSTEM_WITHOUT_CONTEXT } else { SYSTEM_WITH_CONTEXT };
    PromptBundle {
        system_instruction: system_instruction.to_string(),
        history: history.to_vec(),
        context_blocks,
        question: query.to_string(),
    }
}

/// Reference answer handed to the stub generators.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GoldAnswer {
    pub short: Option<ShortLabel>,
    pub long: String,
    #[serde(default)]
    pub contexts: Vec<String>,
    #[serde(default)]
    pub source_doc_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    RemoteChat,
    /// Returns the gold answer verbatim.
    EchoStub,
    /// Gold answer with a fraction of long-answer tokens replaced by noise.
    CorruptStub,
    /// Gold answer with yes/no inverted and the long text negated.
    ContradictStub,
    /// Gold answer only when the prompt's context supports it; otherwise
    /// declines with `maybe`.
    GroundedStub,
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "remote" | "remote_chat" => Ok(GeneratorKind::RemoteChat),
            "echo" | "echo_stub" => Ok(GeneratorKind::EchoStub),
            "corrupt" | "corrupt_stub" => Ok(GeneratorKind::CorruptStub),
            "contradict" | "contradict_stub" => Ok(GeneratorKind::ContradictStub),
            "grounded" | "grounded_stub" => Ok(GeneratorKind::GroundedStub),
            other => Err(Error::invalid(format!("unknown generator {other:?}"))),
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeneratorKind::RemoteChat => "remote",
            GeneratorKind::EchoStub => "echo",
            GeneratorKind::CorruptStub => "corrupt",
            GeneratorKind::ContradictStub => "contradict",
            GeneratorKind::GroundedStub => "grounded",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    /// Model identifier; also the MOD level code in experiment mnemonics.
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Fraction of long-answer tokens replaced, CorruptStub only.
    pub corrupt_level: f64,
    pub seed: u64,
    pub max_in_flight: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            kind: GeneratorKind::EchoStub,
            model_name: "echo".into(),
            endpoint_url: None,
            temperature: 0.0,
            max_tokens: 512,
            corrupt_level: 0.0,
            seed: 42,
            max_in_flight: 4,
        }
    }
}

impl GeneratorConfig {
    pub fn stub(kind: GeneratorKind) -> Self {
        GeneratorConfig { kind, model_name: kind.to_string(), ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == GeneratorKind::RemoteChat && self.endpoint_url.as_deref().unwrap_or("").is_empty() {
            return Err(Error::invalid("remote chat generator requires an endpoint url"));
        }
        if !(0.0..=1.0).contains(&self.corrupt_level) {
            return Err(Error::invalid("corrupt_level must be within [0, 1]"));
        }
        if self.max_tokens == 0 {
            return Err(Error::invalid("max_tokens must be positive"));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn Generator>> {
        self.validate()?;
        match self.kind {
            #[cfg(feature = "remote")]
            GeneratorKind::RemoteChat => Ok(Box::new(RemoteGenerator::new(self))),
            #[cfg(not(feature = "remote"))]
            GeneratorKind::RemoteChat => Err(Error::invalid("remote chat needs the `remote` feature")),
            _ => Ok(Box::new(StubGenerator { cfg: self.clone() })),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub finish_reason: Option<String>,
}

pub trait Generator: Send + Sync {
    fn model_name(&self) -> &str;

    fn generate(&self, prompt: &PromptBundle, gold: Option<&GoldAnswer>) -> Result<Completion>;
}

/// Tokens the corrupting stub substitutes into answers. None of them is an
/// English word.
pub const NOISE_VOCABULARY: [&str; 16] = [
    "zorbel", "quindle", "flarnix", "veltrop", "smorgle", "tranzik", "bloviam", "crenshu", "dweezle", "frumpet",
    "glaxnor", "hobbish", "jintrel", "klumbo", "wyvrax", "yoddle",
];

pub struct StubGenerator {
    cfg: GeneratorConfig,
}

fn short_line(label: Option<ShortLabel>) -> String {
    format!("SHORT: {}", label.unwrap_or(ShortLabel::None))
}

impl StubGenerator {
    pub fn new(cfg: GeneratorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(StubGenerator { cfg })
    }

    fn corrupt(&self, gold: &GoldAnswer) -> String {
        let tokens = tokenize_with_offsets(&gold.long);
        let replace = (self.cfg.corrupt_level * tokens.len() as f64).round() as usize;
        let short = if self.cfg.corrupt_level >= 0.5 { gold.short.map(ShortLabel::inverted) } else { gold.short };
        if replace == 0 {
            return format!("{}\n{}", short_line(short), gold.long);
        }
        // one permutation per answer, independent of the level, so the
        // replaced positions at a lower level are a subset of those at a higher one
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ fnv1a64(gold.long.as_bytes(), 0));
        let mut order: Vec<usize> = (0..tokens.len()).collect();
        order.shuffle(&mut rng);
        let mut replacement: Vec<Option<&str>> = vec![None; tokens.len()];
        for &pos in &order {
            let pick = NOISE_VOCABULARY[rng.gen_range(0..NOISE_VOCABULARY.len())];
            replacement[pos] = Some(pick);
        }
        let mut chosen = vec![false; tokens.len()];
        for &pos in order.iter().take(replace) {
            chosen[pos] = true;
        }
        let mut long = String::with_capacity(gold.long.len());
        let mut cursor = 0;
        for (i, tok) in tokens.iter().enumerate() {
            long.push_str(&gold.long[cursor..tok.start]);
            if chosen[i] {
                long.push_str(replacement[i].expect("every position has a draw"));
            } else {
                long.push_str(tok.text);
            }
            cursor = tok.end;
        }
        long.push_str(&gold.long[cursor..]);
        format!("{}\n{}", short_line(short), long)
    }

    fn contradict(gold: &GoldAnswer) -> String {
        let long = gold.long.trim();
        let mut chars = long.chars();
        let negated = match chars.next() {
            Some(first) => format!("It is not true that {}{}", first.to_lowercase(), chars.as_str()),
            None => String::new(),
        };
        format!("{}\n{}", short_line(gold.short.map(ShortLabel::inverted)), negated)
    }

    /// Whether the prompt's context backs the gold answer: a block comes
    /// from a gold source document, or covers at least half of the unigrams
    /// of a gold context snippet.
    fn context_supports(prompt: &PromptBundle, gold: &GoldAnswer) -> bool {
        prompt.context_blocks.iter().any(|b| {
            gold.source_doc_ids.iter().any(|d| *d == b.doc_id)
                || gold
                    .contexts
                    .iter()
                    .any(|snippet| rouge_n(&b.text, snippet, 1).map(|r| r.recall >= 0.5).unwrap_or(false))
        })
    }
}

pub const DECLINE_ANSWER: &str = "The provided context does not contain enough information to answer.";

impl Generator for StubGenerator {
    fn model_name(&self) -> &str {
        &self.cfg.model_name
    }

    fn generate(&self, prompt: &PromptBundle, gold: Option<&GoldAnswer>) -> Result<Completion> {
        let gold = gold.ok_or_else(|| Error::invalid(format!("{} generator needs a gold answer", self.cfg.kind)))?;
        let text = match self.cfg.kind {
            GeneratorKind::EchoStub => format!("{}\n{}", short_line(gold.short), gold.long),
            GeneratorKind::CorruptStub => self.corrupt(gold),
            GeneratorKind::ContradictStub => Self::contradict(gold),
            GeneratorKind::GroundedStub => {
                if Self::context_supports(prompt, gold) {
                    format!("{}\n{}", short_line(gold.short), gold.long)
                } else {
                    format!("{}\n{}", short_line(Some(ShortLabel::Maybe)), DECLINE_ANSWER)
                }
            }
            GeneratorKind::RemoteChat => unreachable!("remote configs never build a stub"),
        };
        Ok(Completion { text, finish_reason: Some("stop".into()) })
    }
}

#[cfg(feature = "remote")]
pub struct RemoteGenerator {
    client: crate::remote::ChatClient,
    model_name: String,
    temperature: f64,
    max_tokens: u32,
}

#[cfg(feature = "remote")]
impl RemoteGenerator {
    pub fn new(cfg: &GeneratorConfig) -> Self {
        let url = cfg.endpoint_url.as_deref().unwrap_or_default();
        Self::with_client(crate::remote::JsonClient::new(url, cfg.max_in_flight), cfg)
    }

    pub fn with_client(client: crate::remote::JsonClient, cfg: &GeneratorConfig) -> Self {
        RemoteGenerator {
            client: crate::remote::ChatClient::new(client),
            model_name: cfg.model_name.clone(),
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
        }
    }
}

#[cfg(feature = "remote")]
impl Generator for RemoteGenerator {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn generate(&self, prompt: &PromptBundle, _gold: Option<&GoldAnswer>) -> Result<Completion> {
        let messages: Vec<crate::remote::ChatMessage> = prompt
            .messages()
            .into_iter()
            .map(|m| crate::remote::ChatMessage { role: m.role, content: m.content })
            .collect();
        let out = self.client.complete(&self.model_name, &messages, self.temperature, self.max_tokens)?;
        Ok(Completion { text: out.content, finish_reason: out.finish_reason })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedAnswer {
    pub short_label: ShortLabel,
    pub long_text: String,
    pub cited_labels: BTreeSet<String>,
    pub raw: String,
    /// No yes/no/maybe label could be found.
    pub unparsed: bool,
    /// Citation labels in the text that the prompt never defined.
    pub unknown_citations: usize,
    /// The backend stopped on its length limit.
    pub truncated: bool,
}

fn strip_word(word: &str) -> &str {
    word.trim_matches(|c: char| !c.is_alphanumeric())
}

fn find_short_line(raw: &str) -> Option<(usize, usize, &str)> {
    let mut offset = 0;
    for line in raw.split_inclusive('\n') {
        let trimmed = line.trim_start();
        if trimmed.len() >= 6 && trimmed[..6].eq_ignore_ascii_case("short:") {
            return Some((offset, offset + line.len(), trimmed[6..].trim()));
        }
        offset += line.len();
    }
    None
}

/// `[C<digits>]` labels in order of appearance.
fn citation_labels(text: &str) -> Vec<String> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'[' && i + 1 < bytes.len() && bytes[i + 1] == b'C' {
            let digits = bytes[i + 2..].iter().take_while(|b| b.is_ascii_digit()).count();
            let close = i + 2 + digits;
            if digits > 0 && close < bytes.len() && bytes[close] == b']' {
                out.push(text[i..=close].to_string());
                i = close + 1;
                continue;
            }
        }
        i += 1;
    }
    out
}

pub fn parse_answer(raw: &str, prompt: &PromptBundle) -> GeneratedAnswer {
    let (short_label, unparsed, long_text) = match find_short_line(raw) {
        Some((start, end, value)) => {
            let word = value.split_whitespace().next().map(strip_word).unwrap_or("");
            let label = word.parse::<ShortLabel>().ok();
            let long = format!("{}{}", &raw[..start], &raw[end..]).trim().to_string();
            (label.unwrap_or(ShortLabel::None), label.is_none(), long)
        }
        None => {
            let first_word = raw.split_whitespace().next().map(strip_word).unwrap_or("");
            let label = match first_word.to_ascii_lowercase().as_str() {
                "yes" => Some(ShortLabel::Yes),
                "no" => Some(ShortLabel::No),
                "maybe" => Some(ShortLabel::Maybe),
                _ => None,
            };
            (label.unwrap_or(ShortLabel::None), label.is_none(), raw.trim().to_string())
        }
    };
    let known: BTreeSet<&str> = prompt.labels().collect();
    let mut cited_labels = BTreeSet::new();
    let mut unknown_citations = 0;
    for label in citation_labels(&long_text) {
        if known.contains(label.as_str()) {
            cited_labels.insert(label);
        } else {
            unknown_citations += 1;
        }
    }
    GeneratedAnswer {
        short_label,
        long_text,
        cited_labels,
        raw: raw.to_string(),
        unparsed,
        unknown_citations,
        truncated: false,
    }
}

pub fn parse_completion(completion: &Completion, prompt: &PromptBundle) -> GeneratedAnswer {
    let mut answer = parse_answer(&completion.text, prompt);
    answer.truncated = completion.finish_reason.as_deref() == Some("length");
    answer
}
