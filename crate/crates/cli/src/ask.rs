use std::io::{BufRead, Write};

use ragev_core::corpus::Collection;
use ragev_core::embedding::Embedder;
use ragev_core::generation::{
    assemble_prompt, parse_completion, GeneratedAnswer, Generator, GoldAnswer, PromptBundle, Turn,
};
use ragev_core::index::Indexes;
use ragev_core::metrics::{split_sentences, ShortLabel};
use ragev_core::retrieval::{retrieve, PipelineKind, RetrievedContext};
use ragev_core::Result;

use crate::commands::{io_err, load_collection, open_indexes};
use crate::settings::Settings;

pub struct GoldFlags {
    pub short: Option<String>,
    pub long: Option<String>,
}

const PSEUDO_GOLD_BLOCKS: usize = 2;
const PSEUDO_GOLD_TOKENS: usize = 40;

/// Reference answer for stubs when none is given: the first sentence of
/// each of the top context blocks, cited.
fn pseudo_gold(prompt: &PromptBundle) -> GoldAnswer {
    let sentences: Vec<String> = prompt
        .context_blocks
        .iter()
        .take(PSEUDO_GOLD_BLOCKS)
        .map(|b| {
            let first = split_sentences(&b.text).into_iter().next().unwrap_or(&b.text);
            let words: Vec<&str> = first.split_whitespace().take(PSEUDO_GOLD_TOKENS).collect();
            format!("{} {}.", words.join(" ").trim_end_matches(['.', '!', '?']), b.label)
        })
        .collect();
    let long = if sentences.is_empty() {
        "No context was retrieved for this question.".to_string()
    } else {
        sentences.join(" ")
    };
    GoldAnswer { short: Some(ShortLabel::Maybe), long, ..Default::default() }
}

fn gold_for(flags: &GoldFlags, prompt: &PromptBundle) -> Result<GoldAnswer> {
    let mut gold = pseudo_gold(prompt);
    if let Some(s) = &flags.short {
        gold.short = match s.parse()? {
            ShortLabel::None => None,
            label => Some(label),
        };
    }
    if let Some(l) = &flags.long {
        gold.long = l.clone();
    }
    Ok(gold)
}

struct Session {
    settings: Settings,
    collection: Option<Collection>,
    retrieval: Option<(Box<dyn Embedder>, Indexes)>,
    generator: Box<dyn Generator>,
}

impl Session {
    fn open(settings: &Settings) -> Result<Self> {
        let needs_index = settings.pipeline != PipelineKind::Vanilla;
        let collection = if needs_index || settings.collection.is_some() {
            Some(load_collection(settings)?)
        } else {
            None
        };
        let retrieval = match (&collection, needs_index) {
            (Some(c), true) => {
                let embedder = settings.provider.build()?;
                let (ix, _, _) = open_indexes(settings, c, embedder.as_ref(), false)?;
                Some((embedder, ix))
            }
            _ => None,
        };
        Ok(Session { settings: settings.clone(), collection, retrieval, generator: settings.generator.build()? })
    }

    fn answer(&self, question: &str, history: &[Turn], flags: &GoldFlags) -> Result<(GeneratedAnswer, RetrievedContext, PromptBundle)> {
        let context = match &self.retrieval {
            Some((embedder, ix)) => retrieve(
                self.settings.pipeline,
                question,
                ix,
                &self.settings.retrieval,
                embedder.as_ref(),
            )?,
            None => RetrievedContext::empty(PipelineKind::Vanilla, question),
        };
        let prompt = assemble_prompt(question, &context, history);
        let gold = gold_for(flags, &prompt)?;
        let completion = self.generator.generate(&prompt, Some(&gold))?;
        Ok((parse_completion(&completion, &prompt), context, prompt))
    }

    fn title(&self, doc_id: &str) -> String {
        self.collection
            .as_ref()
            .and_then(|c| c.document(doc_id))
            .map(|d| d.title.clone())
            .unwrap_or_else(|| doc_id.to_string())
    }

    fn render(&self, answer: &GeneratedAnswer, context: &RetrievedContext, prompt: &PromptBundle) -> String {
        let mut out = format!("SHORT: {}\n{}\n", answer.short_label, answer.long_text.trim());
        if answer.truncated {
            out.push_str("(answer truncated at the token limit)\n");
        }
        out.push_str("\nReferences:\n");
        let cited: Vec<_> = prompt
            .context_blocks
            .iter()
            .filter(|b| answer.cited_labels.contains(&b.label))
            .collect();
        let shown = if cited.is_empty() { prompt.context_blocks.iter().collect() } else { cited };
        if shown.is_empty() {
            out.push_str("  (none)\n");
            return out;
        }
        if answer.cited_labels.is_empty() {
            out.push_str("  (nothing cited; retrieved context follows)\n");
        }
        if context.groups.is_some() {
            let mut docs: Vec<&str> = Vec::new();
            for b in &shown {
                if !docs.contains(&b.doc_id.as_str()) {
                    docs.push(&b.doc_id);
                }
            }
            for doc in docs {
                out.push_str(&format!("  {} ({doc})\n", self.title(doc)));
                for b in shown.iter().filter(|b| b.doc_id == doc) {
                    out.push_str(&format!("    {} {}\n", b.label, b.chunk_id));
                }
            }
        } else {
            for b in shown {
                out.push_str(&format!("  {} {} ({}, {})\n", b.label, self.title(&b.doc_id), b.doc_id, b.chunk_id));
            }
        }
        out
    }
}

pub fn ask_once(settings: &Settings, question: &str, flags: &GoldFlags, out: &mut dyn Write) -> Result<u8> {
    let session = Session::open(settings)?;
    let (answer, context, prompt) = session.answer(question, &[], flags)?;
    out.write_all(session.render(&answer, &context, &prompt).as_bytes())
        .map_err(io_err("<stdout>"))?;
    Ok(0)
}

/// One question per input line; blank lines are skipped and `:quit` ends
/// the session. Earlier turns are passed along with each question.
pub fn repl(settings: &Settings, flags: &GoldFlags, input: impl BufRead, out: &mut dyn Write) -> Result<u8> {
    let session = Session::open(settings)?;
    let mut history = Vec::new();
    eprint!("> ");
    for line in input.lines() {
        let line = line.map_err(io_err("<stdin>"))?;
        let question = line.trim();
        if question == ":quit" || question == ":q" {
            break;
        }
        if !question.is_empty() {
            match session.answer(question, &history, flags) {
                Ok((answer, context, prompt)) => {
                    let text = session.render(&answer, &context, &prompt);
                    out.write_all(text.as_bytes()).map_err(io_err("<stdout>"))?;
                    out.write_all(b"\n").map_err(io_err("<stdout>"))?;
                    out.flush().map_err(io_err("<stdout>"))?;
                    history.push(Turn::user(question));
                    history.push(Turn::assistant(answer.raw));
                }
                Err(e) if e.is_transport() => return Err(e),
                Err(e) => eprintln!("error: {e}"),
            }
        }
        eprint!("> ");
    }
    eprintln!();
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ragev_core::generation::ContextBlock;

    fn prompt_with(blocks: &[(&str, &str)]) -> PromptBundle {
        PromptBundle {
            system_instruction: String::new(),
            history: Vec::new(),
            context_blocks: blocks
                .iter()
                .enumerate()
                .map(|(i, (doc, text))| ContextBlock {
                    label: format!("[C{}]", i + 1),
                    text: text.to_string(),
                    doc_id: doc.to_string(),
                    chunk_id: format!("{doc}#00000"),
                })
                .collect(),
            question: "q".into(),
        }
    }

    #[test]
    fn pseudo_gold_cites_first_sentences() {
        let p = prompt_with(&[("a", "First one. Second."), ("b", "Other text! More."), ("c", "Unused.")]);
        let g = pseudo_gold(&p);
        assert_eq!(g.long, "First one [C1]. Other text [C2].");
        assert_eq!(g.short, Some(ShortLabel::Maybe));
    }

    #[test]
    fn pseudo_gold_without_context() {
        assert_eq!(pseudo_gold(&prompt_with(&[])).long, "No context was retrieved for this question.");
    }

    #[test]
    fn gold_flags_override() {
        let flags = GoldFlags { short: Some("no".into()), long: Some("Because.".into()) };
        let g = gold_for(&flags, &prompt_with(&[("a", "x.")])).unwrap();
        assert_eq!((g.short, g.long.as_str()), (Some(ShortLabel::No), "Because."));
        let bad = GoldFlags { short: Some("perhaps".into()), long: None };
        assert!(gold_for(&bad, &prompt_with(&[])).is_err());
    }
}
