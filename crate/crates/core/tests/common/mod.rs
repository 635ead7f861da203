#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ragev_core::bench::{QAItem, QuestionType};
use ragev_core::corpus::{Collection, CollectionKind, Document};
use ragev_core::metrics::ShortLabel;

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "nu", "pe", "ra", "si", "to", "vu", "xe", "zo", "bi", "da", "fo", "gu", "he",
];
const FILLER: [&str; 8] = ["the", "study", "patients", "results", "of", "in", "with", "showed"];

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(2..=4);
    (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect()
}

/// Synthetic question set in the usual yes/no/maybe format: each document
/// has its own vocabulary, and each item asks about one sentence of one
/// document, whose text is the gold long answer.
pub struct Synthetic {
    pub collection: Collection,
    pub items: Vec<QAItem>,
    /// Sentences per document, as written into the documents.
    pub sentences: Vec<Vec<String>>,
}

pub fn synthetic(n_docs: usize, n_items: usize, labels: &[ShortLabel], seed: u64) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut collection = Collection::create("synthetic", CollectionKind::Relevant).unwrap();
    let mut sentences = Vec::new();
    for d in 0..n_docs {
        let vocab: Vec<String> = (0..30).map(|_| pseudo_word(&mut rng)).collect();
        let doc_sentences: Vec<String> = (0..8)
            .map(|_| {
                let words: Vec<String> = (0..10)
                    .map(|_| {
                        if rng.gen_bool(0.3) {
                            FILLER.choose(&mut rng).unwrap().to_string()
                        } else {
                            vocab.choose(&mut rng).unwrap().clone()
                        }
                    })
                    .collect();
                let mut s = words.join(" ");
                s.push('.');
                s
            })
            .collect();
        let doc = Document::new(format!("doc-{d}"), format!("Document {d}"), doc_sentences.join(" "));
        collection.add_document(doc).unwrap();
        sentences.push(doc_sentences);
    }
    let items = (0..n_items)
        .map(|i| {
            let d = i % n_docs;
            let s = (i / n_docs) % sentences[d].len();
            let sentence = &sentences[d][s];
            let keywords: Vec<&str> = sentence
                .trim_end_matches('.')
                .split(' ')
                .filter(|w| !FILLER.contains(w))
                .take(3)
                .collect();
            QAItem {
                item_id: format!("q{i:03}"),
                question: format!("Does {} relate to the outcome?", keywords.join(" ")),
                gold_short: labels[i % labels.len()],
                gold_long: sentence.clone(),
                question_type: QuestionType::YesNo,
                contexts: vec![sentence.clone(), sentences[d][(s + 1) % sentences[d].len()].clone()],
                source_doc_ids: vec![format!("doc-{d}")],
            }
        })
        .collect();
    Synthetic { collection, items, sentences }
}

#[derive(Debug, Clone)]
pub struct MockRequest {
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl MockRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.body).unwrap()
    }
}

type Handler = dyn Fn(&MockRequest) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 server on a loopback port; one thread per connection,
/// every response closes the connection.
pub struct MockServer {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
    pub requests: Arc<Mutex<Vec<MockRequest>>>,
}

impl MockServer {
    pub fn start(handler: impl Fn(&MockRequest) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let (h, r) = (hits.clone(), requests.clone());
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let (handler, h, r) = (handler.clone(), h.clone(), r.clone());
                std::thread::spawn(move || serve(stream, handler.as_ref(), &h, &r));
            }
        });
        MockServer { url, hits, requests }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

fn serve(stream: TcpStream, handler: &Handler, hits: &AtomicUsize, log: &Mutex<Vec<MockRequest>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
        return;
    }
    let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
    let mut headers = Vec::new();
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            headers.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let len: usize = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(0);
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).unwrap();
    let req = MockRequest { path, headers, body: String::from_utf8(body).unwrap() };
    hits.fetch_add(1, Ordering::SeqCst);
    let (status, text) = handler(&req);
    log.lock().unwrap().push(req);
    let mut stream = stream;
    let reason = if status < 300 { "OK" } else { "Error" };
    let _ = write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    );
    let _ = stream.flush();
}

/// Chat-completions response body with a single choice.
pub fn chat_body(content: &str, finish_reason: &str) -> String {
    serde_json::json!({
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": finish_reason}]
    })
    .to_string()
}

/// Replaces the values of the wall-clock fields with 0, leaving every
/// other byte in place.
pub fn strip_timing(text: &str) -> String {
    let mut out = text.to_string();
    for key in ["\"started_at\":", "\"wall_clock_ms\":"] {
        let mut from = 0;
        while let Some(pos) = out[from..].find(key) {
            let start = from + pos + key.len();
            let end = start + out[start..].find(|c: char| !c.is_ascii_digit()).unwrap_or(out.len() - start);
            out.replace_range(start..end, "0");
            from = start + 1;
        }
    }
    out
}
