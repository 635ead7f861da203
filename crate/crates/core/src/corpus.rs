//! Documents, collections and their JSON Lines interchange format.
//!
//! A collection file holds one document per line:
//!
//! ```text
//! {"id":"d1","title":"Title","text":"Plain text body","source_uri":"file:///d1.pdf","metadata":{"year":"2021"}}
//! ```
//!
//! `source_uri` and `metadata` are optional. A manifest ties a collection id,
//! name and kind to one or more document sources, each either a path to a
//! JSON Lines file (relative to the manifest) or an inline document object.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub title: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_uri: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            doc_id: doc_id.into(),
            title: title.into(),
            text: text.into(),
            source_uri: None,
            metadata: BTreeMap::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.doc_id.is_empty() {
            return Err(Error::invalid("document id is empty"));
        }
        if self.text.trim().is_empty() {
            return Err(Error::invalid(format!("document {} has empty text", self.doc_id)));
        }
        Ok(())
    }
}

/// How a collection relates to the questions asked of it. Metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectionKind {
    #[default]
    Relevant,
    SomeNoise,
    NoiseOnly,
    Contrafactual,
}

impl CollectionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CollectionKind::Relevant => "relevant",
            CollectionKind::SomeNoise => "some_noise",
            CollectionKind::NoiseOnly => "noise_only",
            CollectionKind::Contrafactual => "contrafactual",
        }
    }
}

impl fmt::Display for CollectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CollectionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "relevant" => Ok(CollectionKind::Relevant),
            "some_noise" => Ok(CollectionKind::SomeNoise),
            "noise_only" => Ok(CollectionKind::NoiseOnly),
            "contrafactual" => Ok(CollectionKind::Contrafactual),
            other => Err(Error::invalid(format!("unknown collection kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Collection {
    pub collection_id: String,
    pub name: String,
    pub kind: CollectionKind,
    documents: Vec<Document>,
    ids: HashSet<String>,
}

impl Collection {
    /// Empty collection. The id is derived from the name and kind, so the
    /// same arguments always give the same id.
    pub fn create(name: &str, kind: CollectionKind) -> Result<Self> {
        if name.trim().is_empty() {
            return Err(Error::invalid("collection name is empty"));
        }
        Ok(Self::with_id(collection_id_for(name, kind), name, kind))
    }

    fn with_id(collection_id: String, name: &str, kind: CollectionKind) -> Self {
        Collection {
            collection_id,
            name: name.to_string(),
            kind,
            documents: Vec::new(),
            ids: HashSet::new(),
        }
    }

    pub fn add_document(&mut self, doc: Document) -> Result<()> {
        doc.validate()?;
        if self.ids.contains(&doc.doc_id) {
            return Err(Error::Conflict(format!(
                "document {} already in collection {}",
                doc.doc_id, self.name
            )));
        }
        self.ids.insert(doc.doc_id.clone());
        self.documents.push(doc);
        Ok(())
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Load a JSON Lines document file. The collection is named after the
    /// file stem and has kind [`CollectionKind::Relevant`].
    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .filter(|s| !s.is_empty())
            .unwrap_or("collection");
        let mut collection = Collection::create(name, CollectionKind::Relevant)?;
        collection.extend_from_jsonl(path)?;
        Ok(collection)
    }

    pub fn parse_jsonl(name: &str, kind: CollectionKind, input: &str) -> Result<Self> {
        let mut collection = Collection::create(name, kind)?;
        collection.extend_from_str(input)?;
        Ok(collection)
    }

    fn extend_from_jsonl(&mut self, path: &Path) -> Result<()> {
        let input = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.extend_from_str(&input)
    }

    fn extend_from_str(&mut self, input: &str) -> Result<()> {
        for (idx, line) in input.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let line_no = idx + 1;
            let doc: Document = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            self.add_document(doc).map_err(|e| match e {
                Error::InvalidArgument(message) => Error::Parse {
                    line: line_no,
                    message,
                },
                other => other,
            })?;
        }
        Ok(())
    }

    /// Canonical JSON Lines rendering: one document per line, fixed key order,
    /// optional keys omitted when empty, trailing newline.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for doc in &self.documents {
            out.push_str(&serde_json::to_string(doc).expect("document serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_file(path, self.to_jsonl().as_bytes())
    }

    /// Write `documents.jsonl` and `manifest.json` into `dir`, returning the
    /// manifest path.
    pub fn save_manifest(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.save_jsonl(dir.join(DOCUMENTS_FILE))?;
        let manifest = Manifest {
            collection_id: self.collection_id.clone(),
            name: self.name.clone(),
            kind: self.kind,
            documents: vec![DocumentSource::File(DOCUMENTS_FILE.to_string())],
        };
        let path = dir.join(MANIFEST_FILE);
        let mut body = serde_json::to_string_pretty(&manifest)?;
        body.push('\n');
        write_file(&path, body.as_bytes())?;
        Ok(path)
    }

    /// Load a collection from a manifest file, a directory containing
    /// `manifest.json`, or a bare JSON Lines file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.is_dir() {
            return Self::load_manifest(path.join(MANIFEST_FILE));
        }
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::load_manifest(path),
            _ => Self::load_jsonl(path),
        }
    }

    pub fn load_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&body).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        if manifest.name.trim().is_empty() {
            return Err(Error::invalid("manifest has an empty collection name"));
        }
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut collection = Collection::with_id(manifest.collection_id, &manifest.name, manifest.kind);
        for source in manifest.documents {
            match source {
                DocumentSource::File(rel) => collection.extend_from_jsonl(&base.join(rel))?,
                DocumentSource::Inline(doc) => collection.add_document(doc)?,
            }
        }
        Ok(collection)
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DOCUMENTS_FILE: &str = "documents.jsonl";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    collection_id: String,
    name: String,
    #[serde(default)]
    kind: CollectionKind,
    documents: Vec<DocumentSource>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum DocumentSource {
    File(String),
    Inline(Document),
}

fn collection_id_for(name: &str, kind: CollectionKind) -> String {
    let slug: String = name
        .trim()
        .chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect();
    let hash = crate::embedding::fnv1a64(format!("{name}\u{1f}{kind}").as_bytes(), 0);
    format!("{slug}-{:08x}", hash as u32)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(bytes).map_err(|e| Error::io(path, e))
}
