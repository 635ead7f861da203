use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use ragev_core::bench::runner::{is_complete, run_path};
use ragev_core::bench::{
    expand_factorial, load_judgments, load_qa_dataset, load_runs, write_report, BaseSettings, ExperimentFactors,
    Runner,
};
use ragev_core::corpus::{Collection, Document};
use ragev_core::embedding::{fnv1a64, Embedder};
use ragev_core::index::{build_indexes, Indexes};
use ragev_core::{Error, Result};

use crate::settings::Settings;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}

fn say(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(io_err("<stdout>"))
}

fn valid_name(name: &str) -> Result<()> {
    let ok = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok && name != "." && name != ".." {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "collection name {name:?} may only use letters, digits, '-', '_' and '.'"
        )))
    }
}

fn text_document(path: &Path) -> Result<Document> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidArgument(format!("{}: unusable file name", path.display())))?;
    let title = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .map(|l| l.trim_start_matches('#').trim().chars().take(120).collect::<String>())
        .unwrap_or_else(|| id.to_string());
    let mut doc = Document::new(id, title, text);
    doc.source_uri = Some(path.display().to_string());
    Ok(doc)
}

fn collect_files(path: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    let meta = std::fs::metadata(path).map_err(io_err(path))?;
    if meta.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(io_err(path))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| !p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.')))
            .collect();
        entries.sort();
        for e in entries {
            collect_files(&e, files)?;
        }
    } else {
        files.push(path.to_path_buf());
    }
    Ok(())
}

pub fn ingest(settings: &Settings, paths: &[PathBuf], force: bool, out: &mut dyn Write) -> Result<u8> {
    let name = settings.collection_name()?;
    valid_name(name)?;
    let mut files = Vec::new();
    for p in paths {
        collect_files(p, &mut files)?;
    }
    let dir = settings.collection_dir(name);
    if dir.join("manifest.json").exists() && !force {
        return Err(Error::Conflict(format!(
            "collection {name} already exists at {}; pass --force to replace it",
            dir.display()
        )));
    }
    let mut collection = Collection::create(name, settings.kind)?;
    for f in &files {
        match f.extension().and_then(|e| e.to_str()) {
            Some("jsonl") => {
                let text = std::fs::read_to_string(f).map_err(io_err(f))?;
                for doc in Collection::parse_jsonl(name, settings.kind, &text)?.documents() {
                    collection.add_document(doc.clone())?;
                }
            }
            _ => collection.add_document(text_document(f)?)?,
        }
    }
    if collection.is_empty() {
        return Err(Error::InvalidArgument("no documents found in the given paths".into()));
    }
    let manifest = collection.save_manifest(&dir)?;
    say(out, &format!("{}\n", manifest.display()))?;
    say(
        out,
        &format!("collection {} ({}): {} documents\n", collection.name, collection.collection_id, collection.len()),
    )?;
    Ok(0)
}

pub fn load_collection(settings: &Settings) -> Result<Collection> {
    Collection::load(settings.collection_path()?)
}

fn index_dir(settings: &Settings, collection: &Collection) -> PathBuf {
    let fingerprint = fnv1a64(collection.to_jsonl().as_bytes(), 0);
    let key: String = format!(
        "{}-{}-{}-{:016x}",
        settings.chunking.size_tokens,
        settings.chunking.overlap_tokens,
        settings.provider.cache_key(),
        fingerprint
    )
    .chars()
    .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
    .collect();
    settings.data_dir.join("indexes").join(&collection.collection_id).join(key)
}

/// Cached indexes for the current settings, built and saved when absent.
pub fn open_indexes(
    settings: &Settings,
    collection: &Collection,
    embedder: &dyn Embedder,
    force: bool,
) -> Result<(Indexes, PathBuf, bool)> {
    let dir = index_dir(settings, collection);
    if !force && dir.join("meta.json").exists() {
        return Ok((Indexes::load(&dir)?, dir, false));
    }
    let built = build_indexes(collection, &settings.chunking, embedder, &settings.provider.cache_key())?;
    built.save(&dir)?;
    Ok((built, dir, true))
}

pub fn index(settings: &Settings, force: bool, out: &mut dyn Write) -> Result<u8> {
    let collection = load_collection(settings)?;
    let embedder = settings.provider.build()?;
    let (ix, dir, built) = open_indexes(settings, &collection, embedder.as_ref(), force)?;
    say(
        out,
        &format!(
            "{} {}: {} chunks from {} documents, {} terms, {}-dim vectors\n",
            if built { "built" } else { "cached" },
            dir.display(),
            ix.chunks().len(),
            ix.documents().len(),
            ix.inverted().terms().count(),
            ix.vectors().dim()
        ),
    )?;
    Ok(0)
}

fn group_codes(group_by: &str) -> Vec<&str> {
    group_by.split(',').map(str::trim).filter(|c| !c.is_empty()).collect()
}

pub fn eval(
    settings: &Settings,
    dataset: &Path,
    factors_path: &Path,
    force: bool,
    group_by: &str,
    out: &mut dyn Write,
) -> Result<u8> {
    let factors = ExperimentFactors::load(factors_path)?;
    let items = load_qa_dataset(dataset)?;
    let collection = load_collection(settings)?;
    let configs = expand_factorial(&factors, &factors.norag)?;
    let base = BaseSettings {
        chunking: settings.chunking,
        provider: settings.provider.clone(),
        pipeline: settings.pipeline,
        retrieval: settings.retrieval.clone(),
        generator: settings.generator.clone(),
        seed: settings.seed,
    };
    let runner = Runner::new(factors, base);
    let total = configs.len();
    let pending = configs.iter().filter(|c| force || !is_complete(run_path(&settings.out, c))).count();
    eprintln!("{total} configs, {pending} to run, {} items each", items.len());
    let mut done = 0;
    let summary = runner.sweep(&configs, &collection, &items, &settings.out, force, |cfg, outcome| {
        done += 1;
        let status = match outcome {
            ragev_core::bench::runner::RunOutcome::Completed => "done".to_string(),
            ragev_core::bench::runner::RunOutcome::Skipped => "already complete".to_string(),
            ragev_core::bench::runner::RunOutcome::Failed(e) => format!("FAILED: {e}"),
        };
        eprintln!("[{done}/{total}] {}: {status}", cfg.mnemonic);
    })?;
    let records = load_runs(&settings.out)?;
    if !records.is_empty() {
        let codes = group_codes(group_by);
        write_report(&settings.out, &records, &codes)?;
        say(out, &ragev_core::bench::aggregate(&records, &codes)?.render_text())?;
    }
    say(
        out,
        &format!(
            "\n{} completed, {} skipped, {} failed; records in {}\n",
            summary.completed.len(),
            summary.skipped.len(),
            summary.failed.len(),
            settings.out.join("runs").display()
        ),
    )?;
    let transport = summary
        .failed
        .iter()
        .any(|(_, e)| e.is_transport() || matches!(e, Error::RunAborted { .. }));
    Ok(match (summary.failed.is_empty(), transport) {
        (true, _) => 0,
        (false, true) => 4,
        (false, false) => 1,
    })
}

pub fn report(settings: &Settings, group_by: &str, out: &mut dyn Write) -> Result<u8> {
    let records = load_runs(&settings.out)?;
    if records.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no complete run records under {}",
            settings.out.join("runs").display()
        )));
    }
    let codes = group_codes(group_by);
    let written = write_report(&settings.out, &records, &codes)?;
    say(out, &ragev_core::bench::aggregate(&records, &codes)?.render_text())?;
    for p in written {
        say(out, &format!("wrote {}\n", p.display()))?;
    }
    Ok(0)
}

pub fn correlate(
    settings: &Settings,
    judgments: &Path,
    metric: &str,
    only: Option<&str>,
    out: &mut dyn Write,
) -> Result<u8> {
    if !ragev_core::bench::runner::METRICS.contains(&metric) {
        return Err(Error::InvalidArgument(format!(
            "unknown metric {metric}; expected one of {}",
            ragev_core::bench::runner::METRICS.join(", ")
        )));
    }
    let human = load_judgments(judgments)?;
    let records: Vec<_> = load_runs(&settings.out)?
        .into_iter()
        .filter(|r| only.is_none_or(|m| r.header.mnemonic == m))
        .collect();
    if records.is_empty() {
        return Err(Error::InvalidArgument(match only {
            Some(m) => format!("no complete run named {m}"),
            None => format!("no complete run records under {}", settings.out.join("runs").display()),
        }));
    }
    let mut any = false;
    let mut last_err = None;
    say(out, &format!("{:<32} {:>5} {:>8}\n", "run", "n", "r"))?;
    for rec in &records {
        let machine: BTreeMap<String, f64> = rec
            .items
            .iter()
            .filter_map(|it| it.metric(metric).map(|v| (it.item_id.clone(), v)))
            .collect();
        match ragev_core::bench::correlate(&human, &machine) {
            Ok(c) => {
                any = true;
                say(out, &format!("{:<32} {:>5} {:>8.4}\n", rec.header.mnemonic, c.n, c.r))?;
            }
            Err(e) => {
                say(out, &format!("{:<32} {:>5} {:>8}  {e}\n", rec.header.mnemonic, "-", "-"))?;
                last_err = Some(e);
            }
        }
    }
    match (any, last_err) {
        (false, Some(e)) => Err(e),
        _ => Ok(0),
    }
}
