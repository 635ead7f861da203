//! Executing configs: retrieval, generation, scoring and run persistence.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, LineWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::dataset::QAItem;
use super::factorial::{resolve_config, BaseSettings, ExperimentConfig, ExperimentFactors, ResolvedConfig};
use super::stats::{mean_sem, MeanSem};
use crate::corpus::Collection;
use crate::embedding::{Embedder, HashedNgramEmbedder, DEFAULT_HASHED_DIM};
use crate::generation::{assemble_prompt, parse_completion, Generator};
use crate::index::{build_indexes, Indexes};
use crate::metrics::{
    bert_score_texts, binary_classification_metrics, classification_metrics, rouge_l, rouge_lsum, rouge_n,
    BertScore, ClassificationReport, ConfusionMatrix3, RougeScore, ShortLabel,
};
use crate::retrieval::{retrieve, PipelineKind, RetrievedContext};
use crate::{Error, Result};

/// Per-item metrics, in report column order. `accuracy` is 1/0 per item
/// with a yes/no/maybe gold label.
pub const METRICS: [&str; 16] = [
    "rouge1_recall",
    "rouge1_precision",
    "rouge1_f1",
    "rouge2_recall",
    "rouge2_precision",
    "rouge2_f1",
    "rougeL_recall",
    "rougeL_precision",
    "rougeL_f1",
    "rougeLsum_recall",
    "rougeLsum_precision",
    "rougeLsum_f1",
    "bert_precision",
    "bert_recall",
    "bert_f1",
    "accuracy",
];

/// Share of failed items above which a run is abandoned.
pub const MAX_FAILED_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: String,
    pub question_type: u8,
    pub status: ItemStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub retrieved: Vec<String>,
    pub gold_short: ShortLabel,
    pub predicted_short: ShortLabel,
    pub answer: String,
    pub cited: Vec<String>,
    pub unparsed: bool,
    pub truncated: bool,
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    #[serde(rename = "rougeL")]
    pub rouge_l: RougeScore,
    #[serde(rename = "rougeLsum")]
    pub rouge_lsum: RougeScore,
    pub bert: BertScore,
    /// `None` when the gold label is `none` or the item failed.
    pub correct: Option<bool>,
}

impl ItemRecord {
    fn failed(item: &QAItem, err: &Error) -> Self {
        ItemRecord {
            item_id: item.item_id.clone(),
            question_type: item.question_type.into(),
            status: ItemStatus::Failed,
            error: Some(err.to_string()),
            retrieved: Vec::new(),
            gold_short: item.gold_short,
            predicted_short: ShortLabel::None,
            answer: String::new(),
            cited: Vec::new(),
            unparsed: true,
            truncated: false,
            rouge1: RougeScore::default(),
            rouge2: RougeScore::default(),
            rouge_l: RougeScore::default(),
            rouge_lsum: RougeScore::default(),
            bert: BertScore::default(),
            correct: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ItemStatus::Ok
    }

    /// Value of a [`METRICS`] entry; `None` for failed items and for
    /// accuracy on unlabeled items.
    pub fn metric(&self, name: &str) -> Option<f64> {
        if !self.is_ok() {
            return None;
        }
        let rouge = |r: &RougeScore, part: &str| match part {
            "recall" => Some(r.recall),
            "precision" => Some(r.precision),
            "f1" => Some(r.f1),
            _ => None,
        };
        let (family, part) = name.split_once('_').unwrap_or((name, ""));
        match family {
            "rouge1" => rouge(&self.rouge1, part),
            "rouge2" => rouge(&self.rouge2, part),
            "rougeL" => rouge(&self.rouge_l, part),
            "rougeLsum" => rouge(&self.rouge_lsum, part),
            "bert" => match part {
                "precision" => Some(self.bert.precision),
                "recall" => Some(self.bert.recall),
                "f1" => Some(self.bert.f1),
                _ => None,
            },
            "accuracy" => self.correct.map(|c| if c { 1.0 } else { 0.0 }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub mnemonic: String,
    pub config: ExperimentConfig,
    pub settings: ResolvedConfig,
    pub seed: u64,
    pub collection_id: String,
    pub dataset_size: usize,
    /// Unix seconds.
    pub started_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub metrics: BTreeMap<String, MeanSem>,
    pub classification: ClassificationReport,
    /// Yes/no items only.
    pub binary: ClassificationReport,
    pub items: usize,
    pub failed: usize,
    pub wall_clock_ms: u64,
}

impl RunAggregate {
    pub fn confusion(&self) -> &ConfusionMatrix3 {
        &self.classification.confusion
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record")]
pub enum RecordLine {
    #[serde(rename = "HEADER")]
    Header(RunHeader),
    #[serde(rename = "ITEM")]
    Item(ItemRecord),
    #[serde(rename = "AGGREGATE")]
    Aggregate(RunAggregate),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub header: RunHeader,
    pub items: Vec<ItemRecord>,
    pub aggregate: RunAggregate,
}

impl RunRecord {
    pub fn config(&self) -> &ExperimentConfig {
        &self.header.config
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = serde_json::to_string(&RecordLine::Header(self.header.clone()))? + "\n";
        for item in &self.items {
            out += &serde_json::to_string(&RecordLine::Item(item.clone()))?;
            out.push('\n');
        }
        out += &serde_json::to_string(&RecordLine::Aggregate(self.aggregate.clone()))?;
        out.push('\n');
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut header = None;
        let mut items = Vec::new();
        let mut aggregate = None;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: RecordLine = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            let misplaced = |what: &str| Error::Parse { line: i + 1, message: format!("unexpected {what} line") };
            match parsed {
                RecordLine::Header(h) if header.is_none() => header = Some(h),
                RecordLine::Header(_) => return Err(misplaced("HEADER")),
                RecordLine::Item(_) | RecordLine::Aggregate(_) if header.is_none() || aggregate.is_some() => {
                    return Err(misplaced("record"))
                }
                RecordLine::Item(it) => items.push(it),
                RecordLine::Aggregate(a) => aggregate = Some(a),
            }
        }
        match (header, aggregate) {
            (Some(header), Some(aggregate)) => Ok(RunRecord { header, items, aggregate }),
            _ => Err(Error::Parse {
                line: text.lines().count(),
                message: "run record is incomplete".into(),
            }),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

/// Whether a run file ends with its AGGREGATE line.
pub fn is_complete(path: impl AsRef<Path>) -> bool {
    let Ok(file) = File::open(path.as_ref()) else { return false };
    let last = BufReader::new(file)
        .lines()
        .map_while(|l| l.ok())
        .filter(|l| !l.trim().is_empty())
        .last();
    last.and_then(|l| serde_json::from_str::<RecordLine>(&l).ok())
        .is_some_and(|r| matches!(r, RecordLine::Aggregate(_)))
}

/// Aggregates computed from item rows alone.
pub fn summarize_items(items: &[ItemRecord]) -> Result<RunAggregate> {
    let mut metrics = BTreeMap::new();
    for name in METRICS {
        let values: Vec<f64> = items.iter().filter_map(|it| it.metric(name)).collect();
        if let Some(s) = mean_sem(&values) {
            metrics.insert(name.to_string(), s);
        }
    }
    let ok: Vec<&ItemRecord> = items.iter().filter(|it| it.is_ok()).collect();
    let pred: Vec<ShortLabel> = ok.iter().map(|it| it.predicted_short).collect();
    let gold: Vec<ShortLabel> = ok.iter().map(|it| it.gold_short).collect();
    Ok(RunAggregate {
        metrics,
        classification: classification_metrics(&pred, &gold)?,
        binary: binary_classification_metrics(&pred, &gold)?,
        items: items.len(),
        failed: items.len() - ok.len(),
        wall_clock_ms: 0,
    })
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Executes configs against one collection and dataset, reusing indexes
/// and embedders across configs that share them.
pub struct Runner {
    factors: ExperimentFactors,
    base: BaseSettings,
    scorer: HashedNgramEmbedder,
    indexes: Mutex<HashMap<String, Arc<Indexes>>>,
    embedders: Mutex<HashMap<String, Arc<dyn Embedder>>>,
}

impl Runner {
    pub fn new(factors: ExperimentFactors, base: BaseSettings) -> Self {
        Runner {
            factors,
            base,
            scorer: HashedNgramEmbedder::new(DEFAULT_HASHED_DIM).expect("positive dimension"),
            indexes: Mutex::new(HashMap::new()),
            embedders: Mutex::new(HashMap::new()),
        }
    }

    pub fn factors(&self) -> &ExperimentFactors {
        &self.factors
    }

    pub fn base(&self) -> &BaseSettings {
        &self.base
    }

    /// Embedder used for BERTScore, fixed so scores are comparable across
    /// EMB levels.
    pub fn scorer(&self) -> &dyn Embedder {
        &self.scorer
    }

    pub fn resolve(&self, cfg: &ExperimentConfig) -> Result<ResolvedConfig> {
        resolve_config(cfg, &self.factors, &self.base)
    }

    fn embedder(&self, settings: &ResolvedConfig) -> Result<Arc<dyn Embedder>> {
        let key = settings.provider.cache_key();
        let mut cache = self.embedders.lock().expect("embedder cache poisoned");
        if let Some(e) = cache.get(&key) {
            return Ok(e.clone());
        }
        let e: Arc<dyn Embedder> = Arc::from(settings.provider.build()?);
        cache.insert(key, e.clone());
        Ok(e)
    }

    fn indexes(&self, collection: &Collection, settings: &ResolvedConfig, embedder: &dyn Embedder) -> Result<Arc<Indexes>> {
        let key = format!(
            "{}|{}/{}|{}",
            collection.collection_id,
            settings.chunking.size_tokens,
            settings.chunking.overlap_tokens,
            settings.provider.cache_key()
        );
        if let Some(ix) = self.indexes.lock().expect("index cache poisoned").get(&key) {
            return Ok(ix.clone());
        }
        let built = Arc::new(build_indexes(
            collection,
            &settings.chunking,
            embedder,
            &settings.provider.cache_key(),
        )?);
        self.indexes.lock().expect("index cache poisoned").insert(key, built.clone());
        Ok(built)
    }

    /// Runs one config, streaming JSON Lines to `sink`: the header, each
    /// item as soon as its batch finishes, then the aggregate computed from
    /// the written items.
    pub fn run(
        &self,
        cfg: &ExperimentConfig,
        collection: &Collection,
        dataset: &[QAItem],
        sink: &mut dyn Write,
    ) -> Result<RunRecord> {
        let clock = Instant::now();
        let settings = self.resolve(cfg)?;
        let generator = settings.generator.build()?;
        let retrieval = if settings.pipeline == PipelineKind::Vanilla {
            None
        } else {
            let embedder = self.embedder(&settings)?;
            let indexes = self.indexes(collection, &settings, embedder.as_ref())?;
            Some((embedder, indexes))
        };
        let header = RunHeader {
            mnemonic: cfg.mnemonic.clone(),
            config: cfg.clone(),
            settings: settings.clone(),
            seed: self.base.seed,
            collection_id: collection.collection_id.clone(),
            dataset_size: dataset.len(),
            started_at: unix_now(),
        };
        write_line(sink, &RecordLine::Header(header.clone()))?;

        let job = ItemJob {
            settings: &settings,
            retrieval: retrieval.as_ref().map(|(e, ix)| (e.as_ref(), ix.as_ref())),
            generator: generator.as_ref(),
            scorer: &self.scorer,
        };
        let fan_out = settings.generator.max_in_flight.max(1);
        let mut items = Vec::with_capacity(dataset.len());
        for batch in dataset.chunks(fan_out) {
            let done: Vec<ItemRecord> = if batch.len() == 1 {
                vec![job.run(&batch[0])]
            } else {
                std::thread::scope(|s| {
                    let handles: Vec<_> = batch.iter().map(|item| s.spawn(|| job.run(item))).collect();
                    handles.into_iter().map(|h| h.join().expect("item worker panicked")).collect()
                })
            };
            for item in done {
                write_line(sink, &RecordLine::Item(item.clone()))?;
                items.push(item);
            }
        }

        let failed = items.iter().filter(|it| !it.is_ok()).count();
        if failed as f64 > MAX_FAILED_FRACTION * items.len() as f64 {
            return Err(Error::RunAborted { mnemonic: cfg.mnemonic.clone(), failed, total: items.len() });
        }
        let mut aggregate = summarize_items(&items)?;
        aggregate.wall_clock_ms = clock.elapsed().as_millis() as u64;
        write_line(sink, &RecordLine::Aggregate(aggregate.clone()))?;
        Ok(RunRecord { header, items, aggregate })
    }

    /// Runs every config not already complete under `out_dir/runs`. With
    /// `force`, completed runs are redone too. A failing config is reported
    /// and the sweep moves on.
    pub fn sweep(
        &self,
        configs: &[ExperimentConfig],
        collection: &Collection,
        dataset: &[QAItem],
        out_dir: &Path,
        force: bool,
        mut progress: impl FnMut(&ExperimentConfig, &RunOutcome),
    ) -> Result<SweepSummary> {
        let runs = runs_dir(out_dir);
        std::fs::create_dir_all(&runs).map_err(|e| Error::io(&runs, e))?;
        let mut summary = SweepSummary::default();
        for cfg in configs {
            let path = run_path(out_dir, cfg);
            let outcome = if !force && is_complete(&path) {
                RunOutcome::Skipped
            } else {
                let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
                let mut writer = LineWriter::new(file);
                match self.run(cfg, collection, dataset, &mut writer) {
                    Ok(_) => RunOutcome::Completed,
                    Err(e @ Error::Io { .. }) => return Err(e),
                    Err(e) => RunOutcome::Failed(e),
                }
            };
            progress(cfg, &outcome);
            match outcome {
                RunOutcome::Completed => summary.completed.push(cfg.mnemonic.clone()),
                RunOutcome::Skipped => summary.skipped.push(cfg.mnemonic.clone()),
                RunOutcome::Failed(e) => summary.failed.push((cfg.mnemonic.clone(), e)),
            }
        }
        Ok(summary)
    }
}

#[derive(Debug)]
pub enum RunOutcome {
    Completed,
    Skipped,
    Failed(Error),
}

#[derive(Debug, Default)]
pub struct SweepSummary {
    pub completed: Vec<String>,
    pub skipped: Vec<String>,
    pub failed: Vec<(String, Error)>,
}

pub fn runs_dir(out_dir: &Path) -> PathBuf {
    out_dir.join("runs")
}

pub fn run_path(out_dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    runs_dir(out_dir).join(format!("{}.jsonl", cfg.file_stem()))
}

/// Complete run records under `out_dir/runs`, in file-name order.
pub fn load_runs(out_dir: &Path) -> Result<Vec<RunRecord>> {
    let dir = runs_dir(out_dir);
    let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    paths.into_iter().filter(|p| is_complete(p)).map(RunRecord::load).collect()
}

fn write_line(sink: &mut dyn Write, line: &RecordLine) -> Result<()> {
    let mut text = serde_json::to_string(line)?;
    text.push('\n');
    sink.write_all(text.as_bytes())
        .map_err(|e| Error::io("<run record>", e))
}

struct ItemJob<'a> {
    settings: &'a ResolvedConfig,
    retrieval: Option<(&'a dyn Embedder, &'a Indexes)>,
    generator: &'a dyn Generator,
    scorer: &'a dyn Embedder,
}

impl ItemJob<'_> {
    fn run(&self, item: &QAItem) -> ItemRecord {
        self.try_run(item).unwrap_or_else(|e| ItemRecord::failed(item, &e))
    }

    fn try_run(&self, item: &QAItem) -> Result<ItemRecord> {
        let context = match self.retrieval {
            Some((embedder, indexes)) => retrieve(
                self.settings.pipeline,
                &item.question,
                indexes,
                &self.settings.retrieval,
                embedder,
            )?,
            None => RetrievedContext::empty(PipelineKind::Vanilla, &item.question),
        };
        let prompt = assemble_prompt(&item.question, &context, &[]);
        let gold = item.gold();
        let completion = self.generator.generate(&prompt, Some(&gold))?;
        let answer = parse_completion(&completion, &prompt);
        let long = answer.long_text.as_str();
        let reference = item.gold_long.as_str();
        Ok(ItemRecord {
            item_id: item.item_id.clone(),
            question_type: item.question_type.into(),
            status: ItemStatus::Ok,
            error: None,
            retrieved: context.chunk_ids(),
            gold_short: item.gold_short,
            predicted_short: answer.short_label,
            cited: answer.cited_labels.iter().cloned().collect(),
            unparsed: answer.unparsed,
            truncated: answer.truncated,
            rouge1: rouge_n(long, reference, 1).unwrap_or_default(),
            rouge2: rouge_n(long, reference, 2).unwrap_or_default(),
            rouge_l: rouge_l(long, reference),
            rouge_lsum: rouge_lsum(long, reference),
            bert: bert_score_texts(self.scorer, long, reference).unwrap_or_default(),
            correct: match item.gold_short {
                ShortLabel::None => None,
                gold => Some(answer.short_label == gold),
            },
            answer: answer.long_text,
        })
    }
}
