//! Flag and config-file merging. Flags win over the config file, which
//! wins over built-in defaults.

use std::path::{Path, PathBuf};

use ragev_core::chunking::ChunkingParams;
use ragev_core::corpus::CollectionKind;
use ragev_core::embedding::{ProviderConfig, ProviderKind, DEFAULT_HASHED_DIM};
use ragev_core::generation::{GeneratorConfig, GeneratorKind};
use ragev_core::retrieval::{PipelineKind, RetrievalParams};
use ragev_core::{Error, Result};
use serde::Deserialize;

use crate::Options;

/// Config file contents; every key mirrors the flag of the same name
/// (dashes become underscores).
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub data_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub collection: Option<String>,
    pub kind: Option<String>,
    pub pipeline: Option<String>,
    pub top_k: Option<usize>,
    pub per_doc_m: Option<usize>,
    pub rrf_k: Option<f64>,
    pub no_rerank: Option<bool>,
    pub min_score: Option<f64>,
    pub shy_drop_zero: Option<bool>,
    pub chunk_size: Option<usize>,
    pub overlap: Option<usize>,
    pub provider: Option<String>,
    pub embedding_model: Option<String>,
    pub embedding_dim: Option<usize>,
    pub endpoint: Option<String>,
    pub generator: Option<String>,
    pub model: Option<String>,
    pub corrupt_level: Option<f64>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub max_in_flight: Option<usize>,
    pub seed: Option<u64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
        toml::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub data_dir: PathBuf,
    pub out: PathBuf,
    pub collection: Option<String>,
    pub kind: CollectionKind,
    pub pipeline: PipelineKind,
    pub retrieval: RetrievalParams,
    pub chunking: ChunkingParams,
    pub provider: ProviderConfig,
    pub generator: GeneratorConfig,
    pub seed: u64,
}

pub const DEFAULT_DATA_DIR: &str = "ragev-data";
pub const DEFAULT_OUT_DIR: &str = "ragev-out";

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

impl Settings {
    pub fn resolve(opts: &Options) -> Result<Self> {
        let file = match &opts.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let seed = pick(opts.seed, file.seed, 42);
        let endpoint = opts.endpoint.clone().or(file.endpoint);

        let defaults = RetrievalParams::default();
        let retrieval = RetrievalParams {
            top_k: pick(opts.top_k, file.top_k, defaults.top_k),
            rrf_k: pick(opts.rrf_k, file.rrf_k, defaults.rrf_k),
            per_doc_m: pick(opts.per_doc_m, file.per_doc_m, defaults.per_doc_m),
            rerank: !(opts.no_rerank || file.no_rerank.unwrap_or(false)),
            min_score: pick(opts.min_score, file.min_score, defaults.min_score),
            shy_drop_zero: opts.shy_drop_zero || file.shy_drop_zero.unwrap_or(false),
        };
        retrieval.validate()?;

        let size = pick(opts.chunk_size, file.chunk_size, ChunkingParams::default().size_tokens);
        let chunking = ChunkingParams::new(size, pick(opts.overlap, file.overlap, size / 8))?;

        let provider_kind: ProviderKind = pick(opts.provider.clone(), file.provider, "hashed".into()).parse()?;
        let embedding_model = opts.embedding_model.clone().or(file.embedding_model);
        let provider = match provider_kind {
            ProviderKind::HashedNgram => {
                let mut p = ProviderConfig::hashed(pick(opts.embedding_dim, file.embedding_dim, DEFAULT_HASHED_DIM));
                if let Some(name) = embedding_model {
                    p.model_name = name;
                }
                p
            }
            ProviderKind::RemoteEndpoint => {
                let model = embedding_model
                    .ok_or_else(|| Error::InvalidArgument("the remote provider needs --embedding-model".into()))?;
                let url = endpoint
                    .clone()
                    .ok_or_else(|| Error::InvalidArgument("the remote provider needs --endpoint or RAGEV_BASE_URL".into()))?;
                ProviderConfig::remote(model, url)
            }
        };
        let mut provider = provider;
        if let Some(n) = opts.max_in_flight.or(file.max_in_flight) {
            provider.max_in_flight = n;
        }
        provider.validate()?;

        let generator_kind: GeneratorKind = pick(opts.generator.clone(), file.generator, "echo".into()).parse()?;
        let mut generator = GeneratorConfig::stub(generator_kind);
        if generator_kind == GeneratorKind::RemoteChat {
            generator.model_name = opts
                .model
                .clone()
                .or(file.model)
                .ok_or_else(|| Error::InvalidArgument("the remote generator needs --model".into()))?;
            generator.endpoint_url = Some(
                endpoint.ok_or_else(|| Error::InvalidArgument("the remote generator needs --endpoint or RAGEV_BASE_URL".into()))?,
            );
        } else if let Some(m) = opts.model.clone().or(file.model) {
            generator.model_name = m;
        }
        generator.corrupt_level = pick(opts.corrupt_level, file.corrupt_level, 0.0);
        generator.temperature = pick(opts.temperature, file.temperature, generator.temperature);
        generator.max_tokens = pick(opts.max_tokens, file.max_tokens, generator.max_tokens);
        generator.max_in_flight = pick(opts.max_in_flight, file.max_in_flight, generator.max_in_flight);
        generator.seed = seed;
        generator.validate()?;

        Ok(Settings {
            data_dir: pick(opts.data_dir.clone(), file.data_dir, DEFAULT_DATA_DIR.into()),
            out: pick(opts.out.clone(), file.out, DEFAULT_OUT_DIR.into()),
            collection: opts.collection.clone().or(file.collection),
            kind: pick(opts.kind.clone(), file.kind, "relevant".into()).parse()?,
            pipeline: pick(opts.pipeline.clone(), file.pipeline, "hybrid".into()).parse()?,
            retrieval,
            chunking,
            provider,
            generator,
            seed,
        })
    }

    pub fn collection_name(&self) -> Result<&str> {
        self.collection
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("--collection is required".into()))
    }

    /// Directory a named collection is ingested into.
    pub fn collection_dir(&self, name: &str) -> PathBuf {
        self.data_dir.join("collections").join(name)
    }

    /// `--collection` as an existing path, or the named ingested collection.
    pub fn collection_path(&self) -> Result<PathBuf> {
        let name = self.collection_name()?;
        let as_path = Path::new(name);
        if as_path.exists() {
            Ok(as_path.to_path_buf())
        } else {
            Ok(self.collection_dir(name))
        }
    }
}
