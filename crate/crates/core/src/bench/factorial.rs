//! Factor definitions, matrix expansion and level interpretation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chunking::ChunkingParams;
use crate::embedding::ProviderConfig;
use crate::generation::{GeneratorConfig, GeneratorKind};
use crate::retrieval::{PipelineKind, RetrievalParams};
use crate::{Error, Result};

pub const CHUNK_SIZE: &str = "CKw";
pub const EMBEDDER: &str = "EMB";
pub const PIPELINE: &str = "PIP";
pub const CONTEXT_COUNT: &str = "#c";
pub const RERANK: &str = "RER";
pub const THRESHOLD: &str = "RTH";
pub const MODEL: &str = "MOD";

/// Canonical factor order used in mnemonics.
pub const CANONICAL_FACTORS: [&str; 7] = [CHUNK_SIZE, EMBEDDER, PIPELINE, CONTEXT_COUNT, RERANK, THRESHOLD, MODEL];

/// Level used for every factor but MOD in baseline configs.
pub const NORAG: &str = "NORAG";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub code: String,
    pub levels: Vec<String>,
}

/// The experiment matrix: ordered factors, baseline models and optional
/// per-level backend settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentFactors {
    #[serde(rename = "factor", default)]
    pub factors: Vec<Factor>,
    /// One NORAG baseline per model code.
    #[serde(default)]
    pub norag: Vec<String>,
    /// EMB level → provider settings.
    #[serde(default)]
    pub embedders: BTreeMap<String, ProviderConfig>,
    /// MOD level → generator settings.
    #[serde(default)]
    pub models: BTreeMap<String, GeneratorConfig>,
}

impl ExperimentFactors {
    pub fn new(factors: &[(&str, &[&str])]) -> Self {
        ExperimentFactors {
            factors: factors
                .iter()
                .map(|(code, levels)| Factor {
                    code: code.to_string(),
                    levels: levels.iter().map(|l| l.to_string()).collect(),
                })
                .collect(),
            ..Default::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let factors: ExperimentFactors =
            toml::from_str(text).map_err(|e| Error::invalid(format!("factors file: {e}")))?;
        factors.validate()?;
        Ok(factors)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let mut codes = BTreeSet::new();
        for f in &self.factors {
            if f.code.trim().is_empty() {
                return Err(Error::invalid("factor code is empty"));
            }
            if !codes.insert(f.code.as_str()) {
                return Err(Error::invalid(format!("factor {} listed twice", f.code)));
            }
            if f.levels.is_empty() {
                return Err(Error::invalid(format!("factor {} has no levels", f.code)));
            }
            let mut seen = BTreeSet::new();
            for level in &f.levels {
                if level.is_empty() || level.contains('-') {
                    return Err(Error::invalid(format!(
                        "factor {}: level {level:?} must be non-empty and contain no '-'",
                        f.code
                    )));
                }
                if !seen.insert(level.as_str()) {
                    return Err(Error::invalid(format!("factor {}: duplicate level {level}", f.code)));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for model in &self.norag {
            if !seen.insert(model.as_str()) {
                return Err(Error::invalid(format!("duplicate NORAG model {model}")));
            }
        }
        Ok(())
    }

    /// Number of configs `expand_factorial` yields.
    pub fn cell_count(&self) -> usize {
        self.factors.iter().map(|f| f.levels.len()).product::<usize>() + self.norag.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FactorLevel {
    pub code: String,
    pub level: String,
}

/// One cell of the matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub levels: Vec<FactorLevel>,
    pub mnemonic: String,
    pub norag: bool,
}

impl ExperimentConfig {
    pub fn new(levels: Vec<FactorLevel>) -> Self {
        let mnemonic = levels.iter().map(|l| l.level.as_str()).collect::<Vec<_>>().join("-");
        ExperimentConfig { levels, mnemonic, norag: false }
    }

    pub fn norag(model: &str) -> Self {
        ExperimentConfig {
            levels: vec![FactorLevel { code: MODEL.into(), level: model.into() }],
            mnemonic: format!("{NORAG}-{model}"),
            norag: true,
        }
    }

    pub fn level(&self, code: &str) -> Option<&str> {
        self.levels.iter().find(|l| l.code == code).map(|l| l.level.as_str())
    }

    /// Level for grouping: baselines report `NORAG` for every factor they
    /// do not set.
    pub fn group_level(&self, code: &str) -> String {
        match self.level(code) {
            Some(level) => level.to_string(),
            None if self.norag => NORAG.to_string(),
            None => "-".to_string(),
        }
    }

    /// File-system safe form of the mnemonic.
    pub fn file_stem(&self) -> String {
        self.mnemonic
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
            .collect()
    }
}

pub fn expand_factorial(factors: &ExperimentFactors, norag_models: &[String]) -> Result<Vec<ExperimentConfig>> {
    factors.validate()?;
    let mut configs: Vec<Vec<FactorLevel>> = vec![Vec::new()];
    for f in &factors.factors {
        let mut next = Vec::with_capacity(configs.len() * f.levels.len());
        for prefix in &configs {
            for level in &f.levels {
                let mut cell = prefix.clone();
                cell.push(FactorLevel { code: f.code.clone(), level: level.clone() });
                next.push(cell);
            }
        }
        configs = next;
    }
    let mut out: Vec<ExperimentConfig> = if factors.factors.is_empty() {
        Vec::new()
    } else {
        configs.into_iter().map(ExperimentConfig::new).collect()
    };
    out.extend(norag_models.iter().map(|m| ExperimentConfig::norag(m)));
    let mut seen = BTreeSet::new();
    for cfg in &out {
        if !seen.insert(cfg.mnemonic.as_str()) {
            return Err(Error::invalid(format!("mnemonic {} is not unique", cfg.mnemonic)));
        }
    }
    Ok(out)
}

/// Settings used for factors a config does not set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseSettings {
    pub chunking: ChunkingParams,
    pub provider: ProviderConfig,
    pub pipeline: PipelineKind,
    pub retrieval: RetrievalParams,
    pub generator: GeneratorConfig,
    pub seed: u64,
}

impl Default for BaseSettings {
    fn default() -> Self {
        BaseSettings {
            chunking: ChunkingParams::default(),
            provider: ProviderConfig::default(),
            pipeline: PipelineKind::HybridRRF,
            retrieval: RetrievalParams::default(),
            generator: GeneratorConfig::default(),
            seed: 42,
        }
    }
}

/// A config with every level turned into concrete settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub chunking: ChunkingParams,
    pub provider: ProviderConfig,
    pub pipeline: PipelineKind,
    pub retrieval: RetrievalParams,
    pub generator: GeneratorConfig,
}

fn parse_level<T: std::str::FromStr>(code: &str, level: &str) -> Result<T> {
    level
        .parse()
        .map_err(|_| Error::invalid(format!("factor {code}: cannot interpret level {level:?}")))
}

fn parse_switch(code: &str, level: &str) -> Result<bool> {
    match level.to_ascii_lowercase().as_str() {
        "rr" | "on" | "yes" | "true" | "1" | "rrf" => Ok(true),
        "nr" | "off" | "no" | "false" | "0" => Ok(false),
        _ => Err(Error::invalid(format!("factor {code}: cannot interpret level {level:?}"))),
    }
}

/// Interprets a config's levels.
///
/// CKw is the chunk size in tokens (overlap is an eighth of it), EMB and MOD
/// look up `embedders`/`models` and otherwise reuse the base backend under
/// the level's name, PIP is a pipeline code, `#c` the top-k, RER a switch
/// (RR/NR) and RTH a minimum score. Unknown factor codes are labels only.
pub fn resolve_config(cfg: &ExperimentConfig, factors: &ExperimentFactors, base: &BaseSettings) -> Result<ResolvedConfig> {
    let mut out = ResolvedConfig {
        chunking: base.chunking,
        provider: base.provider.clone(),
        pipeline: if cfg.norag { PipelineKind::Vanilla } else { base.pipeline },
        retrieval: base.retrieval.clone(),
        generator: base.generator.clone(),
    };
    for FactorLevel { code, level } in &cfg.levels {
        match code.as_str() {
            CHUNK_SIZE => {
                let size: usize = parse_level(code, level)?;
                out.chunking = ChunkingParams::new(size, size / 8)?;
            }
            EMBEDDER => {
                out.provider = match factors.embedders.get(level) {
                    Some(p) => p.clone(),
                    None => ProviderConfig { model_name: level.clone(), ..base.provider.clone() },
                };
            }
            PIPELINE if !cfg.norag => out.pipeline = parse_level(code, level)?,
            CONTEXT_COUNT => out.retrieval.top_k = parse_level(code, level)?,
            RERANK => out.retrieval.rerank = parse_switch(code, level)?,
            THRESHOLD => out.retrieval.min_score = parse_level(code, level)?,
            MODEL => {
                out.generator = match factors.models.get(level) {
                    Some(g) => g.clone(),
                    None => match level.parse::<GeneratorKind>() {
                        Ok(kind) if kind != GeneratorKind::RemoteChat => GeneratorConfig {
                            kind,
                            model_name: level.clone(),
                            ..base.generator.clone()
                        },
                        _ => GeneratorConfig { model_name: level.clone(), ..base.generator.clone() },
                    },
                };
            }
            _ => {}
        }
    }
    out.generator.seed = base.seed;
    out.retrieval.validate()?;
    out.provider.validate()?;
    out.generator.validate()?;
    Ok(out)
}
