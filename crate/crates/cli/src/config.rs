//! Run configuration: a TOML file, an optional named preset and command-line
//! overrides, resolved in that order of increasing precedence (the file's
//! `[pipeline]` table is applied on top of the preset).
//!
//! Relative paths in the file are resolved against the file's directory.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use kgqa_core::pipeline::{MatchingMode, PipelineConfig};

use crate::error::CliError;

/// Named hyperparameter profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 40 demonstrations, relation threshold 0.7.
    Grailqa,
    /// 100 demonstrations, relation threshold 0.8.
    Webqsp,
}

impl Preset {
    fn apply(self, cfg: &mut PipelineConfig) {
        let (k, theta) = match self {
            Preset::Grailqa => (40, 0.7),
            Preset::Webqsp => (100, 0.8),
        };
        cfg.k = k;
        cfg.matcher.theta = theta;
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    preset: Option<Preset>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    kg: KgSection,
    #[serde(default)]
    data: DataSection,
    #[serde(default)]
    llm: LlmSection,
    #[serde(default)]
    embedding: EmbeddingSection,
    endpoint: Option<EndpointSection>,
    pipeline: Option<toml::Table>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct KgSection {
    /// Directory holding `entities.tsv`, `triples.tsv` and `schema.tsv`.
    dir: Option<PathBuf>,
    entities: Option<PathBuf>,
    triples: Option<PathBuf>,
    schema: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataSection {
    train: Option<PathBuf>,
    dataset: Option<PathBuf>,
    index_cache: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LlmSection {
    replay: Option<PathBuf>,
    base_url: Option<String>,
    model: Option<String>,
    api_key_env: Option<String>,
    timeout_secs: Option<u64>,
    record: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingSection {
    /// Embedding service URL; the built-in hashed trigram embedder otherwise.
    pub url: Option<String>,
    pub dim: usize,
    pub timeout_secs: u64,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            url: None,
            dim: 512,
            timeout_secs: 30,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct EndpointSection {
    url: String,
    timeout_secs: Option<u64>,
    max_connections: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct KgFiles {
    pub entities: PathBuf,
    pub triples: PathBuf,
    pub schema: PathBuf,
}

#[derive(Debug, Clone)]
pub enum LlmConfig {
    Replay(PathBuf),
    Http {
        base_url: String,
        model: String,
        api_key_env: String,
        timeout: Duration,
        record: Option<PathBuf>,
    },
}

#[derive(Debug, Clone)]
pub struct EndpointConfig {
    pub url: String,
    pub timeout: Duration,
    pub max_connections: usize,
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub kg: KgFiles,
    pub train: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub index_cache: Option<PathBuf>,
    pub llm: Option<LlmConfig>,
    pub embedding: EmbeddingSection,
    pub endpoint: Option<EndpointConfig>,
    pub pipeline: PipelineConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
}

/// Flag-level overrides shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub kg_dir: Option<PathBuf>,
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub replay: Option<PathBuf>,
    pub no_refine: bool,
    pub brute_force: bool,
}

/// Candidate limits used by `--ablate brute-force-matching`.
pub const BRUTE_FORCE: MatchingMode = MatchingMode::BruteForce {
    ke: 10,
    kr: 10,
    cap: 100_000,
};

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn merge(into: &mut toml::Table, from: toml::Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) => merge(a, b),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

fn must_exist(what: &str, p: &Path) -> Result<(), CliError> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} {} does not exist", p.display())))
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<Self, CliError> {
        let (file, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let file: FileConfig = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                (file, p.parent().unwrap_or(Path::new(".")).to_path_buf())
            }
            None => (FileConfig::default(), PathBuf::from(".")),
        };
        let r = |p: PathBuf| resolve(&base, p);

        let kg_dir = ov.kg_dir.clone().or_else(|| file.kg.dir.clone().map(r));
        let pick = |explicit: Option<PathBuf>, name: &str| -> Result<PathBuf, CliError> {
            match (ov.kg_dir.is_none().then_some(explicit).flatten(), &kg_dir) {
                (Some(p), _) => Ok(r(p)),
                (None, Some(d)) => Ok(d.join(name)),
                (None, None) => Err(CliError::Config(format!(
                    "no knowledge graph configured (missing {name}); set [kg] dir or pass --kg"
                ))),
            }
        };
        let kg = KgFiles {
            entities: pick(file.kg.entities, "entities.tsv")?,
            triples: pick(file.kg.triples, "triples.tsv")?,
            schema: pick(file.kg.schema, "schema.tsv")?,
        };

        let llm = match (ov.replay.clone(), file.llm) {
            (Some(p), _) => Some(LlmConfig::Replay(p)),
            (None, LlmSection { replay: Some(p), .. }) => Some(LlmConfig::Replay(r(p))),
            (
                None,
                LlmSection {
                    base_url: Some(base_url),
                    model,
                    api_key_env,
                    timeout_secs,
                    record,
                    ..
                },
            ) => Some(LlmConfig::Http {
                base_url,
                model: model.ok_or_else(|| CliError::Config("[llm] base_url requires model".into()))?,
                api_key_env: api_key_env.unwrap_or_else(|| "OPENAI_API_KEY".into()),
                timeout: Duration::from_secs(timeout_secs.unwrap_or(120)),
                record: record.map(r),
            }),
            (None, _) => None,
        };

        let mut pipeline = PipelineConfig::default();
        if let Some(p) = ov.preset.or(file.preset) {
            p.apply(&mut pipeline);
        }
        if let Some(table) = file.pipeline {
            let toml::Value::Table(mut current) = toml::Value::try_from(&pipeline).map_err(|e| CliError::Config(e.to_string()))? else {
                unreachable!("a struct serializes to a table")
            };
            merge(&mut current, table);
            pipeline = toml::Value::Table(current)
                .try_into()
                .map_err(|e| CliError::Config(format!("[pipeline]: {e}")))?;
        }
        if ov.no_refine {
            pipeline.refinement_enabled = false;
        }
        if ov.brute_force {
            pipeline.matching = BRUTE_FORCE;
        }
        pipeline.check().map_err(CliError::Config)?;

        let cfg = RunConfig {
            kg,
            train: file.data.train.map(r),
            dataset: file.data.dataset.map(r),
            index_cache: file.data.index_cache.map(r),
            llm,
            embedding: file.embedding,
            endpoint: file.endpoint.map(|e| EndpointConfig {
                url: e.url,
                timeout: Duration::from_secs(e.timeout_secs.unwrap_or(60)),
                max_connections: e.max_connections.unwrap_or(4),
            }),
            pipeline,
            output_dir: ov
                .output_dir
                .clone()
                .or_else(|| file.output_dir.map(r))
                .unwrap_or_else(|| PathBuf::from("kgqa-out")),
            seed: ov.seed.or(file.seed).unwrap_or(0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        must_exist("entity file", &self.kg.entities)?;
        must_exist("triple file", &self.kg.triples)?;
        must_exist("schema file", &self.kg.schema)?;
        if let Some(p) = &self.train {
            must_exist("training set", p)?;
        }
        if let Some(p) = &self.dataset {
            must_exist("dataset", p)?;
        }
        if let Some(LlmConfig::Replay(p)) = &self.llm {
            must_exist("replay file", p)?;
        }
        Ok(())
    }
}
