use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use kgqa_core::dataset::{load_dataset, read_jsonl, write_jsonl, Example};
use kgqa_core::evalkit::{evaluate_dataset, flip_join, nest_transform, NestError, NestExample};
use kgqa_core::exec::{evaluate, AnswerSet};
use kgqa_core::kg::{load_kg, KnowledgeGraph};
use kgqa_core::matcher::{brute_force_ground, ground, EmbeddingProvider, HashedTrigramEmbedder, HttpEmbedder, SimilarityIndex};
use kgqa_core::pipeline::{
    Backend, CompletionProvider, DemoIndex, HttpCompletionProvider, MatchingMode, Pipeline, PipelineError, Prediction, RecordingProvider,
    ReplayProvider, Trace,
};
use kgqa_core::pylf::{parse_pylf, print_pylf};
use kgqa_core::sparql::{compile, write_ntriples, SparqlClient};

use crate::config::{LlmConfig, RunConfig};
use crate::error::CliError;

fn embedder(cfg: &RunConfig) -> Result<Arc<dyn EmbeddingProvider>, CliError> {
    Ok(match &cfg.embedding.url {
        Some(url) => Arc::new(HttpEmbedder::new(
            url,
            cfg.embedding.dim,
            std::time::Duration::from_secs(cfg.embedding.timeout_secs),
        )?),
        None => Arc::new(HashedTrigramEmbedder::new(cfg.embedding.dim)),
    })
}

fn knowledge_graph(cfg: &RunConfig) -> Result<KnowledgeGraph, CliError> {
    let kg = load_kg(&cfg.kg.entities, &cfg.kg.triples, &cfg.kg.schema)?;
    if !kg.is_schema_consistent() {
        log::warn!("{} triples disagree with the schema", kg.violations().len());
    }
    Ok(kg)
}

/// Loads the cached index when it matches the current embedder, else builds
/// one in memory.
fn similarity_index(cfg: &RunConfig, kg: &KnowledgeGraph) -> Result<SimilarityIndex, CliError> {
    let embedder = embedder(cfg)?;
    if let Some(path) = cfg.index_cache.as_deref().filter(|p| p.is_file()) {
        match SimilarityIndex::load(path, kg, embedder.clone()) {
            Ok(index) => return Ok(index),
            Err(e) => log::warn!("ignoring index cache {}: {e}", path.display()),
        }
    }
    Ok(SimilarityIndex::build(kg, embedder)?)
}

enum Provider {
    Replay(ReplayProvider),
    Http(HttpCompletionProvider),
    Recording(RecordingProvider<HttpCompletionProvider>),
}

impl Provider {
    fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        match cfg
            .llm
            .as_ref()
            .ok_or_else(|| CliError::Config("no [llm] section: set replay or base_url".into()))?
        {
            LlmConfig::Replay(path) => Ok(Provider::Replay(ReplayProvider::from_file(path)?)),
            LlmConfig::Http {
                base_url,
                model,
                api_key_env,
                timeout,
                record,
            } => {
                let http = HttpCompletionProvider::new(base_url, model, api_key_env, *timeout)?;
                Ok(match record {
                    Some(path) => Provider::Recording(RecordingProvider::new(http, path)?),
                    None => Provider::Http(http),
                })
            }
        }
    }

    fn get(&self) -> &dyn CompletionProvider {
        match self {
            Provider::Replay(p) => p,
            Provider::Http(p) => p,
            Provider::Recording(p) => p,
        }
    }

    fn finish(&self) -> Result<(), CliError> {
        if let Provider::Recording(p) = self {
            p.save()?;
        }
        Ok(())
    }
}

fn backend(cfg: &RunConfig) -> Result<Backend, CliError> {
    Ok(match &cfg.endpoint {
        Some(e) => Backend::Remote(SparqlClient::new(&e.url, e.timeout, e.max_connections)?),
        None => Backend::default(),
    })
}

fn demo_index(cfg: &RunConfig, index: &SimilarityIndex) -> Result<DemoIndex, CliError> {
    let path = cfg
        .train
        .as_ref()
        .ok_or_else(|| CliError::Config("no training set: set [data] train".into()))?;
    Ok(DemoIndex::build(load_dataset(path)?, index.embedder().clone())?)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn show(a: &AnswerSet) -> String {
    match a {
        AnswerSet::Number(n) => n.to_string(),
        _ => format!("{{{}}}", a.to_strings().join(", ")),
    }
}

#[derive(Serialize)]
struct Failure {
    stage: &'static str,
    error: String,
}

impl Failure {
    fn of(e: &PipelineError) -> Self {
        let stage = match e {
            PipelineError::Completion(_) => "completion",
            PipelineError::Embed(_) => "embedding",
            PipelineError::Sparql(_) => "execution",
            PipelineError::Config(_) => "config",
        };
        Failure {
            stage,
            error: e.to_string(),
        }
    }
}

#[derive(Serialize)]
struct TraceRecord<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    qid: Option<&'a str>,
    question: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<&'a Trace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<Failure>,
}

impl<'a> TraceRecord<'a> {
    fn new(qid: Option<&'a str>, question: &'a str, result: &'a Result<Prediction, PipelineError>) -> Self {
        let (trace, failure) = match result {
            Ok(p) => (Some(&p.trace), None),
            Err(e) => (None, Some(Failure::of(e))),
        };
        TraceRecord {
            qid,
            question,
            trace,
            failure,
        }
    }
}

#[derive(Serialize)]
struct PredictionRecord<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    qid: Option<&'a str>,
    answers: Vec<String>,
    chosen_candidate: Option<usize>,
    refined: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

impl<'a> PredictionRecord<'a> {
    fn new(qid: Option<&'a str>, result: &Result<Prediction, PipelineError>) -> Self {
        match result {
            Ok(p) => PredictionRecord {
                qid,
                answers: p.answers.to_strings(),
                chosen_candidate: p.chosen_candidate,
                refined: p.refined,
                error: None,
            },
            Err(e) => PredictionRecord {
                qid,
                answers: Vec::new(),
                chosen_candidate: None,
                refined: false,
                error: Some(e.to_string()),
            },
        }
    }
}

/// Answers one question; writes `prediction.json` and `trace.json`.
pub fn answer(cfg: &RunConfig, question: &str) -> Result<(), CliError> {
    let kg = knowledge_graph(cfg)?;
    let index = similarity_index(cfg, &kg)?;
    let demos = demo_index(cfg, &index)?;
    let provider = Provider::new(cfg)?;
    let pipeline = Pipeline {
        kg: &kg,
        index: &index,
        demos: &demos,
        backend: backend(cfg)?,
        config: cfg.pipeline.clone(),
    };
    let result = pipeline.answer(question, provider.get());
    create_dir(&cfg.output_dir)?;
    write_json(&cfg.output_dir.join("trace.json"), &TraceRecord::new(None, question, &result))?;
    write_json(&cfg.output_dir.join("prediction.json"), &PredictionRecord::new(None, &result))?;
    provider.finish()?;
    let prediction = result?;
    println!("{}", show(&prediction.answers));
    Ok(())
}

fn sample(examples: Vec<Example>, n: Option<usize>, seed: u64) -> Vec<Example> {
    match n {
        Some(n) if n < examples.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = rand::seq::index::sample(&mut rng, examples.len(), n).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| examples[i].clone()).collect()
        }
        _ => examples,
    }
}

/// Runs the pipeline over a dataset and scores it. Questions that fail are
/// recorded with empty answers and the run continues.
pub fn eval(cfg: &RunConfig, dataset: Option<&Path>, jobs: usize, limit: Option<usize>) -> Result<(), CliError> {
    let path = dataset
        .map(Path::to_path_buf)
        .or_else(|| cfg.dataset.clone())
        .ok_or_else(|| CliError::Config("no dataset: pass --dataset or set [data] dataset".into()))?;
    if !path.is_file() {
        return Err(CliError::Config(format!("dataset {} does not exist", path.display())));
    }
    let examples = sample(load_dataset(&path)?, limit, cfg.seed);
    let kg = knowledge_graph(cfg)?;
    let index = similarity_index(cfg, &kg)?;
    let demos = demo_index(cfg, &index)?;
    let provider = Provider::new(cfg)?;
    let pipeline = Pipeline {
        kg: &kg,
        index: &index,
        demos: &demos,
        backend: backend(cfg)?,
        config: cfg.pipeline.clone(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let results: Vec<Result<Prediction, PipelineError>> = pool.install(|| {
        examples
            .par_iter()
            .map(|ex| pipeline.answer(&ex.question, provider.get()))
            .collect()
    });
    provider.finish()?;

    create_dir(&cfg.output_dir)?;
    let mut predictions = Vec::with_capacity(examples.len());
    let mut traces = Vec::with_capacity(examples.len());
    let mut scored = Vec::with_capacity(examples.len());
    let mut failures = 0;
    for (ex, result) in examples.iter().zip(&results) {
        if let Err(e) = result {
            failures += 1;
            log::warn!("{}: {e}", ex.qid);
        }
        predictions.push(PredictionRecord::new(Some(&ex.qid), result));
        traces.push(TraceRecord::new(Some(&ex.qid), &ex.question, result));
        let answers = result.as_ref().map_or_else(|_| AnswerSet::empty(), |p| p.answers.clone());
        scored.push((ex.qid.clone(), answers));
    }
    write_jsonl(&cfg.output_dir.join("predictions.jsonl"), &predictions)?;
    write_jsonl(&cfg.output_dir.join("traces.jsonl"), &traces)?;
    let report = evaluate_dataset(&scored, &examples).map_err(|e| CliError::Data(e.to_string()))?;
    write_json(&cfg.output_dir.join("report.json"), &report)?;
    let table = report.to_table();
    fs::write(cfg.output_dir.join("report.txt"), &table).map_err(|e| CliError::io(&cfg.output_dir, e))?;
    print!("{table}");
    if failures > 0 {
        eprintln!("{failures} of {} questions failed and were scored as empty", examples.len());
    }
    Ok(())
}

/// Grounds a draft expression and prints the ranked candidates.
pub fn match_draft(cfg: &RunConfig, draft: &str) -> Result<(), CliError> {
    let kg = knowledge_graph(cfg)?;
    let index = similarity_index(cfg, &kg)?;
    let expr = parse_pylf(draft).map_err(|e| CliError::Data(e.to_string()))?;
    let forms = match cfg.pipeline.matching {
        MatchingMode::SchemaGuided => ground(&expr, &kg, &index, &cfg.pipeline.matcher),
        MatchingMode::BruteForce { ke, kr, cap } => brute_force_ground(&expr, &index, ke, kr, cap),
    }
    .map_err(|e| CliError::Data(e.to_string()))?;
    println!("{} candidates", forms.len());
    for f in forms {
        println!("{:.4}\t{}", f.score, print_pylf(&f.expr));
    }
    Ok(())
}

/// Prints the SPARQL for a grounded expression, and its answers when
/// `execute` is set (against the configured endpoint, else locally).
pub fn compile_expr(cfg: &RunConfig, text: &str, execute: bool) -> Result<(), CliError> {
    let kg = knowledge_graph(cfg)?;
    let expr = parse_pylf(text).map_err(|e| CliError::Data(e.to_string()))?;
    let query = compile(&expr, &kg).map_err(|e| CliError::Data(e.to_string()))?;
    println!("{}", query.text);
    if execute {
        let answers = match &cfg.endpoint {
            Some(e) => SparqlClient::new(&e.url, e.timeout, 1)?.execute(&query)?,
            None => evaluate(&expr, &kg).map_err(|e| CliError::Data(e.to_string()))?,
        };
        println!("{}", show(&answers));
    }
    Ok(())
}

#[derive(Serialize)]
struct RewordingRecord<'a> {
    qid: &'a str,
    source_qid: &'a str,
    prompt: &'a str,
}

pub struct NestArgs<'a> {
    pub source: &'a Path,
    pub out: Option<PathBuf>,
    pub roundtrip: bool,
    pub one_per_source: bool,
}

/// Derives negated variants of a source set; writes them as dataset JSONL
/// with a `rewording_prompts.jsonl` sidecar.
pub fn nest(cfg: &RunConfig, args: NestArgs<'_>) -> Result<(), CliError> {
    if !args.source.is_file() {
        return Err(CliError::Config(format!("source dataset {} does not exist", args.source.display())));
    }
    let kg = knowledge_graph(cfg)?;
    let sources: Vec<Example> = read_jsonl(args.source)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut variants: Vec<NestExample> = Vec::new();
    let (mut skipped, mut retained) = (Vec::new(), 0);
    for ex in &sources {
        let mut out = match nest_transform(ex, &kg) {
            Ok(out) => out,
            Err(e @ (NestError::Dataset(_) | NestError::Exec { .. })) => {
                skipped.push(format!("{}: {e}", ex.qid));
                continue;
            }
        };
        if out.is_empty() {
            continue;
        }
        retained += 1;
        if args.one_per_source {
            use rand::seq::SliceRandom;
            out = vec![out.choose(&mut rng).expect("non-empty").clone()];
        }
        variants.extend(out);
    }

    let out = args.out.unwrap_or_else(|| cfg.output_dir.join("nest.jsonl"));
    let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    create_dir(dir)?;
    let records: Vec<Example> = variants.iter().map(NestExample::to_example).collect();
    write_jsonl(&out, &records)?;
    let prompts: Vec<RewordingRecord> = variants
        .iter()
        .map(|v| RewordingRecord {
            qid: &v.qid,
            source_qid: &v.source_qid,
            prompt: &v.rewording_prompt,
        })
        .collect();
    write_jsonl(&dir.join("rewording_prompts.jsonl"), &prompts)?;

    println!(
        "sources {}, retained {}, variants {}, skipped {}",
        sources.len(),
        retained,
        variants.len(),
        skipped.len()
    );
    for s in &skipped {
        eprintln!("skipped {s}");
    }
    if variants.is_empty() {
        eprintln!("warning: no source has two or more constraints with a flippable positive JOIN and a non-empty negation");
    }
    if args.roundtrip {
        roundtrip(&sources, &variants)?;
        println!("roundtrip ok: {} variants flip back to their sources", variants.len());
    }
    Ok(())
}

fn roundtrip(sources: &[Example], variants: &[NestExample]) -> Result<(), CliError> {
    for v in variants {
        let source = sources.iter().find(|s| s.qid == v.source_qid).expect("variant of a loaded source");
        let path: Vec<usize> = if v.flipped_path == "root" {
            Vec::new()
        } else {
            v.flipped_path.split('.').map(|p| p.parse().expect("numeric path")).collect()
        };
        let back = flip_join(&v.pylf, &path).ok_or_else(|| CliError::Data(format!("{}: path {} is not a JOIN", v.qid, v.flipped_path)))?;
        if back != source.gold_expr()? {
            return Err(CliError::Data(format!(
                "{}: flipping back does not reproduce {}",
                v.qid, source.qid
            )));
        }
    }
    Ok(())
}

/// Writes the graph as N-Triples to `out`, or stdout.
pub fn export_rdf(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let kg = knowledge_graph(cfg)?;
    match out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
            let mut w = std::io::BufWriter::new(file);
            write_ntriples(&kg, &mut w)
                .and_then(|_| w.flush())
                .map_err(|e| CliError::io(path, e))
        }
        None => write_ntriples(&kg, std::io::stdout().lock()).map_err(|e| CliError::Data(e.to_string())),
    }
}

/// Builds the similarity index and saves it for later runs.
pub fn index(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let kg = knowledge_graph(cfg)?;
    let path = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.index_cache.clone())
        .unwrap_or_else(|| cfg.output_dir.join("index.bin"));
    let index = SimilarityIndex::build(&kg, embedder(cfg)?)?;
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    index.save(&path)?;
    println!(
        "{} entities, {} relations -> {}",
        index.entity_count(),
        index.relation_count(),
        path.display()
    );
    Ok(())
}
