//! Question answering loop: draft, ground, execute, refine once, vote.
//!
//! A drafting prompt built from similar training questions is sampled for
//! `n_candidates` completions. Each completion is parsed, grounded and its
//! candidates executed best-first until one returns answers. A candidate
//! that ends with no answer gets exactly one refinement completion. The
//! per-candidate answers are combined by majority vote.
//!
//! Every stage is recorded in a [`Trace`] that contains no timing or other
//! nondeterministic data, so replayed runs produce identical traces.

mod draft;
mod prompt;
mod provider;

pub use draft::{
    derive_question_info, extract_critique, ideal_draft, parse_draft, render_draft, CritiqueCategory, Draft, DraftFailure, MentionKind,
    Polarity, QuestionInfo,
};
pub use prompt::{build_draft_prompt, build_refine_prompt, pylf_signatures, refine_demos, Demo, RefineDemo};
pub use provider::{prompt_key, CompletionError, CompletionProvider, HttpCompletionProvider, RecordingProvider, ReplayProvider};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::Example;
use crate::exec::{AnswerSet, Executor};
use crate::kg::KnowledgeGraph;
use crate::matcher::{
    brute_force_ground, dot, ground, EmbedError, EmbeddingProvider, GroundedLogicalForm, MatchError, MatcherConfig, SimilarityIndex,
};
use crate::pylf::print_pylf;
use crate::sparql::{compile, SparqlClient, SparqlError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MatchingMode {
    SchemaGuided,
    /// Similarity-only grounding with the top `ke` entities and `kr`
    /// relations per slot.
    BruteForce {
        ke: usize,
        kr: usize,
        cap: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Demonstrations in the drafting prompt.
    pub k: usize,
    pub n_candidates: usize,
    pub temperature: f64,
    /// Upper bound on refinement demonstrations shown.
    pub refine_demo_count: usize,
    pub matcher: MatcherConfig,
    pub matching: MatchingMode,
    pub refinement_enabled: bool,
    pub constraint_elements_enabled: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k: 40,
            n_candidates: 6,
            temperature: 0.9,
            refine_demo_count: 10,
            matcher: MatcherConfig::default(),
            matching: MatchingMode::SchemaGuided,
            refinement_enabled: true,
            constraint_elements_enabled: true,
        }
    }
}

impl PipelineConfig {
    pub fn check(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err("k must be at least 1".into());
        }
        if self.n_candidates == 0 {
            return Err("n_candidates must be at least 1".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} is outside [0, 2]", self.temperature));
        }
        self.matcher.check().map_err(|e| e.to_string())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Completion(#[from] CompletionError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Sparql(#[from] SparqlError),
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
}

/// Where grounded candidates are executed.
#[derive(Debug, Clone)]
pub enum Backend {
    Local(Executor),
    /// Compiled to SPARQL and sent to an endpoint. Transport failures abort
    /// the question instead of counting as empty results.
    Remote(SparqlClient),
}

impl Default for Backend {
    fn default() -> Self {
        Backend::Local(Executor::default())
    }
}

/// Training questions with their embeddings, for nearest-neighbour
/// demonstration selection.
pub struct DemoIndex {
    examples: Vec<Example>,
    vectors: Vec<Vec<f32>>,
    embedder: Arc<dyn EmbeddingProvider>,
}

impl DemoIndex {
    pub fn build(trainset: Vec<Example>, embedder: Arc<dyn EmbeddingProvider>) -> Result<Self, EmbedError> {
        let texts: Vec<String> = trainset.iter().map(|e| e.question.clone()).collect();
        let vectors = embedder.embed_batch(&texts)?;
        Ok(DemoIndex {
            examples: trainset,
            vectors,
            embedder,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// The `k` training examples whose questions are most similar to
    /// `question`, most similar first, ties by qid.
    pub fn select(&self, question: &str, k: usize) -> Result<Vec<&Example>, EmbedError> {
        if k > self.examples.len() {
            log::warn!(
                "requested {k} demonstrations but only {} training examples exist",
                self.examples.len()
            );
        }
        let q = self.embedder.embed(question)?;
        let mut scored: Vec<(f32, &Example)> = self.vectors.iter().map(|v| dot(&q, v)).zip(&self.examples).collect();
        scored.sort_by(|(sa, a), (sb, b)| sb.total_cmp(sa).then_with(|| a.qid.cmp(&b.qid)));
        Ok(scored.into_iter().take(k).map(|(_, e)| e).collect())
    }
}

/// Nearest training examples to `question` by embedding cosine.
pub fn select_demonstrations(
    question: &str,
    trainset: &[Example],
    embedder: Arc<dyn EmbeddingProvider>,
    k: usize,
) -> Result<Vec<Example>, EmbedError> {
    let index = DemoIndex::build(trainset.to_vec(), embedder)?;
    Ok(index.select(question, k)?.into_iter().cloned().collect())
}

/// Most frequent non-empty answer set, ties to the earliest. Empty sets
/// only win when every candidate is empty.
pub fn majority_vote(answers: &[AnswerSet]) -> AnswerSet {
    let mut tally: Vec<(&AnswerSet, usize)> = Vec::new();
    for a in answers.iter().filter(|a| !a.is_empty()) {
        match tally.iter_mut().find(|(b, _)| *b == a) {
            Some((_, n)) => *n += 1,
            None => tally.push((a, 1)),
        }
    }
    // `max_by_key` keeps the last maximum, so scan in reverse.
    tally
        .iter()
        .rev()
        .max_by_key(|(_, n)| *n)
        .map(|(a, _)| (*a).clone())
        .or_else(|| answers.first().cloned())
        .unwrap_or_else(AnswerSet::empty)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedTrace {
    pub expr: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    /// Position in the ranked candidate list.
    pub candidate: usize,
    pub answers: Option<Vec<String>>,
    pub error: Option<String>,
}

/// What happened to one completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptTrace {
    pub completion: String,
    pub draft: Option<String>,
    pub question_info: Vec<QuestionInfo>,
    pub failure: Option<DraftFailure>,
    pub match_error: Option<String>,
    pub candidate_count: usize,
    pub candidates: Vec<GroundedTrace>,
    pub executions: Vec<ExecutionTrace>,
    pub answers: Option<AnswerSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    /// Category stated in the prompt; `None` when the model chose it.
    pub given_category: Option<CritiqueCategory>,
    pub stated_critique: Option<CritiqueCategory>,
    pub prompt_key: String,
    pub attempt: AttemptTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTrace {
    pub draft: AttemptTrace,
    pub refinement: Option<RefinementTrace>,
    pub answers: AnswerSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub question: String,
    pub demonstrations: Vec<String>,
    pub draft_prompt_key: String,
    pub refinement_enabled: bool,
    pub matching: MatchingMode,
    pub candidates: Vec<CandidateTrace>,
    pub provider_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub answers: AnswerSet,
    /// First candidate whose answers won the vote.
    pub chosen_candidate: Option<usize>,
    /// Whether the chosen candidate's answers came from its refined draft.
    pub refined: bool,
    pub trace: Trace,
}

/// Everything needed to answer questions over one graph.
pub struct Pipeline<'a> {
    pub kg: &'a KnowledgeGraph,
    pub index: &'a SimilarityIndex,
    pub demos: &'a DemoIndex,
    pub backend: Backend,
    pub config: PipelineConfig,
}

impl Pipeline<'_> {
    fn ground(&self, draft: &Draft) -> Result<Vec<GroundedLogicalForm>, MatchError> {
        match self.config.matching {
            MatchingMode::SchemaGuided => ground(&draft.expr, self.kg, self.index, &self.config.matcher),
            MatchingMode::BruteForce { ke, kr, cap } => brute_force_ground(&draft.expr, self.index, ke, kr, cap),
        }
    }

    fn execute(&self, form: &GroundedLogicalForm) -> Result<Result<AnswerSet, String>, PipelineError> {
        match &self.backend {
            Backend::Local(ex) => Ok(ex.evaluate(&form.expr, self.kg).map_err(|e| e.to_string())),
            Backend::Remote(client) => {
                let query = match compile(&form.expr, self.kg) {
                    Ok(q) => q,
                    Err(e) => return Ok(Err(e.to_string())),
                };
                match client.execute(&query) {
                    Ok(a) => Ok(Ok(a)),
                    Err(e @ (SparqlError::Transport { .. } | SparqlError::Timeout { .. })) => Err(e.into()),
                    Err(e) => Ok(Err(e.to_string())),
                }
            }
        }
    }

    /// Parses, grounds and executes one completion.
    fn attempt(&self, completion: &str) -> Result<AttemptTrace, PipelineError> {
        let mut t = AttemptTrace {
            completion: completion.to_string(),
            draft: None,
            question_info: Vec::new(),
            failure: None,
            match_error: None,
            candidate_count: 0,
            candidates: Vec::new(),
            executions: Vec::new(),
            answers: None,
        };
        let draft = match parse_draft(completion) {
            Ok(d) => d,
            Err(f) => {
                t.failure = Some(f);
                return Ok(t);
            }
        };
        t.draft = Some(print_pylf(&draft.expr));
        t.question_info = draft.question_info.clone();
        let forms = match self.ground(&draft) {
            Ok(forms) => forms,
            Err(MatchError::Embed(e)) => return Err(e.into()),
            Err(e) => {
                t.match_error = Some(e.to_string());
                return Ok(t);
            }
        };
        t.candidate_count = forms.len();
        t.candidates = forms
            .iter()
            .map(|g| GroundedTrace {
                expr: print_pylf(&g.expr),
                score: g.score,
            })
            .collect();
        for (i, form) in forms.iter().enumerate() {
            match self.execute(form)? {
                Ok(answers) => {
                    let empty = answers.is_empty();
                    t.executions.push(ExecutionTrace {
                        candidate: i,
                        answers: Some(answers.to_strings()),
                        error: None,
                    });
                    if !empty {
                        t.answers = Some(answers);
                        break;
                    }
                }
                Err(e) => t.executions.push(ExecutionTrace {
                    candidate: i,
                    answers: None,
                    error: Some(e),
                }),
            }
        }
        Ok(t)
    }

    /// Answers one question. Provider and endpoint transport failures are
    /// errors; a question nothing could answer yields empty answers.
    pub fn answer(&self, question: &str, provider: &dyn CompletionProvider) -> Result<Prediction, PipelineError> {
        let cfg = &self.config;
        cfg.check().map_err(PipelineError::Config)?;
        let selected = self.demos.select(question, cfg.k)?;
        let demos: Vec<Demo> = selected
            .iter()
            .filter_map(|ex| match Demo::from_example(ex, self.kg) {
                Ok(d) => Some(d),
                Err(e) => {
                    log::warn!("skipping demonstration {}: {e}", ex.qid);
                    None
                }
            })
            .collect();
        let signatures = pylf_signatures();
        let prompt = build_draft_prompt(question, &demos, signatures, cfg.constraint_elements_enabled);
        let completions = provider.complete(&prompt, cfg.temperature, cfg.n_candidates)?;
        let mut calls = 1;
        let refine_demos: Vec<RefineDemo> = refine_demos().iter().take(cfg.refine_demo_count).cloned().collect();

        let mut candidates = Vec::with_capacity(completions.len());
        for completion in &completions {
            let first = self.attempt(completion)?;
            let mut refinement = None;
            if first.answers.is_none() && cfg.refinement_enabled {
                let given = first.failure.as_ref().map(|f| f.category);
                let refine_prompt = build_refine_prompt(question, completion, given, &refine_demos, signatures);
                let revised = provider.complete(&refine_prompt, cfg.temperature, 1)?;
                calls += 1;
                let revised = revised.into_iter().next().unwrap_or_default();
                refinement = Some(RefinementTrace {
                    given_category: given,
                    stated_critique: extract_critique(&revised),
                    prompt_key: prompt_key(&refine_prompt),
                    attempt: self.attempt(&revised)?,
                });
            }
            let answers = first
                .answers
                .clone()
                .or_else(|| refinement.as_ref().and_then(|r| r.attempt.answers.clone()))
                .unwrap_or_else(AnswerSet::empty);
            candidates.push(CandidateTrace {
                draft: first,
                refinement,
                answers,
            });
        }

        let all: Vec<AnswerSet> = candidates.iter().map(|c| c.answers.clone()).collect();
        let answers = majority_vote(&all);
        let chosen = (!answers.is_empty()).then(|| all.iter().position(|a| *a == answers)).flatten();
        let refined = chosen.is_some_and(|i| candidates[i].draft.answers.is_none());
        Ok(Prediction {
            answers,
            chosen_candidate: chosen,
            refined,
            trace: Trace {
                question: question.to_string(),
                demonstrations: selected.iter().map(|e| e.qid.clone()).collect(),
                draft_prompt_key: prompt_key(&prompt),
                refinement_enabled: cfg.refinement_enabled,
                matching: cfg.matching,
                candidates,
                provider_calls: calls,
            },
        })
    }
}

/// One-off convenience over [`Pipeline::answer`] with local execution.
pub fn answer_question(
    question: &str,
    kg: &KnowledgeGraph,
    index: &SimilarityIndex,
    trainset: &[Example],
    provider: &dyn CompletionProvider,
    cfg: &PipelineConfig,
) -> Result<Prediction, PipelineError> {
    let demos = DemoIndex::build(trainset.to_vec(), index.embedder().clone())?;
    Pipeline {
        kg,
        index,
        demos: &demos,
        backend: Backend::default(),
        config: cfg.clone(),
    }
    .answer(question, provider)
}
