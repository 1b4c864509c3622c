//! Strategy execution: render, complete, normalize, vote.
//!
//! IDADP sends three prompts per statement and takes the best of three.
//! Baselines send one prompt and go through the same vote as a single
//! ballot, so every strategy yields the same [`IdadpResult`] shape.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::corpus::{self, Corpus, CorpusError, Label, StatementRecord};
use crate::gateway::{CompletionRequest, Gateway, GatewayError, Provider, DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE};
use crate::normalize::{normalize_with_threshold, TaskOutput};
use crate::prompts::{
    self, baseline_prompt, idadp_prompts_with_threshold, knowledge_extraction_prompts, render, Exemplar,
    KnowledgeBundle, PromptError, PromptTemplate, TemplateKind, DEFAULT_THRESHOLD,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("every prompt failed for statement `{statement_id}`: {errors:?}")]
    AllPromptsFailed { statement_id: String, errors: Vec<String> },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("knowledge extraction: {0}")]
    Knowledge(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Idadp,
    ZeroCot,
    AutoCot,
    Ape,
    Ps,
    PsPlus,
    Plain,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Idadp,
        Strategy::ZeroCot,
        Strategy::AutoCot,
        Strategy::Ape,
        Strategy::Ps,
        Strategy::PsPlus,
        Strategy::Plain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Idadp => "idadp",
            Strategy::ZeroCot => "zero_cot",
            Strategy::AutoCot => "auto_cot",
            Strategy::Ape => "ape",
            Strategy::Ps => "ps",
            Strategy::PsPlus => "ps_plus",
            Strategy::Plain => "plain",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.to_ascii_lowercase().replace('-', "_");
        Strategy::ALL.into_iter().find(|k| k.name() == s)
    }

    fn baseline_kind(self) -> Option<TemplateKind> {
        match self {
            Strategy::Idadp => None,
            Strategy::ZeroCot => Some(TemplateKind::ZeroCot),
            Strategy::AutoCot => Some(TemplateKind::AutoCot),
            Strategy::Ape => Some(TemplateKind::Ape),
            Strategy::Ps => Some(TemplateKind::Ps),
            Strategy::PsPlus => Some(TemplateKind::PsPlus),
            Strategy::Plain => Some(TemplateKind::Plain),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteResult {
    #[serde(rename = "final")]
    pub final_label: Label,
    pub ballots: Vec<Option<Label>>,
    pub abstentions: usize,
    /// Every ballot cast and all agree.
    pub unanimous: bool,
}

/// Strict majority of the cast ballots; a tie or no cast ballot at all gives
/// `NonIronic`.
pub fn vote(ballots: &[Option<Label>]) -> VoteResult {
    let ironic = ballots.iter().filter(|b| **b == Some(Label::Ironic)).count();
    let non_ironic = ballots.iter().filter(|b| **b == Some(Label::NonIronic)).count();
    let abstentions = ballots.len() - ironic - non_ironic;
    let final_label = if ironic > non_ironic { Label::Ironic } else { Label::NonIronic };
    VoteResult {
        final_label,
        ballots: ballots.to_vec(),
        abstentions,
        unanimous: !ballots.is_empty() && abstentions == 0 && (ironic == 0 || non_ironic == 0),
    }
}

/// Outcome for one statement under one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdadpResult {
    pub statement_id: String,
    pub strategy: Strategy,
    pub vote: VoteResult,
    /// One per prompt; a failed call leaves an empty output and an entry in `errors`.
    pub outputs: Vec<TaskOutput>,
    pub errors: Vec<Option<String>>,
    pub request_hashes: Vec<Option<String>>,
    pub reason: Option<String>,
    pub rephrase: Option<String>,
    /// Prompt index the reason came from.
    pub reason_from: Option<usize>,
    /// Prompt index the rephrase came from.
    pub rephrase_from: Option<usize>,
}

/// First prompt (in template order) agreeing with the final label that has a
/// non-empty field; if none agrees, the first prompt that has one.
fn select(outputs: &[TaskOutput], final_label: Label, field: impl Fn(&TaskOutput) -> Option<&String>) -> Option<usize> {
    let has = |o: &TaskOutput| field(o).is_some_and(|s| !s.trim().is_empty());
    outputs
        .iter()
        .position(|o| o.label == Some(final_label) && has(o))
        .or_else(|| outputs.iter().position(has))
}

fn empty_output() -> TaskOutput {
    TaskOutput {
        label: None,
        probability: None,
        reason: None,
        rephrase: None,
        raw: String::new(),
        parse_notes: Vec::new(),
    }
}

/// Model settings shared by every request of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSettings {
    pub provider: Provider,
    pub model: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl ModelSettings {
    pub fn new(provider: Provider, model: impl Into<String>) -> Self {
        ModelSettings {
            provider,
            model: model.into(),
            max_tokens: DEFAULT_MAX_TOKENS,
            temperature: DEFAULT_TEMPERATURE,
        }
    }

    pub fn request(&self, prompt: String) -> CompletionRequest {
        CompletionRequest {
            provider: self.provider,
            model: self.model.clone(),
            prompt,
            max_tokens: self.max_tokens,
            temperature: self.temperature,
        }
    }
}

/// A strategy bound to its concrete templates and model settings.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub strategy: Strategy,
    pub templates: Vec<PromptTemplate>,
    pub settings: ModelSettings,
    pub threshold: f64,
}

impl Pipeline {
    /// IDADP with the given knowledge and threshold.
    pub fn idadp(knowledge: &KnowledgeBundle, threshold: f64, settings: ModelSettings) -> Result<Self, PipelineError> {
        Ok(Pipeline {
            strategy: Strategy::Idadp,
            templates: idadp_prompts_with_threshold(knowledge, threshold)?.to_vec(),
            settings,
            threshold,
        })
    }

    /// A single-prompt baseline. Auto-CoT needs its six exemplars.
    pub fn baseline(
        strategy: Strategy,
        exemplars: Option<&[Exemplar]>,
        settings: ModelSettings,
    ) -> Result<Self, PipelineError> {
        let kind = strategy.baseline_kind().ok_or(PromptError::NotABaseline(TemplateKind::IdadpClarify))?;
        Ok(Pipeline {
            strategy,
            templates: vec![baseline_prompt(kind, exemplars)?],
            settings,
            threshold: DEFAULT_THRESHOLD,
        })
    }

    pub fn requests(&self, statement: &StatementRecord) -> Vec<CompletionRequest> {
        self.templates
            .iter()
            .map(|t| self.settings.request(render(t, &statement.text)))
            .collect()
    }

    /// Runs every prompt for one statement and votes. Failed prompts abstain;
    /// only a statement whose prompts all failed is an error.
    pub fn run_statement(&self, statement: &StatementRecord, gateway: &Gateway) -> Result<IdadpResult, PipelineError> {
        let mut outputs = Vec::with_capacity(self.templates.len());
        let mut errors = Vec::with_capacity(self.templates.len());
        let mut hashes = Vec::with_capacity(self.templates.len());
        for (template, request) in self.templates.iter().zip(self.requests(statement)) {
            match gateway.complete(&request) {
                Ok(response) => {
                    outputs.push(normalize_with_threshold(
                        &response.text,
                        template.expects_probability,
                        self.threshold,
                    ));
                    errors.push(None);
                    hashes.push(Some(response.request_hash));
                }
                Err(e) => {
                    tracing::warn!(statement = %statement.id, template = %template.name, error = %e, "prompt failed");
                    outputs.push(empty_output());
                    errors.push(Some(e.to_string()));
                    hashes.push(Some(request.hash()));
                }
            }
        }
        if errors.iter().all(Option::is_some) {
            return Err(PipelineError::AllPromptsFailed {
                statement_id: statement.id.clone(),
                errors: errors.into_iter().flatten().collect(),
            });
        }
        let ballots: Vec<Option<Label>> = outputs.iter().map(|o| o.label).collect();
        let vote = vote(&ballots);
        let reason_from = select(&outputs, vote.final_label, |o| o.reason.as_ref());
        let rephrase_from = select(&outputs, vote.final_label, |o| o.rephrase.as_ref());
        Ok(IdadpResult {
            statement_id: statement.id.clone(),
            strategy: self.strategy,
            reason: reason_from.and_then(|i| outputs[i].reason.clone()),
            rephrase: rephrase_from.and_then(|i| outputs[i].rephrase.clone()),
            reason_from,
            rephrase_from,
            vote,
            outputs,
            errors,
            request_hashes: hashes,
        })
    }

    /// Runs `statements` with up to `parallelism` statements in flight.
    /// Results are aligned with the input; `on_done` is called once per
    /// statement as it completes (from worker threads).
    pub fn run_corpus<F>(
        &self,
        statements: &[StatementRecord],
        gateway: &Gateway,
        parallelism: usize,
        on_done: F,
    ) -> Vec<Result<IdadpResult, PipelineError>>
    where
        F: Fn(usize, &Result<IdadpResult, PipelineError>) + Sync,
    {
        let workers = parallelism.max(1).min(statements.len());
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<IdadpResult, PipelineError>>>> =
            statements.iter().map(|_| Mutex::new(None)).collect();
        let work = || loop {
            let i = next.fetch_add(1, Ordering::Relaxed);
            let Some(statement) = statements.get(i) else { break };
            let result = self.run_statement(statement, gateway);
            on_done(i, &result);
            *slots[i].lock().unwrap() = Some(result);
        };
        if workers <= 1 {
            work();
        } else {
            std::thread::scope(|s| {
                for _ in 0..workers {
                    s.spawn(work);
                }
            });
        }
        slots
            .into_iter()
            .map(|m| m.into_inner().unwrap().expect("every statement ran"))
            .collect()
    }
}

/// Six Auto-CoT demonstrations: 3 ironic and 3 non-ironic records drawn with
/// `seed`, each with a reasoning chain generated by the Zero-CoT prompt.
pub fn build_auto_cot_exemplars(
    corpus: &Corpus,
    seed: u64,
    gateway: &Gateway,
    settings: &ModelSettings,
) -> Result<Vec<Exemplar>, PipelineError> {
    let picked = corpus::balanced_exemplars(corpus, prompts::AUTO_COT_EXEMPLARS / 2, seed)?;
    let zero_cot = baseline_prompt(TemplateKind::ZeroCot, None)?;
    picked
        .into_iter()
        .map(|record| {
            let response = gateway.complete(&settings.request(render(&zero_cot, &record.text)))?;
            let out = normalize_with_threshold(&response.text, false, DEFAULT_THRESHOLD);
            let reasoning = out.reason.unwrap_or_else(|| response.text.trim().to_string());
            Ok(Exemplar {
                text: record.text,
                reasoning,
                label: record.gold,
            })
        })
        .collect()
}

/// Persona- and Recipe-style questions for the three knowledge types.
pub fn knowledge_questions() -> [(&'static str, &'static str); 3] {
    [
        (
            "definition",
            "Act as an annotator to label irony datasets. In one sentence, what is the definition of irony?",
        ),
        (
            "features",
            "Act as an annotator to label irony datasets. List the key features that signal irony in a statement, one per line.",
        ),
        (
            "procedure",
            "provide a complete sequence of steps to identify an irony in a statement, one numbered step per line.",
        ),
    ]
}

/// Prompt/answer pairs from a live extraction, kept for audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeTranscript {
    pub exchanges: Vec<(String, String, String)>,
    pub bundle: KnowledgeBundle,
}

/// Sends the four pattern prompts and the three knowledge questions, then
/// parses a fresh bundle from the answers.
pub fn extract_knowledge(gateway: &Gateway, settings: &ModelSettings) -> Result<KnowledgeTranscript, PipelineError> {
    let mut exchanges = Vec::new();
    for (name, prompt) in knowledge_extraction_prompts() {
        let r = gateway.complete(&settings.request(prompt.to_string()))?;
        exchanges.push((name.to_string(), prompt.to_string(), r.text));
    }
    let mut answers = Vec::new();
    for (name, prompt) in knowledge_questions() {
        let r = gateway.complete(&settings.request(prompt.to_string()))?;
        answers.push(r.text.clone());
        exchanges.push((name.to_string(), prompt.to_string(), r.text));
    }
    let bundle = prompts::parse_knowledge_answers(&answers[0], &answers[1], &answers[2])
        .map_err(|e| PipelineError::Knowledge(e.to_string()))?;
    Ok(KnowledgeTranscript { exchanges, bundle })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{MockReply, MockScript};
    use crate::prompts::default_knowledge;
    use Label::{Ironic as I, NonIronic as N};

    fn settings() -> ModelSettings {
        ModelSettings::new(Provider::Mock, "mock")
    }

    fn record(id: &str, text: &str, gold: Label) -> StatementRecord {
        StatementRecord {
            id: id.into(),
            text: text.into(),
            gold,
            intended: None,
            source: "t".into(),
        }
    }

    #[test]
    fn vote_examples() {
        let v = vote(&[Some(I), Some(I), Some(N)]);
        assert_eq!((v.final_label, v.abstentions, v.unanimous), (I, 0, false));
        let v = vote(&[Some(N), Some(N), Some(N)]);
        assert_eq!((v.final_label, v.unanimous), (N, true));
        let v = vote(&[Some(I), None, Some(N)]);
        assert_eq!((v.final_label, v.abstentions), (N, 1));
        let v = vote(&[None, None, None]);
        assert_eq!((v.final_label, v.unanimous, v.abstentions), (N, false, 3));
        assert_eq!(vote(&[Some(I)]).final_label, I);
    }

    fn idadp_mock() -> Pipeline {
        Pipeline::idadp(&default_knowledge(), DEFAULT_THRESHOLD, settings()).unwrap()
    }

    #[test]
    fn idadp_composition() {
        let script = MockScript::default()
            .text_rule(&["Identify the irony"], "It mocks the delay.\n\"The train was late.\"\n{\"irony\": 1}")
            .text_rule(&["The text is not ironic if"], "Contrast present.\n{\"irony\": 1}")
            .text_rule(&["probabilistic score"], "The likelihood score is 0.2.\n{\"irony\": 0}");
        let g = Gateway::mock(script);
        let r = idadp_mock().run_statement(&record("a", "Great, late again", I), &g).unwrap();
        assert_eq!(r.vote.ballots, vec![Some(I), Some(I), Some(N)]);
        assert_eq!(r.vote.final_label, I);
        assert_eq!(r.reason_from, Some(0));
        assert_eq!(r.reason.as_deref(), Some("It mocks the delay."));
        assert_eq!(r.outputs[2].probability, Some(0.2));
        assert_eq!(r.request_hashes.len(), 3);
    }

    #[test]
    fn transport_error_abstains() {
        let script = MockScript::default()
            .text_rule(&["Identify the irony"], "{\"irony\": 1}")
            .rule(&["The text is not ironic if"], MockReply::Status { status: 400 })
            .text_rule(&["probabilistic score"], "score 0.1 {\"irony\": 0}");
        let r = idadp_mock()
            .run_statement(&record("a", "x", I), &Gateway::mock(script))
            .unwrap();
        assert_eq!(r.vote.ballots, vec![Some(I), None, Some(N)]);
        assert_eq!(r.vote.final_label, N);
        assert!(r.errors[1].is_some());
    }

    #[test]
    fn all_failed_is_an_error() {
        let script = MockScript {
            rules: Vec::new(),
            default: Some(MockReply::Status { status: 400 }),
        };
        let err = idadp_mock().run_statement(&record("a", "x", I), &Gateway::mock(script));
        assert!(matches!(err, Err(PipelineError::AllPromptsFailed { .. })));
    }

    #[test]
    fn baseline_is_one_ballot() {
        let p = Pipeline::baseline(Strategy::ZeroCot, None, settings()).unwrap();
        let r = p
            .run_statement(&record("a", "x", N), &Gateway::mock(MockScript::constant("{\"irony\":0}")))
            .unwrap();
        assert_eq!(r.vote.ballots, vec![Some(N)]);
        assert_eq!(r.vote.final_label, N);
        assert!(Pipeline::baseline(Strategy::Idadp, None, settings()).is_err());
        assert!(Pipeline::baseline(Strategy::AutoCot, None, settings()).is_err());
    }

    #[test]
    fn corpus_run_is_aligned_and_parallelism_free() {
        let script = MockScript::constant("Because.\n{\"irony\": 0}").text_rule(&["odd"], "Odd one.\n{\"irony\": 1}");
        let records: Vec<_> = (0..10)
            .map(|i| record(&format!("s{i}"), &format!("{} {i}", if i % 2 == 1 { "odd" } else { "even" }), N))
            .collect();
        let p = idadp_mock();
        let g1 = Gateway::mock(script.clone());
        let seen = AtomicUsize::new(0);
        let a = p.run_corpus(&records, &g1, 1, |_, _| {
            seen.fetch_add(1, Ordering::Relaxed);
        });
        assert_eq!(seen.load(Ordering::Relaxed), 10);
        let b = p.run_corpus(&records, &Gateway::mock(script), 4, |_, _| {});
        let ids: Vec<_> = a.iter().map(|r| r.as_ref().unwrap().statement_id.clone()).collect();
        assert_eq!(ids, (0..10).map(|i| format!("s{i}")).collect::<Vec<_>>());
        let a: Vec<_> = a.into_iter().map(Result::unwrap).collect();
        let b: Vec<_> = b.into_iter().map(Result::unwrap).collect();
        assert_eq!(a, b);

        let calls = g1.stats().live_calls;
        let again: Vec<_> = p.run_corpus(&records, &g1, 3, |_, _| {}).into_iter().map(Result::unwrap).collect();
        assert_eq!(again, a);
        assert_eq!(g1.stats().live_calls, calls);
    }

    #[test]
    fn auto_cot_exemplars_are_balanced() {
        let records: Vec<_> = (0..12)
            .map(|i| record(&format!("r{i}"), &format!("text {i}"), if i < 4 { I } else { N }))
            .collect();
        let corpus = Corpus::new("t", records).unwrap();
        let g = Gateway::mock(MockScript::constant("It is plain.\n{\"irony\": 0}"));
        let ex = build_auto_cot_exemplars(&corpus, 7, &g, &settings()).unwrap();
        assert_eq!(ex.len(), 6);
        assert_eq!(ex.iter().filter(|e| e.label == I).count(), 3);
        assert_eq!(ex[0].reasoning, "It is plain.");
        let again = build_auto_cot_exemplars(&corpus, 7, &g, &settings()).unwrap();
        assert_eq!(ex, again);
        assert_eq!(Pipeline::baseline(Strategy::AutoCot, Some(&ex), settings()).unwrap().templates[0].steps.len(), 11);
    }

    #[test]
    fn live_knowledge_round_trip() {
        let script = MockScript::constant("Sure.")
            .text_rule(&["definition of irony"], "Irony says the opposite of what is meant. It is common.")
            .text_rule(&["key features"], "- a gap between words and meaning\n- an unexpected outcome\n- tone")
            .text_rule(
                &["numbered step"],
                "1. Read it.\n2. Find the literal meaning.\n3. Compare with context.\n4. Look for contrast.\n5. Decide.\n6. Extra.",
            );
        let t = extract_knowledge(&Gateway::mock(script), &settings()).unwrap();
        assert_eq!(t.exchanges.len(), 7);
        assert_eq!(t.bundle.definition, "Irony says the opposite of what is meant.");
        assert_eq!(t.bundle.features.len(), 2);
        assert_eq!(t.bundle.procedure.len(), 5);
    }
}
