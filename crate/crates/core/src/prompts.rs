//! Prompt catalog: knowledge-extraction patterns, the irony knowledge bundle,
//! the three IDADP strategy prompts and the baseline strategies.
//!
//! Templates are frozen text. Each one is a preamble (carrying the
//! `[input_comment]` slot), the line `Steps to follow:` and a numbered step
//! list whose last step asks for the `{"irony": 1/0}` JSON result.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::metrics::readability::count_sentences;

/// Placeholder replaced by the quoted statement text at render time.
pub const INPUT_SLOT: &str = "[input_comment]";

const HEADER: &str = "Determine whether [input_comment] include irony.";
const STEPS_LINE: &str = "Steps to follow:";
const REASON_STEP: &str = "Please write the reason why you think this statement has irony.";
const REPHRASE_STEP: &str = "Please rephrase this statement without the irony with a new line.";
const JSON_STEP: &str =
    "the result in only a JSON format where the key is \"irony\" and the value is 1 for irony, 0 for No-irony.";

/// Default decision threshold of the probabilistic prompt.
pub const DEFAULT_THRESHOLD: f64 = 0.7;

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("Auto-CoT needs exactly 6 exemplars, got {0}")]
    MissingExemplars(usize),
    #[error("exemplars are only used by Auto-CoT")]
    UnexpectedExemplars,
    #[error("{0} is an IDADP template; build it with idadp_prompts")]
    NotABaseline(TemplateKind),
    #[error("template `{name}`: {problem}")]
    Invalid { name: String, problem: String },
    #[error("knowledge bundle: {0}")]
    InvalidKnowledge(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    IdadpClarify,
    IdadpFeature,
    IdadpProbabilistic,
    ZeroCot,
    AutoCot,
    Ape,
    Ps,
    PsPlus,
    Plain,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 9] = [
        TemplateKind::IdadpClarify,
        TemplateKind::IdadpFeature,
        TemplateKind::IdadpProbabilistic,
        TemplateKind::ZeroCot,
        TemplateKind::AutoCot,
        TemplateKind::Ape,
        TemplateKind::Ps,
        TemplateKind::PsPlus,
        TemplateKind::Plain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateKind::IdadpClarify => "idadp_clarify",
            TemplateKind::IdadpFeature => "idadp_feature",
            TemplateKind::IdadpProbabilistic => "idadp_probabilistic",
            TemplateKind::ZeroCot => "zero_cot",
            TemplateKind::AutoCot => "auto_cot",
            TemplateKind::Ape => "ape",
            TemplateKind::Ps => "ps",
            TemplateKind::PsPlus => "ps_plus",
            TemplateKind::Plain => "plain",
        }
    }

    pub fn is_idadp(self) -> bool {
        matches!(
            self,
            TemplateKind::IdadpClarify | TemplateKind::IdadpFeature | TemplateKind::IdadpProbabilistic
        )
    }
}

impl std::fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    pub strategy: TemplateKind,
    /// Lines before `Steps to follow:`; the first carries the input slot.
    pub preamble: Vec<String>,
    pub steps: Vec<String>,
    pub expects_probability: bool,
}

impl PromptTemplate {
    fn new(strategy: TemplateKind, preamble: &[&str], steps: Vec<String>) -> Self {
        PromptTemplate {
            name: strategy.name().to_string(),
            strategy,
            preamble: preamble.iter().map(|s| s.to_string()).collect(),
            steps,
            expects_probability: strategy == TemplateKind::IdadpProbabilistic,
        }
    }

    /// The template text with the slot still in place.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for line in &self.preamble {
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(STEPS_LINE);
        for (i, step) in self.steps.iter().enumerate() {
            let _ = write!(out, "\n{}. {}", i + 1, step);
        }
        out
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let invalid = |problem: &str| PromptError::Invalid {
            name: self.name.clone(),
            problem: problem.to_string(),
        };
        let slots = self.text().matches(INPUT_SLOT).count();
        if slots != 1 {
            return Err(invalid(&format!("input slot occurs {slots} times")));
        }
        match self.steps.last() {
            Some(last) if last.contains("JSON") && last.contains("\"irony\"") => {}
            _ => return Err(invalid("final step must request the JSON result")),
        }
        if self.expects_probability != (self.strategy == TemplateKind::IdadpProbabilistic) {
            return Err(invalid("expects_probability is reserved for the probabilistic prompt"));
        }
        Ok(())
    }
}

/// Substitutes the statement into the template. The text is inserted as a
/// JSON string literal, so quotes and newlines are escaped and the result
/// stays a single instruction block.
pub fn render(template: &PromptTemplate, text: &str) -> String {
    let quoted = serde_json::to_string(text).expect("string serialization cannot fail");
    template.text().replacen(INPUT_SLOT, &quoted, 1)
}

/// The four knowledge-extraction pattern prompts, tagged by pattern name.
pub fn knowledge_extraction_prompts() -> Vec<(&'static str, &'static str)> {
    vec![
        ("flipped_interaction", "I would like you to ask me questions to identify irony correctly."),
        ("persona", "Act as an annotator to label irony datasets."),
        (
            "question_refinement",
            "I will ask your help to identify irony in a statement. My question is 'Is there irony in the statement?' suggests a better version of the question to use.",
        ),
        ("recipe", "provide a complete sequence of steps to identify an irony in a statement."),
    ]
}

/// Irony knowledge injected into the IDADP prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeBundle {
    pub definition: String,
    /// Cue descriptions; the first two are the discrepancy and contrast cues.
    pub features: Vec<String>,
    pub procedure: Vec<String>,
}

impl KnowledgeBundle {
    pub fn validate(&self) -> Result<(), PromptError> {
        let bad = |m: String| Err(PromptError::InvalidKnowledge(m));
        if self.definition.trim().is_empty() {
            return bad("definition is empty".into());
        }
        if self.features.len() < 2 {
            return bad(format!("need 2 features, got {}", self.features.len()));
        }
        if self.procedure.is_empty() {
            return bad("procedure is empty".into());
        }
        let entries = std::iter::once(&self.definition)
            .chain(&self.features)
            .chain(&self.procedure);
        for entry in entries {
            if entry.trim().is_empty() {
                return bad("empty entry".into());
            }
            if count_sentences(entry) > 2 {
                return bad(format!("entry longer than two sentences: {entry}"));
            }
        }
        Ok(())
    }
}

pub fn default_knowledge() -> KnowledgeBundle {
    KnowledgeBundle {
        definition: "Irony expresses the opposite of its literal meaning or contrast with the context.".into(),
        features: vec![
            "a discrepancy between what is said and what is meant".into(),
            "contrast between expectation and reality presented in the statement".into(),
        ],
        procedure: vec![
            "Is the following statement ironic?".into(),
            "Provide the statement along with relevant context, for example: \"A person says, 'I love waiting in line for hours!' after spending three hours at the DMV.\"".into(),
            "What is the literal meaning?".into(),
            "Does the literal meaning match the actual situation?".into(),
            "Determine whether the statement is ironic based on the previous analyses.".into(),
        ],
    }
}

fn with_tail(head: &[&str]) -> Vec<String> {
    head.iter()
        .copied()
        .chain([REASON_STEP, REPHRASE_STEP, JSON_STEP])
        .map(str::to_string)
        .collect()
}

/// The three IDADP prompts with the default 0.7 threshold.
pub fn idadp_prompts(knowledge: &KnowledgeBundle) -> Result<[PromptTemplate; 3], PromptError> {
    idadp_prompts_with_threshold(knowledge, DEFAULT_THRESHOLD)
}

pub fn idadp_prompts_with_threshold(
    knowledge: &KnowledgeBundle,
    threshold: f64,
) -> Result<[PromptTemplate; 3], PromptError> {
    knowledge.validate()?;
    let preamble = [HEADER, "Let's think step by step"];
    let clarify = PromptTemplate::new(
        TemplateKind::IdadpClarify,
        &preamble,
        with_tail(&[
            "Identify the irony: Determine which part of the sentence conveys the opposite of what is meant.",
            "Clarify the intent: Express the actual meaning directly",
        ]),
    );
    let feature = PromptTemplate::new(
        TemplateKind::IdadpFeature,
        &preamble,
        vec![
            format!("The text is not ironic if the statement does not contain {}.", knowledge.features[0]),
            format!("The text is not ironic if There is no unexpected outcome or {}.", knowledge.features[1]),
            REASON_STEP.to_string(),
            "Please rephrase this statement without the irony with a new line .".to_string(),
            JSON_STEP.to_string(),
        ],
    );
    let probabilistic = PromptTemplate::new(
        TemplateKind::IdadpProbabilistic,
        &preamble,
        vec![
            "Please provide a probabilistic score ranging from 0 to 1, representing the likelihood that the text is ironic.".to_string(),
            format!("The threshold for irony detection is set to {threshold}."),
            REASON_STEP.to_string(),
            REPHRASE_STEP.to_string(),
            JSON_STEP.to_string(),
        ],
    );
    Ok([clarify, feature, probabilistic])
}

/// A few-shot demonstration for Auto-CoT.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub text: String,
    pub reasoning: String,
    pub label: Label,
}

impl Exemplar {
    fn as_step(&self, n: usize) -> String {
        let reasoning = self.reasoning.split_whitespace().collect::<Vec<_>>().join(" ");
        format!(
            "Example {n}: Statement: {} Reasoning: {} Result: {{\"irony\": {}}}",
            serde_json::to_string(&self.text).expect("string serialization cannot fail"),
            reasoning,
            self.label.as_int()
        )
    }
}

/// Number of demonstrations in the Auto-CoT template.
pub const AUTO_COT_EXEMPLARS: usize = 6;

/// Verbatim baseline template. `exemplars` is required for (and only for)
/// Auto-CoT, with exactly six entries placed at steps 2-7.
pub fn baseline_prompt(kind: TemplateKind, exemplars: Option<&[Exemplar]>) -> Result<PromptTemplate, PromptError> {
    if kind == TemplateKind::AutoCot {
        let ex = exemplars.ok_or(PromptError::MissingExemplars(0))?;
        if ex.len() != AUTO_COT_EXEMPLARS {
            return Err(PromptError::MissingExemplars(ex.len()));
        }
        let steps: Vec<String> = ex.iter().enumerate().map(|(i, e)| e.as_step(i + 1)).collect();
        return Ok(auto_cot_with(steps));
    }
    if exemplars.is_some() {
        return Err(PromptError::UnexpectedExemplars);
    }
    let t = match kind {
        TemplateKind::ZeroCot => PromptTemplate::new(kind, &[HEADER], with_tail(&["Let's think step by step."])),
        TemplateKind::Ape => PromptTemplate::new(
            kind,
            &[HEADER],
            with_tail(&["Let's work this out in a step-by-step way to be sure we have the right answer."]),
        ),
        TemplateKind::Ps => PromptTemplate::new(
            kind,
            &[HEADER],
            with_tail(&[
                "Let's first understand the problem and devise a plan to solve the problem",
                "let's carry out the plan and solve the problem step by step.",
            ]),
        ),
        TemplateKind::PsPlus => PromptTemplate::new(
            kind,
            &[HEADER],
            with_tail(&[
                "Let's first understand the problem and check if contains a discrepancy between what is said and what is meant",
                "let's carry out the plan and pay attention to finding ironic words or phases.",
                "solve the problem step by step.",
            ]),
        ),
        TemplateKind::Plain => PromptTemplate::new(
            kind,
            &["Determine whether [input_comment] includes irony."],
            vec![JSON_STEP.to_string()],
        ),
        other => return Err(PromptError::NotABaseline(other)),
    };
    Ok(t)
}

fn auto_cot_with(examples: Vec<String>) -> PromptTemplate {
    let mut steps = vec!["Study the following samples.".to_string()];
    steps.extend(examples);
    steps.extend(with_tail(&["Let's think step by step."]));
    PromptTemplate::new(TemplateKind::AutoCot, &[HEADER], steps)
}

/// Auto-CoT with `[Example k]` placeholders in place of exemplars.
pub fn auto_cot_skeleton() -> PromptTemplate {
    auto_cot_with((1..=AUTO_COT_EXEMPLARS).map(|i| format!("[Example {i}]")).collect())
}

/// All nine templates in catalog form (frozen knowledge, Auto-CoT skeleton).
pub fn catalog() -> Vec<PromptTemplate> {
    let mut out: Vec<PromptTemplate> = idadp_prompts(&default_knowledge())
        .expect("default knowledge is valid")
        .into_iter()
        .collect();
    for kind in [TemplateKind::ZeroCot, TemplateKind::AutoCot, TemplateKind::Ape, TemplateKind::Ps, TemplateKind::PsPlus, TemplateKind::Plain] {
        out.push(if kind == TemplateKind::AutoCot {
            auto_cot_skeleton()
        } else {
            baseline_prompt(kind, None).expect("baselines without exemplars")
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub strategy: TemplateKind,
    pub expects_probability: bool,
    pub file: String,
}

/// Writes `<name>.txt` per template plus `manifest.json`.
pub fn export_catalog(dir: &Path) -> Result<Vec<ManifestEntry>, PromptError> {
    fs::create_dir_all(dir)?;
    let mut manifest = Vec::new();
    for t in catalog() {
        let file = format!("{}.txt", t.name);
        fs::write(dir.join(&file), format!("{}\n", t.text()))?;
        manifest.push(ManifestEntry {
            name: t.name.clone(),
            strategy: t.strategy,
            expects_probability: t.expects_probability,
            file,
        });
    }
    let json = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
    fs::write(dir.join("manifest.json"), json + "\n")?;
    Ok(manifest)
}

/// Builds a bundle from free-text model answers to the definition, feature
/// and procedure questions: first sentence of the definition, first two cue
/// phrases, first five procedure steps.
pub fn parse_knowledge_answers(definition: &str, features: &str, procedure: &str) -> Result<KnowledgeBundle, PromptError> {
    let definition = first_sentence(&strip_list_marker(definition.trim()));
    let features: Vec<String> = list_items(features).into_iter().map(|f| first_sentence(&f)).take(2).collect();
    let procedure: Vec<String> = list_items(procedure).into_iter().map(|f| first_sentence(&f)).take(5).collect();
    let bundle = KnowledgeBundle {
        definition,
        features,
        procedure,
    };
    bundle.validate()?;
    Ok(bundle)
}

fn first_sentence(text: &str) -> String {
    let text = text.trim();
    let bytes = text.as_bytes();
    for (i, c) in text.char_indices() {
        if matches!(c, '.' | '!' | '?') {
            let next = bytes.get(i + 1).copied();
            if next.is_none() || next.is_some_and(|b| b.is_ascii_whitespace()) {
                return text[..=i].to_string();
            }
        }
    }
    text.to_string()
}

fn strip_list_marker(line: &str) -> String {
    let t = line.trim_start_matches(['-', '*', '•', ' ']);
    let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
    let t = if digits > 0 && t[digits..].starts_with(['.', ')']) {
        &t[digits + 1..]
    } else {
        t
    };
    t.trim().trim_matches('*').trim().to_string()
}

fn list_items(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .filter(|l| {
            l.starts_with(['-', '*', '•']) || l.chars().next().is_some_and(|c| c.is_ascii_digit())
        })
        .map(strip_list_marker)
        .filter(|l| !l.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_extraction_patterns() {
        let p = knowledge_extraction_prompts();
        let names: Vec<_> = p.iter().map(|(n, _)| *n).collect();
        assert_eq!(names, ["flipped_interaction", "persona", "question_refinement", "recipe"]);
        assert!(p.contains(&("persona", "Act as an annotator to label irony datasets.")));
        assert_eq!(p, knowledge_extraction_prompts());
    }

    #[test]
    fn default_knowledge_contents() {
        let k = default_knowledge();
        assert!(k.definition.contains("opposite of its literal meaning"));
        assert_eq!(k.features.len(), 2);
        assert_eq!(k.procedure.len(), 5);
        assert_eq!(k.procedure[0], "Is the following statement ironic?");
        k.validate().unwrap();
    }

    #[test]
    fn idadp_templates() {
        let [a, b, c] = idadp_prompts(&default_knowledge()).unwrap();
        assert!(c.steps.contains(&"The threshold for irony detection is set to 0.7.".to_string()));
        assert!(c.expects_probability && !a.expects_probability && !b.expects_probability);
        for t in [&a, &b, &c] {
            t.validate().unwrap();
            assert!(t.steps.last().unwrap().starts_with("the result in only a JSON format"));
        }
        assert_eq!(
            b.steps[0],
            "The text is not ironic if the statement does not contain a discrepancy between what is said and what is meant."
        );
        let again = idadp_prompts(&default_knowledge()).unwrap();
        assert_eq!(again[0].text(), a.text());
    }

    #[test]
    fn baseline_examples() {
        let ape = baseline_prompt(TemplateKind::Ape, None).unwrap();
        assert_eq!(ape.steps[0], "Let's work this out in a step-by-step way to be sure we have the right answer.");
        let ex: Vec<Exemplar> = (0..6)
            .map(|i| Exemplar {
                text: format!("text {i}"),
                reasoning: "because".into(),
                label: if i % 2 == 0 { Label::Ironic } else { Label::NonIronic },
            })
            .collect();
        let auto = baseline_prompt(TemplateKind::AutoCot, Some(&ex)).unwrap();
        assert_eq!(auto.steps.len(), 11);
        for (i, step) in auto.steps[1..7].iter().enumerate() {
            assert!(step.starts_with(&format!("Example {}: Statement: \"text {i}\"", i + 1)), "{step}");
        }
        assert!(matches!(
            baseline_prompt(TemplateKind::AutoCot, Some(&ex[..5])),
            Err(PromptError::MissingExemplars(5))
        ));
        assert!(matches!(baseline_prompt(TemplateKind::AutoCot, None), Err(PromptError::MissingExemplars(0))));
        assert!(matches!(baseline_prompt(TemplateKind::IdadpClarify, None), Err(PromptError::NotABaseline(_))));
    }

    #[test]
    fn render_quotes_and_escapes() {
        let t = baseline_prompt(TemplateKind::ZeroCot, None).unwrap();
        let out = render(&t, "x");
        assert!(out.contains("\"x\"") && out.contains("Let's think step by step"));
        let out = render(&t, "he said \"no\"\nthen left");
        assert!(out.contains(r#""he said \"no\"\nthen left""#));
        assert_eq!(out.lines().count(), t.text().lines().count());
    }

    #[test]
    fn catalog_is_valid() {
        let c = catalog();
        assert_eq!(c.len(), 9);
        for t in &c {
            t.validate().unwrap();
        }
    }

    #[test]
    fn parse_live_answers() {
        let k = parse_knowledge_answers(
            "Irony is saying the opposite of what you mean. It is common online.",
            "Here are cues:\n1. Discrepancy between words and meaning. Often subtle.\n2. Contrast with context.\n3. Exaggeration.",
            "1. Read it.\n2. Find the literal meaning.\n3. Compare with context.\n4. Look for markers.\n5. Decide.\n6. Extra.",
        )
        .unwrap();
        assert_eq!(k.definition, "Irony is saying the opposite of what you mean.");
        assert_eq!(k.features, ["Discrepancy between words and meaning.", "Contrast with context."]);
        assert_eq!(k.procedure.len(), 5);
        assert!(parse_knowledge_answers("def.", "no list here", "1. a").is_err());
    }
}
