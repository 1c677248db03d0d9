//! Prompt templates and demonstrations.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;

use crate::span::{LabeledExample, Span, Task};

use super::render::{enrich_index, render_canonical};
use super::{StrategyConfig, StrategyKind};

/// The shipped template.
pub const DEFAULT_TEMPLATE: &str = include_str!("../../templates/default.txt");

const PLACEHOLDERS: [&str; 6] = ["task_description", "format", "labels", "examples", "notes", "input"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("unknown placeholder `{{{0}}}`")]
    UnknownPlaceholder(String),
    #[error("template has no `{{input}}` placeholder")]
    MissingInput,
}

fn placeholder_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").expect("valid regex"))
}

/// A prompt template with `{name}` placeholders.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Template {
    source: String,
}

impl Default for Template {
    fn default() -> Self {
        Self::parse(DEFAULT_TEMPLATE).expect("shipped template is valid")
    }
}

impl Template {
    pub fn parse(source: &str) -> Result<Self, TemplateError> {
        let mut has_input = false;
        for caps in placeholder_regex().captures_iter(source) {
            let name = &caps[1];
            if !PLACEHOLDERS.contains(&name) {
                return Err(TemplateError::UnknownPlaceholder(name.to_string()));
            }
            has_input |= name == "input";
        }
        if !has_input {
            return Err(TemplateError::MissingInput);
        }
        Ok(Self {
            source: source.to_string(),
        })
    }

    /// Substitutes placeholders in one pass, so values are never
    /// re-expanded.
    pub fn render(&self, values: &BTreeMap<&str, String>) -> String {
        let out = placeholder_regex().replace_all(&self.source, |caps: &regex::Captures<'_>| {
            values.get(&caps[1]).cloned().unwrap_or_default()
        });
        out.trim_end_matches('\n').to_string()
    }
}

/// One worked example shown in the prompt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Demonstration {
    pub input: String,
    pub output: String,
}

/// The rendered prompt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptBundle {
    /// Full prompt text sent to the model.
    pub text: String,
    /// The input as shown to the model (with `offset::word` markers for
    /// index-enriched).
    pub rendered_input: String,
    /// The output-format block.
    pub format_note: String,
}

const LINA: &str = "Lina Berg joined AstraTech in Stockholm after finishing her studies at Northvale University.";

/// The built-in worked example for a task.
pub fn demo_example(task: Task) -> Option<LabeledExample> {
    let mut ex = match task {
        Task::Ner => LabeledExample::new(
            "demo-ner",
            task,
            LINA,
            &["PER", "ORG", "LOC"],
            vec![
                Span::new(0, 9, "PER"),
                Span::new(17, 26, "ORG"),
                Span::new(30, 39, "LOC"),
                Span::new(71, 91, "ORG"),
            ],
        ),
        Task::Gec => LabeledExample::new(
            "demo-gec",
            task,
            "Yesterday I go to cinema with a my friends.",
            &["R", "M", "U"],
            vec![Span::new(12, 14, "R"), Span::new(18, 18, "M"), Span::new(30, 31, "U")],
        ),
        Task::EsaMt => {
            let mut ex = LabeledExample::new(
                "demo-esa-mt",
                task,
                "The dog sleeps in the kitchen.",
                &["MINOR", "MAJOR"],
                vec![Span::new(22, 29, "MAJOR")],
            );
            ex.aux_text = Some("Der Hund schläft im Garten.".into());
            ex
        }
        Task::Cpl => {
            let mut ex = LabeledExample::new(
                "demo-cpl",
                task,
                "house wind dry old road dry",
                &["MATCH"],
                vec![Span::new(19, 27, "MATCH")],
            );
            ex.aux_text = Some("Find all sequences matching '\\w+ dry' that are not preceded by 'house'".into());
            ex
        }
        Task::Custom => return None,
    };
    ex.lang = "en".into();
    Some(ex)
}

/// Demonstrations rendered in the strategy's canonical format.
pub fn default_demonstrations(kind: StrategyKind, task: Task) -> Vec<Demonstration> {
    demo_example(task)
        .map(|ex| Demonstration {
            input: input_block(kind, &ex),
            output: render_canonical(kind, &ex),
        })
        .into_iter()
        .collect()
}

fn task_description(task: Task, categories: &[String]) -> String {
    match task {
        Task::Ner => format!("Extract named entities ({}) from the text.", categories.join(", ")),
        Task::Gec => "Identify grammatical errors in learner-written text.".into(),
        Task::EsaMt => "Identify translation errors by comparing the translation to the source text.".into(),
        Task::Cpl => "Find all text spans that match the given pattern queries.".into(),
        Task::Custom => "Find and label the relevant spans of the text.".into(),
    }
}

fn format_block(kind: StrategyKind, categories: &[String]) -> String {
    let labels = categories.join(", ");
    match kind {
        StrategyKind::Tag => "<entity type=\"LABEL\"></entity>".into(),
        StrategyKind::Index | StrategyKind::IndexEnriched => "[start:end] = LABEL".into(),
        StrategyKind::Match | StrategyKind::LogitMatch => {
            format!("[{{\"text\": \"exact text span from input\", \"label\": \"category ({labels})\"}}]")
        }
        StrategyKind::MatchOcc | StrategyKind::LogitMatchOcc => format!(
            "[{{\"text\": \"exact span from input\", \"label\": \"category ({labels})\", \"occurrence\": \"which occurrence (1, 2, 3...)\"}}]"
        ),
    }
}

const TAG_NOTE: &str = "IMPORTANT: Your output needs to include copy of the entire input text, including non-tagged parts. If you are not outputting any tags, you need to copy the input text literally. Surround the specific spans with the XML tags as required.  Do not output any additional explanations or comments, start generating output straight away.";
const MATCH_NOTE: &str = "Return a valid JSON array only.";
const INDEX_NOTE: &str = "IMPORTANT: Character positions are 0-indexed. - First character is at position 0 - Spaces count as characters - start is inclusive, end is exclusive";
const ENRICHED_NOTE: &str = " - Every word of the input is prefixed with its start position as position::word; the prefixes are not part of the text";
const GEC_MISSING_NOTE: &str = "For missing words, mark the word before which the missing text should be inserted.";

fn notes(kind: StrategyKind, task: Task) -> String {
    let mut out = match kind {
        StrategyKind::Tag => TAG_NOTE.to_string(),
        StrategyKind::Index => INDEX_NOTE.to_string(),
        StrategyKind::IndexEnriched => format!("{INDEX_NOTE}{ENRICHED_NOTE}"),
        _ => MATCH_NOTE.to_string(),
    };
    if task == Task::Gec && !matches!(kind, StrategyKind::Index | StrategyKind::IndexEnriched) {
        out.push(' ');
        out.push_str(GEC_MISSING_NOTE);
    }
    out
}

fn rendered_text(kind: StrategyKind, text: &str) -> String {
    if kind == StrategyKind::IndexEnriched {
        enrich_index(text)
    } else {
        text.to_string()
    }
}

// the input section: auxiliary text (source sentence, query) then the text
fn input_block(kind: StrategyKind, example: &LabeledExample) -> String {
    let text = rendered_text(kind, &example.text);
    match (&example.aux_text, example.task) {
        (Some(aux), Task::EsaMt) => format!("Source: {aux}\nTranslation: {text}"),
        (Some(aux), _) => format!("Query: {aux}\nText: {text}"),
        (None, _) => text,
    }
}

/// Renders the prompt for `example` with the shipped template.
pub fn render_prompt(config: &StrategyConfig, example: &LabeledExample) -> PromptBundle {
    render_prompt_with(&Template::default(), config, example)
}

/// Renders the prompt for `example` with a custom template.
pub fn render_prompt_with(template: &Template, config: &StrategyConfig, example: &LabeledExample) -> PromptBundle {
    let format_note = format_block(config.kind, &example.categories);
    let examples = config
        .few_shot
        .iter()
        .enumerate()
        .map(|(i, d)| format!("{}. {} -> {}", i + 1, d.input, d.output))
        .collect::<Vec<_>>()
        .join("\n");
    let values = BTreeMap::from([
        ("task_description", task_description(config.task, &example.categories)),
        ("format", format_note.clone()),
        ("labels", example.categories.join(", ")),
        ("examples", examples),
        ("notes", notes(config.kind, config.task)),
        ("input", input_block(config.kind, example)),
    ]);
    PromptBundle {
        text: template.render(&values),
        rendered_input: rendered_text(config.kind, &example.text),
        format_note,
    }
}
