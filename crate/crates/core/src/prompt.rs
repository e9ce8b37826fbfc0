//! Prompt construction and response parsing.
//!
//! Prompt wording lives in plain-text templates with `{name}` placeholders.
//! The defaults are compiled in; [`TemplateSet::from_dir`] overrides any of
//! them from a directory. Builders are pure: the same inputs always render
//! the same bytes.
//!
//! Builders and parsers share only the answer-format contract: the canonical
//! answers listed by [`exemplar_answers`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::atn::build_detection_atn;
use crate::types::{ArgumentLabel, StanceLabel, Topic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Detect,
    Extract,
    Stance,
    Generate,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Detect => "detect",
            Task::Extract => "extract",
            Task::Stance => "stance",
            Task::Generate => "generate",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = PromptError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "detect" => Ok(Task::Detect),
            "extract" => Ok(Task::Extract),
            "stance" => Ok(Task::Stance),
            "generate" | "gen" => Ok(Task::Generate),
            other => Err(PromptError::Input(format!("unknown task '{other}'"))),
        }
    }
}

/// Whether the detection automaton is embedded in the system message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub enum Variant {
    #[default]
    #[serde(rename = "atn")]
    WithAtn,
    #[serde(rename = "no-atn")]
    NoAtn,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::WithAtn => "atn",
            Variant::NoAtn => "no-atn",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = PromptError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "atn" | "with-atn" => Ok(Variant::WithAtn),
            "no-atn" | "noatn" | "plain" => Ok(Variant::NoAtn),
            other => Err(PromptError::Input(format!("unknown variant '{other}'"))),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("template {name}: {reason}")]
    Template { name: String, reason: String },
    #[error("reading template {name}: {source}")]
    Io {
        name: String,
        #[source]
        source: std::io::Error,
    },
}

/// A rendered system + user message pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
    pub task: Task,
    pub variant: Variant,
    /// Placeholder values the prompt was rendered from.
    #[serde(default)]
    pub vars: BTreeMap<String, String>,
}

impl Prompt {
    pub fn var(&self, name: &str) -> Option<&str> {
        self.vars.get(name).map(String::as_str)
    }
}

/// Names of the template files and the placeholders each must contain.
const TEMPLATE_SPECS: [(&str, &[&str]); 11] = [
    ("detect_system_atn", &["atn_rules"]),
    ("detect_system", &[]),
    ("detect_user", &["text"]),
    ("stance_system_atn", &["atn_rules"]),
    ("stance_system", &[]),
    ("stance_user", &["text", "topic"]),
    ("extract_system", &[]),
    ("extract_user", &["text"]),
    ("generate_system", &[]),
    ("generate_argument_user", &["argument_type", "topic"]),
    ("generate_non_argument_user", &["topic"]),
];

fn default_template(name: &str) -> &'static str {
    match name {
        "detect_system_atn" => include_str!("../templates/detect_system_atn.txt"),
        "detect_system" => include_str!("../templates/detect_system.txt"),
        "detect_user" => include_str!("../templates/detect_user.txt"),
        "stance_system_atn" => include_str!("../templates/stance_system_atn.txt"),
        "stance_system" => include_str!("../templates/stance_system.txt"),
        "stance_user" => include_str!("../templates/stance_user.txt"),
        "extract_system" => include_str!("../templates/extract_system.txt"),
        "extract_user" => include_str!("../templates/extract_user.txt"),
        "generate_system" => include_str!("../templates/generate_system.txt"),
        "generate_argument_user" => include_str!("../templates/generate_argument_user.txt"),
        "generate_non_argument_user" => include_str!("../templates/generate_non_argument_user.txt"),
        _ => unreachable!("unknown template {name}"),
    }
}

/// Replace `{name}` placeholders in one pass. Unknown `{...}` sequences are
/// copied through, and substituted values are never rescanned.
pub fn render_template(template: &str, vars: &BTreeMap<String, String>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}');
        match close {
            Some(close) if is_placeholder(&after[..close]) && vars.contains_key(&after[..close]) => {
                out.push_str(&vars[&after[..close]]);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn is_placeholder(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c == '_')
}

/// The full set of prompt templates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<&'static str, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            templates: TEMPLATE_SPECS
                .iter()
                .map(|(name, _)| (*name, default_template(name).to_string()))
                .collect(),
        }
    }
}

impl TemplateSet {
    /// Load `<name>.txt` files from `dir`, falling back to the built-in
    /// template for any file that is absent.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = TemplateSet::default();
        for (name, required) in TEMPLATE_SPECS {
            let path = dir.join(format!("{name}.txt"));
            if !path.exists() {
                continue;
            }
            let body = std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                name: name.to_string(),
                source,
            })?;
            for ph in required {
                if !body.contains(&format!("{{{ph}}}")) {
                    return Err(PromptError::Template {
                        name: name.to_string(),
                        reason: format!("missing placeholder {{{ph}}}"),
                    });
                }
            }
            set.templates.insert(name, body);
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> &str {
        &self.templates[name]
    }
}

/// Renders task prompts from a [`TemplateSet`].
#[derive(Debug, Clone)]
pub struct PromptBuilder {
    templates: TemplateSet,
    atn_rules: String,
}

impl Default for PromptBuilder {
    fn default() -> Self {
        PromptBuilder::new(TemplateSet::default())
    }
}

fn require(name: &str, value: &str) -> Result<(), PromptError> {
    if value.trim().is_empty() {
        Err(PromptError::Input(format!("{name} must not be empty")))
    } else {
        Ok(())
    }
}

fn vars(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

impl PromptBuilder {
    pub fn new(templates: TemplateSet) -> Self {
        PromptBuilder {
            templates,
            atn_rules: build_detection_atn().render_pseudo_language(),
        }
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    fn render(&self, task: Task, variant: Variant, system: &str, user: &str, v: BTreeMap<String, String>) -> Prompt {
        let mut sys_vars = v.clone();
        sys_vars.insert("atn_rules".to_string(), self.atn_rules.trim_end().to_string());
        Prompt {
            system: render_template(self.templates.get(system), &sys_vars).trim().to_string(),
            user: render_template(self.templates.get(user), &v).trim().to_string(),
            task,
            variant,
            vars: v,
        }
    }

    pub fn build_detection_prompt(&self, text: &str, variant: Variant) -> Result<Prompt, PromptError> {
        require("text", text)?;
        let system = match variant {
            Variant::WithAtn => "detect_system_atn",
            Variant::NoAtn => "detect_system",
        };
        Ok(self.render(Task::Detect, variant, system, "detect_user", vars(&[("text", text)])))
    }

    pub fn build_stance_prompt(&self, text: &str, topic: &str, variant: Variant) -> Result<Prompt, PromptError> {
        require("text", text)?;
        require("topic", topic)?;
        let system = match variant {
            Variant::WithAtn => "stance_system_atn",
            Variant::NoAtn => "stance_system",
        };
        Ok(self.render(
            Task::Stance,
            variant,
            system,
            "stance_user",
            vars(&[("text", text), ("topic", topic)]),
        ))
    }

    /// Topic extraction has a single variant; it never embeds the automaton.
    pub fn build_cte_prompt(&self, text: &str) -> Result<Prompt, PromptError> {
        require("text", text)?;
        Ok(self.render(
            Task::Extract,
            Variant::NoAtn,
            "extract_system",
            "extract_user",
            vars(&[("text", text)]),
        ))
    }

    /// Prompt for synthetic corpus generation. `argument_type` is `None` for
    /// non-argument texts.
    pub fn build_generation_prompt(
        &self,
        topic: &str,
        argument_type: Option<(&str, &str)>,
        style: &str,
        style_instruction: &str,
        sentences: usize,
    ) -> Result<Prompt, PromptError> {
        require("topic", topic)?;
        let sentences = sentences.to_string();
        let (user, v) = match argument_type {
            Some((name, definition)) => (
                "generate_argument_user",
                vars(&[
                    ("topic", topic),
                    ("argument_type", name),
                    ("type_definition", definition),
                    ("style", style),
                    ("style_instruction", style_instruction),
                    ("sentences", &sentences),
                ]),
            ),
            None => (
                "generate_non_argument_user",
                vars(&[
                    ("topic", topic),
                    ("style", style),
                    ("style_instruction", style_instruction),
                    ("sentences", &sentences),
                ]),
            ),
        };
        Ok(self.render(Task::Generate, Variant::NoAtn, "generate_system", user, v))
    }
}

/// How a label was recovered from a model response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConfidenceBasis {
    /// The response was exactly a canonical answer.
    ExactMatch,
    /// A canonical answer or synonym was found after normalization.
    NormalizedMatch,
    /// Nothing matched; the conservative default was used.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOutcome<L> {
    pub label: L,
    pub confidence_basis: ConfidenceBasis,
    pub raw: String,
    /// Always set for [`ConfidenceBasis::Fallback`].
    pub diagnostic: Option<String>,
}

impl<L> ParseOutcome<L> {
    fn matched(label: L, basis: ConfidenceBasis, raw: &str) -> Self {
        ParseOutcome {
            label,
            confidence_basis: basis,
            raw: raw.to_string(),
            diagnostic: None,
        }
    }

    fn fallback(label: L, raw: &str, diagnostic: impl Into<String>) -> Self {
        ParseOutcome {
            label,
            confidence_basis: ConfidenceBasis::Fallback,
            raw: raw.to_string(),
            diagnostic: Some(diagnostic.into()),
        }
    }
}

/// Canonical answers a well-behaved model gives for each task.
pub fn exemplar_answers(task: Task) -> &'static [&'static str] {
    match task {
        Task::Detect => &["Argument", "NoArgument"],
        Task::Stance => &["Favor", "Against", "NoArgument"],
        Task::Extract => &["Topic: <phrase>", "Topic: No Topic"],
        Task::Generate => &[],
    }
}

fn final_line(raw: &str) -> &str {
    raw.lines().rev().map(str::trim).find(|l| !l.is_empty()).unwrap_or("")
}

/// Lowercase, map every non-alphanumeric to a space, collapse, and pad with
/// spaces so phrases can be matched on word boundaries.
fn padded_words(s: &str) -> String {
    let mapped: String = s
        .chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect();
    format!(" {} ", mapped.split_whitespace().collect::<Vec<_>>().join(" "))
}

const NEGATIVE_ARGUMENT_PHRASES: [&str; 6] = [
    " noargument ",
    " no argument ",
    " not an argument ",
    " not argument ",
    " non argument ",
    " nonargument ",
];

fn says_not_argument(padded: &str) -> bool {
    NEGATIVE_ARGUMENT_PHRASES.iter().any(|p| padded.contains(p))
}

pub fn parse_detection_response(raw: &str) -> ParseOutcome<ArgumentLabel> {
    match raw.trim() {
        "Argument" => return ParseOutcome::matched(ArgumentLabel::Argument, ConfidenceBasis::ExactMatch, raw),
        "NoArgument" => {
            return ParseOutcome::matched(ArgumentLabel::NotArgument, ConfidenceBasis::ExactMatch, raw)
        }
        _ => {}
    }
    let line = padded_words(final_line(raw));
    if says_not_argument(&line) {
        ParseOutcome::matched(ArgumentLabel::NotArgument, ConfidenceBasis::NormalizedMatch, raw)
    } else if line.contains(" argument ") {
        ParseOutcome::matched(ArgumentLabel::Argument, ConfidenceBasis::NormalizedMatch, raw)
    } else {
        ParseOutcome::fallback(
            ArgumentLabel::NotArgument,
            raw,
            "no detection label found on the final line",
        )
    }
}

/// Closed synonym tables for stance answers.
const FAVOR_WORDS: [&str; 6] = ["favor", "favour", "pro", "support", "supports", "supportive"];
const AGAINST_WORDS: [&str; 6] = ["against", "con", "oppose", "opposes", "opposed", "opposing"];

pub fn parse_stance_response(raw: &str) -> ParseOutcome<StanceLabel> {
    match raw.trim() {
        "NoArgument" => {
            return ParseOutcome::matched(StanceLabel::NoArgument, ConfidenceBasis::ExactMatch, raw)
        }
        "Favor" => return ParseOutcome::matched(StanceLabel::Favor, ConfidenceBasis::ExactMatch, raw),
        "Against" => return ParseOutcome::matched(StanceLabel::Against, ConfidenceBasis::ExactMatch, raw),
        _ => {}
    }
    let line = padded_words(final_line(raw));
    if says_not_argument(&line) {
        return ParseOutcome::matched(StanceLabel::NoArgument, ConfidenceBasis::NormalizedMatch, raw);
    }
    let last = line.split_whitespace().rev().find_map(|w| {
        if FAVOR_WORDS.contains(&w) {
            Some(StanceLabel::Favor)
        } else if AGAINST_WORDS.contains(&w) {
            Some(StanceLabel::Against)
        } else {
            None
        }
    });
    match last {
        Some(label) => ParseOutcome::matched(label, ConfidenceBasis::NormalizedMatch, raw),
        None => ParseOutcome::fallback(StanceLabel::NoArgument, raw, "no stance label found on the final line"),
    }
}

fn clean_topic_phrase(s: &str) -> &str {
    s.trim_matches(|c: char| {
        c.is_whitespace() || matches!(c, '"' | '\'' | '`' | '*' | '<' | '>' | '.' | '!' | '?' | ';' | ',')
    })
}

pub fn parse_cte_response(raw: &str) -> ParseOutcome<Topic> {
    let lower = raw.to_ascii_lowercase();
    if let Some(pos) = lower.rfind("topic:") {
        let after = &raw[pos + "topic:".len()..];
        let phrase = clean_topic_phrase(after.lines().next().unwrap_or(""));
        if let Ok(topic) = Topic::new(phrase) {
            let single_line = raw.trim().lines().count() == 1;
            let basis = if single_line && pos == raw.len() - raw.trim_start().len() {
                ConfidenceBasis::ExactMatch
            } else {
                ConfidenceBasis::NormalizedMatch
            };
            return ParseOutcome::matched(topic, basis, raw);
        }
    }
    let phrase = clean_topic_phrase(final_line(raw));
    match Topic::new(phrase) {
        Ok(topic) => ParseOutcome::fallback(topic, raw, "no 'Topic:' marker; used the final line"),
        Err(_) => ParseOutcome::fallback(Topic::no_topic(), raw, "empty response; treated as No Topic"),
    }
}
