//! Domain types shared by every stage: instances, labels, topics.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::text;

/// Literal sentinel used by datasets and models for "no topic is being argued".
pub const NO_TOPIC: &str = "No Topic";

/// Arguments are expected to span at most this many sentences.
pub const MAX_ARGUMENT_SENTENCES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LabelError {
    #[error("unknown {kind} label '{value}'")]
    Unknown { kind: &'static str, value: String },
    #[error("topic must not be empty")]
    EmptyTopic,
}

/// Lowercase, map `_`/`-` to spaces and collapse runs of whitespace.
fn normalize_label(raw: &str) -> String {
    let replaced: String = raw
        .trim()
        .chars()
        .map(|c| if c == '_' || c == '-' { ' ' } else { c.to_ascii_lowercase() })
        .collect();
    replaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LabelRepr {
    Code(i64),
    Name(String),
}

/// Binary argument label. Serialized as its numeric code (`NotArgument = 0`, `Argument = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ArgumentLabel {
    NotArgument,
    Argument,
}

impl ArgumentLabel {
    pub const ALL: [ArgumentLabel; 2] = [ArgumentLabel::NotArgument, ArgumentLabel::Argument];

    pub fn code(self) -> u8 {
        match self {
            ArgumentLabel::NotArgument => 0,
            ArgumentLabel::Argument => 1,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(ArgumentLabel::NotArgument),
            1 => Some(ArgumentLabel::Argument),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ArgumentLabel::NotArgument => "NoArgument",
            ArgumentLabel::Argument => "Argument",
        }
    }

    /// Parse a dataset label through the closed normalization table.
    ///
    /// | accepted (after normalization)                                    | label        |
    /// |-------------------------------------------------------------------|--------------|
    /// | `0`, `noargument`, `no argument`, `not argument`, `not an argument`, `non argument`, `nonargument`, `false`, `no` | NotArgument |
    /// | `1`, `argument`, `true`, `yes`                                    | Argument     |
    pub fn parse_label(raw: &str) -> Result<Self, LabelError> {
        match normalize_label(raw).as_str() {
            "0" | "noargument" | "no argument" | "not argument" | "not an argument"
            | "non argument" | "nonargument" | "false" | "no" => Ok(ArgumentLabel::NotArgument),
            "1" | "argument" | "true" | "yes" => Ok(ArgumentLabel::Argument),
            _ => Err(LabelError::Unknown {
                kind: "argument",
                value: raw.to_string(),
            }),
        }
    }
}

impl fmt::Display for ArgumentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for ArgumentLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for ArgumentLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match LabelRepr::deserialize(deserializer)? {
            LabelRepr::Code(c) => ArgumentLabel::from_code(c)
                .ok_or_else(|| serde::de::Error::custom(format!("unknown argument code {c}"))),
            LabelRepr::Name(s) => ArgumentLabel::parse_label(&s).map_err(serde::de::Error::custom),
        }
    }
}

/// Three-class stance label. Codes: `NoArgument = 0`, `Favor = 1`, `Against = 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StanceLabel {
    NoArgument,
    Favor,
    Against,
}

impl StanceLabel {
    pub const ALL: [StanceLabel; 3] = [StanceLabel::NoArgument, StanceLabel::Favor, StanceLabel::Against];

    pub fn code(self) -> u8 {
        match self {
            StanceLabel::NoArgument => 0,
            StanceLabel::Favor => 1,
            StanceLabel::Against => 2,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(StanceLabel::NoArgument),
            1 => Some(StanceLabel::Favor),
            2 => Some(StanceLabel::Against),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StanceLabel::NoArgument => "NoArgument",
            StanceLabel::Favor => "Favor",
            StanceLabel::Against => "Against",
        }
    }

    /// Parse a dataset label through the closed normalization table.
    ///
    /// | accepted (after normalization)                                         | label      |
    /// |------------------------------------------------------------------------|------------|
    /// | `0`, `noargument`, `no argument`, `not an argument`, `non argument`, `nonargument`, `none`, `neutral` | NoArgument |
    /// | `1`, `favor`, `favour`, `pro`, `in favor`, `argument for`, `argument in favor`, `support` | Favor |
    /// | `2`, `-1`, `against`, `con`, `argument against`, `oppose`               | Against    |
    ///
    /// `-1` is the "con" code used by corpora that encode stance as ±1.
    pub fn parse_label(raw: &str) -> Result<Self, LabelError> {
        if raw.trim() == "-1" {
            return Ok(StanceLabel::Against);
        }
        match normalize_label(raw).as_str() {
            "0" | "noargument" | "no argument" | "not an argument" | "non argument"
            | "nonargument" | "none" | "neutral" => Ok(StanceLabel::NoArgument),
            "1" | "favor" | "favour" | "pro" | "in favor" | "in favour" | "argument for"
            | "argument in favor" | "argument in favour" | "support" => Ok(StanceLabel::Favor),
            "2" | "against" | "con" | "argument against" | "oppose" => Ok(StanceLabel::Against),
            _ => Err(LabelError::Unknown {
                kind: "stance",
                value: raw.to_string(),
            }),
        }
    }

    /// Collapse to the binary detection label.
    pub fn as_argument(self) -> ArgumentLabel {
        match self {
            StanceLabel::NoArgument => ArgumentLabel::NotArgument,
            _ => ArgumentLabel::Argument,
        }
    }
}

impl fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for StanceLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for StanceLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match LabelRepr::deserialize(deserializer)? {
            LabelRepr::Code(c) => StanceLabel::from_code(c)
                .ok_or_else(|| serde::de::Error::custom(format!("unknown stance code {c}"))),
            LabelRepr::Name(s) => StanceLabel::parse_label(&s).map_err(serde::de::Error::custom),
        }
    }
}

/// Role a span of text plays inside a candidate argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TokenState {
    Claim,
    Premise,
    NotClaim,
    NotPremise,
}

impl TokenState {
    pub const ALL: [TokenState; 4] = [
        TokenState::Claim,
        TokenState::Premise,
        TokenState::NotClaim,
        TokenState::NotPremise,
    ];
}

impl fmt::Display for TokenState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TokenState::Claim => "Claim",
            TokenState::Premise => "Premise",
            TokenState::NotClaim => "NotClaim",
            TokenState::NotPremise => "NotPremise",
        };
        f.write_str(s)
    }
}

/// The topic a claim argues about. Serialized as a bare string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Topic {
    value: String,
    is_no_topic: bool,
}

impl Topic {
    pub fn new(value: impl AsRef<str>) -> Result<Self, LabelError> {
        let value = value.as_ref().trim();
        if value.is_empty() {
            return Err(LabelError::EmptyTopic);
        }
        Ok(Topic {
            is_no_topic: is_no_topic_str(value),
            value: value.to_string(),
        })
    }

    /// The abstention topic.
    pub fn no_topic() -> Self {
        Topic {
            value: NO_TOPIC.to_string(),
            is_no_topic: true,
        }
    }

    pub fn value(&self) -> &str {
        &self.value
    }

    pub fn is_no_topic(&self) -> bool {
        self.is_no_topic
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.value)
    }
}

impl TryFrom<String> for Topic {
    type Error = LabelError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Topic::new(value)
    }
}

impl From<Topic> for String {
    fn from(t: Topic) -> String {
        t.value
    }
}

/// Case-insensitive, whitespace-tolerant test for the "No Topic" sentinel.
pub fn is_no_topic_str(s: &str) -> bool {
    s.split_whitespace()
        .map(str::to_ascii_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
        == "no topic"
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArgumentType {
    Deductive,
    Inductive,
    Abductive,
    Analogical,
    Fallacious,
}

impl ArgumentType {
    pub const ALL: [ArgumentType; 5] = [
        ArgumentType::Deductive,
        ArgumentType::Inductive,
        ArgumentType::Abductive,
        ArgumentType::Analogical,
        ArgumentType::Fallacious,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArgumentType::Deductive => "deductive",
            ArgumentType::Inductive => "inductive",
            ArgumentType::Abductive => "abductive",
            ArgumentType::Analogical => "analogical",
            ArgumentType::Fallacious => "fallacious",
        }
    }
}

impl FromStr for ArgumentType {
    type Err = LabelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ArgumentType::ALL
            .into_iter()
            .find(|t| t.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| LabelError::Unknown {
                kind: "argument_type",
                value: s.to_string(),
            })
    }
}

impl fmt::Display for ArgumentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    Informal,
    Formal,
}

impl Style {
    pub const ALL: [Style; 2] = [Style::Informal, Style::Formal];

    pub fn as_str(self) -> &'static str {
        match self {
            Style::Informal => "informal",
            Style::Formal => "formal",
        }
    }
}

impl FromStr for Style {
    type Err = LabelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "informal" => Ok(Style::Informal),
            "formal" => Ok(Style::Formal),
            _ => Err(LabelError::Unknown {
                kind: "style",
                value: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Meta keys with a closed value set.
pub const META_ARGUMENT_TYPE: &str = "argument_type";
pub const META_STYLE: &str = "style";

/// One text plus whatever gold annotations a corpus carries for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_topic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_argument: Option<ArgumentLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_stance: Option<StanceLabel>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl Instance {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Instance {
            id: id.into(),
            text: text.into(),
            gold_topic: None,
            gold_argument: None,
            gold_stance: None,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_topic(mut self, topic: impl Into<String>) -> Self {
        self.gold_topic = Some(topic.into());
        self
    }

    pub fn with_argument(mut self, label: ArgumentLabel) -> Self {
        self.gold_argument = Some(label);
        self
    }

    pub fn with_stance(mut self, label: StanceLabel) -> Self {
        self.gold_stance = Some(label);
        self
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    /// Gold topic as a [`Topic`], if present and non-blank.
    pub fn topic(&self) -> Option<Topic> {
        self.gold_topic.as_deref().and_then(|t| Topic::new(t).ok())
    }

    pub fn argument_type(&self) -> Option<Result<ArgumentType, LabelError>> {
        self.meta.get(META_ARGUMENT_TYPE).map(|s| s.parse())
    }

    pub fn style(&self) -> Option<Result<Style, LabelError>> {
        self.meta.get(META_STYLE).map(|s| s.parse())
    }

    /// Gold detection label, derived from the stance label when only that is present.
    pub fn gold_detection(&self) -> Option<ArgumentLabel> {
        self.gold_argument.or(self.gold_stance.map(StanceLabel::as_argument))
    }
}

/// Check every instance invariant. Returns an empty list iff the instance is well formed.
pub fn validate_instance(instance: &Instance) -> Vec<String> {
    let mut violations = Vec::new();
    if instance.text.trim().is_empty() {
        violations.push("empty text".to_string());
    }
    if matches!(instance.gold_stance, Some(StanceLabel::Favor | StanceLabel::Against)) {
        let has_topic = instance
            .gold_topic
            .as_deref()
            .is_some_and(|t| !t.trim().is_empty() && !is_no_topic_str(t));
        if !has_topic {
            violations.push("stance requires topic".to_string());
        }
    }
    if let Some(Err(_)) = instance.argument_type() {
        violations.push(format!(
            "meta.argument_type: unknown value '{}'",
            instance.meta[META_ARGUMENT_TYPE]
        ));
    }
    if let Some(Err(_)) = instance.style() {
        violations.push(format!("meta.style: unknown value '{}'", instance.meta[META_STYLE]));
    }
    violations
}

/// Soft checks that never reject an instance.
pub fn instance_warnings(instance: &Instance) -> Vec<String> {
    let sentences = text::count_sentences(&instance.text);
    if sentences > MAX_ARGUMENT_SENTENCES {
        vec![format!(
            "text has {sentences} sentences (arguments are expected to span at most {MAX_ARGUMENT_SENTENCES})"
        )]
    } else {
        Vec::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gmo() -> Instance {
        Instance::new("1", "Glyphosate is bad for you, therefore GMOs are bad for you.")
            .with_topic("GMOs")
            .with_stance(StanceLabel::Against)
            .with_meta("argument_type", "deductive")
            .with_meta("style", "informal")
    }

    #[test]
    fn well_formed_instance_has_no_violations() {
        assert!(validate_instance(&gmo()).is_empty());
    }

    #[test]
    fn stance_without_topic_is_rejected() {
        let mut inst = gmo();
        inst.gold_topic = None;
        inst.gold_stance = Some(StanceLabel::Favor);
        assert_eq!(validate_instance(&inst), vec!["stance requires topic"]);

        inst.gold_topic = Some(" no  TOPIC ".into());
        assert_eq!(validate_instance(&inst), vec!["stance requires topic"]);

        inst.gold_stance = Some(StanceLabel::NoArgument);
        assert!(validate_instance(&inst).is_empty());
    }

    #[test]
    fn blank_text_is_rejected() {
        let inst = Instance::new("x", "   ");
        assert_eq!(validate_instance(&inst), vec!["empty text"]);
    }

    #[test]
    fn unknown_meta_values_name_the_field() {
        let inst = Instance::new("x", "text")
            .with_meta("argument_type", "circular")
            .with_meta("style", "poetic");
        let v = validate_instance(&inst);
        assert_eq!(v.len(), 2);
        assert!(v[0].starts_with("meta.argument_type"));
        assert!(v[1].starts_with("meta.style"));
    }

    #[test]
    fn long_text_warns_but_validates() {
        let inst = Instance::new("x", "One. Two. Three. Four.");
        assert!(validate_instance(&inst).is_empty());
        assert_eq!(instance_warnings(&inst).len(), 1);
        assert!(instance_warnings(&Instance::new("y", "One. Two.")).is_empty());
    }

    #[test]
    fn stance_codes_match_numbering() {
        assert_eq!(StanceLabel::NoArgument.code(), 0);
        assert_eq!(StanceLabel::Favor.code(), 1);
        assert_eq!(StanceLabel::Against.code(), 2);
        assert_eq!(serde_json::to_string(&StanceLabel::Against).unwrap(), "2");
        let s: StanceLabel = serde_json::from_str("1").unwrap();
        assert_eq!(s, StanceLabel::Favor);
        let s: StanceLabel = serde_json::from_str("\"con\"").unwrap();
        assert_eq!(s, StanceLabel::Against);
        assert!(serde_json::from_str::<StanceLabel>("5").is_err());
    }

    #[test]
    fn argument_codes() {
        assert_eq!(serde_json::to_string(&ArgumentLabel::NotArgument).unwrap(), "0");
        assert_eq!(serde_json::to_string(&ArgumentLabel::Argument).unwrap(), "1");
        assert!(ArgumentLabel::NotArgument < ArgumentLabel::Argument);
    }

    #[test]
    fn label_normalization_table() {
        assert_eq!(StanceLabel::parse_label("Argument_for").unwrap(), StanceLabel::Favor);
        assert_eq!(StanceLabel::parse_label("Argument_against").unwrap(), StanceLabel::Against);
        assert_eq!(StanceLabel::parse_label("NoArgument").unwrap(), StanceLabel::NoArgument);
        assert_eq!(StanceLabel::parse_label("Non-argument").unwrap(), StanceLabel::NoArgument);
        assert_eq!(StanceLabel::parse_label("-1").unwrap(), StanceLabel::Against);
        assert_eq!(StanceLabel::parse_label("pro").unwrap(), StanceLabel::Favor);
        assert!(StanceLabel::parse_label("5").is_err());
        assert_eq!(ArgumentLabel::parse_label("Non-argument").unwrap(), ArgumentLabel::NotArgument);
        assert_eq!(ArgumentLabel::parse_label(" Argument ").unwrap(), ArgumentLabel::Argument);
    }

    #[test]
    fn topic_sentinel() {
        let t = Topic::new("  No Topic ").unwrap();
        assert!(t.is_no_topic());
        assert_eq!(t.value(), "No Topic");
        assert!(Topic::new("no   topic").unwrap().is_no_topic());
        assert!(!Topic::new("nuclear weapons").unwrap().is_no_topic());
        assert!(Topic::new("  ").is_err());
        let json = serde_json::to_string(&Topic::new("GMOs").unwrap()).unwrap();
        assert_eq!(json, "\"GMOs\"");
        assert!(serde_json::from_str::<Topic>("\"\"").is_err());
    }

    #[test]
    fn instance_json_round_trip() {
        let inst = gmo();
        let json = serde_json::to_string(&inst).unwrap();
        let back: Instance = serde_json::from_str(&json).unwrap();
        assert_eq!(inst, back);
    }
}
