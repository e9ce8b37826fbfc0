//! Corpus files: schema mapping, loading with a reject report, saving, and
//! synthetic corpus generation.

mod synth;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use synth::{
    generate_synthetic, style_instruction, type_definition, CellFailure, SynthReport, SynthSpec, META_SYNTHETIC,
};

use crate::types::{validate_instance, ArgumentLabel, Instance, StanceLabel, META_ARGUMENT_TYPE, META_STYLE};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: column '{column}' for field '{field}' not found")]
    MissingColumn { path: PathBuf, field: Field, column: String },
    #[error("unknown schema preset '{0}' (expected one of: generic, ukp, ibm-arg, debate, gpt-hq, cte)")]
    UnknownPreset(String),
    #[error("bad column mapping '{0}' (expected field=column)")]
    BadMapping(String),
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("synthetic spec: {0}")]
    Spec(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    #[default]
    Csv,
    Jsonl,
}

impl CorpusFormat {
    /// `.jsonl` and `.ndjson` are JSONL; everything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("jsonl" | "ndjson") => CorpusFormat::Jsonl,
            _ => CorpusFormat::Csv,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(CorpusFormat::Csv),
            "jsonl" | "ndjson" => Ok(CorpusFormat::Jsonl),
            other => Err(format!("unknown corpus format '{other}' (expected csv or jsonl)")),
        }
    }
}

/// An instance field a source column can feed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Id,
    Text,
    Topic,
    Argument,
    Stance,
    ArgumentType,
    Style,
    /// A JSON object of extra string metadata.
    Meta,
}

impl Field {
    pub const ALL: [Field; 8] = [
        Field::Id,
        Field::Text,
        Field::Topic,
        Field::Argument,
        Field::Stance,
        Field::ArgumentType,
        Field::Style,
        Field::Meta,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Field::Id => "id",
            Field::Text => "text",
            Field::Topic => "topic",
            Field::Argument => "argument",
            Field::Stance => "stance",
            Field::ArgumentType => "argument_type",
            Field::Style => "style",
            Field::Meta => "meta",
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Field {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        Field::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown field '{s}'"))
    }
}

/// Which source column feeds which field.
///
/// Label cells go through the label normalization table, so codes
/// (`0/1/2`, `-1`) and names (`Favor`, `pro`, `Argument_against`, ...) are
/// both accepted. Unmapped columns land in `meta` under their own name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaMapping {
    pub columns: BTreeMap<Field, String>,
    /// Mapped fields whose column must exist. `text` is always required.
    pub required: BTreeSet<Field>,
}

pub const PRESETS: [&str; 6] = ["generic", "ukp", "ibm-arg", "debate", "gpt-hq", "cte"];

impl Default for SchemaMapping {
    fn default() -> Self {
        SchemaMapping::generic()
    }
}

impl SchemaMapping {
    fn build(cols: &[(Field, &str)], required: &[Field]) -> Self {
        SchemaMapping {
            columns: cols.iter().map(|(f, c)| (*f, c.to_string())).collect(),
            required: required.iter().copied().chain([Field::Text]).collect(),
        }
    }

    /// The layout [`save_corpus`] writes: every field under its own name.
    pub fn generic() -> Self {
        let cols: Vec<(Field, &str)> = Field::ALL.iter().map(|f| (*f, f.as_str())).collect();
        SchemaMapping::build(&cols, &[])
    }

    pub fn preset(name: &str) -> Result<Self, DataError> {
        use Field::*;
        Ok(match name.trim().to_ascii_lowercase().as_str() {
            "generic" => SchemaMapping::generic(),
            // topic, sentence, annotation (NoArgument / Argument_for / Argument_against)
            "ukp" => SchemaMapping::build(
                &[(Id, "id"), (Text, "sentence"), (Topic, "topic"), (Stance, "annotation")],
                &[Topic, Stance],
            ),
            // argument, topic, stance_WA (1 / -1)
            "ibm-arg" => SchemaMapping::build(
                &[(Id, "id"), (Text, "argument"), (Topic, "topic"), (Stance, "stance_WA")],
                &[Topic, Stance],
            ),
            "debate" => SchemaMapping::build(
                &[(Id, "id"), (Text, "text"), (Topic, "topic"), (Stance, "stance"), (Argument, "label")],
                &[Topic, Stance],
            ),
            "gpt-hq" => SchemaMapping::build(
                &[
                    (Id, "id"),
                    (Text, "text"),
                    (Topic, "topic"),
                    (Argument, "label"),
                    (ArgumentType, "type"),
                    (Style, "style"),
                ],
                &[Argument],
            ),
            "cte" => SchemaMapping::build(
                &[(Id, "id"), (Text, "text"), (Topic, "topic"), (Argument, "label")],
                &[Topic],
            ),
            other => return Err(DataError::UnknownPreset(other.to_string())),
        })
    }

    /// Applies `field=column` overrides on top of this mapping. An override
    /// makes the column required.
    pub fn with_overrides<S: AsRef<str>>(mut self, overrides: &[S]) -> Result<Self, DataError> {
        for o in overrides {
            let o = o.as_ref();
            let (f, c) = o.split_once('=').ok_or_else(|| DataError::BadMapping(o.to_string()))?;
            let field: Field = f.parse().map_err(|_| DataError::BadMapping(o.to_string()))?;
            let column = c.trim();
            if column.is_empty() {
                return Err(DataError::BadMapping(o.to_string()));
            }
            self.columns.insert(field, column.to_string());
            self.required.insert(field);
        }
        Ok(self)
    }

    fn column(&self, field: Field) -> Option<&str> {
        self.columns.get(&field).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusFile {
    pub path: PathBuf,
    pub format: CorpusFormat,
    pub schema: SchemaMapping,
}

impl CorpusFile {
    /// Generic schema, format from the extension.
    pub fn new(path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        CorpusFile { format: CorpusFormat::from_path(&path), path, schema: SchemaMapping::generic() }
    }

    pub fn with_schema(mut self, schema: SchemaMapping) -> Self {
        self.schema = schema;
        self
    }

    pub fn with_format(mut self, format: CorpusFormat) -> Self {
        self.format = format;
        self
    }
}

/// A source row that did not become an instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// 1-based line in the source file.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LoadReport {
    pub instances: Vec<Instance>,
    pub rejects: Vec<Reject>,
}

impl LoadReport {
    /// Source rows seen; always `instances + rejects`.
    pub fn rows(&self) -> usize {
        self.instances.len() + self.rejects.len()
    }
}

pub fn load_corpus(file: &CorpusFile) -> Result<LoadReport, DataError> {
    let f = File::open(&file.path).map_err(io_err(&file.path))?;
    match file.format {
        CorpusFormat::Csv => read_corpus_csv(f, &file.schema, &file.path),
        CorpusFormat::Jsonl => read_corpus_jsonl(BufReader::new(f), &file.schema, &file.path),
    }
}

/// Cell values of one source row, keyed by column name.
type Row = Vec<(String, Option<String>)>;

fn label_field<T>(
    row: &BTreeMap<&str, &str>,
    column: Option<&str>,
    parse: impl Fn(&str) -> Result<T, crate::types::LabelError>,
) -> Result<Option<T>, String> {
    match column.and_then(|c| row.get(c)) {
        Some(v) => parse(v).map(Some).map_err(|e| e.to_string()),
        None => Ok(None),
    }
}

struct RowBuilder<'a> {
    schema: &'a SchemaMapping,
    seen: HashSet<String>,
    report: LoadReport,
}

impl<'a> RowBuilder<'a> {
    fn new(schema: &'a SchemaMapping) -> Self {
        RowBuilder { schema, seen: HashSet::new(), report: LoadReport::default() }
    }

    fn reject(&mut self, line: u64, reason: impl Into<String>) {
        self.report.rejects.push(Reject { line, reason: reason.into() });
    }

    fn push(&mut self, line: u64, ordinal: usize, row: Row) {
        match self.build(ordinal, row) {
            Ok(inst) => {
                if !self.seen.insert(inst.id.clone()) {
                    self.reject(line, format!("duplicate id '{}'", inst.id));
                } else {
                    self.report.instances.push(inst);
                }
            }
            Err(reason) => self.reject(line, reason),
        }
    }

    fn build(&self, ordinal: usize, row: Row) -> Result<Instance, String> {
        let s = self.schema;
        let present: BTreeMap<&str, &str> = row
            .iter()
            .filter_map(|(k, v)| v.as_deref().filter(|v| !v.is_empty()).map(|v| (k.as_str(), v)))
            .collect();
        let get = |f: Field| s.column(f).and_then(|c| present.get(c)).map(|v| v.to_string());

        let id = get(Field::Id).map(|v| v.trim().to_string()).unwrap_or_else(|| ordinal.to_string());
        let mut inst = Instance::new(id, get(Field::Text).unwrap_or_default());
        inst.gold_topic = get(Field::Topic);
        inst.gold_argument = label_field(&present, s.column(Field::Argument), ArgumentLabel::parse_label)
            .map_err(|e| format!("{}: {e}", Field::Argument))?;
        inst.gold_stance = label_field(&present, s.column(Field::Stance), StanceLabel::parse_label)
            .map_err(|e| format!("{}: {e}", Field::Stance))?;
        if let Some(v) = get(Field::Meta) {
            let obj: Map<String, Value> =
                serde_json::from_str(&v).map_err(|e| format!("meta: not a JSON object: {e}"))?;
            for (k, v) in obj {
                inst.meta.insert(k, value_to_string(&v).unwrap_or_default());
            }
        }
        let mapped: HashSet<&str> = s.columns.values().map(String::as_str).collect();
        for (k, v) in &row {
            if let Some(v) = v.as_deref().filter(|v| !v.is_empty() && !mapped.contains(k.as_str())) {
                inst.meta.insert(k.clone(), v.to_string());
            }
        }
        if let Some(v) = get(Field::ArgumentType) {
            inst.meta.insert(META_ARGUMENT_TYPE.into(), v.trim().to_lowercase());
        }
        if let Some(v) = get(Field::Style) {
            inst.meta.insert(META_STYLE.into(), v.trim().to_lowercase());
        }
        if let Some(problem) = validate_instance(&inst).into_iter().next() {
            return Err(problem);
        }
        Ok(inst)
    }
}

fn check_columns(schema: &SchemaMapping, headers: &[String], path: &Path) -> Result<(), DataError> {
    for field in &schema.required {
        let column = schema.column(*field).unwrap_or(field.as_str());
        if !headers.iter().any(|h| h == column) {
            return Err(DataError::MissingColumn {
                path: path.to_path_buf(),
                field: *field,
                column: column.to_string(),
            });
        }
    }
    Ok(())
}

/// Reads a headed CSV. Rows with the wrong number of cells are rejected.
pub fn read_corpus_csv<R: Read>(input: R, schema: &SchemaMapping, path: &Path) -> Result<LoadReport, DataError> {
    let mut r = csv::ReaderBuilder::new().flexible(false).from_reader(input);
    let headers: Vec<String> = r
        .headers()
        .map_err(|e| DataError::Format { path: path.to_path_buf(), message: e.to_string() })?
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').trim().to_string())
        .collect();
    check_columns(schema, &headers, path)?;
    let mut b = RowBuilder::new(schema);
    let mut ordinal = 0;
    let mut rec = csv::StringRecord::new();
    loop {
        match r.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {
                ordinal += 1;
                let line = rec.position().map_or(0, |p| p.line());
                let row = headers.iter().cloned().zip(rec.iter().map(|v| Some(v.to_string()))).collect();
                b.push(line, ordinal, row);
            }
            Err(e) => {
                ordinal += 1;
                let line = e.position().map_or(0, |p| p.line());
                match e.kind() {
                    csv::ErrorKind::UnequalLengths { .. } | csv::ErrorKind::Utf8 { .. } => {
                        b.reject(line, format!("malformed row: {e}"))
                    }
                    _ => return Err(DataError::Format { path: path.to_path_buf(), message: e.to_string() }),
                }
            }
        }
    }
    Ok(b.report)
}

fn value_to_string(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        other => Some(other.to_string()),
    }
}

/// Reads one JSON object per line. Blank lines are skipped; a line that is
/// not an object is rejected. A `meta` object is merged into metadata.
pub fn read_corpus_jsonl<R: BufRead>(input: R, schema: &SchemaMapping, path: &Path) -> Result<LoadReport, DataError> {
    let mut b = RowBuilder::new(schema);
    let mut keys_seen: HashSet<String> = HashSet::new();
    let mut ordinal = 0;
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let lineno = i as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        ordinal += 1;
        let obj: Map<String, Value> = match serde_json::from_str(&line) {
            Ok(o) => o,
            Err(e) => {
                b.reject(lineno, format!("malformed row: {e}"));
                continue;
            }
        };
        keys_seen.extend(obj.keys().cloned());
        let meta_col = schema.column(Field::Meta);
        let row = obj
            .into_iter()
            .map(|(k, v)| {
                let s = if Some(k.as_str()) == meta_col && v.is_object() { Some(v.to_string()) } else { value_to_string(&v) };
                (k, s)
            })
            .collect();
        b.push(lineno, ordinal, row);
    }
    if ordinal > 0 {
        let headers: Vec<String> = keys_seen.into_iter().collect();
        check_columns(schema, &headers, path)?;
    }
    Ok(b.report)
}

/// Header of the generic layout, in write order.
pub const CORPUS_COLUMNS: [&str; 8] = ["id", "text", "topic", "argument", "stance", "argument_type", "style", "meta"];

fn generic_cells(inst: &Instance) -> [Option<String>; 8] {
    let extra: BTreeMap<&String, &String> = inst
        .meta
        .iter()
        .filter(|(k, _)| k.as_str() != META_ARGUMENT_TYPE && k.as_str() != META_STYLE)
        .collect();
    let meta = (!extra.is_empty()).then(|| serde_json::to_string(&extra).expect("string map serializes"));
    [
        Some(inst.id.clone()),
        Some(inst.text.clone()),
        inst.gold_topic.clone(),
        inst.gold_argument.map(|l| l.name().to_string()),
        inst.gold_stance.map(|l| l.name().to_string()),
        inst.meta.get(META_ARGUMENT_TYPE).cloned(),
        inst.meta.get(META_STYLE).cloned(),
        meta,
    ]
}

pub fn write_corpus_csv<W: Write>(instances: &[Instance], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CORPUS_COLUMNS)?;
    for inst in instances {
        w.write_record(generic_cells(inst).iter().map(|c| c.as_deref().unwrap_or("")))?;
    }
    w.flush()
}

pub fn write_corpus_jsonl<W: Write>(instances: &[Instance], mut out: W) -> std::io::Result<()> {
    for inst in instances {
        let mut obj = Map::new();
        for (name, cell) in CORPUS_COLUMNS.iter().zip(generic_cells(inst)) {
            let Some(cell) = cell else { continue };
            let v = if *name == "meta" {
                serde_json::from_str(&cell).expect("meta cell is JSON")
            } else {
                Value::String(cell)
            };
            obj.insert(name.to_string(), v);
        }
        serde_json::to_writer(&mut out, &obj)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Writes the generic layout. An empty CSV corpus is a header-only file.
pub fn save_corpus(instances: &[Instance], path: &Path, format: CorpusFormat) -> Result<(), DataError> {
    let f = BufWriter::new(File::create(path).map_err(io_err(path))?);
    match format {
        CorpusFormat::Csv => write_corpus_csv(instances, f),
        CorpusFormat::Jsonl => write_corpus_jsonl(instances, f),
    }
    .map_err(io_err(path))
}
