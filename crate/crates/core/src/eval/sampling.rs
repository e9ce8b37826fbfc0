//! Class-balanced blind relabeling: sampling sheets out, merging annotations back.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::types::{validate_instance, ArgumentLabel, Instance, StanceLabel};

/// Which gold label defines the sampling classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassKey {
    #[default]
    Argument,
    Stance,
}

impl ClassKey {
    fn class_of(self, inst: &Instance) -> Option<&'static str> {
        match self {
            ClassKey::Argument => inst.gold_detection().map(ArgumentLabel::name),
            ClassKey::Stance => inst.gold_stance.map(StanceLabel::name),
        }
    }
}

impl std::str::FromStr for ClassKey {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "argument" | "detect" => Ok(ClassKey::Argument),
            "stance" => Ok(ClassKey::Stance),
            other => Err(format!("unknown class key '{other}' (expected argument or stance)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SheetRow {
    pub sheet_id: String,
    pub text: String,
    pub topic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRow {
    pub sheet_id: String,
    pub instance_id: String,
}

/// Label-free rows for annotators plus the hidden sheet-to-instance key.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnnotationSheet {
    pub rows: Vec<SheetRow>,
    pub key: Vec<KeyRow>,
}

/// Per-class quotas for `n` items over classes of the given sizes.
///
/// Every class gets `n / k`; the remaining `n % k` go one each to the
/// largest classes, ties broken by class name.
pub fn class_quotas(sizes: &BTreeMap<String, usize>, n: usize) -> Result<BTreeMap<String, usize>, EvalError> {
    let k = sizes.len();
    if k == 0 {
        return Err(EvalError::Sample("corpus has no labeled instances".into()));
    }
    let mut order: Vec<(&String, usize)> = sizes.iter().map(|(c, s)| (c, *s)).collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut quotas = BTreeMap::new();
    for (i, (class, size)) in order.into_iter().enumerate() {
        let q = n / k + usize::from(i < n % k);
        if size < q {
            return Err(EvalError::Sample(format!(
                "class '{class}' has {size} instances, {q} needed"
            )));
        }
        quotas.insert(class.clone(), q);
    }
    Ok(quotas)
}

/// Draws `n` instances with per-class counts differing by at most one.
///
/// Classes come from `key`; instances lacking that label are not eligible.
/// The same corpus, `n` and seed always yield the same sheet.
pub fn stratified_sample(
    corpus: &[Instance],
    n: usize,
    seed: u64,
    key: ClassKey,
) -> Result<AnnotationSheet, EvalError> {
    if n == 0 {
        return Err(EvalError::Sample("sample size must be positive".into()));
    }
    let mut by_class: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, inst) in corpus.iter().enumerate() {
        if let Some(c) = key.class_of(inst) {
            by_class.entry(c.to_string()).or_default().push(i);
        }
    }
    let sizes = by_class.iter().map(|(c, v)| (c.clone(), v.len())).collect();
    let quotas = class_quotas(&sizes, n)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(n);
    for (class, mut idx) in by_class {
        idx.shuffle(&mut rng);
        picked.extend_from_slice(&idx[..quotas[&class]]);
    }
    picked.shuffle(&mut rng);

    let width = n.to_string().len().max(4);
    let mut sheet = AnnotationSheet::default();
    for (pos, i) in picked.into_iter().enumerate() {
        let inst = &corpus[i];
        let sheet_id = format!("s{:0width$}", pos + 1);
        sheet.rows.push(SheetRow {
            sheet_id: sheet_id.clone(),
            text: inst.text.clone(),
            topic: inst.gold_topic.clone(),
        });
        sheet.key.push(KeyRow { sheet_id, instance_id: inst.id.clone() });
    }
    Ok(sheet)
}

fn csv_err(e: csv::Error) -> EvalError {
    EvalError::Csv(e.to_string())
}

pub fn write_sheet_csv<W: Write>(rows: &[SheetRow], out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sheet_id", "text", "topic"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.sheet_id.as_str(), r.text.as_str(), r.topic.as_deref().unwrap_or("")])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_keyfile_csv<W: Write>(key: &[KeyRow], out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sheet_id", "instance_id"]).map_err(csv_err)?;
    for k in key {
        w.write_record([k.sheet_id.as_str(), k.instance_id.as_str()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: Read>(input: R) -> Result<Vec<HashMap<String, String>>, EvalError> {
    let mut r = csv::Reader::from_reader(input);
    let headers: Vec<String> = r.headers().map_err(csv_err)?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        rows.push(headers.iter().cloned().zip(rec.iter().map(str::to_string)).collect());
    }
    Ok(rows)
}

fn column(row: &HashMap<String, String>, name: &str, line: usize) -> Result<String, EvalError> {
    row.get(name)
        .map(|v| v.trim().to_string())
        .ok_or_else(|| EvalError::Csv(format!("row {line}: missing column '{name}'")))
}

pub fn read_sheet_csv<R: Read>(input: R) -> Result<Vec<SheetRow>, EvalError> {
    read_rows(input)?
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let topic = row.get("topic").map(|t| t.trim()).filter(|t| !t.is_empty());
            Ok(SheetRow {
                sheet_id: column(row, "sheet_id", i + 2)?,
                text: row.get("text").cloned().unwrap_or_default(),
                topic: topic.map(str::to_string),
            })
        })
        .collect()
}

pub fn read_keyfile_csv<R: Read>(input: R) -> Result<Vec<KeyRow>, EvalError> {
    read_rows(input)?
        .iter()
        .enumerate()
        .map(|(i, row)| {
            Ok(KeyRow {
                sheet_id: column(row, "sheet_id", i + 2)?,
                instance_id: column(row, "instance_id", i + 2)?,
            })
        })
        .collect()
}

/// One annotator decision. `label` is parsed with the label normalization
/// table of the class key; `topic`, when given, replaces the gold topic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub sheet_id: String,
    pub label: String,
    pub topic: Option<String>,
}

/// Reads `sheet_id,label[,topic]` rows. Rows with an empty label are skipped.
pub fn read_annotations_csv<R: Read>(input: R) -> Result<Vec<Annotation>, EvalError> {
    let mut out = Vec::new();
    for (i, row) in read_rows(input)?.iter().enumerate() {
        let label = column(row, "label", i + 2)?;
        if label.is_empty() {
            continue;
        }
        let topic = row.get("topic").map(|t| t.trim()).filter(|t| !t.is_empty());
        out.push(Annotation {
            sheet_id: column(row, "sheet_id", i + 2)?,
            label,
            topic: topic.map(str::to_string),
        });
    }
    Ok(out)
}

pub const META_PROVENANCE: &str = "provenance";
pub const META_SHEET_ID: &str = "sheet_id";
pub const PROVENANCE_RELABELED: &str = "relabeled";

/// Replaces gold labels with annotations, in sheet order.
///
/// Sheet rows without an annotation are dropped. Each kept instance gains
/// `meta.provenance = relabeled` and `meta.sheet_id`.
pub fn merge_annotations(
    sheet: &[SheetRow],
    key: &[KeyRow],
    corpus: &[Instance],
    annotations: &[Annotation],
    class_key: ClassKey,
) -> Result<Vec<Instance>, EvalError> {
    let mut key_map: HashMap<&str, &str> = HashMap::new();
    for k in key {
        if key_map.insert(&k.sheet_id, &k.instance_id).is_some() {
            return Err(EvalError::Annotation(format!("duplicate sheet id '{}' in keyfile", k.sheet_id)));
        }
    }
    let sheet_ids: HashSet<&str> = sheet.iter().map(|r| r.sheet_id.as_str()).collect();
    let mut ann: HashMap<&str, &Annotation> = HashMap::new();
    for a in annotations {
        if !sheet_ids.contains(a.sheet_id.as_str()) || !key_map.contains_key(a.sheet_id.as_str()) {
            return Err(EvalError::Annotation(format!("unknown sheet id '{}'", a.sheet_id)));
        }
        if ann.insert(&a.sheet_id, a).is_some() {
            return Err(EvalError::Annotation(format!("duplicate annotation for sheet id '{}'", a.sheet_id)));
        }
    }
    let by_id: HashMap<&str, &Instance> = corpus.iter().map(|i| (i.id.as_str(), i)).collect();

    let mut out = Vec::new();
    for row in sheet {
        let Some(a) = ann.get(row.sheet_id.as_str()) else {
            continue;
        };
        let inst_id = key_map
            .get(row.sheet_id.as_str())
            .ok_or_else(|| EvalError::Annotation(format!("sheet id '{}' missing from keyfile", row.sheet_id)))?;
        let mut inst = (*by_id
            .get(inst_id)
            .ok_or_else(|| EvalError::Annotation(format!("instance '{inst_id}' not in corpus")))?)
        .clone();
        let bad = |e: crate::types::LabelError| EvalError::Annotation(format!("sheet id '{}': {e}", a.sheet_id));
        match class_key {
            ClassKey::Argument => {
                let label = ArgumentLabel::parse_label(&a.label).map_err(bad)?;
                inst.gold_argument = Some(label);
                if label == ArgumentLabel::NotArgument && inst.gold_stance.is_some() {
                    inst.gold_stance = Some(StanceLabel::NoArgument);
                }
            }
            ClassKey::Stance => {
                let label = StanceLabel::parse_label(&a.label).map_err(bad)?;
                inst.gold_stance = Some(label);
                inst.gold_argument = Some(label.as_argument());
            }
        }
        if let Some(t) = &a.topic {
            inst.gold_topic = Some(t.clone());
        }
        inst.meta.insert(META_PROVENANCE.into(), PROVENANCE_RELABELED.into());
        inst.meta.insert(META_SHEET_ID.into(), row.sheet_id.clone());
        if let Some(problem) = validate_instance(&inst).into_iter().next() {
            return Err(EvalError::Annotation(format!("sheet id '{}': {problem}", a.sheet_id)));
        }
        out.push(inst);
    }
    Ok(out)
}
