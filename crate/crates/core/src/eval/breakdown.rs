//! Detection accuracy grouped by argument type and style.

use std::collections::{BTreeMap, HashMap};

use crate::pipeline::AnalysisRecord;
use crate::types::{Instance, META_ARGUMENT_TYPE, META_STYLE};

pub type Breakdowns = BTreeMap<String, BTreeMap<String, f64>>;

#[derive(Default)]
struct Tally {
    correct: usize,
    total: usize,
}

/// Per-group detection accuracy, keyed by `argument_type` and `style`.
///
/// Only instances with a gold detection label and a predicted one count.
/// Group names are the lowercased metadata values. Keys with no
/// counted instance are omitted.
pub fn type_breakdown(records: &[AnalysisRecord], instances: &[Instance]) -> Breakdowns {
    let by_id: HashMap<&str, &AnalysisRecord> =
        records.iter().map(|r| (r.instance_id.as_str(), r)).collect();
    let mut tallies: BTreeMap<&str, BTreeMap<String, Tally>> = BTreeMap::new();
    for inst in instances {
        let (Some(gold), Some(pred)) = (
            inst.gold_detection(),
            by_id.get(inst.id.as_str()).and_then(|r| r.detection),
        ) else {
            continue;
        };
        for key in [META_ARGUMENT_TYPE, META_STYLE] {
            let Some(group) = inst.meta.get(key) else {
                continue;
            };
            let group = group.trim().to_lowercase();
            if group.is_empty() {
                continue;
            }
            let t = tallies.entry(key).or_default().entry(group).or_default();
            t.total += 1;
            if gold == pred {
                t.correct += 1;
            }
        }
    }
    tallies
        .into_iter()
        .map(|(key, groups)| {
            let acc = groups
                .into_iter()
                .map(|(g, t)| (g, t.correct as f64 / t.total as f64))
                .collect();
            (key.to_string(), acc)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::RecordStatus;
    use crate::prompt::Variant;
    use crate::types::ArgumentLabel::{self, Argument, NotArgument};

    fn rec(id: &str, det: ArgumentLabel) -> AnalysisRecord {
        AnalysisRecord {
            instance_id: id.into(),
            text: String::new(),
            detection: Some(det),
            topic: None,
            stance: None,
            stance_topic: None,
            variant: Variant::WithAtn,
            status: RecordStatus::Complete,
            raw_responses: Default::default(),
            errors: Default::default(),
            timings: Default::default(),
        }
    }

    fn inst(id: &str, gold: ArgumentLabel, ty: &str, style: &str) -> Instance {
        Instance::new(id, "x")
            .with_argument(gold)
            .with_meta(META_ARGUMENT_TYPE, ty)
            .with_meta(META_STYLE, style)
    }

    #[test]
    fn all_correct_analogical() {
        let insts = vec![inst("1", Argument, "analogical", "formal"), inst("2", Argument, "analogical", "formal")];
        let recs = vec![rec("1", Argument), rec("2", Argument)];
        let b = type_breakdown(&recs, &insts);
        assert_eq!(b["argument_type"], BTreeMap::from([("analogical".to_string(), 1.0)]));
        assert!(!b["argument_type"].contains_key("causal"));
    }

    #[test]
    fn mixed_ten() {
        // causal: 3/4, analogical: 2/2, statistical: 1/2, anecdotal: 0/2
        // formal: 4/5, informal: 2/5
        let rows = [
            ("1", Argument, Argument, "causal", "formal"),
            ("2", Argument, Argument, "causal", "formal"),
            ("3", Argument, Argument, "causal", "informal"),
            ("4", Argument, NotArgument, "causal", "informal"),
            ("5", Argument, Argument, "analogical", "formal"),
            ("6", Argument, Argument, "analogical", "formal"),
            ("7", NotArgument, NotArgument, "statistical", "informal"),
            ("8", NotArgument, Argument, "statistical", "informal"),
            ("9", Argument, NotArgument, "anecdotal", "formal"),
            ("10", Argument, NotArgument, "anecdotal", "informal"),
        ];
        let insts: Vec<_> = rows.iter().map(|(id, g, _, t, s)| inst(id, *g, t, s)).collect();
        let recs: Vec<_> = rows.iter().map(|(id, _, p, _, _)| rec(id, *p)).collect();
        let b = type_breakdown(&recs, &insts);
        let ty = &b["argument_type"];
        assert_eq!(ty["causal"], 0.75);
        assert_eq!(ty["analogical"], 1.0);
        assert_eq!(ty["statistical"], 0.5);
        assert_eq!(ty["anecdotal"], 0.0);
        assert_eq!(b["style"]["formal"], 0.8);
        assert_eq!(b["style"]["informal"], 0.4);
    }

    #[test]
    fn unmatched_records_skipped() {
        let insts = vec![inst("1", Argument, "causal", "formal")];
        let b = type_breakdown(&[rec("2", Argument)], &insts);
        assert!(b.is_empty());
    }
}
