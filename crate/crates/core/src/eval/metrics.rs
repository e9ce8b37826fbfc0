//! Confusion matrices and F1.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::types::{ArgumentLabel, StanceLabel};

/// A label with a fixed, ordered class set.
pub trait ClassLabel: Copy + Eq + 'static {
    fn classes() -> &'static [Self];
    fn index(self) -> usize;
    fn class_name(self) -> &'static str;
}

impl ClassLabel for ArgumentLabel {
    fn classes() -> &'static [Self] {
        &ArgumentLabel::ALL
    }
    fn index(self) -> usize {
        self.code() as usize
    }
    fn class_name(self) -> &'static str {
        self.name()
    }
}

impl ClassLabel for StanceLabel {
    fn classes() -> &'static [Self] {
        &StanceLabel::ALL
    }
    fn index(self) -> usize {
        self.code() as usize
    }
    fn class_name(self) -> &'static str {
        self.name()
    }
}

/// Rows are gold classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionMatrix {
    pub fn from_pairs<L: ClassLabel>(preds: &[L], golds: &[L]) -> Result<Self, EvalError> {
        check_lengths(preds.len(), golds.len())?;
        let k = L::classes().len();
        let mut counts = vec![vec![0u64; k]; k];
        for (p, g) in preds.iter().zip(golds) {
            counts[g.index()][p.index()] += 1;
        }
        Ok(ConfusionMatrix {
            classes: L::classes().iter().map(|c| c.class_name().to_string()).collect(),
            counts,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn true_positives(&self, class: usize) -> u64 {
        self.counts[class][class]
    }

    pub fn false_positives(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum::<u64>() - self.true_positives(class)
    }

    pub fn false_negatives(&self, class: usize) -> u64 {
        self.counts[class].iter().sum::<u64>() - self.true_positives(class)
    }

    pub fn precision(&self, class: usize) -> f64 {
        let tp = self.true_positives(class);
        ratio(tp, tp + self.false_positives(class))
    }

    pub fn recall(&self, class: usize) -> f64 {
        let tp = self.true_positives(class);
        ratio(tp, tp + self.false_negatives(class))
    }

    /// `2PR / (P + R)`, or 0 when `P + R = 0`.
    pub fn f1(&self, class: usize) -> f64 {
        let (p, r) = (self.precision(class), self.recall(class));
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// A class takes part in macro averaging iff it occurs in gold or predictions.
    pub fn is_present(&self, class: usize) -> bool {
        self.counts[class].iter().sum::<u64>() > 0 || self.counts.iter().any(|row| row[class] > 0)
    }

    pub fn accuracy(&self) -> f64 {
        let correct: u64 = (0..self.classes.len()).map(|i| self.counts[i][i]).sum();
        ratio(correct, self.total())
    }

    pub fn macro_f1(&self) -> f64 {
        let present: Vec<usize> = (0..self.classes.len()).filter(|&c| self.is_present(c)).collect();
        if present.is_empty() {
            return 0.0;
        }
        present.iter().map(|&c| self.f1(c)).sum::<f64>() / present.len() as f64
    }

    pub fn per_class_f1(&self) -> BTreeMap<String, f64> {
        self.classes
            .iter()
            .enumerate()
            .filter(|(i, _)| self.is_present(*i))
            .map(|(i, name)| (name.clone(), self.f1(i)))
            .collect()
    }
}

fn check_lengths(preds: usize, golds: usize) -> Result<(), EvalError> {
    if preds != golds {
        return Err(EvalError::LengthMismatch { preds, golds });
    }
    if preds == 0 {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// F1 of the `Argument` class.
pub fn f1_binary(preds: &[ArgumentLabel], golds: &[ArgumentLabel]) -> Result<f64, EvalError> {
    let cm = ConfusionMatrix::from_pairs(preds, golds)?;
    Ok(cm.f1(ArgumentLabel::Argument.index()))
}

/// Unweighted mean of per-class F1 over the stance classes that occur in
/// either gold or predictions.
pub fn f1_macro(preds: &[StanceLabel], golds: &[StanceLabel]) -> Result<f64, EvalError> {
    Ok(ConfusionMatrix::from_pairs(preds, golds)?.macro_f1())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ArgumentLabel::{Argument as A, NotArgument as N};
    use StanceLabel::{Against, Favor, NoArgument};

    #[test]
    fn binary_examples() {
        assert_eq!(f1_binary(&[A, N, A], &[A, N, A]).unwrap(), 1.0);
        // TP=2, FP=1, FN=1
        let preds = [A, A, A, N];
        let golds = [A, A, N, A];
        assert!((f1_binary(&preds, &golds).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1_binary(&[N, N], &[A, N]).unwrap(), 0.0);
        assert_eq!(f1_binary(&[N, N], &[N, N]).unwrap(), 0.0);
    }

    #[test]
    fn binary_errors() {
        assert!(matches!(f1_binary(&[A], &[A, N]), Err(EvalError::LengthMismatch { preds: 1, golds: 2 })));
        assert!(matches!(f1_binary(&[], &[]), Err(EvalError::Empty)));
    }

    #[test]
    fn macro_examples() {
        assert_eq!(f1_macro(&[NoArgument, Favor, Against], &[NoArgument, Favor, Against]).unwrap(), 1.0);
        let got = f1_macro(&[NoArgument, Favor, Favor], &[NoArgument, Favor, Against]).unwrap();
        assert!((got - 5.0 / 9.0).abs() < 1e-15, "{got}");
        assert_eq!(f1_macro(&[Favor, Favor], &[Favor, Favor]).unwrap(), 1.0);
        // A class only predicted still counts, with F1 = 0.
        let got = f1_macro(&[Favor, Against], &[Favor, Favor]).unwrap();
        assert!((got - (2.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn confusion_layout() {
        let cm = ConfusionMatrix::from_pairs(&[Favor, Against, Favor], &[Favor, Favor, Against]).unwrap();
        assert_eq!(cm.classes, vec!["NoArgument", "Favor", "Against"]);
        assert_eq!(cm.counts[1], vec![0, 1, 1]);
        assert_eq!(cm.counts[2], vec![0, 1, 0]);
        assert_eq!(cm.total(), 3);
        assert!((cm.accuracy() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(cm.per_class_f1().len(), 2);
    }
}
