//! Confusion counts over DOI sets.

use alloc::collections::BTreeSet;
use alloc::string::String;
use core::ops::{Add, AddAssign};

/// TP/FP/FN/TN with the derived ratios. Undefined ratios are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvaluationCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl EvaluationCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        EvaluationCounts { tp, fp, fn_, tn }
    }

    /// Counts for one file: `pos` verified present, `neg` verified absent,
    /// `pred` predicted by the matcher. Predictions outside `pos ∪ neg` are
    /// not evaluated.
    pub fn from_sets(pos: &BTreeSet<String>, neg: &BTreeSet<String>, pred: &BTreeSet<String>) -> Self {
        EvaluationCounts {
            tp: pred.intersection(pos).count() as u64,
            fp: pred.intersection(neg).count() as u64,
            fn_: pos.difference(pred).count() as u64,
            tn: neg.difference(pred).count() as u64,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> Option<f64> {
        let (p, r) = (self.precision()?, self.recall()?);
        if p + r == 0.0 {
            return None;
        }
        Some(2.0 * p * r / (p + r))
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }
}

impl Add for EvaluationCounts {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        EvaluationCounts {
            tp: self.tp + rhs.tp,
            fp: self.fp + rhs.fp,
            fn_: self.fn_ + rhs.fn_,
            tn: self.tn + rhs.tn,
        }
    }
}

impl AddAssign for EvaluationCounts {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl core::iter::Sum for EvaluationCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(EvaluationCounts::default(), Add::add)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn gold_standard_counts() {
        let c = EvaluationCounts::new(2690, 0, 865, 6);
        assert_eq!(c.precision(), Some(1.0));
        assert!((c.recall().unwrap() - 0.7567).abs() < 1e-4);
        assert!((c.f1().unwrap() - 0.8615).abs() < 1e-4);
        assert!((c.accuracy().unwrap() - 2696.0 / 3561.0).abs() < 1e-12);
        assert!((c.accuracy().unwrap() - 0.7571).abs() < 1e-4);
    }

    #[test]
    fn crossref_doi_column() {
        let c = EvaluationCounts::new(2469, 0, 1086, 6);
        assert!((c.recall().unwrap() - 0.6945).abs() < 1e-4);
        assert!((c.f1().unwrap() - 0.8197).abs() < 1e-4);
    }

    #[test]
    fn undefined_ratios_are_absent() {
        let c = EvaluationCounts::new(0, 0, 5, 1);
        assert_eq!(c.precision(), None);
        assert_eq!(c.recall(), Some(0.0));
        assert_eq!(c.f1(), None);
        assert_eq!(EvaluationCounts::default().accuracy(), None);
    }

    #[test]
    fn set_algebra() {
        let pos = set(&["a", "b", "c"]);
        let neg = set(&["x", "y"]);
        let pred = set(&["b", "c", "x", "zz"]);
        let c = EvaluationCounts::from_sets(&pos, &neg, &pred);
        assert_eq!(c, EvaluationCounts::new(2, 1, 1, 1));
        assert_eq!(c.tp + c.fn_, pos.len() as u64);
        assert_eq!(c.fp + c.tn, neg.len() as u64);
    }
}
