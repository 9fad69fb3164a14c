//! Confusion matrices, precision/recall/F1 and report artifacts.

mod report;

pub use report::{emit_report, format_percent, parse_report_csv, Averaging};

use crate::error::{CoreError, Result};

pub const N_CLASSES: usize = 3;
pub const CLASS_NAMES: [&str; N_CLASSES] = ["HC", "MCI", "AD"];

/// 3x3 counts; rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    counts: [[u64; N_CLASSES]; N_CLASSES],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: [[u64; N_CLASSES]; N_CLASSES]) -> Self {
        Self { counts }
    }

    pub fn record(&mut self, true_label: usize, predicted: usize) -> Result<()> {
        if true_label >= N_CLASSES || predicted >= N_CLASSES {
            return Err(CoreError::Contract(format!(
                "label out of range: true {true_label}, predicted {predicted}"
            )));
        }
        self.counts[true_label][predicted] += 1;
        Ok(())
    }

    pub fn count(&self, true_label: usize, predicted: usize) -> u64 {
        self.counts[true_label][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, r: usize) -> u64 {
        self.counts[r].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }
}

/// Count (true, predicted) pairs into a confusion matrix.
pub fn confusion(true_labels: &[usize], predicted: &[usize]) -> Result<ConfusionMatrix> {
    if true_labels.len() != predicted.len() {
        return Err(CoreError::Contract(format!(
            "label sequences differ in length: {} vs {}",
            true_labels.len(),
            predicted.len()
        )));
    }
    let mut cm = ConfusionMatrix::new();
    for (&t, &p) in true_labels.iter().zip(predicted) {
        cm.record(t, p)?;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-class and averaged metrics. Zero denominators yield 0, so reports are
/// total even on degenerate matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_class: [ClassMetrics; N_CLASSES],
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub n_examples: u64,
}

impl MetricsReport {
    /// Support-weighted averages (weights = true-class counts), the
    /// alternative averaging behind the report flag.
    pub fn weighted(&self, cm: &ConfusionMatrix) -> (f64, f64, f64) {
        let total = cm.total() as f64;
        let mut p = 0.0;
        let mut r = 0.0;
        let mut f = 0.0;
        for c in 0..N_CLASSES {
            let w = cm.row_sum(c) as f64 / total;
            p += w * self.per_class[c].precision;
            r += w * self.per_class[c].recall;
            f += w * self.per_class[c].f1;
        }
        (p, r, f)
    }
}

/// Macro-averaged precision, recall and F1 from a confusion matrix.
pub fn macro_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(CoreError::Contract("empty confusion matrix".into()));
    }
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let mut per_class = [ClassMetrics { precision: 0.0, recall: 0.0, f1: 0.0 }; N_CLASSES];
    for c in 0..N_CLASSES {
        let tp = cm.count(c, c);
        let precision = ratio(tp, cm.col_sum(c));
        let recall = ratio(tp, cm.row_sum(c));
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class[c] = ClassMetrics { precision, recall, f1 };
    }
    let mean = |f: fn(&ClassMetrics) -> f64, pc: &[ClassMetrics]| {
        pc.iter().map(f).sum::<f64>() / N_CLASSES as f64
    };
    Ok(MetricsReport {
        per_class,
        macro_precision: mean(|m| m.precision, &per_class),
        macro_recall: mean(|m| m.recall, &per_class),
        macro_f1: mean(|m| m.f1, &per_class),
        n_examples: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_are_diagonal() {
        let t = vec![0, 1, 2, 1, 0];
        let cm = confusion(&t, &t).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                if r == c {
                    assert_eq!(cm.count(r, c), t.iter().filter(|&&x| x == r).count() as u64);
                } else {
                    assert_eq!(cm.count(r, c), 0);
                }
            }
        }
        let rep = macro_metrics(&cm).unwrap();
        assert_eq!(rep.macro_f1, 1.0);
        assert_eq!(rep.macro_precision, 1.0);
        assert_eq!(rep.macro_recall, 1.0);
    }

    #[test]
    fn all_predicted_hc_fills_only_column_zero() {
        let t = vec![0, 1, 2, 2];
        let p = vec![0, 0, 0, 0];
        let cm = confusion(&t, &p).unwrap();
        for r in 0..3 {
            assert_eq!(cm.row_sum(r), cm.count(r, 0));
        }
        assert_eq!(cm.col_sum(1) + cm.col_sum(2), 0);
    }

    #[test]
    fn out_of_range_label_is_contract_violation() {
        assert!(matches!(
            confusion(&[3], &[0]),
            Err(CoreError::Contract(_))
        ));
        assert!(matches!(
            confusion(&[0], &[7]),
            Err(CoreError::Contract(_))
        ));
    }

    #[test]
    fn hand_derived_macro_f1() {
        // per class: F1 = 0.8, 2/3, 0.5 -> macro 0.65556
        let cm = ConfusionMatrix::from_counts([[2, 0, 0], [0, 1, 1], [1, 0, 1]]);
        let rep = macro_metrics(&cm).unwrap();
        assert!((rep.per_class[0].f1 - 0.8).abs() < 1e-12);
        assert!((rep.per_class[1].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((rep.per_class[2].f1 - 0.5).abs() < 1e-12);
        assert!((rep.macro_f1 - 0.6555555555555554).abs() < 1e-4);
    }

    #[test]
    fn absent_class_gets_zero_metrics() {
        // class 2 never occurs and is never predicted
        let cm = ConfusionMatrix::from_counts([[3, 1, 0], [1, 2, 0], [0, 0, 0]]);
        let rep = macro_metrics(&cm).unwrap();
        assert_eq!(rep.per_class[2].precision, 0.0);
        assert_eq!(rep.per_class[2].recall, 0.0);
        assert_eq!(rep.per_class[2].f1, 0.0);
    }

    #[test]
    fn empty_matrix_is_contract_violation() {
        let cm = ConfusionMatrix::new();
        assert!(matches!(macro_metrics(&cm), Err(CoreError::Contract(_))));
    }

    #[test]
    fn f1_zero_whenever_diagonal_zero() {
        let cm = ConfusionMatrix::from_counts([[0, 2, 1], [1, 4, 0], [2, 0, 5]]);
        let rep = macro_metrics(&cm).unwrap();
        assert_eq!(rep.per_class[0].f1, 0.0);
    }

    #[test]
    fn relabeling_permutation_preserves_macro_values() {
        let true_l = vec![0, 0, 1, 2, 1, 0, 2, 2, 1, 0];
        let pred_l = vec![0, 1, 1, 2, 0, 0, 1, 2, 1, 2];
        let base = macro_metrics(&confusion(&true_l, &pred_l).unwrap()).unwrap();
        // relabel classes with the cycle 0->1->2->0 on both axes
        let perm = |v: &[usize]| v.iter().map(|&x| (x + 1) % 3).collect::<Vec<_>>();
        let permuted = macro_metrics(&confusion(&perm(&true_l), &perm(&pred_l)).unwrap()).unwrap();
        assert!((base.macro_f1 - permuted.macro_f1).abs() < 1e-12);
        assert!((base.macro_precision - permuted.macro_precision).abs() < 1e-12);
        assert!((base.macro_recall - permuted.macro_recall).abs() < 1e-12);
    }

    #[test]
    fn matches_scalar_counting_oracle_on_random_pairs() {
        use rand::Rng;
        let mut rng = crate::rng::derive_rng(31, "cm_oracle");
        let t: Vec<usize> = (0..1000).map(|_| rng.gen_range(0..3)).collect();
        let p: Vec<usize> = (0..1000).map(|_| rng.gen_range(0..3)).collect();
        let cm = confusion(&t, &p).unwrap();
        // plain counting loop
        let mut expect = [[0u64; 3]; 3];
        for i in 0..1000 {
            expect[t[i]][p[i]] += 1;
        }
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(cm.count(r, c), expect[r][c]);
            }
        }
    }
}
