//! Confusion matrix accumulation and the classification metrics derived
//! from it: accuracy, per-class precision/recall/F1, and their macro
//! (unweighted) means.
//!
//! Rows are the true class, columns the predicted class. Scores whose
//! denominator is zero (a class never predicted, or absent from the data)
//! are defined as 0 rather than NaN so downstream assertions stay total.

use std::io::Write;

use crate::error::{Error, Result};

pub struct ConfusionMatrix {
    class_names: Vec<String>,
    /// row-major `[C, C]`; counts[true * C + predicted]
    counts: Vec<u64>,
}

/// One class's row of the metric table.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    pub name: String,
    /// number of evaluated samples whose true class this is
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// The aggregate table: accuracy plus unweighted means over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassScores>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Result<Self> {
        if class_names.is_empty() {
            return Err(Error::param("confusion matrix needs at least one class"));
        }
        let c = class_names.len();
        Ok(ConfusionMatrix {
            class_names,
            counts: vec![0; c * c],
        })
    }

    /// Build from explicit counts, row-major with rows = true class.
    pub fn from_counts(class_names: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        let c = class_names.len();
        if counts.len() != c * c {
            return Err(Error::shape(format!(
                "{} counts cannot fill a {c}x{c} matrix",
                counts.len()
            )));
        }
        let mut cm = ConfusionMatrix::new(class_names)?;
        cm.counts = counts;
        Ok(cm)
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn count(&self, true_label: usize, predicted: usize) -> u64 {
        self.counts[true_label * self.classes() + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn update(&mut self, true_label: usize, predicted: usize) -> Result<()> {
        let c = self.classes();
        if true_label >= c || predicted >= c {
            return Err(Error::Label(format!(
                "label pair ({true_label}, {predicted}) outside {c} classes"
            )));
        }
        self.counts[true_label * c + predicted] += 1;
        Ok(())
    }

    /// Entrywise sum: per-shard matrices accumulate into one. Requires the
    /// same classes in the same order.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.class_names != other.class_names {
            return Err(Error::state(
                "cannot merge confusion matrices over different classes",
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    fn row_sum(&self, r: usize) -> u64 {
        let c = self.classes();
        self.counts[r * c..(r + 1) * c].iter().sum()
    }

    fn col_sum(&self, col: usize) -> u64 {
        let c = self.classes();
        (0..c).map(|r| self.counts[r * c + col]).sum()
    }

    pub fn accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::state("no samples recorded in the confusion matrix"));
        }
        let trace: u64 = (0..self.classes()).map(|i| self.count(i, i)).sum();
        Ok(trace as f64 / total as f64)
    }

    pub fn metrics(&self) -> Result<Metrics> {
        let accuracy = self.accuracy()?;
        let c = self.classes();
        let mut per_class = Vec::with_capacity(c);
        for i in 0..c {
            let tp = self.count(i, i) as f64;
            let predicted = self.col_sum(i) as f64;
            let support = self.row_sum(i);
            let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
            let recall = if support > 0 { tp / support as f64 } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            per_class.push(ClassScores {
                name: self.class_names[i].clone(),
                support,
                precision,
                recall,
                f1,
            });
        }
        let mean = |f: fn(&ClassScores) -> f64| -> f64 {
            per_class.iter().map(f).sum::<f64>() / c as f64
        };
        Ok(Metrics {
            accuracy,
            macro_precision: mean(|s| s.precision),
            macro_recall: mean(|s| s.recall),
            macro_f1: mean(|s| s.f1),
            per_class,
        })
    }

    /// CSV layout: header row of class names after an empty corner cell,
    /// then one row per true class starting with its name.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec![String::new()];
        header.extend(self.class_names.iter().cloned());
        out.write_record(&header)?;
        let c = self.classes();
        for r in 0..c {
            let mut row = vec![self.class_names[r].clone()];
            row.extend((0..c).map(|p| self.counts[r * c + p].to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

impl Metrics {
    /// CSV layout: `metric,value` rows, the four aggregates first, then
    /// precision/recall/f1 per class in class order.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["metric", "value"])?;
        out.write_record(["accuracy", &self.accuracy.to_string()])?;
        out.write_record(["macro_precision", &self.macro_precision.to_string()])?;
        out.write_record(["macro_recall", &self.macro_recall.to_string()])?;
        out.write_record(["macro_f1", &self.macro_f1.to_string()])?;
        for s in &self.per_class {
            out.write_record([&format!("precision_{}", s.name), &s.precision.to_string()])?;
            out.write_record([&format!("recall_{}", s.name), &s.recall.to_string()])?;
            out.write_record([&format!("f1_{}", s.name), &s.f1.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn updates_follow_the_row_true_column_predicted_convention() {
        let mut cm = ConfusionMatrix::new(names(2)).unwrap();
        cm.update(0, 0).unwrap();
        assert_eq!(cm.count(0, 0), 1);
        assert_eq!(cm.total(), 1);
        cm.update(1, 0).unwrap();
        cm.update(0, 1).unwrap();
        assert_eq!(cm.count(1, 0), 1);
        assert_eq!(cm.count(0, 1), 1);
        assert!(cm.update(2, 0).is_err());
        assert!(cm.update(0, 2).is_err());
    }

    #[test]
    fn perfect_predictions_score_one_everywhere() {
        let mut cm = ConfusionMatrix::new(names(3)).unwrap();
        for c in 0..3 {
            for _ in 0..10 + c {
                cm.update(c, c).unwrap();
            }
        }
        let m = cm.metrics().unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_precision, 1.0);
        assert_eq!(m.macro_recall, 1.0);
        assert_eq!(m.macro_f1, 1.0);
    }

    #[test]
    fn two_class_hand_computed_table() {
        let cm = ConfusionMatrix::from_counts(names(2), vec![2, 1, 0, 3]).unwrap();
        let m = cm.metrics().unwrap();
        assert!((m.accuracy - 0.83333).abs() < 1e-5);
        assert!((m.macro_precision - 0.875).abs() < 1e-5);
        assert!((m.macro_recall - 0.83333).abs() < 1e-5);
        assert!((m.macro_f1 - 0.82857).abs() < 1e-5);
        // the underlying exact fractions
        assert_eq!(m.per_class[0].precision, 1.0);
        assert_eq!(m.per_class[1].precision, 0.75);
        assert_eq!(m.per_class[0].recall, 2.0 / 3.0);
        assert_eq!(m.per_class[1].recall, 1.0);
        assert_eq!(m.per_class[0].support, 3);
        assert_eq!(m.per_class[1].support, 3);
    }

    #[test]
    fn never_predicted_class_scores_zero_without_dividing_by_zero() {
        // class 1 exists in the data but every prediction lands on class 0
        let cm = ConfusionMatrix::from_counts(names(2), vec![4, 0, 2, 0]).unwrap();
        let m = cm.metrics().unwrap();
        assert_eq!(m.per_class[1].precision, 0.0);
        assert_eq!(m.per_class[1].recall, 0.0);
        assert_eq!(m.per_class[1].f1, 0.0);
        assert!(m.macro_precision.is_finite());
        assert!(m.macro_f1.is_finite());
        // class absent from the data: recall denominator is zero too
        let cm = ConfusionMatrix::from_counts(names(2), vec![4, 0, 0, 0]).unwrap();
        assert_eq!(cm.metrics().unwrap().per_class[1].recall, 0.0);
    }

    #[test]
    fn empty_matrix_is_a_state_error() {
        let cm = ConfusionMatrix::new(names(4)).unwrap();
        assert!(matches!(cm.metrics(), Err(Error::State(_))));
    }

    #[test]
    fn permuting_classes_leaves_aggregates_unchanged() {
        let mut rng = Rng::new(31);
        let c = 5;
        let counts: Vec<u64> = (0..c * c).map(|_| rng.next_index(9) as u64).collect();
        let base = ConfusionMatrix::from_counts(names(c), counts.clone()).unwrap();
        let m0 = base.metrics().unwrap();
        for _ in 0..10 {
            let mut perm: Vec<usize> = (0..c).collect();
            rng.shuffle(&mut perm);
            let permuted: Vec<u64> = (0..c * c)
                .map(|i| counts[perm[i / c] * c + perm[i % c]])
                .collect();
            let pnames = perm.iter().map(|&i| format!("c{i}")).collect();
            let m = ConfusionMatrix::from_counts(pnames, permuted)
                .unwrap()
                .metrics()
                .unwrap();
            assert!((m.accuracy - m0.accuracy).abs() < 1e-12);
            assert!((m.macro_precision - m0.macro_precision).abs() < 1e-12);
            assert!((m.macro_recall - m0.macro_recall).abs() < 1e-12);
            assert!((m.macro_f1 - m0.macro_f1).abs() < 1e-12);
        }
    }

    #[test]
    fn micro_averages_collapse_to_accuracy_and_f1_sits_between_p_and_r() {
        let mut rng = Rng::new(32);
        for _ in 0..20 {
            let c = rng.next_index(6) + 2;
            let counts: Vec<u64> = (0..c * c).map(|_| rng.next_index(7) as u64).collect();
            if counts.iter().sum::<u64>() == 0 {
                continue;
            }
            let cm = ConfusionMatrix::from_counts(names(c), counts).unwrap();
            let m = cm.metrics().unwrap();
            // micro precision and recall share the same numerator (the
            // trace) and the same denominator (the total)
            let trace: u64 = (0..c).map(|i| cm.count(i, i)).sum();
            let micro = trace as f64 / cm.total() as f64;
            assert!((micro - m.accuracy).abs() < 1e-12);
            for s in &m.per_class {
                let lo = s.precision.min(s.recall);
                let hi = s.precision.max(s.recall);
                assert!(s.f1 >= lo - 1e-12 && s.f1 <= hi + 1e-12);
                assert!(s.precision <= 1.0 && s.recall <= 1.0 && s.f1 <= 1.0);
            }
        }
    }

    #[test]
    fn merge_sums_entrywise_and_commutes() {
        let mut rng = Rng::new(33);
        let a_counts: Vec<u64> = (0..9).map(|_| rng.next_index(10) as u64).collect();
        let b_counts: Vec<u64> = (0..9).map(|_| rng.next_index(10) as u64).collect();
        let a = ConfusionMatrix::from_counts(names(3), a_counts.clone()).unwrap();
        let b = ConfusionMatrix::from_counts(names(3), b_counts.clone()).unwrap();

        let mut ab = ConfusionMatrix::from_counts(names(3), a_counts.clone()).unwrap();
        ab.merge(&b).unwrap();
        let mut ba = ConfusionMatrix::from_counts(names(3), b_counts.clone()).unwrap();
        ba.merge(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(ab.count(i, j), a.count(i, j) + b.count(i, j));
                assert_eq!(ab.count(i, j), ba.count(i, j));
            }
        }
        let mismatched = ConfusionMatrix::new(names(4)).unwrap();
        assert!(ab.merge(&mismatched).is_err());
    }

    #[test]
    fn csv_exports_match_the_documented_layouts() {
        let cm = ConfusionMatrix::from_counts(
            vec!["A".into(), "B".into()],
            vec![2, 1, 0, 3],
        )
        .unwrap();
        let mut buf = Vec::new();
        cm.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), ",A,B\nA,2,1\nB,0,3\n");

        let m = cm.metrics().unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "metric,value");
        assert_eq!(lines[1], &format!("accuracy,{}", m.accuracy));
        assert_eq!(lines[2], "macro_precision,0.875");
        assert_eq!(lines[5], "precision_A,1");
        assert_eq!(lines.len(), 5 + 6);
        assert!(text.ends_with('\n') && !text.contains('\r'));
    }
}
