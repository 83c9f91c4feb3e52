//! Confusion matrix, per-class F1, macro-F1, accuracy, and report rendering.
//!
//! Conventions: rows of the confusion matrix are true classes, columns are
//! predictions. A class with no true or predicted samples scores F1 = 0, and
//! the macro average runs over all 8 classes unweighted. Percentages are
//! rounded to one decimal only when rendering; internal values keep full
//! precision.

use serde::{Deserialize, Serialize};

use crate::datamodel::{CLASS_NAMES, NUM_CLASSES};
use crate::error::{Error, Result};

pub type Confusion = [[usize; NUM_CLASSES]; NUM_CLASSES];

/// counts[t][p] = #{i : labels[i] = t, preds[i] = p}
pub fn confusion_matrix(preds: &[usize], labels: &[usize]) -> Result<Confusion> {
    if preds.len() != labels.len() {
        return Err(Error::shape(
            "confusion_matrix",
            format!("{} predictions vs {} labels", preds.len(), labels.len()),
        ));
    }
    let mut counts = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    for (i, (&p, &t)) in preds.iter().zip(labels).enumerate() {
        if p >= NUM_CLASSES || t >= NUM_CLASSES {
            return Err(Error::invalid(format!(
                "class out of range at index {i}: pred {p}, label {t}"
            )));
        }
        counts[t][p] += 1;
    }
    Ok(counts)
}

/// F1 per class: 2·TP / (2·TP + FP + FN); 0 when the class never occurs.
pub fn per_class_f1(confusion: &Confusion) -> [f64; NUM_CLASSES] {
    let mut out = [0.0; NUM_CLASSES];
    for (c, o) in out.iter_mut().enumerate() {
        let tp = confusion[c][c];
        let fp: usize = (0..NUM_CLASSES).filter(|&t| t != c).map(|t| confusion[t][c]).sum();
        let fn_: usize = (0..NUM_CLASSES).filter(|&p| p != c).map(|p| confusion[c][p]).sum();
        let denom = 2 * tp + fp + fn_;
        *o = if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 };
    }
    out
}

/// Unweighted mean over all 8 classes.
pub fn macro_f1(per_class: &[f64; NUM_CLASSES]) -> f64 {
    per_class.iter().sum::<f64>() / NUM_CLASSES as f64
}

/// trace / total; `None` when there are no samples (undefined, not 0).
pub fn accuracy(confusion: &Confusion) -> Option<f64> {
    let total: usize = confusion.iter().flatten().sum();
    if total == 0 {
        return None;
    }
    let trace: usize = (0..NUM_CLASSES).map(|c| confusion[c][c]).sum();
    Some(trace as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: Confusion,
    pub per_class_f1: [f64; NUM_CLASSES],
    pub macro_f1: f64,
    pub accuracy: Option<f64>,
    pub n_samples: usize,
}

impl EvalReport {
    pub fn from_preds(preds: &[usize], labels: &[usize]) -> Result<Self> {
        let confusion = confusion_matrix(preds, labels)?;
        Ok(EvalReport::from_confusion(confusion))
    }

    pub fn from_confusion(confusion: Confusion) -> Self {
        let per_class = per_class_f1(&confusion);
        EvalReport {
            confusion,
            per_class_f1: per_class,
            macro_f1: macro_f1(&per_class),
            accuracy: accuracy(&confusion),
            n_samples: confusion.iter().flatten().sum(),
        }
    }

    pub fn render(&self, name: &str, style: ReportStyle) -> String {
        render_comparison(&[(name.to_string(), self.clone())], style)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportStyle {
    Markdown,
    Csv,
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

fn pct_opt(v: Option<f64>) -> String {
    v.map(pct).unwrap_or_else(|| "nan".to_string())
}

/// One row per run, eight class columns in the fixed order, then accuracy
/// and macro-F1. Markdown and CSV carry identical numbers.
pub fn render_comparison(rows: &[(String, EvalReport)], style: ReportStyle) -> String {
    let mut out = String::new();
    match style {
        ReportStyle::Markdown => {
            out.push_str("| Run |");
            for c in CLASS_NAMES {
                out.push_str(&format!(" {c} |"));
            }
            out.push_str(" Acc | Avg(F1) |\n");
            out.push_str("|:--|");
            for _ in 0..NUM_CLASSES + 2 {
                out.push_str("--:|");
            }
            out.push('\n');
            for (name, r) in rows {
                out.push_str(&format!("| {name} |"));
                for f1 in &r.per_class_f1 {
                    out.push_str(&format!(" {} |", pct(*f1)));
                }
                out.push_str(&format!(" {} | {} |\n", pct_opt(r.accuracy), pct(r.macro_f1)));
            }
        }
        ReportStyle::Csv => {
            out.push_str("run");
            for c in CLASS_NAMES {
                out.push_str(&format!(",{}", c.to_lowercase()));
            }
            out.push_str(",acc,avg_f1\n");
            for (name, r) in rows {
                out.push_str(name);
                for f1 in &r.per_class_f1 {
                    out.push_str(&format!(",{}", pct(*f1)));
                }
                out.push_str(&format!(",{},{}\n", pct_opt(r.accuracy), pct(r.macro_f1)));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn perfect_predictions_give_diagonal_and_ones() {
        let labels: Vec<usize> = (0..NUM_CLASSES).cycle().take(40).collect();
        let conf = confusion_matrix(&labels, &labels).unwrap();
        for t in 0..NUM_CLASSES {
            for p in 0..NUM_CLASSES {
                assert_eq!(conf[t][p], if t == p { 5 } else { 0 });
            }
        }
        let report = EvalReport::from_confusion(conf);
        assert!(report.per_class_f1.iter().all(|&f| f == 1.0));
        assert_eq!(report.accuracy, Some(1.0));
        assert_eq!(report.macro_f1, 1.0);
    }

    #[test]
    fn empty_inputs_give_zero_matrix_and_undefined_accuracy() {
        let conf = confusion_matrix(&[], &[]).unwrap();
        assert!(conf.iter().flatten().all(|&c| c == 0));
        let report = EvalReport::from_confusion(conf);
        assert_eq!(report.n_samples, 0);
        assert_eq!(report.accuracy, None);
    }

    #[test]
    fn two_class_worked_example() {
        // labels [0,0,1,1], preds [0,1,1,1]:
        //   class 0: tp=1 fp=0 fn=1 → F1 = 2/3
        //   class 1: tp=2 fp=1 fn=0 → F1 = 0.8
        let labels = [0usize, 0, 1, 1];
        let preds = [0usize, 1, 1, 1];
        let conf = confusion_matrix(&preds, &labels).unwrap();
        assert_eq!(conf[0][0], 1);
        assert_eq!(conf[0][1], 1);
        assert_eq!(conf[1][1], 2);
        let f1 = per_class_f1(&conf);
        assert_abs_diff_eq!(f1[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f1[1], 0.8, epsilon = 1e-15);
        for c in 2..NUM_CLASSES {
            assert_eq!(f1[c], 0.0);
        }
        let report = EvalReport::from_preds(&preds, &labels).unwrap();
        assert_abs_diff_eq!(report.macro_f1, (2.0 / 3.0 + 0.8) / 8.0, epsilon = 1e-15);
        assert_eq!(report.accuracy, Some(0.75));
    }

    #[test]
    fn rejects_length_mismatch_and_out_of_range() {
        assert!(confusion_matrix(&[0, 1], &[0]).is_err());
        assert!(confusion_matrix(&[8], &[0]).is_err());
        assert!(confusion_matrix(&[0], &[9]).is_err());
    }

    #[test]
    fn published_row_means() {
        // Unweighted means of per-class F1 rows, against their printed
        // averages (one-decimal table convention).
        let official = [52.0, 6.0, 21.0, 28.0, 49.0, 54.0, 17.0, 43.0];
        let mean = official.iter().sum::<f64>() / 8.0;
        assert_abs_diff_eq!(mean, 33.75, epsilon = 1e-12);
        assert!((mean - 33.7).abs() < 0.1);

        let attention = [58.0, 32.0, 11.0, 16.0, 34.0, 51.0, 28.0, 59.0];
        let mean = attention.iter().sum::<f64>() / 8.0;
        assert_abs_diff_eq!(mean, 36.125, epsilon = 1e-12);
        assert!((mean - 36.1).abs() < 0.1);
    }

    #[test]
    fn renderings_carry_identical_numbers() {
        let labels = [0usize, 0, 1, 1, 3, 4];
        let preds = [0usize, 1, 1, 1, 3, 3];
        let report = EvalReport::from_preds(&preds, &labels).unwrap();
        let md = report.render("run", ReportStyle::Markdown);
        let csv = report.render("run", ReportStyle::Csv);
        let md_fields: Vec<&str> = md
            .lines()
            .nth(2)
            .unwrap()
            .split('|')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        let csv_fields: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(md_fields.len(), csv_fields.len());
        // same numbers in the same column order, name field aside
        assert_eq!(&md_fields[1..], &csv_fields[1..]);
    }

    #[test]
    fn perfect_report_renders_all_hundreds() {
        let labels: Vec<usize> = (0..NUM_CLASSES).collect();
        let report = EvalReport::from_preds(&labels, &labels).unwrap();
        let csv = report.render("perfect", ReportStyle::Csv);
        let row = csv.lines().nth(1).unwrap();
        for field in row.split(',').skip(1) {
            assert_eq!(field, "100.0");
        }
    }

    #[test]
    fn macro_f1_is_frequency_invariant_but_accuracy_is_not() {
        // Balanced: 5 of each of two classes, one error in class 1.
        let mut labels = vec![0usize; 5];
        labels.extend(vec![1usize; 5]);
        let mut preds = labels.clone();
        preds[5] = 0;
        let balanced = EvalReport::from_preds(&preds, &labels).unwrap();

        // Imbalanced: inflate class 0 tenfold; per-class F1 of class 1 and
        // its errors stay identical in structure.
        let mut labels2 = vec![0usize; 50];
        labels2.extend(vec![1usize; 5]);
        let mut preds2 = labels2.clone();
        preds2[50] = 0;
        let imbalanced = EvalReport::from_preds(&preds2, &labels2).unwrap();

        assert!(imbalanced.accuracy.unwrap() > balanced.accuracy.unwrap());
        // class-1 F1 identical in both settings → macro shifts only through
        // class-0's F1, which stays near 1; the gap is small by construction.
        assert_abs_diff_eq!(
            balanced.per_class_f1[1],
            imbalanced.per_class_f1[1],
            epsilon = 1e-15
        );
    }
}
