use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// Which ratios had a zero denominator and were reported as 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Undefined {
    pub accuracy: bool,
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

impl Undefined {
    pub fn any(&self) -> bool {
        self.accuracy || self.precision || self.recall || self.f1
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default)]
    pub undefined: Undefined,
}

fn ratio(num: u64, den: u64, undefined: &mut bool) -> f64 {
    if den == 0 {
        *undefined = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn add(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn metrics(&self) -> MetricsReport {
        let mut u = Undefined::default();
        let &ConfusionCounts { tp, tn, fp, fn_ } = self;
        MetricsReport {
            accuracy: ratio(tp + tn, tp + tn + fp + fn_, &mut u.accuracy),
            precision: ratio(tp, tp + fp, &mut u.precision),
            recall: ratio(tp, tp + fn_, &mut u.recall),
            f1: ratio(2 * tp, 2 * tp + fp + fn_, &mut u.f1),
            undefined: u,
        }
    }
}

/// Confusion counts of binary predictions (class 1 = purchase) and the
/// derived accuracy/precision/recall/F1.
pub fn evaluate(predictions: &[u8], truth: &[u8]) -> Result<(ConfusionCounts, MetricsReport)> {
    if predictions.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in predictions.iter().zip(truth) {
        match (p != 0, t != 0) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok((c, c.metrics()))
}

/// Field-wise mean of several reports; a field is flagged if any input was.
pub fn mean_report(reports: &[MetricsReport]) -> MetricsReport {
    if reports.is_empty() {
        return MetricsReport {
            undefined: Undefined {
                accuracy: true,
                precision: true,
                recall: true,
                f1: true,
            },
            ..Default::default()
        };
    }
    let n = reports.len() as f64;
    let mut out = MetricsReport::default();
    for r in reports {
        out.accuracy += r.accuracy / n;
        out.precision += r.precision / n;
        out.recall += r.recall / n;
        out.f1 += r.f1 / n;
        out.undefined.accuracy |= r.undefined.accuracy;
        out.undefined.precision |= r.undefined.precision;
        out.undefined.recall |= r.undefined.recall;
        out.undefined.f1 |= r.undefined.f1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_correct() {
        let (_, m) = evaluate(&[1, 0, 1], &[1, 0, 1]).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
        assert!(!m.undefined.any());
    }

    #[test]
    fn fixture_counts() {
        let c = ConfusionCounts {
            tp: 3,
            tn: 5,
            fp: 1,
            fn_: 1,
        };
        let m = c.metrics();
        assert!((m.accuracy - 0.8).abs() < 1e-12);
        assert!((m.precision - 0.75).abs() < 1e-12);
        assert!((m.recall - 0.75).abs() < 1e-12);
        assert!((m.f1 - 0.75).abs() < 1e-12);
    }

    #[test]
    fn no_positive_predictions() {
        let (c, m) = evaluate(&[0, 0, 0], &[1, 0, 1]).unwrap();
        assert_eq!(
            c,
            ConfusionCounts {
                tp: 0,
                tn: 1,
                fp: 0,
                fn_: 2
            }
        );
        assert_eq!(m.precision, 0.0);
        assert!(m.undefined.precision);
        assert_eq!(m.recall, 0.0);
        assert!(!m.undefined.recall);
    }

    #[test]
    fn length_mismatch() {
        assert!(evaluate(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn json_uses_fn_key() {
        let s = serde_json::to_string(&ConfusionCounts {
            tp: 1,
            tn: 2,
            fp: 3,
            fn_: 4,
        })
        .unwrap();
        assert_eq!(s, r#"{"tp":1,"tn":2,"fp":3,"fn":4}"#);
    }
}
