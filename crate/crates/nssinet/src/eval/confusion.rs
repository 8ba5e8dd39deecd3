//! Confusion matrices for the whole test set and per gender subgroup,
//! with DN+ as the positive class.

use serde::{Deserialize, Serialize};

use crate::cohort::Gender;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    All,
    Female,
    Male,
}

/// Counts plus row-normalized rates: `tpr + fnr = 1`, `tnr + fpr = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub group: Group,
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tpr: f64,
    pub tnr: f64,
    pub fpr: f64,
    pub fnr: f64,
}

impl ConfusionMatrix {
    fn from_counts(group: Group, tp: usize, tn: usize, fp: usize, fn_: usize) -> Self {
        let pos = (tp + fn_) as f64;
        let neg = (tn + fp) as f64;
        let (tpr, fnr) = if pos > 0.0 { (tp as f64 / pos, fn_ as f64 / pos) } else { (0.0, 0.0) };
        let (tnr, fpr) = if neg > 0.0 { (tn as f64 / neg, fp as f64 / neg) } else { (0.0, 0.0) };
        ConfusionMatrix { group, tp, tn, fp, fn_, tpr, tnr, fpr, fnr }
    }

    pub fn accuracy(&self) -> f64 {
        let n = self.tp + self.tn + self.fp + self.fn_;
        if n == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / n as f64
        }
    }
}

/// Build all/female/male matrices from aligned prediction, label and gender
/// vectors (`true` = DN+). Empty gender groups are omitted.
pub fn confusion(
    predictions: &[bool],
    labels: &[bool],
    genders: &[Gender],
) -> Result<Vec<ConfusionMatrix>> {
    if predictions.len() != labels.len() || labels.len() != genders.len() {
        return Err(Error::Shape(format!(
            "confusion inputs differ in length: {} predictions, {} labels, {} genders",
            predictions.len(),
            labels.len(),
            genders.len()
        )));
    }
    let mut out = Vec::with_capacity(3);
    for (group, filter) in [
        (Group::All, None),
        (Group::Female, Some(Gender::Female)),
        (Group::Male, Some(Gender::Male)),
    ] {
        let (mut tp, mut tn, mut fp, mut fn_) = (0usize, 0usize, 0usize, 0usize);
        let mut any = false;
        for i in 0..labels.len() {
            if let Some(g) = filter {
                if genders[i] != g {
                    continue;
                }
            }
            any = true;
            match (predictions[i], labels[i]) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
            }
        }
        if any {
            out.push(ConfusionMatrix::from_counts(group, tp, tn, fp, fn_));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_inverted_predictions() {
        let labels = [true, true, false, false];
        let genders = [Gender::Female, Gender::Male, Gender::Female, Gender::Male];
        let ms = confusion(&labels, &labels, &genders).unwrap();
        assert_eq!(ms.len(), 3);
        for m in &ms {
            assert_eq!(m.tpr, 1.0);
            assert_eq!(m.tnr, 1.0);
        }
        let inverted: Vec<bool> = labels.iter().map(|b| !b).collect();
        let ms = confusion(&inverted, &labels, &genders).unwrap();
        for m in &ms {
            assert_eq!(m.tpr, 0.0);
            assert_eq!(m.tnr, 0.0);
        }
    }

    #[test]
    fn hand_counted_four_sample_case() {
        // 2 DN+, one predicted correctly; 2 DN-, both correct.
        let labels = [true, true, false, false];
        let preds = [true, false, false, false];
        let genders = [Gender::Female; 4];
        let ms = confusion(&preds, &labels, &genders).unwrap();
        let all = &ms[0];
        assert_eq!((all.tp, all.fn_, all.tn, all.fp), (1, 1, 2, 0));
        assert_eq!(all.tpr, 0.5);
        assert_eq!(all.fnr, 0.5);
        assert_eq!(all.tnr, 1.0);
        assert_eq!(all.fpr, 0.0);
        // No male samples: the male matrix is omitted.
        assert_eq!(ms.len(), 2);
    }

    #[test]
    fn rates_satisfy_row_identities() {
        let labels = [true, false, true, false, true];
        let preds = [true, true, false, false, true];
        let genders =
            [Gender::Female, Gender::Male, Gender::Female, Gender::Male, Gender::Female];
        for m in confusion(&preds, &labels, &genders).unwrap() {
            let pos = m.tp + m.fn_;
            let neg = m.tn + m.fp;
            if pos > 0 {
                assert!((m.tpr + m.fnr - 1.0).abs() < 1e-12);
            }
            if neg > 0 {
                assert!((m.tnr + m.fpr - 1.0).abs() < 1e-12);
            }
        }
    }
}
