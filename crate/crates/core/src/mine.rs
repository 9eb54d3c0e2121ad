//! Hard mining: score samples by how much a model's prediction disagrees
//! with the generated labels, then keep the worst `k` for another round of
//! training.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::supervise::{PartLabelMap, SampleRecord};

/// Disagreement rate over the union of the two maps' nonzero supports;
/// 0 when both maps are empty.
pub fn score_samples(predicted: &PartLabelMap, weak: &PartLabelMap) -> Result<f64> {
    if predicted.width() != weak.width() || predicted.height() != weak.height() {
        return Err(Error::contract(format!(
            "prediction is {}x{}, labels are {}x{}",
            predicted.width(),
            predicted.height(),
            weak.width(),
            weak.height()
        )));
    }
    if predicted.parts() != weak.parts() {
        return Err(Error::contract(format!(
            "prediction has {} parts, labels have {}",
            predicted.parts(),
            weak.parts()
        )));
    }
    let (mut support, mut wrong) = (0usize, 0usize);
    for (&p, &q) in predicted.labels().iter().zip(weak.labels()) {
        if p != 0 || q != 0 {
            support += 1;
            wrong += (p != q) as usize;
        }
    }
    Ok(if support == 0 {
        0.0
    } else {
        wrong as f64 / support as f64
    })
}

/// Scored samples to choose from.
#[derive(Clone, Debug, PartialEq)]
pub struct MiningPool {
    records: Vec<SampleRecord>,
}

impl MiningPool {
    /// Every record needs a finite, non-negative `error_score`.
    pub fn new(records: Vec<SampleRecord>) -> Result<Self> {
        for r in &records {
            match r.error_score {
                Some(s) if s.is_finite() && s >= 0.0 => {}
                other => {
                    return Err(Error::Invalid(format!(
                        "sample {} has unusable error score {other:?}",
                        r.frame_index
                    )))
                }
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Hardest-first order: descending score, then ascending frame index, then
/// ascending label path.
pub fn hardness_order(a: &SampleRecord, b: &SampleRecord) -> Ordering {
    let (sa, sb) = (a.error_score.unwrap_or(0.0), b.error_score.unwrap_or(0.0));
    sb.total_cmp(&sa)
        .then(a.frame_index.cmp(&b.frame_index))
        .then_with(|| a.label_path.cmp(&b.label_path))
}

/// The `k` hardest records, hardest first.
pub fn select_hard(pool: &MiningPool, k: usize) -> Vec<SampleRecord> {
    let mut sorted = pool.records.clone();
    sorted.sort_by(hardness_order);
    sorted.truncate(k);
    sorted
}
