use alloc::vec::Vec;

use rand::seq::index;

use crate::data::SparseExample;
use crate::error::Result;
use crate::rng::{self, tags};

use super::{forward_full, NetWeights};

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax(logits: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &z) in logits.iter().enumerate() {
        if best.is_none_or(|(_, b)| z > b) {
            best = Some((j, z));
        }
    }
    best.map(|(j, _)| j)
}

pub fn predict_top1(w: &NetWeights, ex: &SparseExample) -> Result<usize> {
    Ok(argmax(&forward_full(w, ex)?).expect("n > 0"))
}

/// P@1 over the full output layer. Examples without labels are excluded;
/// `None` when nothing is left to average.
pub fn precision_at_1(w: &NetWeights, examples: &[&SparseExample]) -> Result<Option<f64>> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for ex in examples {
        if ex.labels.is_empty() {
            continue;
        }
        total += 1;
        if ex.has_label(predict_top1(w, ex)?) {
            hits += 1;
        }
    }
    Ok((total > 0).then(|| hits as f64 / total as f64))
}

/// Fixed random evaluation subset of a test split (all of it when `size ≥ len`).
pub fn eval_subset(len: usize, size: usize, seed: u64) -> Vec<usize> {
    if size >= len {
        return (0..len).collect();
    }
    let mut v = index::sample(&mut rng::stream(seed, tags::EVAL, 0), len, size).into_vec();
    v.sort_unstable();
    v
}
