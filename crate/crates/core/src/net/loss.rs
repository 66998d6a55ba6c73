use alloc::vec;
use alloc::vec::Vec;

use crate::data::SparseExample;
use crate::error::{check_len, Error, Result};
use crate::matrix::{axpy, Matrix};

use super::{forward_active, forward_hidden, HiddenLayer, OpCounter, OutputColumns};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossOutput {
    /// Mean cross-entropy over the counted samples (0 when none counted).
    pub loss: f64,
    pub counted: usize,
    /// Samples without any label.
    pub skipped_unlabeled: usize,
    /// Samples none of whose labels are active.
    pub skipped_inactive: usize,
    /// Sum over samples of the active-set size.
    pub active_total: usize,
}

/// Gradient for a set of output columns, row `k` belonging to `neurons[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnGrads {
    pub neurons: Vec<usize>,
    pub w: Matrix,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub hidden_w: Matrix,
    pub hidden_b: Vec<f64>,
    pub columns: ColumnGrads,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        [self.hidden_w.as_slice(), &self.hidden_b, self.columns.w.as_slice(), &self.columns.b]
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Softmax cross-entropy restricted to each sample's active set.
///
/// `active[m]` must be sorted and distinct. The target of sample `m` is uniform
/// over its labels that lie in `active[m]`. Samples with no labels, or no
/// active label, are skipped. The batch loss is the mean over counted samples;
/// gradients reach only the columns in the union of the active sets.
pub fn loss_and_grad<C: OutputColumns + ?Sized>(
    hidden_layer: &HiddenLayer,
    out: &C,
    batch: &[&SparseExample],
    active: &[Vec<usize>],
    ops: &mut OpCounter,
) -> Result<(LossOutput, Gradients)> {
    check_len(batch.len(), active.len())?;
    let h_dim = hidden_layer.b.len();
    check_len(h_dim, out.hidden_dim())?;
    let rec = forward_hidden(hidden_layer, batch)?;

    let mut stats = LossOutput::default();
    // per counted sample: (index, dlogits aligned with active[m])
    let mut deltas: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut total = 0.0;
    for (m, ex) in batch.iter().enumerate() {
        let set = &active[m];
        stats.active_total += set.len();
        if ex.labels.is_empty() {
            log::warn!("sample {m} has no labels; skipped");
            stats.skipped_unlabeled += 1;
            continue;
        }
        let targets: Vec<usize> =
            set.iter().enumerate().filter(|(_, j)| ex.has_label(**j)).map(|(pos, _)| pos).collect();
        if targets.is_empty() {
            stats.skipped_inactive += 1;
            continue;
        }
        let logits = forward_active(out, &rec.hidden[m], set, ops)?;
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| libm::exp(z - max)).collect();
        let sum: f64 = exps.iter().sum();
        let lse = max + libm::log(sum);
        let t = 1.0 / targets.len() as f64;
        total += lse - t * targets.iter().map(|&p| logits[p]).sum::<f64>();
        let mut d: Vec<f64> = exps.iter().map(|e| e / sum).collect();
        for &p in &targets {
            d[p] -= t;
        }
        deltas.push((m, d));
        stats.counted += 1;
    }

    let mut neurons: Vec<usize> = deltas.iter().flat_map(|(m, _)| active[*m].iter().copied()).collect();
    neurons.sort_unstable();
    neurons.dedup();
    let mut grads = Gradients {
        hidden_w: Matrix::zeros(hidden_layer.w.rows(), h_dim),
        hidden_b: vec![0.0; h_dim],
        columns: ColumnGrads { w: Matrix::zeros(neurons.len(), h_dim), b: vec![0.0; neurons.len()], neurons },
    };
    if stats.counted == 0 {
        return Ok((stats, grads));
    }
    let scale = 1.0 / stats.counted as f64;
    stats.loss = total * scale;

    let mut dh = vec![0.0; h_dim];
    for (m, d) in &deltas {
        let h = &rec.hidden[*m];
        dh.iter_mut().for_each(|x| *x = 0.0);
        for (&j, &dz) in active[*m].iter().zip(d) {
            let g = dz * scale;
            let slot = grads.columns.neurons.binary_search(&j).expect("union");
            let (col, _) = out.column(j).ok_or(Error::MissingColumn(j))?;
            axpy(g, h, grads.columns.w.row_mut(slot));
            grads.columns.b[slot] += g;
            axpy(g, col, &mut dh);
            ops.mul_adds += 2 * h_dim as u64;
        }
        for (x, a) in dh.iter_mut().zip(h) {
            if *a <= 0.0 {
                *x = 0.0;
            }
        }
        for &(i, v) in &batch[*m].features {
            axpy(v, &dh, grads.hidden_w.row_mut(i));
        }
        axpy(1.0, &dh, &mut grads.hidden_b);
    }
    Ok((stats, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetWeights;

    #[test]
    fn singleton_true_label_has_zero_loss() {
        let w = NetWeights::init(5, 4, 6, 1).unwrap();
        let ex = SparseExample::new(vec![(0, 1.0)], vec![3]).unwrap();
        let mut ops = OpCounter::default();
        let (out, g) = loss_and_grad(&w.hidden, &w.output, &[&ex], &[vec![3]], &mut ops).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(g.columns.w.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn batch_loss_is_mean_of_sample_losses() {
        let w = NetWeights::init(5, 4, 6, 2).unwrap();
        let a = SparseExample::new(vec![(0, 1.0), (2, 0.5)], vec![1]).unwrap();
        let b = SparseExample::new(vec![(4, -1.0)], vec![0, 5]).unwrap();
        let all: Vec<usize> = (0..6).collect();
        let mut ops = OpCounter::default();
        let la = loss_and_grad(&w.hidden, &w.output, &[&a], core::slice::from_ref(&all), &mut ops).unwrap().0.loss;
        let lb = loss_and_grad(&w.hidden, &w.output, &[&b], core::slice::from_ref(&all), &mut ops).unwrap().0.loss;
        let lab = loss_and_grad(&w.hidden, &w.output, &[&a, &b], &[all.clone(), all], &mut ops).unwrap().0;
        assert!((lab.loss - (la + lb) / 2.0).abs() < 1e-12);
        assert_eq!(lab.counted, 2);
    }

    #[test]
    fn skips_unlabeled_and_inactive() {
        let w = NetWeights::init(5, 4, 6, 2).unwrap();
        let none = SparseExample::new(vec![(0, 1.0)], vec![]).unwrap();
        let off = SparseExample::new(vec![(0, 1.0)], vec![5]).unwrap();
        let mut ops = OpCounter::default();
        let (out, g) =
            loss_and_grad(&w.hidden, &w.output, &[&none, &off], &[vec![0, 1], vec![0, 1]], &mut ops).unwrap();
        assert_eq!((out.counted, out.skipped_unlabeled, out.skipped_inactive), (0, 1, 1));
        assert_eq!(out.loss, 0.0);
        assert!(g.columns.neurons.is_empty());
    }

    #[test]
    fn gradient_touches_only_active_columns() {
        let w = NetWeights::init(5, 4, 6, 2).unwrap();
        let ex = SparseExample::new(vec![(1, 1.0)], vec![2]).unwrap();
        let mut ops = OpCounter::default();
        let (_, g) = loss_and_grad(&w.hidden, &w.output, &[&ex], &[vec![0, 2, 5]], &mut ops).unwrap();
        assert_eq!(g.columns.neurons, vec![0, 2, 5]);
        // forward h per column, backward 2h per column
        assert_eq!(ops.mul_adds, 3 * 4 + 3 * 8);
    }
}
