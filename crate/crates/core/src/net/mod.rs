//! Two-layer recommender network with a prunable output layer.
//!
//! `input --(W1, b1, ReLU)--> hidden (h) --(W2, b2)--> n output neurons`.
//! Output neuron `j` owns column `j` of `W2` (stored as row `j` of an `n × h`
//! matrix) and bias `b2[j]`. Forward and backward passes over the output layer
//! touch only the neurons in the active set.

mod adam;
mod loss;
mod metrics;
mod trainer;

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

pub use adam::{Adam, AdamConfig, ColumnMoments, Moments};
pub use loss::{loss_and_grad, ColumnGrads, Gradients, LossOutput};
pub use metrics::{eval_subset, precision_at_1, predict_top1};
pub use trainer::{train_dense, train_step, Active, BatchSampler, DenseRunConfig, DenseRunRow, StepStats};

use crate::data::SparseExample;
use crate::error::{check_len, Error, Result};
use crate::matrix::{dot, Matrix};
use crate::rng::{self, tags};

pub const DEFAULT_HIDDEN: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLayer {
    /// `d_in × h`; row `i` is feature `i`'s fan-out.
    pub w: Matrix,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputLayer {
    /// `n × h`; row `j` is neuron `j`'s weight column.
    pub w: Matrix,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetWeights {
    pub hidden: HiddenLayer,
    pub output: OutputLayer,
}

impl NetWeights {
    /// Glorot-uniform weights, zero biases.
    pub fn init(input_dim: usize, hidden_dim: usize, num_neurons: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || num_neurons == 0 {
            return Err(Error::param("network dimensions must be positive"));
        }
        let mut r = rng::stream(seed, tags::INIT, 0);
        let mut glorot = |rows: usize, cols: usize| {
            let limit = libm::sqrt(6.0 / (rows + cols) as f64);
            let data = (0..rows * cols).map(|_| r.random_range(-limit..limit)).collect();
            Matrix::from_vec(rows, cols, data).expect("sized")
        };
        let w1 = glorot(input_dim, hidden_dim);
        let w2 = glorot(num_neurons, hidden_dim);
        Ok(NetWeights {
            hidden: HiddenLayer { w: w1, b: vec![0.0; hidden_dim] },
            output: OutputLayer { w: w2, b: vec![0.0; num_neurons] },
        })
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.w.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden.b.len()
    }

    pub fn num_neurons(&self) -> usize {
        self.output.b.len()
    }

    pub fn is_finite(&self) -> bool {
        [self.hidden.w.as_slice(), &self.hidden.b, self.output.w.as_slice(), &self.output.b]
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Read access to output-layer columns; implemented by the full layer and by
/// a device's subset of columns.
pub trait OutputColumns {
    fn num_neurons(&self) -> usize;
    fn hidden_dim(&self) -> usize;
    /// `(weight column, bias)` of neuron `j`, if held.
    fn column(&self, j: usize) -> Option<(&[f64], f64)>;
}

pub trait OutputColumnsMut: OutputColumns {
    fn column_mut(&mut self, j: usize) -> Option<(&mut [f64], &mut f64)>;
}

impl OutputColumns for OutputLayer {
    fn num_neurons(&self) -> usize {
        self.b.len()
    }

    fn hidden_dim(&self) -> usize {
        self.w.cols()
    }

    fn column(&self, j: usize) -> Option<(&[f64], f64)> {
        (j < self.b.len()).then(|| (self.w.row(j), self.b[j]))
    }
}

impl OutputColumnsMut for OutputLayer {
    fn column_mut(&mut self, j: usize) -> Option<(&mut [f64], &mut f64)> {
        if j < self.b.len() {
            Some((self.w.row_mut(j), &mut self.b[j]))
        } else {
            None
        }
    }
}

/// A subset of output columns, as held by a device after requesting `W2[:, Θ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveColumns {
    num_neurons: usize,
    neurons: Vec<usize>,
    w: Matrix,
    b: Vec<f64>,
}

impl ActiveColumns {
    pub fn empty(num_neurons: usize, hidden_dim: usize) -> Self {
        ActiveColumns { num_neurons, neurons: Vec::new(), w: Matrix::zeros(0, hidden_dim), b: Vec::new() }
    }

    /// Copies the listed columns (sorted, distinct) out of `layer`.
    pub fn gather(layer: &OutputLayer, neurons: &[usize]) -> Result<Self> {
        let h = layer.w.cols();
        let mut w = Vec::with_capacity(neurons.len() * h);
        let mut b = Vec::with_capacity(neurons.len());
        for &j in neurons {
            let (col, bias) = layer.column(j).ok_or(Error::IndexOutOfRange { index: j, bound: layer.b.len() })?;
            w.extend_from_slice(col);
            b.push(bias);
        }
        Self::from_parts(layer.b.len(), neurons.to_vec(), Matrix::from_vec(neurons.len(), h, w)?, b)
    }

    pub fn from_parts(num_neurons: usize, neurons: Vec<usize>, w: Matrix, b: Vec<f64>) -> Result<Self> {
        check_len(neurons.len(), w.rows())?;
        check_len(neurons.len(), b.len())?;
        if neurons.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::param("active columns must be sorted and distinct"));
        }
        if let Some(&last) = neurons.last() {
            if last >= num_neurons {
                return Err(Error::IndexOutOfRange { index: last, bound: num_neurons });
            }
        }
        Ok(ActiveColumns { num_neurons, neurons, w, b })
    }

    pub fn neurons(&self) -> &[usize] {
        &self.neurons
    }

    pub fn weights(&self) -> &Matrix {
        &self.w
    }

    pub fn biases(&self) -> &[f64] {
        &self.b
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    /// Reals held: `|Θ|·h` weights plus `|Θ|` biases.
    pub fn reals(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

impl OutputColumns for ActiveColumns {
    fn num_neurons(&self) -> usize {
        self.num_neurons
    }

    fn hidden_dim(&self) -> usize {
        self.w.cols()
    }

    fn column(&self, j: usize) -> Option<(&[f64], f64)> {
        let k = self.neurons.binary_search(&j).ok()?;
        Some((self.w.row(k), self.b[k]))
    }
}

impl OutputColumnsMut for ActiveColumns {
    fn column_mut(&mut self, j: usize) -> Option<(&mut [f64], &mut f64)> {
        let k = self.neurons.binary_search(&j).ok()?;
        Some((self.w.row_mut(k), &mut self.b[k]))
    }
}

/// Multiply-add counter for the output layer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounter {
    pub mul_adds: u64,
}

/// Post-ReLU hidden activations, one row per batch sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub hidden: Vec<Vec<f64>>,
}

/// `ReLU(W1ᵀ x + b1)` for each example, touching only nonzero features.
pub fn forward_hidden(layer: &HiddenLayer, batch: &[&SparseExample]) -> Result<ActivationRecord> {
    let d_in = layer.w.rows();
    let hidden = batch
        .iter()
        .map(|ex| {
            let mut h = layer.b.clone();
            for &(i, v) in &ex.features {
                if i >= d_in {
                    return Err(Error::IndexOutOfRange { index: i, bound: d_in });
                }
                crate::matrix::axpy(v, layer.w.row(i), &mut h);
            }
            h.iter_mut().for_each(|x| *x = x.max(0.0));
            Ok(h)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ActivationRecord { hidden })
}

/// Logits `hiddenᵀ W2[:, j] + b2[j]` for `j ∈ active`, in `active` order.
pub fn forward_active<C: OutputColumns + ?Sized>(
    out: &C,
    hidden: &[f64],
    active: &[usize],
    ops: &mut OpCounter,
) -> Result<Vec<f64>> {
    check_len(out.hidden_dim(), hidden.len())?;
    let n = out.num_neurons();
    active
        .iter()
        .map(|&j| {
            if j >= n {
                return Err(Error::IndexOutOfRange { index: j, bound: n });
            }
            let (col, b) = out.column(j).ok_or(Error::MissingColumn(j))?;
            ops.mul_adds += hidden.len() as u64;
            Ok(dot(hidden, col) + b)
        })
        .collect()
}

/// Logits over all `n` neurons.
pub fn forward_full(w: &NetWeights, ex: &SparseExample) -> Result<Vec<f64>> {
    let rec = forward_hidden(&w.hidden, &[ex])?;
    let h = &rec.hidden[0];
    Ok((0..w.num_neurons()).map(|j| dot(h, w.output.w.row(j)) + w.output.b[j]).collect())
}
