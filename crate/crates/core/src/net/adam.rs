use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};

use super::{Gradients, HiddenLayer, OutputColumnsMut};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    fn zeros(len: usize) -> Self {
        Moments { m: vec![0.0; len], v: vec![0.0; len] }
    }
}

/// Moments of one output column (`h` weights then the bias) and the number
/// of updates it has received.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMoments {
    pub moments: Moments,
    pub steps: u64,
}

/// Adam with dense state for the hidden layer and lazily created per-column
/// state for the output layer. A column's bias correction uses its own update
/// count, so a column that is active on every step follows dense Adam exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub hidden_w: Moments,
    pub hidden_b: Moments,
    pub columns: BTreeMap<usize, ColumnMoments>,
}

impl Adam {
    pub fn new(config: AdamConfig, input_dim: usize, hidden_dim: usize) -> Self {
        Adam {
            config,
            step: 0,
            hidden_w: Moments::zeros(input_dim * hidden_dim),
            hidden_b: Moments::zeros(hidden_dim),
            columns: BTreeMap::new(),
        }
    }

    /// Applies one update. Only the columns present in `grads.columns` are touched.
    pub fn step<C: OutputColumnsMut + ?Sized>(
        &mut self,
        hidden: &mut HiddenLayer,
        out: &mut C,
        grads: &Gradients,
    ) -> Result<()> {
        check_len(self.hidden_w.m.len(), hidden.w.len())?;
        check_len(hidden.w.len(), grads.hidden_w.len())?;
        check_len(hidden.b.len(), grads.hidden_b.len())?;
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        for &j in &grads.columns.neurons {
            if out.column_mut(j).is_none() {
                return Err(Error::MissingColumn(j));
            }
        }
        self.step += 1;
        let cfg = self.config;
        let t = self.step;
        update(&cfg, t, hidden.w.as_mut_slice(), grads.hidden_w.as_slice(), &mut self.hidden_w, 0);
        update(&cfg, t, &mut hidden.b, &grads.hidden_b, &mut self.hidden_b, 0);

        let h = hidden.b.len();
        let cols = &grads.columns;
        for (k, &j) in cols.neurons.iter().enumerate() {
            let state =
                self.columns.entry(j).or_insert_with(|| ColumnMoments { moments: Moments::zeros(h + 1), steps: 0 });
            state.steps += 1;
            let (w, b) = out.column_mut(j).expect("checked");
            update(&cfg, state.steps, w, cols.w.row(k), &mut state.moments, 0);
            update(&cfg, state.steps, core::slice::from_mut(b), &cols.b[k..k + 1], &mut state.moments, h);
        }
        Ok(())
    }

    /// Drops column state for neurons not in `keep` (sorted).
    pub fn retain_columns(&mut self, keep: &[usize]) {
        self.columns.retain(|j, _| keep.binary_search(j).is_ok());
    }
}

fn update(cfg: &AdamConfig, t: u64, params: &mut [f64], grads: &[f64], state: &mut Moments, offset: usize) {
    let bc1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    let m = &mut state.m[offset..offset + params.len()];
    let v = &mut state.v[offset..offset + params.len()];
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let mhat = m[i] / bc1;
        let vhat = v[i] / bc2;
        params[i] -= cfg.lr * mhat / (libm::sqrt(vhat) + cfg.eps);
    }
}
