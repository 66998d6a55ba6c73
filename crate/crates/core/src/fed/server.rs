use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::fold::FoldingOperator;
use crate::net::{ActiveColumns, NetWeights};
use crate::rng::{self, tags};

use super::config::{FedConfig, Method};
use super::message::{Broadcast, ColumnGrant, ColumnRequest, DeviceUpdate, TargetPayload};

/// Central host. It holds the model and only ever sees [`ColumnRequest`]s and
/// [`DeviceUpdate`]s from devices.
#[derive(Debug, Clone)]
pub struct Server {
    model: NetWeights,
    method: Method,
    sketch_dim: usize,
    seed: u64,
}

impl Server {
    pub fn new(model: NetWeights, cfg: &FedConfig) -> Self {
        Server { model, method: cfg.method, sketch_dim: cfg.sketch_dim, seed: cfg.seed }
    }

    pub fn model(&self) -> &NetWeights {
        &self.model
    }

    pub fn into_model(self) -> NetWeights {
        self.model
    }

    /// Pre-target weights plus whatever view of the target layer the method sends.
    pub fn broadcast(&self, round: usize) -> Result<Broadcast> {
        let h = self.model.hidden_dim();
        let target = match self.method {
            Method::PgHash => {
                let fold = FoldingOperator::tiling(h, self.sketch_dim)?;
                let sketch = fold.fold_rows(&self.model.output.w)?;
                TargetPayload::Sketch { fold, sketch }
            }
            Method::PgHashD => {
                // fresh coordinate subset every round
                let mut r = rng::stream(self.seed, tags::SERVER, round as u32);
                let fold = FoldingOperator::random_permute_truncate(h, self.sketch_dim, &mut r)?;
                let sketch = fold.fold_rows(&self.model.output.w)?;
                TargetPayload::Sketch { fold, sketch }
            }
            Method::FedSlideSimHash | Method::FedSlideDwta | Method::DenseFedAvg => {
                TargetPayload::Full(self.model.output.clone())
            }
            Method::SampledSoftmax(_) => TargetPayload::Nothing,
        };
        Ok(Broadcast { hidden: self.model.hidden.clone(), target })
    }

    pub fn grant(&self, req: &ColumnRequest) -> Result<ColumnGrant> {
        Ok(ColumnGrant { columns: ActiveColumns::gather(&self.model.output, req.neurons.as_slice())? })
    }

    /// Averages the hidden layer over all updates and each output column over
    /// the updates that carry it. Columns no update carries are left as is.
    pub fn aggregate(&mut self, updates: &[DeviceUpdate]) -> Result<()> {
        let Some((first, rest)) = updates.split_first() else {
            return Ok(());
        };
        let hidden = &mut self.model.hidden;
        check_len(hidden.w.len(), first.hidden.w.len())?;
        let mut w = first.hidden.w.clone();
        let mut b = first.hidden.b.clone();
        for u in rest {
            check_len(w.len(), u.hidden.w.len())?;
            check_len(b.len(), u.hidden.b.len())?;
            w.as_mut_slice().iter_mut().zip(u.hidden.w.as_slice()).for_each(|(a, x)| *a += x);
            b.iter_mut().zip(&u.hidden.b).for_each(|(a, x)| *a += x);
        }
        if !rest.is_empty() {
            let k = updates.len() as f64;
            w.as_mut_slice().iter_mut().for_each(|a| *a /= k);
            b.iter_mut().for_each(|a| *a /= k);
        }
        hidden.w = w;
        hidden.b = b;

        let n = self.model.num_neurons();
        let h = self.model.hidden_dim();
        // neuron -> (weight sum, bias sum, devices)
        let mut sums: BTreeMap<usize, (Vec<f64>, f64, usize)> = BTreeMap::new();
        for u in updates {
            let cols = &u.columns;
            check_len(h, cols.weights().cols())?;
            for (k, &j) in cols.neurons().iter().enumerate() {
                if j >= n {
                    return Err(Error::IndexOutOfRange { index: j, bound: n });
                }
                let row = cols.weights().row(k);
                match sums.get_mut(&j) {
                    Some((ws, bs, c)) => {
                        ws.iter_mut().zip(row).for_each(|(a, x)| *a += x);
                        *bs += cols.biases()[k];
                        *c += 1;
                    }
                    None => {
                        sums.insert(j, (row.to_vec(), cols.biases()[k], 1));
                    }
                }
            }
        }
        let out = &mut self.model.output;
        for (j, (ws, bs, c)) in sums {
            let dst = out.w.row_mut(j);
            if c == 1 {
                dst.copy_from_slice(&ws);
                out.b[j] = bs;
            } else {
                let k = c as f64;
                dst.iter_mut().zip(&ws).for_each(|(d, s)| *d = s / k);
                out.b[j] = bs / k;
            }
        }
        Ok(())
    }
}
