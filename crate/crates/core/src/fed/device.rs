use alloc::vec::Vec;

use crate::data::{Dataset, SparseExample};
use crate::error::{Error, Result};
use crate::fold::FoldingOperator;
use crate::hash::HashCode;
use crate::matrix::Matrix;
use crate::net::{forward_hidden, train_step, Active, ActiveColumns, Adam, BatchSampler, HiddenLayer, OutputLayer};
use crate::rng::{self, derive_seed, tags, Rng};
use crate::sampling::{remove_uniformly, sample_matches, sampled_softmax_select, NeuronSet};

use super::config::{ActivationScope, FedConfig, Method};
use super::lsh::{device_lsh, LshOutcome};
use super::message::{Broadcast, ColumnGrant, ColumnRequest, DeviceUpdate, TargetPayload};

/// Target-layer reals held by a device: the sketch, the full layer, or the
/// granted columns (weights plus biases).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MemoryMeter {
    pub current: usize,
    /// Largest `current` since the last broadcast.
    pub peak: usize,
}

impl MemoryMeter {
    fn add(&mut self, reals: usize) {
        self.current += reals;
        self.peak = self.peak.max(self.current);
    }

    fn release(&mut self, reals: usize) {
        self.current = self.current.saturating_sub(reals);
    }
}

/// Values that must never leave the device: raw features, hidden
/// activations, hash parameters and codes. Recorded only for auditing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeviceSecrets {
    pub feature_values: Vec<f64>,
    pub hidden_values: Vec<f64>,
    pub projection_values: Vec<f64>,
    pub input_codes: Vec<HashCode>,
    pub hash_seeds: Vec<u64>,
}

#[derive(Debug, Clone)]
enum LocalTarget {
    Empty,
    Sketch(FoldingOperator, Matrix),
    Full(OutputLayer),
    Partial(ActiveColumns),
}

impl LocalTarget {
    fn reals(&self) -> usize {
        match self {
            LocalTarget::Empty => 0,
            LocalTarget::Sketch(_, s) => s.len(),
            LocalTarget::Full(l) => l.w.len() + l.b.len(),
            LocalTarget::Partial(c) => c.reals(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocalRoundStats {
    /// Mean loss over the local steps.
    pub loss: f64,
    /// Mean over steps and samples of `|active set| / n`.
    pub active_frac: f64,
    pub steps: usize,
    pub mul_adds: u64,
}

/// One simulated client: a data shard, a local optimizer and whatever part of
/// the model the host sent this round.
#[derive(Debug, Clone)]
pub struct Device {
    id: usize,
    shard: Vec<usize>,
    sampler: BatchSampler,
    adam: Adam,
    hidden: Option<HiddenLayer>,
    target: LocalTarget,
    num_neurons: usize,
    lsh: Option<LshOutcome>,
    theta: NeuronSet,
    pending: Option<(Vec<usize>, Vec<Vec<f64>>)>,
    lsh_events: u32,
    rng: Rng,
    memory: MemoryMeter,
    secrets: Option<DeviceSecrets>,
}

impl Device {
    pub fn new(id: usize, shard: Vec<usize>, cfg: &FedConfig, input_dim: usize, num_neurons: usize) -> Self {
        Device {
            id,
            sampler: BatchSampler::for_device(shard.clone(), cfg.seed, id),
            shard,
            adam: Adam::new(cfg.adam, input_dim, cfg.hidden_dim),
            hidden: None,
            target: LocalTarget::Empty,
            num_neurons,
            lsh: None,
            theta: NeuronSet::new(),
            pending: None,
            lsh_events: 0,
            rng: rng::stream(cfg.seed, tags::SAMPLING, id as u32),
            memory: MemoryMeter::default(),
            secrets: None,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shard(&self) -> &[usize] {
        &self.shard
    }

    /// Activated neurons of the current round.
    pub fn theta(&self) -> &NeuronSet {
        &self.theta
    }

    pub fn lsh(&self) -> Option<&LshOutcome> {
        self.lsh.as_ref()
    }

    pub fn optimizer(&self) -> &Adam {
        &self.adam
    }

    pub fn memory(&self) -> MemoryMeter {
        self.memory
    }

    pub fn record_secrets(&mut self, on: bool) {
        self.secrets = on.then(DeviceSecrets::default);
    }

    pub fn secrets(&self) -> Option<&DeviceSecrets> {
        self.secrets.as_ref()
    }

    fn set_target(&mut self, target: LocalTarget) {
        self.memory.release(self.target.reals());
        self.memory.add(target.reals());
        self.target = target;
    }

    pub fn receive_broadcast(&mut self, b: &Broadcast) {
        self.memory.peak = self.memory.current;
        self.hidden = Some(b.hidden.clone());
        self.lsh = None;
        self.theta = NeuronSet::new();
        self.pending = None;
        let target = match &b.target {
            TargetPayload::Sketch { fold, sketch } => LocalTarget::Sketch(fold.clone(), sketch.clone()),
            TargetPayload::Full(layer) => LocalTarget::Full(layer.clone()),
            TargetPayload::Nothing => LocalTarget::Empty,
        };
        self.set_target(target);
    }

    /// Draws the round's first batch, chooses Θ and returns the column
    /// request, if the method needs one. The sketch is dropped afterwards.
    pub fn select(&mut self, data: &Dataset, cfg: &FedConfig) -> Result<Option<ColumnRequest>> {
        let hidden_layer = self.hidden.as_ref().ok_or(Error::Degenerate("no broadcast received"))?;
        let idx = self.sampler.next_batch(cfg.batch_size);
        let batch: Vec<&SparseExample> = idx.iter().map(|&i| &data.examples[i]).collect();
        let hidden = forward_hidden(hidden_layer, &batch)?.hidden;
        let n = self.num_neurons;
        let cap = cfg.column_cap(n)?;
        let event = self.lsh_events;
        self.lsh_events += 1;

        let request = match cfg.method {
            Method::DenseFedAvg => {
                self.theta = NeuronSet::full(n);
                None
            }
            Method::SampledSoftmax(f) => {
                let seed = derive_seed(derive_seed(cfg.seed, tags::SAMPLING, self.id as u32), tags::SAMPLING, event);
                let drawn = sampled_softmax_select(n, f, seed)?;
                self.theta = self.merge_labels(drawn, &batch, cap, cfg.inject_labels);
                Some(ColumnRequest { neurons: self.theta.clone() })
            }
            method => {
                let family = method.hash_family().ok_or(Error::Degenerate("method has no hash family"))?;
                // private to the device, fresh at every hashing event
                let hash_seed = derive_seed(derive_seed(cfg.seed, tags::HASH, self.id as u32), tags::HASH, event);
                let mut sampling = cfg.sampling.clone();
                sampling.seed = derive_seed(derive_seed(cfg.seed, tags::SAMPLING, self.id as u32), tags::INIT, event);
                let outcome = match &self.target {
                    LocalTarget::Sketch(fold, sketch) => {
                        device_lsh(&hidden, sketch, Some(fold), family, cfg.hash_len, cfg.argmax, &sampling, hash_seed)?
                    }
                    LocalTarget::Full(layer) => {
                        device_lsh(&hidden, &layer.w, None, family, cfg.hash_len, cfg.argmax, &sampling, hash_seed)?
                    }
                    _ => return Err(Error::Degenerate("hashing method without a target view")),
                };
                if let Some(s) = self.secrets.as_mut() {
                    s.hash_seeds.push(hash_seed);
                    for t in &outcome.tables[..outcome.selection.tables_used] {
                        let f = t.function();
                        if let Some(m) = f.projection_matrix() {
                            s.projection_values.extend_from_slice(m.as_slice());
                        }
                        if let Some(sel) = f.selection() {
                            s.projection_values.extend(sel.iter().map(|&i| i as f64));
                        }
                    }
                    for codes in &outcome.batch_codes {
                        s.input_codes.extend_from_slice(codes);
                    }
                }
                self.theta = self.merge_labels(outcome.selection.neurons.clone(), &batch, cap, cfg.inject_labels);
                self.lsh = Some(outcome);
                if method.uses_sketch() {
                    self.set_target(LocalTarget::Empty);
                }
                Some(ColumnRequest { neurons: self.theta.clone() })
            }
        };
        if let Some(s) = self.secrets.as_mut() {
            for ex in &batch {
                s.feature_values.extend(ex.features.iter().map(|&(_, v)| v));
            }
            for h in &hidden {
                s.hidden_values.extend(h.iter().copied().filter(|&v| v != 0.0));
            }
        }
        self.adam.retain_columns(self.theta.as_slice());
        self.pending = Some((idx, hidden));
        Ok(request)
    }

    /// Adds the batch's labels to `drawn` without exceeding `cap`: labels are
    /// kept first and hashed neurons removed uniformly to make room.
    fn merge_labels(&mut self, drawn: NeuronSet, batch: &[&SparseExample], cap: usize, inject: bool) -> NeuronSet {
        if !inject {
            return drawn;
        }
        let mut labels: Vec<usize> = batch.iter().flat_map(|ex| ex.labels.iter().copied()).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() >= cap {
            return remove_uniformly(labels, cap, &mut self.rng);
        }
        let others: Vec<usize> = drawn.iter().filter(|j| labels.binary_search(j).is_err()).collect();
        let room = cap - labels.len();
        let kept = remove_uniformly(others, room, &mut self.rng);
        NeuronSet::from_indices(labels).union(&kept)
    }

    pub fn receive_grant(&mut self, grant: ColumnGrant) -> Result<()> {
        if grant.columns.neurons() != self.theta.as_slice() {
            return Err(Error::param("granted columns differ from the request"));
        }
        self.set_target(LocalTarget::Partial(grant.columns));
        Ok(())
    }

    /// Runs `steps` local steps; the first reuses the batch drawn in [`Device::select`].
    pub fn train(&mut self, data: &Dataset, cfg: &FedConfig, steps: usize) -> Result<LocalRoundStats> {
        let mut hidden_layer = self.hidden.take().ok_or(Error::Degenerate("no broadcast received"))?;
        let result = self.train_inner(&mut hidden_layer, data, cfg, steps);
        self.hidden = Some(hidden_layer);
        result
    }

    fn train_inner(
        &mut self,
        hidden_layer: &mut HiddenLayer,
        data: &Dataset,
        cfg: &FedConfig,
        steps: usize,
    ) -> Result<LocalRoundStats> {
        let n = self.num_neurons as f64;
        let mut stats = LocalRoundStats { steps, ..LocalRoundStats::default() };
        let mut frac_sum = 0.0;
        let mut frac_count = 0usize;
        for s in 0..steps {
            let (idx, hidden) = match self.pending.take() {
                Some(p) => p,
                None => {
                    let idx = self.sampler.next_batch(cfg.batch_size);
                    let batch: Vec<&SparseExample> = idx.iter().map(|&i| &data.examples[i]).collect();
                    let hidden = forward_hidden(hidden_layer, &batch)?.hidden;
                    (idx, hidden)
                }
            };
            let batch: Vec<&SparseExample> = idx.iter().map(|&i| &data.examples[i]).collect();
            let masks: Option<Vec<Vec<usize>>> = match (&self.lsh, cfg.scope) {
                (Some(lsh), ActivationScope::PerSample) => {
                    let codes = if s == 0 { lsh.batch_codes.clone() } else { lsh.hash_inputs(&hidden)? };
                    Some(
                        batch
                            .iter()
                            .enumerate()
                            .map(|(m, ex)| {
                                let mut set =
                                    sample_matches(&codes, &lsh.tables, lsh.selection.tables_used, m, &self.theta);
                                if cfg.inject_labels {
                                    set.extend(ex.labels.iter().copied().filter(|&l| self.theta.contains(l)));
                                    set.sort_unstable();
                                    set.dedup();
                                }
                                set
                            })
                            .collect(),
                    )
                }
                _ => None,
            };
            let active = match (&masks, cfg.method) {
                (Some(m), _) => Active::PerSample(m),
                (None, Method::DenseFedAvg) => Active::All,
                (None, _) => Active::Shared(self.theta.as_slice()),
            };
            match &active {
                Active::All => frac_sum += batch.len() as f64,
                Active::Shared(t) => frac_sum += batch.len() as f64 * t.len() as f64 / n,
                Active::PerSample(m) => frac_sum += m.iter().map(|v| v.len() as f64 / n).sum::<f64>(),
            }
            frac_count += batch.len();
            let step = match &mut self.target {
                LocalTarget::Full(layer) => train_step(hidden_layer, layer, &mut self.adam, &batch, active)?,
                LocalTarget::Partial(cols) => train_step(hidden_layer, cols, &mut self.adam, &batch, active)?,
                LocalTarget::Empty => {
                    let mut cols = ActiveColumns::empty(self.num_neurons, hidden_layer.b.len());
                    train_step(hidden_layer, &mut cols, &mut self.adam, &batch, active)?
                }
                LocalTarget::Sketch(..) => return Err(Error::Degenerate("training before the column grant")),
            };
            stats.loss += step.loss.loss;
            stats.mul_adds += step.ops.mul_adds;
        }
        if steps > 0 {
            stats.loss /= steps as f64;
        }
        if frac_count > 0 {
            stats.active_frac = frac_sum / frac_count as f64;
        }
        Ok(stats)
    }

    /// Trained `W_A` and the device's columns of the target layer. Frees the
    /// device's copy of the target layer.
    pub fn make_update(&mut self) -> Result<DeviceUpdate> {
        let hidden = self.hidden.take().ok_or(Error::Degenerate("no broadcast received"))?;
        let h = hidden.b.len();
        let target = core::mem::replace(&mut self.target, LocalTarget::Empty);
        self.memory.release(target.reals());
        let columns = match target {
            LocalTarget::Partial(c) => c,
            LocalTarget::Full(layer) => ActiveColumns::gather(&layer, self.theta.as_slice())?,
            LocalTarget::Empty | LocalTarget::Sketch(..) => ActiveColumns::empty(self.num_neurons, h),
        };
        Ok(DeviceUpdate { hidden, columns })
    }
}

/// Splits `0..len` into `parts` shards of sizes differing by at most one,
/// each sorted, by shuffling once under `seed`.
pub fn partition_iid(len: usize, parts: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    use rand::seq::SliceRandom;
    if parts == 0 {
        return Err(Error::param("at least one shard is required"));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng::stream(seed, tags::PARTITION, 0));
    let base = len / parts;
    let extra = len % parts;
    let mut shards = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let size = base + usize::from(p < extra);
        let mut shard = order[start..start + size].to_vec();
        shard.sort_unstable();
        shards.push(shard);
        start += size;
    }
    Ok(shards)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_sizes_and_coverage() {
        let shards = partition_iid(10, 4, 7).unwrap();
        let sizes: Vec<usize> = shards.iter().map(Vec::len).collect();
        assert_eq!(sizes, [3, 3, 2, 2]);
        let mut all: Vec<usize> = shards.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(shards.iter().all(|s| s.windows(2).all(|w| w[0] < w[1])));
        assert_eq!(partition_iid(3, 5, 0).unwrap().iter().filter(|s| s.is_empty()).count(), 2);
        assert!(partition_iid(3, 0, 0).is_err());
        assert_eq!(partition_iid(1, 1, 0).unwrap(), [[0]]);
    }

    #[test]
    fn memory_meter_tracks_peak() {
        let mut m = MemoryMeter::default();
        m.add(10);
        m.add(5);
        m.release(10);
        assert_eq!((m.current, m.peak), (5, 15));
    }
}
