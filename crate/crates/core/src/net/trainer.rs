use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::data::{Dataset, SparseExample};
use crate::error::{Error, Result};
use crate::rng::{self, tags, Rng};

use super::{
    eval_subset, loss_and_grad, precision_at_1, Adam, AdamConfig, HiddenLayer, LossOutput, NetWeights, OpCounter,
    OutputColumnsMut,
};

/// Which output neurons each sample of a batch may use.
#[derive(Debug, Clone, Copy)]
pub enum Active<'a> {
    All,
    Shared(&'a [usize]),
    PerSample(&'a [Vec<usize>]),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub loss: LossOutput,
    pub ops: OpCounter,
}

/// One forward/backward pass and Adam update on `batch`.
pub fn train_step<C: OutputColumnsMut + ?Sized>(
    hidden: &mut HiddenLayer,
    out: &mut C,
    adam: &mut Adam,
    batch: &[&SparseExample],
    active: Active<'_>,
) -> Result<StepStats> {
    let owned: Vec<Vec<usize>>;
    let sets: &[Vec<usize>] = match active {
        Active::All => {
            let all: Vec<usize> = (0..out.num_neurons()).collect();
            owned = alloc::vec![all; batch.len()];
            &owned
        }
        Active::Shared(s) => {
            owned = alloc::vec![s.to_vec(); batch.len()];
            &owned
        }
        Active::PerSample(s) => s,
    };
    let mut ops = OpCounter::default();
    let (loss, grads) = loss_and_grad(hidden, &*out, batch, sets, &mut ops)?;
    if loss.counted > 0 {
        adam.step(hidden, out, &grads)?;
    }
    Ok(StepStats { loss, ops })
}

/// Epoch-shuffled minibatches over a fixed pool of example indices.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    rng: Rng,
}

impl BatchSampler {
    pub fn new(pool: Vec<usize>, rng: Rng) -> Self {
        let mut s = BatchSampler { order: pool, pos: 0, rng };
        s.order.shuffle(&mut s.rng);
        s
    }

    /// Sampler used by device `device` under run seed `seed`.
    pub fn for_device(pool: Vec<usize>, seed: u64, device: usize) -> Self {
        Self::new(pool, rng::stream(seed, tags::BATCH, device as u32))
    }

    pub fn pool_len(&self) -> usize {
        self.order.len()
    }

    /// Next `min(size, pool)` indices, reshuffling at epoch boundaries.
    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let size = size.min(self.order.len());
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseRunConfig {
    pub hidden_dim: usize,
    pub adam: AdamConfig,
    pub batch_size: usize,
    /// Local steps between ledger rows.
    pub steps_per_round: usize,
    pub rounds: usize,
    /// Evaluate P@1 after every `eval_every` rounds (0 disables).
    pub eval_every: usize,
    pub eval_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseRunRow {
    pub round: usize,
    pub loss: f64,
    pub p_at_1: Option<f64>,
}

/// Single-machine dense training: every step uses the full output layer.
///
/// Uses the same seed streams as device 0 of the federated simulator, so a
/// one-device dense federated run reproduces it exactly.
pub fn train_dense(train: &Dataset, test: &Dataset, cfg: &DenseRunConfig) -> Result<(NetWeights, Vec<DenseRunRow>)> {
    if cfg.batch_size == 0 || cfg.steps_per_round == 0 {
        return Err(Error::param("batch size and steps per round must be positive"));
    }
    if train.is_empty() {
        return Err(Error::param("empty training set"));
    }
    let mut w = NetWeights::init(train.num_features, cfg.hidden_dim, train.num_labels, cfg.seed)?;
    let mut adam = Adam::new(cfg.adam, train.num_features, cfg.hidden_dim);
    let mut sampler = BatchSampler::for_device((0..train.len()).collect(), cfg.seed, 0);
    let eval_idx = eval_subset(test.len(), cfg.eval_size, cfg.seed);
    let eval: Vec<&SparseExample> = eval_idx.iter().map(|&i| &test.examples[i]).collect();
    let mut rows = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let mut loss = 0.0;
        for _ in 0..cfg.steps_per_round {
            let idx = sampler.next_batch(cfg.batch_size);
            let batch: Vec<&SparseExample> = idx.iter().map(|&i| &train.examples[i]).collect();
            loss += train_step(&mut w.hidden, &mut w.output, &mut adam, &batch, Active::All)?.loss.loss;
        }
        let p_at_1 = if cfg.eval_every > 0 && round % cfg.eval_every == 0 { precision_at_1(&w, &eval)? } else { None };
        rows.push(DenseRunRow { round, loss: loss / cfg.steps_per_round as f64, p_at_1 });
    }
    Ok((w, rows))
}
