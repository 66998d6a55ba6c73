//! Neuron selection from hash tables.
//!
//! `batch_codes[t][m]` is the code of batch sample `m` under table `t`'s hash
//! function. The activated set Θ is one union over the whole batch, capped at
//! `⌊CR·n⌋` by uniform random removal.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;

use crate::error::{check_len, Error, Result};
use crate::hash::{hamming, HashCode};
use crate::rng::{self, Rng};
use crate::table::HashTable;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Exact code match.
    Vanilla,
    /// Per sample, the `K` neurons with the smallest table-averaged Hamming distance.
    HammingTopK(usize),
    /// Neurons whose table-averaged Hamming distance is at most `β`.
    HammingThreshold(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    pub compression_ratio: f64,
    pub num_tables: usize,
    pub strategy: Strategy,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { compression_ratio: 1.0, num_tables: 50, strategy: Strategy::Vanilla, seed: 0 }
    }
}

impl SamplingConfig {
    /// `⌊CR·n⌋`, rejecting configurations where it is zero.
    pub fn cap(&self, n: usize) -> Result<usize> {
        cap_for(self.compression_ratio, n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.compression_ratio > 0.0 && self.compression_ratio <= 1.0) {
            return Err(Error::param("compression ratio must lie in (0, 1]"));
        }
        if self.num_tables == 0 {
            return Err(Error::param("at least one hash table is required"));
        }
        match self.strategy {
            Strategy::HammingTopK(0) => Err(Error::param("top-K needs K ≥ 1")),
            Strategy::HammingThreshold(b) if b.is_nan() || b < 0.0 => {
                Err(Error::param("Hamming threshold must be non-negative"))
            }
            _ => Ok(()),
        }
    }
}

pub(crate) fn cap_for(fraction: f64, n: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::param("fraction must lie in (0, 1]"));
    }
    let cap = libm::floor(fraction * n as f64) as usize;
    if cap == 0 {
        return Err(Error::param(alloc::format!("⌊{fraction}·{n}⌋ = 0 leaves no neuron to activate")));
    }
    Ok(cap)
}

/// Sorted set of activated neuron indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NeuronSet(Vec<usize>);

impl NeuronSet {
    pub fn new() -> Self {
        NeuronSet(Vec::new())
    }

    /// Sorts and deduplicates.
    pub fn from_indices(mut v: Vec<usize>) -> Self {
        v.sort_unstable();
        v.dedup();
        NeuronSet(v)
    }

    pub fn full(n: usize) -> Self {
        NeuronSet((0..n).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn union(&self, other: &NeuronSet) -> NeuronSet {
        let mut v = Vec::with_capacity(self.len() + other.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        NeuronSet::from_indices(v)
    }
}

/// Result of a hash-based selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub neurons: NeuronSet,
    /// Tables consulted before returning; fewer than τ on an early return.
    pub tables_used: usize,
}

/// Exact-match selection with the per-table cap check and early return.
pub fn vanilla_sample(
    batch_codes: &[Vec<HashCode>],
    tables: &[HashTable],
    cfg: &SamplingConfig,
    n: usize,
) -> Result<Selection> {
    check_inputs(batch_codes, tables, n)?;
    let cap = cfg.cap(n)?;
    let mut rng = rng::rng(cfg.seed);
    let mut marked = vec![false; n];
    let mut members = Vec::new();
    for (t, (table, codes)) in tables.iter().zip(batch_codes).enumerate() {
        for &code in codes {
            if code == HashCode::Sentinel {
                continue;
            }
            for &j in table.lookup(code) {
                if !marked[j] {
                    marked[j] = true;
                    members.push(j);
                }
            }
        }
        if members.len() > cap {
            return Ok(Selection { neurons: remove_uniformly(members, cap, &mut rng), tables_used: t + 1 });
        }
    }
    Ok(Selection { neurons: NeuronSet::from_indices(members), tables_used: tables.len() })
}

/// Hamming-distance selection over all tables (bit codes only).
pub fn hamming_sample(
    batch_codes: &[Vec<HashCode>],
    tables: &[HashTable],
    cfg: &SamplingConfig,
    n: usize,
) -> Result<Selection> {
    check_inputs(batch_codes, tables, n)?;
    let cap = cfg.cap(n)?;
    let samples = batch_codes.first().map_or(0, Vec::len);
    let tau = tables.len() as f64;
    let mut marked = vec![false; n];
    let mut dist = vec![0.0; n];
    for m in 0..samples {
        dist.iter_mut().for_each(|d| *d = 0.0);
        for (table, codes) in tables.iter().zip(batch_codes) {
            let code = codes[m];
            for (j, &c) in table.codes().iter().enumerate() {
                dist[j] += hamming(code, c)? as f64;
            }
        }
        dist.iter_mut().for_each(|d| *d /= tau);
        match cfg.strategy {
            Strategy::HammingThreshold(beta) => {
                for (j, &d) in dist.iter().enumerate() {
                    if d <= beta {
                        marked[j] = true;
                    }
                }
            }
            Strategy::HammingTopK(k) => {
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
                for &j in order.iter().take(k) {
                    marked[j] = true;
                }
            }
            Strategy::Vanilla => {
                return Err(Error::param("hamming_sample needs a Hamming strategy"));
            }
        }
    }
    let members: Vec<usize> = (0..n).filter(|&j| marked[j]).collect();
    let mut rng = rng::rng(cfg.seed);
    let neurons = if members.len() > cap { remove_uniformly(members, cap, &mut rng) } else { NeuronSet(members) };
    Ok(Selection { neurons, tables_used: tables.len() })
}

/// Dispatches on `cfg.strategy`.
pub fn sample(
    batch_codes: &[Vec<HashCode>],
    tables: &[HashTable],
    cfg: &SamplingConfig,
    n: usize,
) -> Result<Selection> {
    match cfg.strategy {
        Strategy::Vanilla => vanilla_sample(batch_codes, tables, cfg, n),
        _ => hamming_sample(batch_codes, tables, cfg, n),
    }
}

/// Uniform random subset of size `⌊fraction·n⌋` (the sampled-softmax baseline).
pub fn sampled_softmax_select(n: usize, fraction: f64, seed: u64) -> Result<NeuronSet> {
    let size = cap_for(fraction, n)?;
    let mut rng = rng::rng(seed);
    Ok(NeuronSet::from_indices(index::sample(&mut rng, n, size).into_vec()))
}

/// Members of `within` whose code matches sample `m` exactly in one of the
/// first `tables_used` tables.
pub fn sample_matches(
    batch_codes: &[Vec<HashCode>],
    tables: &[HashTable],
    tables_used: usize,
    m: usize,
    within: &NeuronSet,
) -> Vec<usize> {
    let mut out = Vec::new();
    for (table, codes) in tables.iter().zip(batch_codes).take(tables_used) {
        let code = codes[m];
        if code == HashCode::Sentinel {
            continue;
        }
        out.extend(table.lookup(code).iter().copied().filter(|&j| within.contains(j)));
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Keeps a uniformly random `keep`-subset of `members`.
pub(crate) fn remove_uniformly(mut members: Vec<usize>, keep: usize, rng: &mut Rng) -> NeuronSet {
    members.sort_unstable();
    if members.len() <= keep {
        return NeuronSet(members);
    }
    let picked = index::sample(rng, members.len(), keep);
    NeuronSet::from_indices(picked.into_iter().map(|i| members[i]).collect())
}

fn check_inputs(batch_codes: &[Vec<HashCode>], tables: &[HashTable], n: usize) -> Result<()> {
    if tables.is_empty() {
        return Err(Error::param("at least one hash table is required"));
    }
    check_len(tables.len(), batch_codes.len())?;
    let samples = batch_codes[0].len();
    for (t, codes) in tables.iter().zip(batch_codes) {
        check_len(n, t.len())?;
        check_len(samples, codes.len())?;
    }
    Ok(())
}
