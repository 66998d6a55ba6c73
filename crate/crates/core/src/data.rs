//! Sparse multi-label examples and the seeded synthetic generator.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{self, tags};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseExample {
    /// `(feature, value)` with strictly increasing feature indices.
    pub features: Vec<(usize, f64)>,
    /// Sorted, distinct label indices. May be empty.
    pub labels: Vec<usize>,
}

impl SparseExample {
    pub fn new(features: Vec<(usize, f64)>, labels: Vec<usize>) -> Result<Self> {
        if features.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::param("feature indices must be strictly increasing"));
        }
        if features.iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite("feature value"));
        }
        if labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("labels must be sorted and distinct"));
        }
        Ok(SparseExample { features, labels })
    }

    pub fn has_label(&self, l: usize) -> bool {
        self.labels.binary_search(&l).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub num_points: usize,
    pub num_features: usize,
    pub num_labels: usize,
    pub avg_labels_per_point: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub num_features: usize,
    pub num_labels: usize,
    pub examples: Vec<SparseExample>,
}

impl Dataset {
    pub fn new(num_features: usize, num_labels: usize, examples: Vec<SparseExample>) -> Result<Self> {
        let ds = Dataset { num_features, num_labels, examples };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        for ex in &self.examples {
            if let Some(&(i, _)) = ex.features.last() {
                if i >= self.num_features {
                    return Err(Error::IndexOutOfRange { index: i, bound: self.num_features });
                }
            }
            if let Some(&l) = ex.labels.last() {
                if l >= self.num_labels {
                    return Err(Error::IndexOutOfRange { index: l, bound: self.num_labels });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn meta(&self) -> DatasetMeta {
        let total: usize = self.examples.iter().map(|e| e.labels.len()).sum();
        DatasetMeta {
            num_points: self.examples.len(),
            num_features: self.num_features,
            num_labels: self.num_labels,
            avg_labels_per_point: if self.examples.is_empty() {
                0.0
            } else {
                total as f64 / self.examples.len() as f64
            },
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            num_features: self.num_features,
            num_labels: self.num_labels,
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
        }
    }

    /// Seeded shuffle, first `⌊train_fraction·len⌉` examples to train.
    pub fn split(&self, train_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng::stream(seed, tags::SPLIT, 0));
        let cut = libm::round(train_fraction.clamp(0.0, 1.0) * self.len() as f64) as usize;
        (self.subset(&order[..cut]), self.subset(&order[cut..]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_points: usize,
    pub num_features: usize,
    pub num_labels: usize,
    pub feats_per_point: usize,
    pub labels_per_point: usize,
    /// Noise standard deviation is `1 / signal_strength`; `f64::INFINITY` means no noise.
    pub signal_strength: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_points: 5500,
            num_features: 1000,
            num_labels: 2000,
            feats_per_point: 20,
            labels_per_point: 2,
            signal_strength: 4.0,
            seed: 0,
        }
    }
}

/// Generates a learnable extreme multi-label dataset.
///
/// Every label owns a random signature of `⌈feats_per_point / labels_per_point⌉`
/// features with weights in `[0.5, 1.5)`. An example draws its labels uniformly,
/// sums their signatures, adds Gaussian noise to those entries and to as many
/// random distractor features, and keeps the `feats_per_point` largest positive
/// entries.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    if cfg.num_points == 0
        || cfg.num_features == 0
        || cfg.num_labels == 0
        || cfg.feats_per_point == 0
        || cfg.labels_per_point == 0
    {
        return Err(Error::param("synthetic dataset sizes must be positive"));
    }
    if cfg.labels_per_point > cfg.num_labels {
        return Err(Error::param("labels_per_point exceeds num_labels"));
    }
    if cfg.feats_per_point > cfg.num_features {
        return Err(Error::param("feats_per_point exceeds num_features"));
    }
    if cfg.signal_strength.is_nan() || cfg.signal_strength <= 0.0 {
        return Err(Error::param("signal strength must be positive"));
    }
    let noise = if cfg.signal_strength.is_infinite() { 0.0 } else { 1.0 / cfg.signal_strength };
    let sig_len = cfg.feats_per_point.div_ceil(cfg.labels_per_point);

    let mut r = rng::stream(cfg.seed, tags::SYNTH, 0);
    let signatures: Vec<Vec<(usize, f64)>> = (0..cfg.num_labels)
        .map(|_| {
            let mut s: Vec<(usize, f64)> = index::sample(&mut r, cfg.num_features, sig_len)
                .into_iter()
                .map(|f| (f, r.random_range(0.5..1.5)))
                .collect();
            s.sort_unstable_by_key(|e| e.0);
            s
        })
        .collect();

    let mut examples = Vec::with_capacity(cfg.num_points);
    for _ in 0..cfg.num_points {
        let mut labels = index::sample(&mut r, cfg.num_labels, cfg.labels_per_point).into_vec();
        labels.sort_unstable();
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for &l in &labels {
            for &(f, w) in &signatures[l] {
                *acc.entry(f).or_insert(0.0) += w;
            }
        }
        if noise > 0.0 {
            for v in acc.values_mut() {
                let z: f64 = StandardNormal.sample(&mut r);
                *v += noise * z;
            }
            for _ in 0..cfg.feats_per_point {
                let f = r.random_range(0..cfg.num_features);
                let z: f64 = StandardNormal.sample(&mut r);
                *acc.entry(f).or_insert(0.0) += noise * libm::fabs(z);
            }
        }
        let mut kept: Vec<(usize, f64)> = acc.into_iter().filter(|&(_, v)| v > 0.0).collect();
        kept.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        kept.truncate(cfg.feats_per_point);
        kept.sort_unstable_by_key(|e| e.0);
        examples.push(SparseExample { features: kept, labels });
    }
    Dataset::new(cfg.num_features, cfg.num_labels, examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn small() -> SynthConfig {
        SynthConfig {
            num_points: 200,
            num_features: 100,
            num_labels: 50,
            feats_per_point: 10,
            labels_per_point: 3,
            signal_strength: 2.0,
            seed: 4,
        }
    }

    #[test]
    fn synth_is_deterministic_and_valid() {
        let a = synth_dataset(&small()).unwrap();
        assert_eq!(a, synth_dataset(&small()).unwrap());
        assert_ne!(a, synth_dataset(&SynthConfig { seed: 5, ..small() }).unwrap());
        let meta = a.meta();
        assert_eq!(meta.num_points, 200);
        assert_eq!(meta.avg_labels_per_point, 3.0);
        for ex in &a.examples {
            assert!(ex.features.len() <= 10);
            SparseExample::new(ex.features.clone(), ex.labels.clone()).unwrap();
        }
    }

    #[test]
    fn noiseless_examples_are_signature_unions() {
        let cfg = SynthConfig { signal_strength: f64::INFINITY, labels_per_point: 1, ..small() };
        let ds = synth_dataset(&cfg).unwrap();
        // same label => same features
        let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for ex in &ds.examples {
            let f: Vec<usize> = ex.features.iter().map(|e| e.0).collect();
            if let Some(prev) = by_label.insert(ex.labels[0], f.clone()) {
                assert_eq!(prev, f);
            }
        }
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!(synth_dataset(&SynthConfig { labels_per_point: 51, ..small() }).is_err());
        assert!(synth_dataset(&SynthConfig { num_points: 0, ..small() }).is_err());
        assert!(SparseExample::new(vec![(3, 1.0), (3, 2.0)], vec![]).is_err());
        assert!(SparseExample::new(vec![(3, f64::NAN)], vec![]).is_err());
        assert!(SparseExample::new(vec![], vec![2, 1]).is_err());
        let bad = SparseExample::new(vec![(7, 1.0)], vec![]).unwrap();
        assert!(Dataset::new(5, 3, vec![bad]).is_err());
    }

    #[test]
    fn split_partitions() {
        let ds = synth_dataset(&small()).unwrap();
        let (tr, te) = ds.split(0.9, 1);
        assert_eq!(tr.len(), 180);
        assert_eq!(te.len(), 20);
    }
}
