use core::fmt;

use crate::error::{Error, Result};
use crate::hash::{ArgmaxRule, HashFamily};
use crate::net::{AdamConfig, DEFAULT_HIDDEN};
use crate::sampling::SamplingConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Folded sketch `B·W2` sent to devices, SimHash-style codes on the sketch.
    PgHash,
    /// Permute-truncate sketch, winner-take-all codes.
    PgHashD,
    /// Full `W2` sent to devices, SimHash on full columns.
    FedSlideSimHash,
    /// Full `W2` sent to devices, DWTA on full columns.
    FedSlideDwta,
    /// Uniformly random fraction of the output neurons.
    SampledSoftmax(f64),
    /// Classical FedAvg over the whole model.
    DenseFedAvg,
}

impl Method {
    pub fn hash_family(self) -> Option<HashFamily> {
        match self {
            Method::PgHash => Some(HashFamily::PgHash),
            Method::PgHashD => Some(HashFamily::PgHashD),
            Method::FedSlideSimHash => Some(HashFamily::SimHash),
            Method::FedSlideDwta => Some(HashFamily::Dwta),
            Method::SampledSoftmax(_) | Method::DenseFedAvg => None,
        }
    }

    /// Devices receive a `c × n` sketch instead of the target layer.
    pub fn uses_sketch(self) -> bool {
        matches!(self, Method::PgHash | Method::PgHashD)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::PgHash => "pghash",
            Method::PgHashD => "pghash-d",
            Method::FedSlideSimHash => "slide-simhash",
            Method::FedSlideDwta => "slide-dwta",
            Method::SampledSoftmax(_) => "sampled-softmax",
            Method::DenseFedAvg => "dense",
        }
    }

    /// Parses a method name; `sampled-softmax` takes `fraction`.
    pub fn parse(name: &str, fraction: f64) -> Result<Self> {
        Ok(match name {
            "pghash" => Method::PgHash,
            "pghash-d" => Method::PgHashD,
            "slide-simhash" | "slide" => Method::FedSlideSimHash,
            "slide-dwta" => Method::FedSlideDwta,
            "sampled-softmax" => Method::SampledSoftmax(fraction),
            "dense" => Method::DenseFedAvg,
            other => return Err(Error::param(alloc::format!("unknown method {other:?}"))),
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::SampledSoftmax(p) => write!(f, "sampled-softmax({p})"),
            m => f.write_str(m.name()),
        }
    }
}

/// Which of the batch-level activated neurons a sample trains against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActivationScope {
    /// Members of Θ whose code matched this sample, plus its own labels.
    #[default]
    PerSample,
    /// All of Θ.
    Batch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedConfig {
    pub num_devices: usize,
    /// Local steps per device over the whole run.
    pub total_steps: usize,
    /// Local steps between hashing events; devices synchronise after each.
    pub steps_per_lsh: usize,
    pub method: Method,
    pub hash_len: usize,
    pub sketch_dim: usize,
    /// Compression ratio, table count and strategy. The seed is replaced by
    /// per-device streams.
    pub sampling: SamplingConfig,
    pub argmax: ArgmaxRule,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub hidden_dim: usize,
    /// Union each training sample's true labels into the active set.
    pub inject_labels: bool,
    pub scope: ActivationScope,
    /// Evaluate every `eval_every` rounds (0 disables).
    pub eval_every: usize,
    /// Number of test examples in the fixed evaluation subset.
    pub eval_size: usize,
    pub seed: u64,
}

impl Default for FedConfig {
    fn default() -> Self {
        Self::delicious()
    }
}

impl FedConfig {
    /// PGHash settings tuned for Delicious-200K.
    pub fn delicious() -> Self {
        FedConfig {
            num_devices: 1,
            total_steps: 100,
            steps_per_lsh: 1,
            method: Method::PgHash,
            hash_len: 8,
            sketch_dim: 8,
            sampling: SamplingConfig { compression_ratio: 1.0, num_tables: 50, ..SamplingConfig::default() },
            argmax: ArgmaxRule::AbsMax,
            adam: AdamConfig::default(),
            batch_size: 128,
            hidden_dim: DEFAULT_HIDDEN,
            inject_labels: true,
            scope: ActivationScope::PerSample,
            eval_every: 100,
            eval_size: 1000,
            seed: 0,
        }
    }

    /// PGHash settings tuned for Amazon-670K.
    pub fn amazon() -> Self {
        FedConfig { method: Method::PgHashD, batch_size: 256, steps_per_lsh: 50, ..Self::delicious() }
    }

    pub fn rounds(&self) -> usize {
        self.total_steps.div_ceil(self.steps_per_lsh.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_devices == 0 {
            return Err(Error::param("at least one device is required"));
        }
        if self.steps_per_lsh == 0 || self.batch_size == 0 || self.hidden_dim == 0 {
            return Err(Error::param("steps_per_lsh, batch size and hidden dim must be positive"));
        }
        if self.adam.lr.is_nan() || self.adam.lr <= 0.0 {
            return Err(Error::param("learning rate must be positive"));
        }
        if let Method::SampledSoftmax(f) = self.method {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::param("sampled-softmax fraction must lie in (0, 1]"));
            }
        }
        if self.method.hash_family().is_some() {
            self.sampling.validate()?;
            if self.hash_len == 0 {
                return Err(Error::param("hash length must be positive"));
            }
        }
        if self.method.uses_sketch() {
            if self.sketch_dim == 0 || self.sketch_dim > self.hidden_dim {
                return Err(Error::param(alloc::format!(
                    "sketch dim {} must lie in 1..={}",
                    self.sketch_dim,
                    self.hidden_dim
                )));
            }
            if self.method == Method::PgHash && !self.hidden_dim.is_multiple_of(self.sketch_dim) {
                return Err(Error::param("sketch dim must divide the hidden dim for PGHash"));
            }
            if self.method == Method::PgHashD && self.hash_len > self.sketch_dim {
                return Err(Error::param("PGHash-D needs k ≤ c"));
            }
        }
        Ok(())
    }

    /// Cap on a device's active output columns.
    pub fn column_cap(&self, n: usize) -> Result<usize> {
        match self.method {
            Method::DenseFedAvg => Ok(n),
            Method::SampledSoftmax(f) => crate::sampling::cap_for(f, n),
            _ => self.sampling.cap(n),
        }
    }

    /// Budget on a device's target-layer reals for the sketch methods:
    /// `c·n + ⌊CR·n⌋·h`. Devices drop the sketch before the columns (with
    /// their biases) arrive, so the peak is `max(c·n, |Θ|·(h+1))`, which fits.
    pub fn device_memory_bound(&self, n: usize) -> Option<usize> {
        self.method.uses_sketch().then(|| {
            let cap = self.sampling.cap(n).unwrap_or(n);
            self.sketch_dim * n + cap * self.hidden_dim
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        FedConfig::delicious().validate().unwrap();
        FedConfig::amazon().validate().unwrap();
        assert_eq!(FedConfig::amazon().batch_size, 256);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = FedConfig::delicious();
        assert!(FedConfig { num_devices: 0, ..base.clone() }.validate().is_err());
        assert!(FedConfig { sketch_dim: 129, ..base.clone() }.validate().is_err());
        assert!(FedConfig { sketch_dim: 7, ..base.clone() }.validate().is_err());
        assert!(FedConfig { method: Method::PgHashD, hash_len: 9, ..base.clone() }.validate().is_err());
        assert!(FedConfig { method: Method::SampledSoftmax(0.0), ..base }.validate().is_err());
    }

    #[test]
    fn rounds_cover_total_steps() {
        let c = FedConfig { total_steps: 120, steps_per_lsh: 50, ..FedConfig::delicious() };
        assert_eq!(c.rounds(), 3);
        assert_eq!(Method::parse("pghash-d", 0.1).unwrap(), Method::PgHashD);
        assert!(Method::parse("minhash", 0.1).is_err());
    }
}
