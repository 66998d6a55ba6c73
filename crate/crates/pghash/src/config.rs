//! Run configuration for `train` and `fed`: defaults, then a TOML file,
//! then command-line flags, then `--set key=value` overrides.

use std::path::{Path, PathBuf};

use pghash_core::data::SynthConfig;
use pghash_core::fed::{ActivationScope, FedConfig, Method};
use pghash_core::net::AdamConfig;
use pghash_core::{ArgmaxRule, SamplingConfig, Strategy};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// pghash, pghash-d, slide-simhash, slide-dwta, sampled-softmax or dense.
    pub method: String,
    pub devices: usize,
    /// Local steps per device over the run.
    pub steps: usize,
    pub batch: usize,
    pub k: usize,
    pub c: usize,
    pub tau: usize,
    pub cr: f64,
    pub steps_per_lsh: usize,
    pub lr: f64,
    pub seed: u64,
    pub hidden: usize,
    /// Fraction of neurons drawn by sampled-softmax.
    pub sampled_fraction: f64,
    pub inject_labels: bool,
    /// per-sample or batch.
    pub scope: String,
    /// abs-max or max; winner-take-all families only.
    pub argmax: String,
    pub eval_every: usize,
    pub eval_size: usize,
    /// Training file in the sparse text format; synthetic data when absent.
    pub dataset: Option<PathBuf>,
    /// Test file; a seeded 90/10 split of `dataset` when absent.
    pub test_dataset: Option<PathBuf>,
    pub synth_points: usize,
    pub synth_features: usize,
    pub synth_labels: usize,
    pub synth_feats_per_point: usize,
    pub synth_labels_per_point: usize,
    pub synth_signal: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = SynthConfig::default();
        RunConfig {
            method: "pghash".into(),
            devices: 1,
            steps: 100,
            batch: 128,
            k: 8,
            c: 8,
            tau: 50,
            cr: 1.0,
            steps_per_lsh: 1,
            lr: 1e-4,
            seed: 0,
            hidden: 128,
            sampled_fraction: 0.1,
            inject_labels: true,
            scope: "per-sample".into(),
            argmax: "abs-max".into(),
            eval_every: 10,
            eval_size: 1000,
            dataset: None,
            test_dataset: None,
            synth_points: s.num_points,
            synth_features: s.num_features,
            synth_labels: s.num_labels,
            synth_feats_per_point: s.feats_per_point,
            synth_labels_per_point: s.labels_per_point,
            synth_signal: s.signal_strength,
        }
    }
}

fn merge(base: &mut toml::Table, over: toml::Table, origin: &str) -> Result<()> {
    for (k, v) in over {
        if !base.contains_key(&k) && !matches!(k.as_str(), "dataset" | "test_dataset") {
            return Err(Error::usage(format!("unknown setting {k:?} in {origin}")));
        }
        base.insert(k, v);
    }
    Ok(())
}

/// Parses `key=value`; the value is read as a TOML literal, falling back to a string.
pub fn parse_override(s: &str) -> Result<(String, toml::Value)> {
    let (k, v) = s.split_once('=').ok_or_else(|| Error::usage(format!("override {s:?} is not key=value")))?;
    let k = k.trim().replace('-', "_");
    let v = v.trim();
    let value = format!("x = {v}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("x"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()));
    Ok((k, value))
}

impl RunConfig {
    /// Layers `file`, then `flags`, then `overrides` over `base`.
    pub fn resolve(
        base: RunConfig,
        file: Option<&Path>,
        flags: toml::Table,
        overrides: &[String],
    ) -> Result<RunConfig> {
        let mut table = toml::Table::try_from(&base).map_err(|e| Error::Format(e.to_string()))?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let t: toml::Table = text.parse().map_err(|e| Error::usage(format!("{}: {e}", path.display())))?;
            merge(&mut table, t, &path.display().to_string())?;
        }
        merge(&mut table, flags, "flags")?;
        let mut set = toml::Table::new();
        for o in overrides {
            let (k, v) = parse_override(o)?;
            set.insert(k, v);
        }
        merge(&mut table, set, "--set")?;
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::usage(e.message().to_string()))?;
        cfg.fed_config()?;
        Ok(cfg)
    }

    pub fn method(&self) -> Result<Method> {
        Method::parse(&self.method, self.sampled_fraction).map_err(|e| Error::usage(e.to_string()))
    }

    pub fn fed_config(&self) -> Result<FedConfig> {
        let scope = match self.scope.as_str() {
            "per-sample" => ActivationScope::PerSample,
            "batch" => ActivationScope::Batch,
            s => return Err(Error::usage(format!("unknown scope {s:?} (per-sample or batch)"))),
        };
        let argmax = match self.argmax.as_str() {
            "abs-max" => ArgmaxRule::AbsMax,
            "max" => ArgmaxRule::Max,
            s => return Err(Error::usage(format!("unknown argmax rule {s:?} (abs-max or max)"))),
        };
        let cfg = FedConfig {
            num_devices: self.devices,
            total_steps: self.steps,
            steps_per_lsh: self.steps_per_lsh,
            method: self.method()?,
            hash_len: self.k,
            sketch_dim: self.c,
            sampling: SamplingConfig {
                compression_ratio: self.cr,
                num_tables: self.tau,
                strategy: Strategy::Vanilla,
                seed: self.seed,
            },
            argmax,
            adam: AdamConfig { lr: self.lr, ..AdamConfig::default() },
            batch_size: self.batch,
            hidden_dim: self.hidden,
            inject_labels: self.inject_labels,
            scope,
            eval_every: self.eval_every,
            eval_size: self.eval_size,
            seed: self.seed,
        };
        cfg.validate().map_err(|e| Error::usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            num_points: self.synth_points,
            num_features: self.synth_features,
            num_labels: self.synth_labels,
            feats_per_point: self.synth_feats_per_point,
            labels_per_point: self.synth_labels_per_point,
            signal_strength: self.synth_signal,
            seed: self.seed,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layering_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "method = \"pghash-d\"\nk = 4\nc = 8\nsteps_per_lsh = 50\n").unwrap();
        let mut flags = toml::Table::new();
        flags.insert("k".into(), toml::Value::Integer(6));
        let cfg = RunConfig::resolve(RunConfig::default(), Some(&path), flags, &["lr=0.001".into(), "seed=3".into()])
            .unwrap();
        assert_eq!((cfg.method.as_str(), cfg.k, cfg.steps_per_lsh, cfg.lr, cfg.seed), ("pghash-d", 6, 50, 1e-3, 3));
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(RunConfig::resolve(RunConfig::default(), None, toml::Table::new(), &["tables=3".into()]).is_err());
        assert!(RunConfig::resolve(RunConfig::default(), None, toml::Table::new(), &["devices=0".into()]).is_err());
        assert!(RunConfig::resolve(RunConfig::default(), None, toml::Table::new(), &["method=minhash".into()]).is_err());
        assert!(RunConfig::resolve(RunConfig::default(), None, toml::Table::new(), &["k".into()]).is_err());
    }

    #[test]
    fn override_values_are_typed() {
        assert_eq!(parse_override("cr=0.1").unwrap().1, toml::Value::Float(0.1));
        assert_eq!(parse_override("method=dense").unwrap().1, toml::Value::String("dense".into()));
        assert_eq!(parse_override("steps-per-lsh=5").unwrap().0, "steps_per_lsh");
    }
}
