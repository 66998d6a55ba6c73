use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fold::FoldingOperator;
use crate::hash::{ArgmaxRule, HashCode, HashFamily, HashFunction};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, tags};
use crate::sampling::{self, SamplingConfig, Selection};
use crate::table::HashTable;

/// Tables and batch codes from one hashing event on a device.
#[derive(Debug, Clone, PartialEq)]
pub struct LshOutcome {
    pub selection: Selection,
    pub tables: Vec<HashTable>,
    /// `batch_codes[t][m]`.
    pub batch_codes: Vec<Vec<HashCode>>,
    /// Folding applied to inputs before hashing (`None` for full-width families).
    pub input_fold: Option<FoldingOperator>,
}

impl LshOutcome {
    /// Codes of new inputs under the tables consulted by the selection.
    pub fn hash_inputs(&self, hidden: &[Vec<f64>]) -> Result<Vec<Vec<HashCode>>> {
        hash_batch(&self.tables[..self.selection.tables_used], hidden, self.input_fold.as_ref())
    }
}

/// Builds `τ` tables over `neurons` (one row per output neuron: folded sketch
/// rows for PGHash/PGHash-D, raw columns for SimHash/DWTA), hashes each row of
/// `hidden` (folded by `input_fold` first when given) and selects Θ.
///
/// Table `t` draws its function from `derive_seed(hash_seed, HASH, t)`.
#[allow(clippy::too_many_arguments)]
pub fn device_lsh(
    hidden: &[Vec<f64>],
    neurons: &Matrix,
    input_fold: Option<&FoldingOperator>,
    family: HashFamily,
    hash_len: usize,
    rule: ArgmaxRule,
    sampling_cfg: &SamplingConfig,
    hash_seed: u64,
) -> Result<LshOutcome> {
    let width = neurons.cols();
    if let Some(f) = input_fold {
        if f.sketch_dim() != width {
            return Err(Error::DimensionMismatch { expected: width, got: f.sketch_dim() });
        }
    }
    if let Some(h) = hidden.first() {
        let expected = input_fold.map_or(width, FoldingOperator::input_dim);
        if h.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: h.len() });
        }
        if width > h.len() {
            return Err(Error::param("sketch dim exceeds hidden dim"));
        }
    }
    let tables = (0..sampling_cfg.num_tables)
        .map(|t| {
            let f = HashFunction::new(family, hash_len, width, derive_seed(hash_seed, tags::HASH, t as u32))?
                .with_argmax_rule(rule);
            HashTable::build(f, neurons)
        })
        .collect::<Result<Vec<_>>>()?;
    let batch_codes = hash_batch(&tables, hidden, input_fold)?;
    let selection = sampling::sample(&batch_codes, &tables, sampling_cfg, neurons.rows())?;
    Ok(LshOutcome { selection, tables, batch_codes, input_fold: input_fold.cloned() })
}

fn hash_batch(tables: &[HashTable], hidden: &[Vec<f64>], fold: Option<&FoldingOperator>) -> Result<Vec<Vec<HashCode>>> {
    let inputs: Vec<Vec<f64>> = match fold {
        Some(f) => hidden.iter().map(|h| f.fold(h)).collect::<Result<_>>()?,
        None => hidden.to_vec(),
    };
    tables.iter().map(|t| inputs.iter().map(|x| t.hash(x)).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::Strategy;
    use alloc::vec;
    use rand::Rng as _;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut r = crate::rng::rng(seed);
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn no_match_gives_empty_set() {
        // all neurons hash to bit 0 (negative), the input to bit 1
        let neurons = Matrix::from_rows(&[vec![-1.0], vec![-2.0], vec![-0.5]]).unwrap();
        let cfg = SamplingConfig { compression_ratio: 1.0, num_tables: 1, strategy: Strategy::Vanilla, seed: 0 };
        for seed in 0..20 {
            let out = device_lsh(&[vec![1.0]], &neurons, None, HashFamily::SimHash, 1, ArgmaxRule::AbsMax, &cfg, seed)
                .unwrap();
            assert!(out.selection.neurons.is_empty());
        }
    }

    #[test]
    fn different_seeds_personalise() {
        let fold = FoldingOperator::tiling(16, 4).unwrap();
        let w = random(200, 16, 1);
        let sketch = fold.fold_rows(&w).unwrap();
        let hidden: Vec<Vec<f64>> = (0..4).map(|i| random(1, 16, 10 + i).row(0).to_vec()).collect();
        let cfg = SamplingConfig { compression_ratio: 1.0, num_tables: 2, strategy: Strategy::Vanilla, seed: 0 };
        let a = device_lsh(&hidden, &sketch, Some(&fold), HashFamily::PgHash, 4, ArgmaxRule::AbsMax, &cfg, 1).unwrap();
        let b = device_lsh(&hidden, &sketch, Some(&fold), HashFamily::PgHash, 4, ArgmaxRule::AbsMax, &cfg, 2).unwrap();
        assert_ne!(a.selection.neurons, b.selection.neurons);
        let again =
            device_lsh(&hidden, &sketch, Some(&fold), HashFamily::PgHash, 4, ArgmaxRule::AbsMax, &cfg, 1).unwrap();
        assert_eq!(a, again);
        assert_eq!(a.hash_inputs(&hidden).unwrap(), a.batch_codes[..a.selection.tables_used].to_vec());
    }

    #[test]
    fn dimension_checks() {
        let fold = FoldingOperator::tiling(16, 4).unwrap();
        let cfg = SamplingConfig { num_tables: 1, ..SamplingConfig::default() };
        let sketch = Matrix::zeros(5, 8);
        assert!(device_lsh(&[vec![0.0; 16]], &sketch, Some(&fold), HashFamily::PgHash, 4, ArgmaxRule::AbsMax, &cfg, 0)
            .is_err());
        let wide = Matrix::zeros(5, 8);
        assert!(device_lsh(&[vec![0.0; 4]], &wide, None, HashFamily::SimHash, 4, ArgmaxRule::AbsMax, &cfg, 0).is_err());
    }
}
