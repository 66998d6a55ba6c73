use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{check_len, Result};
use crate::hash::{HashCode, HashFunction};
use crate::matrix::Matrix;

/// Codes of `n` neurons under one hash function, with a code → neurons index.
#[derive(Debug, Clone, PartialEq)]
pub struct HashTable {
    function: HashFunction,
    codes: Vec<HashCode>,
    buckets: BTreeMap<HashCode, Vec<usize>>,
}

impl HashTable {
    /// Hashes every neuron. Row `j` of `neurons` is neuron `j`'s (possibly
    /// folded) weight vector.
    pub fn build(function: HashFunction, neurons: &Matrix) -> Result<Self> {
        check_len(function.input_dim(), neurons.cols())?;
        let codes = (0..neurons.rows()).map(|j| function.code(neurons.row(j))).collect::<Result<Vec<_>>>()?;
        Ok(Self::from_codes(function, codes))
    }

    /// Table over precomputed codes.
    pub fn from_codes(function: HashFunction, codes: Vec<HashCode>) -> Self {
        let mut buckets: BTreeMap<HashCode, Vec<usize>> = BTreeMap::new();
        for (j, &code) in codes.iter().enumerate() {
            buckets.entry(code).or_default().push(j);
        }
        HashTable { function, codes, buckets }
    }

    pub fn function(&self) -> &HashFunction {
        &self.function
    }

    pub fn codes(&self) -> &[HashCode] {
        &self.codes
    }

    /// Number of neurons.
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn num_buckets(&self) -> usize {
        self.buckets.len()
    }

    /// Neurons whose code equals `code`, ascending.
    pub fn lookup(&self, code: HashCode) -> &[usize] {
        self.buckets.get(&code).map_or(&[], Vec::as_slice)
    }

    pub fn hash(&self, v: &[f64]) -> Result<HashCode> {
        self.function.code(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::HashFamily;
    use alloc::vec;

    #[test]
    fn single_neuron_table() {
        let f = HashFunction::new(HashFamily::PgHash, 4, 3, 9).unwrap();
        let w = Matrix::from_rows(&[vec![0.5, -1.0, 2.0]]).unwrap();
        let t = HashTable::build(f, &w).unwrap();
        assert_eq!(t.lookup(t.codes()[0]), &[0]);
    }

    #[test]
    fn identical_columns_share_codes_and_buckets_partition() {
        let f = HashFunction::new(HashFamily::SimHash, 3, 4, 1).unwrap();
        let mut rows = vec![vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 3.0, 4.0]];
        for j in 0..30 {
            rows.push((0..4).map(|i| ((i * 7 + j * 3) as f64).sin()).collect());
        }
        let w = Matrix::from_rows(&rows).unwrap();
        let t = HashTable::build(f.clone(), &w).unwrap();
        assert_eq!(t.codes()[0], t.codes()[1]);
        let mut all: Vec<usize> = t.buckets.values().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..32).collect::<Vec<_>>());
        for (j, &c) in t.codes().iter().enumerate() {
            assert!(t.lookup(c).contains(&j));
        }
        assert_eq!(t, HashTable::build(f, &w).unwrap());
    }

    #[test]
    fn dimension_mismatch() {
        let f = HashFunction::new(HashFamily::PgHash, 4, 3, 9).unwrap();
        assert!(HashTable::build(f, &Matrix::zeros(2, 4)).is_err());
    }
}
