//! The `(d, c)`-folding operator `B`.
//!
//! `IdentityTiling` is `B = [I_c | I_c | ... | I_c]` (`d/c` copies), so the
//! folded vector is the sum of the contiguous length-`c` blocks of `x`.
//! `PermuteTruncate` is `B = D₁·P`: permute, then keep the first `c` entries.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{check_len, Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FoldKind {
    IdentityTiling,
    /// `perm[i]` is the input coordinate that lands in output slot `i`.
    PermuteTruncate(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldingOperator {
    input_dim: usize,
    sketch_dim: usize,
    kind: FoldKind,
}

impl FoldingOperator {
    /// Block-sum folding. Requires `0 < c ≤ d` and `c | d`; zero-pad `d` up to
    /// a multiple of `c` if needed.
    pub fn tiling(input_dim: usize, sketch_dim: usize) -> Result<Self> {
        check_dims(input_dim, sketch_dim)?;
        if !input_dim.is_multiple_of(sketch_dim) {
            return Err(Error::param(alloc::format!("sketch dim {sketch_dim} does not divide input dim {input_dim}")));
        }
        Ok(FoldingOperator { input_dim, sketch_dim, kind: FoldKind::IdentityTiling })
    }

    /// Permute-truncate folding from an explicit permutation of `0..d`.
    pub fn permute_truncate(perm: Vec<usize>, sketch_dim: usize) -> Result<Self> {
        let input_dim = perm.len();
        check_dims(input_dim, sketch_dim)?;
        let mut seen = vec![false; input_dim];
        for &p in &perm {
            if p >= input_dim || seen[p] {
                return Err(Error::param("permute-truncate requires a bijection on 0..d"));
            }
            seen[p] = true;
        }
        Ok(FoldingOperator { input_dim, sketch_dim, kind: FoldKind::PermuteTruncate(perm) })
    }

    pub fn random_permute_truncate(input_dim: usize, sketch_dim: usize, rng: &mut Rng) -> Result<Self> {
        check_dims(input_dim, sketch_dim)?;
        let mut perm: Vec<usize> = (0..input_dim).collect();
        perm.shuffle(rng);
        Self::permute_truncate(perm, sketch_dim)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn sketch_dim(&self) -> usize {
        self.sketch_dim
    }

    pub fn kind(&self) -> &FoldKind {
        &self.kind
    }

    /// Number of blocks `d / c` for tiling; 1 for permute-truncate.
    pub fn fold_factor(&self) -> usize {
        match self.kind {
            FoldKind::IdentityTiling => self.input_dim / self.sketch_dim,
            FoldKind::PermuteTruncate(_) => 1,
        }
    }

    pub fn fold(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.sketch_dim];
        self.fold_into(x, &mut out)?;
        Ok(out)
    }

    pub fn fold_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.input_dim, x.len())?;
        check_len(self.sketch_dim, out.len())?;
        match &self.kind {
            FoldKind::IdentityTiling => {
                out.copy_from_slice(&x[..self.sketch_dim]);
                for block in x[self.sketch_dim..].chunks_exact(self.sketch_dim) {
                    for (o, v) in out.iter_mut().zip(block) {
                        *o += v;
                    }
                }
            }
            FoldKind::PermuteTruncate(perm) => {
                for (o, &p) in out.iter_mut().zip(perm) {
                    *o = x[p];
                }
            }
        }
        Ok(())
    }

    /// Folds a sparse vector given as `(index, value)` pairs.
    pub fn fold_sparse(&self, entries: &[(usize, f64)]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.sketch_dim];
        match &self.kind {
            FoldKind::IdentityTiling => {
                for &(i, v) in entries {
                    if i >= self.input_dim {
                        return Err(Error::IndexOutOfRange { index: i, bound: self.input_dim });
                    }
                    out[i % self.sketch_dim] += v;
                }
            }
            FoldKind::PermuteTruncate(perm) => {
                let mut slot = vec![usize::MAX; self.input_dim];
                for (s, &p) in perm.iter().take(self.sketch_dim).enumerate() {
                    slot[p] = s;
                }
                for &(i, v) in entries {
                    if i >= self.input_dim {
                        return Err(Error::IndexOutOfRange { index: i, bound: self.input_dim });
                    }
                    if slot[i] != usize::MAX {
                        out[slot[i]] += v;
                    }
                }
            }
        }
        Ok(out)
    }

    /// `Bᵀ v`: for tiling this is the periodic vector repeating `v` `d/c` times.
    pub fn adjoint(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.sketch_dim, v.len())?;
        let mut out = vec![0.0; self.input_dim];
        match &self.kind {
            FoldKind::IdentityTiling => {
                for block in out.chunks_exact_mut(self.sketch_dim) {
                    block.copy_from_slice(v);
                }
            }
            FoldKind::PermuteTruncate(perm) => {
                for (&p, &x) in perm.iter().zip(v) {
                    out[p] = x;
                }
            }
        }
        Ok(out)
    }

    /// Folds every row of `m` (each row one length-`d` vector) into a `rows × c` matrix.
    pub fn fold_rows(&self, m: &Matrix) -> Result<Matrix> {
        check_len(self.input_dim, m.cols())?;
        let mut out = Matrix::zeros(m.rows(), self.sketch_dim);
        for r in 0..m.rows() {
            self.fold_into(m.row(r), out.row_mut(r))?;
        }
        Ok(out)
    }
}

fn check_dims(d: usize, c: usize) -> Result<()> {
    if c == 0 || d == 0 {
        return Err(Error::param("folding dimensions must be positive"));
    }
    if c > d {
        return Err(Error::param(alloc::format!("sketch dim {c} exceeds input dim {d}")));
    }
    Ok(())
}
