//! Hash families and hash codes.
//!
//! Sign-projection families (SimHash, PGHash) produce `k`-bit codes whose bit
//! `i` is 1 iff the `i`-th projection is strictly positive. Winner-take-all
//! families (DWTA, PGHash-D) produce the position, among `k` selected
//! coordinates, of the winning entry.

use alloc::vec::Vec;

use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};
use crate::fold::FoldingOperator;
use crate::matrix::{dot, Matrix};
use crate::rng;

pub const MAX_CODE_BITS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HashFamily {
    /// `k × d` Gaussian projection of the raw vector.
    SimHash,
    /// `k × c` Gaussian projection of the folded vector.
    PgHash,
    /// Winner among `k` of the `d` raw coordinates.
    Dwta,
    /// Winner among `k` of the `c` sketch coordinates.
    PgHashD,
}

impl HashFamily {
    pub fn is_sign(self) -> bool {
        matches!(self, HashFamily::SimHash | HashFamily::PgHash)
    }

    pub fn name(self) -> &'static str {
        match self {
            HashFamily::SimHash => "simhash",
            HashFamily::PgHash => "pghash",
            HashFamily::Dwta => "dwta",
            HashFamily::PgHashD => "pghash-d",
        }
    }
}

/// How the winner-take-all families pick their winner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ArgmaxRule {
    /// Largest signed value.
    Max,
    /// Largest absolute value.
    #[default]
    AbsMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HashCode {
    Bits {
        bits: u64,
        len: u8,
    },
    Index(u32),
    /// Every selected coordinate was exactly zero.
    Sentinel,
}

impl HashCode {
    pub fn bits(bits: u64, len: usize) -> Self {
        debug_assert!(len <= MAX_CODE_BITS);
        let mask = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
        HashCode::Bits { bits: bits & mask, len: len as u8 }
    }

    pub fn complement(self) -> Self {
        match self {
            HashCode::Bits { bits, len } => HashCode::bits(!bits, len as usize),
            other => other,
        }
    }
}

/// Number of differing bits between two sign codes of the same length.
pub fn hamming(a: HashCode, b: HashCode) -> Result<u32> {
    match (a, b) {
        (HashCode::Bits { bits: x, len: la }, HashCode::Bits { bits: y, len: lb }) => {
            check_len(la as usize, lb as usize)?;
            Ok((x ^ y).count_ones())
        }
        _ => Err(Error::NotBitCode),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Projection {
    Gaussian(Matrix),
    Select(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HashFunction {
    family: HashFamily,
    hash_len: usize,
    input_dim: usize,
    projection: Projection,
    seed: Option<u64>,
    rule: ArgmaxRule,
}

impl HashFunction {
    /// Draws a hash function from `family` with code length `k` acting on
    /// vectors of length `input_dim` (`d` for SimHash/DWTA, `c` for the
    /// folded PGHash/PGHash-D families). Same seed, same function.
    pub fn new(family: HashFamily, hash_len: usize, input_dim: usize, seed: u64) -> Result<Self> {
        if hash_len == 0 || input_dim == 0 {
            return Err(Error::param("hash length and input dim must be positive"));
        }
        let mut r = rng::rng(seed);
        let projection = if family.is_sign() {
            if hash_len > MAX_CODE_BITS {
                return Err(Error::param(alloc::format!("hash length {hash_len} exceeds {MAX_CODE_BITS} bits")));
            }
            let data = (0..hash_len * input_dim).map(|_| StandardNormal.sample(&mut r)).collect();
            Projection::Gaussian(Matrix::from_vec(hash_len, input_dim, data)?)
        } else {
            if hash_len > input_dim {
                return Err(Error::param(alloc::format!("cannot select {hash_len} of {input_dim} coordinates")));
            }
            Projection::Select(index::sample(&mut r, input_dim, hash_len).into_vec())
        };
        Ok(HashFunction { family, hash_len, input_dim, projection, seed: Some(seed), rule: ArgmaxRule::default() })
    }

    /// Sign-projection function with an explicit `k × width` matrix.
    pub fn from_projection(family: HashFamily, matrix: Matrix) -> Result<Self> {
        if !family.is_sign() {
            return Err(Error::WrongFamily { expected: "sign-projection" });
        }
        if matrix.rows() == 0 || matrix.rows() > MAX_CODE_BITS || matrix.cols() == 0 {
            return Err(Error::param("projection must have 1..=64 rows and at least one column"));
        }
        Ok(HashFunction {
            family,
            hash_len: matrix.rows(),
            input_dim: matrix.cols(),
            projection: Projection::Gaussian(matrix),
            seed: None,
            rule: ArgmaxRule::default(),
        })
    }

    /// Winner-take-all function with explicit selected coordinates.
    pub fn from_selection(family: HashFamily, input_dim: usize, selection: Vec<usize>) -> Result<Self> {
        if family.is_sign() {
            return Err(Error::WrongFamily { expected: "winner-take-all" });
        }
        if selection.is_empty() || selection.len() > input_dim {
            return Err(Error::param("selection size must be in 1..=input_dim"));
        }
        let mut seen = alloc::vec![false; input_dim];
        for &s in &selection {
            if s >= input_dim || seen[s] {
                return Err(Error::param("selection must be distinct indices below input_dim"));
            }
            seen[s] = true;
        }
        Ok(HashFunction {
            family,
            hash_len: selection.len(),
            input_dim,
            projection: Projection::Select(selection),
            seed: None,
            rule: ArgmaxRule::default(),
        })
    }

    pub fn with_argmax_rule(mut self, rule: ArgmaxRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn family(&self) -> HashFamily {
        self.family
    }

    pub fn hash_len(&self) -> usize {
        self.hash_len
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn argmax_rule(&self) -> ArgmaxRule {
        self.rule
    }

    pub fn projection_matrix(&self) -> Option<&Matrix> {
        match &self.projection {
            Projection::Gaussian(m) => Some(m),
            Projection::Select(_) => None,
        }
    }

    pub fn selection(&self) -> Option<&[usize]> {
        match &self.projection {
            Projection::Select(s) => Some(s),
            Projection::Gaussian(_) => None,
        }
    }

    /// Raw projections `S·v` for sign families.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        match &self.projection {
            Projection::Gaussian(m) => m.mul_vec(v),
            Projection::Select(_) => Err(Error::WrongFamily { expected: "sign-projection" }),
        }
    }

    /// Hash of `v` under whichever rule the family uses.
    pub fn code(&self, v: &[f64]) -> Result<HashCode> {
        check_len(self.input_dim, v.len())?;
        match &self.projection {
            Projection::Gaussian(m) => Ok(sign_code(m, v)),
            Projection::Select(sel) => Ok(winner(sel, v, self.rule)),
        }
    }

    /// PGHash code of an already folded vector.
    pub fn pghash_code(&self, folded: &[f64]) -> Result<HashCode> {
        self.expect(HashFamily::PgHash, "PGHash")?;
        self.code(folded)
    }

    pub fn simhash_code(&self, x: &[f64]) -> Result<HashCode> {
        self.expect(HashFamily::SimHash, "SimHash")?;
        self.code(x)
    }

    /// DWTA code of a raw vector, or PGHash-D code of a sketch vector.
    pub fn wta_code(&self, v: &[f64]) -> Result<HashCode> {
        if self.family.is_sign() {
            return Err(Error::WrongFamily { expected: "winner-take-all" });
        }
        self.code(v)
    }

    /// The SimHash function on `ℝ^d` equivalent to this PGHash function
    /// composed with `fold`: row `i` is `Bᵀ Sᵢ`, i.e. `Sᵢ` repeated `d/c` times.
    pub fn unfolded(&self, fold: &FoldingOperator) -> Result<HashFunction> {
        self.expect(HashFamily::PgHash, "PGHash")?;
        check_len(self.input_dim, fold.sketch_dim())?;
        let m = self.projection_matrix().expect("sign family");
        let mut rows = Vec::with_capacity(m.rows());
        for r in 0..m.rows() {
            rows.push(fold.adjoint(m.row(r))?);
        }
        HashFunction::from_projection(HashFamily::SimHash, Matrix::from_rows(&rows)?)
    }

    fn expect(&self, family: HashFamily, name: &'static str) -> Result<()> {
        if self.family == family {
            Ok(())
        } else {
            Err(Error::WrongFamily { expected: name })
        }
    }
}

fn sign_code(m: &Matrix, v: &[f64]) -> HashCode {
    let mut bits = 0u64;
    for r in 0..m.rows() {
        if dot(m.row(r), v) > 0.0 {
            bits |= 1 << r;
        }
    }
    HashCode::bits(bits, m.rows())
}

fn winner(selection: &[usize], v: &[f64], rule: ArgmaxRule) -> HashCode {
    let score = |x: f64| match rule {
        ArgmaxRule::Max => x,
        ArgmaxRule::AbsMax => libm::fabs(x),
    };
    if selection.iter().all(|&s| v[s] == 0.0) {
        return HashCode::Sentinel;
    }
    let mut best = 0;
    let mut best_score = score(v[selection[0]]);
    for (i, &s) in selection.iter().enumerate().skip(1) {
        let sc = score(v[s]);
        if sc > best_score {
            best = i;
            best_score = sc;
        }
    }
    HashCode::Index(best as u32)
}
