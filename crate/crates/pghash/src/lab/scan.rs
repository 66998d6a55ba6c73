use std::f64::consts::PI;

use pghash_core::matrix::{dot, norm};
use pghash_core::rng::{derive_seed, stream};
use pghash_core::{hamming, FoldingOperator, HashFamily, HashFunction};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

use super::stats::variance;

const BASE_TAG: u32 = 103;
const PLANE_TAG: u32 = 104;
const TABLE_TAG: u32 = 105;
const REPEAT_TAG: u32 = 106;

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityScanRow {
    pub true_angle: f64,
    pub avg_hamming: f64,
    pub family: HashFamily,
    pub tau: usize,
    pub k: usize,
    pub c: usize,
    pub d: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanParams {
    pub d: usize,
    pub k: usize,
    /// Sketch dimension; ignored by SimHash.
    pub c: usize,
    pub tau: usize,
    pub family: HashFamily,
    pub seed: u64,
}

impl ScanParams {
    fn validate(&self) -> Result<()> {
        if !self.family.is_sign() {
            return Err(Error::usage(format!("{} codes have no Hamming distance", self.family.name())));
        }
        if self.tau == 0 || self.k == 0 || self.d == 0 {
            return Err(Error::usage("d, k and tau must be positive"));
        }
        Ok(())
    }
}

fn unit_gaussian(d: usize, seed: u64, tag: u32, index: u32) -> Vec<f64> {
    let mut r = stream(seed, tag, index);
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut r)).collect();
        let n = norm(&v);
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `cos(angle)·x + sin(angle)·x⊥`, `x⊥` a random unit vector orthogonal to unit `x`.
pub fn at_angle(x: &[f64], angle: f64, seed: u64, index: u32) -> Vec<f64> {
    loop {
        let mut p = unit_gaussian(x.len(), seed, PLANE_TAG, index);
        let a = dot(&p, x);
        p.iter_mut().zip(x).for_each(|(v, u)| *v -= a * u);
        let n = norm(&p);
        if n > 1e-9 {
            let (s, c) = angle.sin_cos();
            return x.iter().zip(&p).map(|(u, v)| c * u + s * v / n).collect();
        }
    }
}

/// `τ` hash functions of one family; PGHash hashes the `(d, c)`-fold.
struct Tables {
    fold: Option<FoldingOperator>,
    functions: Vec<HashFunction>,
}

impl Tables {
    fn new(p: &ScanParams, seed: u64) -> Result<Self> {
        let fold = match p.family {
            HashFamily::PgHash => Some(FoldingOperator::tiling(p.d, p.c)?),
            _ => None,
        };
        let width = fold.as_ref().map_or(p.d, FoldingOperator::sketch_dim);
        let functions = (0..p.tau)
            .map(|t| HashFunction::new(p.family, p.k, width, derive_seed(seed, TABLE_TAG, t as u32)))
            .collect::<pghash_core::Result<_>>()?;
        Ok(Tables { fold, functions })
    }

    fn avg_hamming(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let (a, b) = match &self.fold {
            Some(f) => (f.fold(x)?, f.fold(y)?),
            None => (x.to_vec(), y.to_vec()),
        };
        let mut total = 0u64;
        for f in &self.functions {
            total += u64::from(hamming(f.code(&a)?, f.code(&b)?)?);
        }
        Ok(total as f64 / self.functions.len() as f64)
    }
}

fn check_angle(a: f64) -> Result<()> {
    if a > 0.0 && a < PI {
        Ok(())
    } else {
        Err(Error::usage(format!("angle {a} outside (0, π)")))
    }
}

/// Average Hamming distance between a fixed random unit `x` and, for each
/// angle, a vector at exactly that angle, over `τ` shared hash functions.
pub fn angle_hamming_scan(p: &ScanParams, angles: &[f64]) -> Result<Vec<SensitivityScanRow>> {
    p.validate()?;
    angles.iter().try_for_each(|&a| check_angle(a))?;
    let x = unit_gaussian(p.d, p.seed, BASE_TAG, 0);
    let tables = Tables::new(p, p.seed)?;
    angles
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let y = at_angle(&x, a, p.seed, i as u32);
            Ok(SensitivityScanRow {
                true_angle: a,
                avg_hamming: tables.avg_hamming(&x, &y)?,
                family: p.family,
                tau: p.tau,
                k: p.k,
                c: p.c,
                d: p.d,
                seed: p.seed,
            })
        })
        .collect()
}

/// Variance of the average Hamming distance of one fixed pair at `angle`
/// across `reps` independent draws of the `τ` tables.
pub fn hamming_variance_at(p: &ScanParams, angle: f64, reps: usize) -> Result<f64> {
    p.validate()?;
    check_angle(angle)?;
    let x = unit_gaussian(p.d, p.seed, BASE_TAG, 0);
    let y = at_angle(&x, angle, p.seed, 0);
    let values = (0..reps)
        .map(|r| Tables::new(p, derive_seed(p.seed, REPEAT_TAG, r as u32))?.avg_hamming(&x, &y))
        .collect::<Result<Vec<_>>>()?;
    Ok(variance(&values))
}

/// `count` angles evenly spaced strictly inside `(0, π)`.
pub fn angle_grid(count: usize) -> Vec<f64> {
    (1..=count).map(|i| PI * i as f64 / (count + 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(family: HashFamily) -> ScanParams {
        ScanParams { d: 20, k: 10, c: 5, tau: 20, family, seed: 1 }
    }

    #[test]
    fn constructed_vector_has_exact_angle() {
        let x = unit_gaussian(30, 4, BASE_TAG, 0);
        for a in [0.1, 1.0, 2.5] {
            let y = at_angle(&x, a, 4, 3);
            assert!((norm(&y) - 1.0).abs() < 1e-12);
            assert!((dot(&x, &y).acos() - a).abs() < 1e-9);
        }
    }

    #[test]
    fn extremes_of_the_scan() {
        for fam in [HashFamily::SimHash, HashFamily::PgHash] {
            let rows = angle_hamming_scan(&params(fam), &[1e-9, PI - 1e-9]).unwrap();
            assert!(rows[0].avg_hamming < 0.1, "{rows:?}");
            assert!(rows[1].avg_hamming > 9.9, "{rows:?}");
            assert!(rows.iter().all(|r| r.avg_hamming >= 0.0 && r.avg_hamming <= r.k as f64));
        }
    }

    #[test]
    fn rejects_closed_endpoints_and_index_families() {
        assert!(angle_hamming_scan(&params(HashFamily::SimHash), &[0.0]).is_err());
        assert!(angle_hamming_scan(&params(HashFamily::SimHash), &[PI]).is_err());
        assert!(angle_hamming_scan(&params(HashFamily::Dwta), &[1.0]).is_err());
    }

    #[test]
    fn grid_is_open() {
        let g = angle_grid(180);
        assert_eq!(g.len(), 180);
        assert!(g[0] > 0.0 && g[179] < PI);
    }
}
