use pghash_core::matrix::{cosine, Matrix};
use pghash_core::rng::derive_seed;
use pghash_core::{FoldingOperator, HashFamily, HashFunction};

use crate::error::{Error, Result};

/// Tag of the per-trial streams; trial `t` hashes with seed `derive_seed(seed, TRIAL_TAG, t)`.
pub const TRIAL_TAG: u32 = 101;

/// Single-bit sign hash families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignFamily {
    SimHash,
    /// SimHash on the `(d, c)`-fold.
    PgHash {
        sketch_dim: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionEstimate {
    pub empirical: f64,
    pub predicted: f64,
    /// `√(p(1−p)/N)` at the predicted `p`.
    pub stderr: f64,
    pub trials: usize,
}

/// The vectors the bit is actually computed on, and the family hashing them.
fn hashed_pair(x: &[f64], y: &[f64], family: SignFamily) -> Result<(Vec<f64>, Vec<f64>, HashFamily)> {
    if x.len() != y.len() {
        return Err(pghash_core::Error::DimensionMismatch { expected: x.len(), got: y.len() }.into());
    }
    match family {
        SignFamily::SimHash => Ok((x.to_vec(), y.to_vec(), HashFamily::SimHash)),
        SignFamily::PgHash { sketch_dim } => {
            let f = FoldingOperator::tiling(x.len(), sketch_dim)?;
            Ok((f.fold(x)?, f.fold(y)?, HashFamily::PgHash))
        }
    }
}

fn angle_between(x: &[f64], y: &[f64]) -> Result<f64> {
    let c = cosine(x, y).ok_or(pghash_core::Error::Degenerate("angle with a zero vector"))?;
    Ok(c.clamp(-1.0, 1.0).acos())
}

/// `1 − θ/π`, with `θ` the angle the family sees (between folds for PGHash).
pub fn predicted_match_rate(x: &[f64], y: &[f64], family: SignFamily) -> Result<f64> {
    let (a, b, _) = hashed_pair(x, y, family)?;
    Ok(1.0 - angle_between(&a, &b)? / std::f64::consts::PI)
}

fn matches(a: &[f64], b: &[f64], family: HashFamily, trials: std::ops::Range<usize>, seed: u64) -> Result<usize> {
    let mut hits = 0;
    for t in trials {
        let f = HashFunction::new(family, 1, a.len(), derive_seed(seed, TRIAL_TAG, t as u32))?;
        if f.code(a)? == f.code(b)? {
            hits += 1;
        }
    }
    Ok(hits)
}

pub fn collision_estimate(
    x: &[f64],
    y: &[f64],
    family: SignFamily,
    trials: usize,
    seed: u64,
) -> Result<CollisionEstimate> {
    if trials == 0 {
        return Err(Error::usage("at least one trial is required"));
    }
    let predicted = predicted_match_rate(x, y, family)?;
    let (a, b, fam) = hashed_pair(x, y, family)?;
    let hits = matches(&a, &b, fam, 0..trials, seed)?;
    Ok(CollisionEstimate {
        empirical: hits as f64 / trials as f64,
        predicted,
        stderr: (predicted * (1.0 - predicted) / trials as f64).sqrt(),
        trials,
    })
}

/// Mean sign-mismatch indicator over each of `batches` consecutive blocks of
/// `trials` independent single-bit draws.
pub fn mismatch_batch_means(
    x: &[f64],
    y: &[f64],
    family: SignFamily,
    trials: usize,
    batches: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if trials == 0 {
        return Err(Error::usage("at least one trial is required"));
    }
    predicted_match_rate(x, y, family)?;
    let (a, b, fam) = hashed_pair(x, y, family)?;
    (0..batches)
        .map(|i| {
            let hits = matches(&a, &b, fam, i * trials..(i + 1) * trials, seed)?;
            Ok(1.0 - hits as f64 / trials as f64)
        })
        .collect()
}

/// Rows of the equivalent unfolded projection for a `k`-bit PGHash function:
/// each is `Bᵀ s_i`, the Gaussian row tiled `d/c` times.
pub fn periodic_rows(d: usize, c: usize, k: usize, seed: u64) -> Result<Matrix> {
    let fold = FoldingOperator::tiling(d, c)?;
    let f = HashFunction::new(HashFamily::PgHash, k, c, seed)?;
    Ok(f.unfolded(&fold)?.projection_matrix().expect("sign family").clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_vectors_always_collide() {
        let x = [0.3, -1.0, 2.0, 0.5];
        let e = collision_estimate(&x, &x, SignFamily::SimHash, 500, 1).unwrap();
        assert_eq!((e.empirical, e.predicted, e.stderr), (1.0, 1.0, 0.0));
    }

    #[test]
    fn orthogonal_predicts_half_and_sixty_degrees_two_thirds() {
        let p = predicted_match_rate(&[1.0, 0.0], &[0.0, 1.0], SignFamily::SimHash).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        let q = predicted_match_rate(&[1.0, 0.0], &[0.5, 0.75f64.sqrt()], SignFamily::SimHash).unwrap();
        assert!((q - 2.0 / 3.0).abs() < 1e-12);
        // folds of (1,0,0,0) and (0,1,0,0) under c=2 stay orthogonal
        let f =
            predicted_match_rate(&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0], SignFamily::PgHash { sketch_dim: 2 });
        assert!((f.unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_vector_is_an_error() {
        assert!(collision_estimate(&[0.0, 0.0], &[1.0, 0.0], SignFamily::SimHash, 10, 0).is_err());
        // (1,-1) folds to zero under c=1
        assert!(predicted_match_rate(&[1.0, -1.0], &[1.0, 0.0], SignFamily::PgHash { sketch_dim: 1 }).is_err());
    }

    #[test]
    fn estimate_lands_near_prediction() {
        let x = [1.0, 0.2, -0.4, 0.9, 0.0, 1.5];
        let y = [0.1, 1.0, 0.3, -0.2, 0.8, 0.4];
        for fam in [SignFamily::SimHash, SignFamily::PgHash { sketch_dim: 3 }] {
            let e = collision_estimate(&x, &y, fam, 4000, 3).unwrap();
            assert!((e.empirical - e.predicted).abs() < 4.0 * e.stderr, "{e:?}");
        }
    }

    #[test]
    fn periodic_rows_obey_cosine_bound() {
        let rows = periodic_rows(12, 3, 5, 4).unwrap();
        let fold = FoldingOperator::tiling(12, 3).unwrap();
        let x: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let rhs =
            (3.0f64 / 12.0).sqrt() * pghash_core::matrix::norm(&fold.fold(&x).unwrap()) / pghash_core::matrix::norm(&x);
        for i in 0..rows.rows() {
            assert!(cosine(rows.row(i), &x).unwrap().abs() <= rhs + 1e-12);
        }
    }
}
