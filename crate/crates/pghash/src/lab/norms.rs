use pghash_core::matrix::norm;
use pghash_core::rng::stream;
use pghash_core::FoldingOperator;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::Result;

use super::stats::{ks_distance, mean, variance};

/// Tag of the per-sample streams.
pub const SAMPLE_TAG: u32 = 102;

#[derive(Debug, Clone, PartialEq)]
pub struct FoldedNormStats {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    /// KS distance to `(d/c)·Beta(c/2, (d−c)/2)`; `None` when `c = d` (point mass at 1).
    pub ks: Option<f64>,
    pub samples: usize,
}

/// `‖fold(u)‖²` for `n` uniform unit vectors `u ∈ ℝ^d`. Sample `i` draws
/// from stream `(seed, SAMPLE_TAG, i)`.
pub fn folded_norm_samples(d: usize, c: usize, n: usize, seed: u64) -> Result<Vec<f64>> {
    let fold = FoldingOperator::tiling(d, c)?;
    let mut u = vec![0.0; d];
    let mut out = vec![0.0; c];
    (0..n)
        .map(|i| {
            let mut r = stream(seed, SAMPLE_TAG, i as u32);
            loop {
                u.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut r));
                let len = norm(&u);
                if len > 0.0 {
                    u.iter_mut().for_each(|v| *v /= len);
                    break;
                }
            }
            fold.fold_into(&u, &mut out)?;
            Ok(out.iter().map(|v| v * v).sum())
        })
        .collect()
}

/// CDF of `(d/c)·Beta(c/2, (d−c)/2)`; requires `c < d`.
pub fn scaled_beta_cdf(d: usize, c: usize) -> Result<impl Fn(f64) -> f64> {
    let beta = Beta::new(c as f64 / 2.0, (d - c) as f64 / 2.0)
        .map_err(|e| crate::error::Error::Format(format!("beta distribution: {e}")))?;
    let scale = d as f64 / c as f64;
    Ok(move |s: f64| beta.cdf((s / scale).clamp(0.0, 1.0)))
}

pub fn folded_norm_stats(d: usize, c: usize, n: usize, seed: u64) -> Result<FoldedNormStats> {
    let s = folded_norm_samples(d, c, n, seed)?;
    let ks = if c < d { Some(ks_distance(&s, scaled_beta_cdf(d, c)?)) } else { None };
    Ok(FoldedNormStats {
        mean: mean(&s),
        sd: variance(&s).sqrt(),
        min: s.iter().copied().fold(f64::INFINITY, f64::min),
        max: s.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ks,
        samples: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_fold_is_point_mass() {
        let s = folded_norm_stats(6, 6, 200, 1).unwrap();
        assert!((s.mean - 1.0).abs() < 1e-12 && s.sd < 1e-12);
        assert_eq!(s.ks, None);
    }

    #[test]
    fn small_run_matches_beta() {
        let s = folded_norm_stats(32, 4, 4000, 3).unwrap();
        assert!((s.mean - 1.0).abs() < 5.0 * s.sd / (4000f64).sqrt());
        assert!(s.ks.unwrap() < 0.03, "{s:?}");
        assert!(s.min >= 0.0 && s.max <= 8.0);
    }

    #[test]
    fn rejects_non_divisor() {
        assert!(folded_norm_stats(10, 3, 10, 0).is_err());
    }
}
