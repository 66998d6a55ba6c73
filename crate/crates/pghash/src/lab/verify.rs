//! The statistical verification suite behind `pghash verify`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use pghash_core::matrix::{cosine, norm};
use pghash_core::rng::{derive_seed, stream};
use pghash_core::{FoldingOperator, HashFamily, HashFunction};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

use super::collision::{collision_estimate, mismatch_batch_means, periodic_rows, SignFamily};
use super::distortion::{distortion_bounds, Stretch};
use super::norms::folded_norm_stats;
use super::scan::{angle_grid, angle_hamming_scan, hamming_variance_at, ScanParams};
use super::stats::{spearman, variance};

const INSTANCE_TAG: u32 = 107;

/// Deliberate defects used to show the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Negates the folded vector before hashing.
    FoldSignFlip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub metrics: Vec<(&'static str, f64)>,
}

fn gaussian(d: usize, seed: u64, index: usize) -> Vec<f64> {
    let mut r = stream(seed, INSTANCE_TAG, index as u32);
    (0..d).map(|_| StandardNormal.sample(&mut r)).collect()
}

/// Bits of `sgn(S·fold(x))` against `sgn(tiled S·x)`, skipping bits whose
/// projection magnitude is at most 1e-12 on either side.
pub fn check_fold_sign_equivalence(
    dims: &[(usize, usize)],
    instances: usize,
    k: usize,
    seed: u64,
    fault: Fault,
) -> Result<CheckResult> {
    let mut mismatches = 0u64;
    let mut compared = 0u64;
    let mut skipped = 0u64;
    for i in 0..instances {
        let (d, c) = dims[i % dims.len()];
        let fold = FoldingOperator::tiling(d, c)?;
        let f = HashFunction::new(HashFamily::PgHash, k, c, derive_seed(seed, INSTANCE_TAG, i as u32))?;
        let tiled = f.unfolded(&fold)?;
        let x = gaussian(d, seed, i);
        let mut folded = fold.fold(&x)?;
        if fault == Fault::FoldSignFlip {
            folded.iter_mut().for_each(|v| *v = -*v);
        }
        let a = f.project(&folded)?;
        let b = tiled.project(&x)?;
        for (p, q) in a.iter().zip(&b) {
            if p.abs() <= 1e-12 || q.abs() <= 1e-12 {
                skipped += 1;
                continue;
            }
            compared += 1;
            if (*p > 0.0) != (*q > 0.0) {
                mismatches += 1;
            }
        }
    }
    Ok(CheckResult {
        name: "fold-sign-equivalence",
        passed: mismatches == 0 && compared > 0,
        detail: format!(
            "{mismatches} mismatched of {compared} bits over {instances} instances ({skipped} near-zero skipped)"
        ),
        metrics: vec![("mismatches", mismatches as f64), ("bits", compared as f64)],
    })
}

/// Share of random pairs whose empirical match rate lies within 4 standard
/// errors of `1 − θ_c/π`, required to be at least `min_share`.
pub fn check_collision(
    pairs: usize,
    trials: usize,
    d: usize,
    c: usize,
    min_share: f64,
    seed: u64,
) -> Result<CheckResult> {
    let mut inside = 0;
    let mut worst: f64 = 0.0;
    for p in 0..pairs {
        let x = gaussian(d, seed, 2 * p);
        let y = gaussian(d, seed, 2 * p + 1);
        let e =
            collision_estimate(&x, &y, SignFamily::PgHash { sketch_dim: c }, trials, derive_seed(seed, 1, p as u32))?;
        let z = (e.empirical - e.predicted).abs() / e.stderr.max(f64::MIN_POSITIVE);
        worst = worst.max(z);
        if z <= 4.0 {
            inside += 1;
        }
    }
    let share = inside as f64 / pairs as f64;
    Ok(CheckResult {
        name: "collision-probability",
        passed: share >= min_share,
        detail: format!("{inside}/{pairs} pairs within 4 stderr (N={trials}, d={d}, c={c}); worst z = {worst:.2}"),
        metrics: vec![("share", share), ("worst_z", worst)],
    })
}

/// Variance of the batch-mean mismatch rate against `(1/N)(θ/π)(1−θ/π)`,
/// required within a factor of two for every pair.
pub fn check_mismatch_variance(
    pairs: usize,
    trials: usize,
    batches: usize,
    d: usize,
    c: usize,
    seed: u64,
) -> Result<CheckResult> {
    let mut ratios = Vec::with_capacity(pairs);
    for p in 0..pairs {
        let x = gaussian(d, seed, 2 * p);
        let y = gaussian(d, seed, 2 * p + 1);
        let fam = SignFamily::PgHash { sketch_dim: c };
        let means = mismatch_batch_means(&x, &y, fam, trials, batches, derive_seed(seed, 2, p as u32))?;
        let q = 1.0 - super::collision::predicted_match_rate(&x, &y, fam)?;
        let expected = q * (1.0 - q) / trials as f64;
        ratios.push(variance(&means) / expected);
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    Ok(CheckResult {
        name: "mismatch-variance",
        passed: lo >= 0.5 && hi <= 2.0,
        detail: format!("observed/predicted variance in [{lo:.3}, {hi:.3}] over {pairs} pairs x {batches} batches"),
        metrics: vec![("min_ratio", lo), ("max_ratio", hi)],
    })
}

/// Containment of `cos(fold x, fold y)` in the distortion bounds under each
/// stretch convention. Passes when some convention contains every valid
/// instance; the tighter one (`√(d/c)`) is preferred when both do.
pub fn check_distortion(
    instances: usize,
    d: usize,
    c: usize,
    grid: usize,
    seed: u64,
) -> Result<(CheckResult, Option<Stretch>)> {
    let conventions = [Stretch::SqrtRatio, Stretch::Ratio];
    let mut held = [0usize; 2];
    let mut valid = 0usize;
    let mut worst_grid_gap: f64 = 0.0;
    for i in 0..instances {
        let x = gaussian(d, seed, 2 * i);
        let y = gaussian(d, seed, 2 * i + 1);
        let nx = norm(&x);
        let ny = norm(&y);
        let x: Vec<f64> = x.iter().map(|v| v / nx).collect();
        let y: Vec<f64> = y.iter().map(|v| v / ny).collect();
        let mut reports = Vec::with_capacity(2);
        for s in conventions {
            match distortion_bounds(&x, &y, c, grid, s) {
                Ok(r) => reports.push(r),
                Err(Error::Core(pghash_core::Error::Degenerate(_))) => break,
                Err(e) => return Err(e),
            }
        }
        if reports.len() < 2 {
            continue;
        }
        valid += 1;
        worst_grid_gap = worst_grid_gap.max(reports[0].alpha - reports[0].alpha_exact);
        for (h, r) in held.iter_mut().zip(&reports) {
            *h += usize::from(r.within_bounds);
        }
    }
    let chosen = conventions.iter().zip(held).find(|(_, h)| *h == valid && valid > 0).map(|(s, _)| *s);
    let detail = format!(
        "{valid} valid instances (d={d}, c={c}, G={grid}); contained: lambda=sqrt(d/c) {}, lambda=d/c {}; chosen convention: {}; grid alpha exceeds exact alpha by at most {worst_grid_gap:.2e}",
        held[0],
        held[1],
        chosen.map_or("none", Stretch::name)
    );
    Ok((
        CheckResult {
            name: "angle-distortion-bounds",
            passed: chosen.is_some(),
            detail,
            metrics: vec![("valid", valid as f64), ("held_sqrt", held[0] as f64), ("held_ratio", held[1] as f64)],
        },
        chosen,
    ))
}

pub fn check_folded_norms(d: usize, c: usize, samples: usize, ks_max: f64, seed: u64) -> Result<CheckResult> {
    let s = folded_norm_stats(d, c, samples, seed)?;
    let upper = d as f64 / c as f64;
    let mean_ok = (s.mean - 1.0).abs() < 0.01 && (s.mean - 1.0).abs() < 5.0 * s.sd / (samples as f64).sqrt();
    let ks_ok = s.ks.is_none_or(|k| k < ks_max);
    let support_ok = s.min >= 0.0 && s.max <= upper;
    Ok(CheckResult {
        name: "folded-norm-distribution",
        passed: mean_ok && ks_ok && support_ok,
        detail: format!(
            "mean {:.5} (sd {:.4}), KS {}, range [{:.4}, {:.4}] within [0, {upper}] (d={d}, c={c}, N={samples})",
            s.mean,
            s.sd,
            s.ks.map_or("skipped".into(), |k| format!("{k:.5}")),
            s.min,
            s.max
        ),
        metrics: vec![("mean", s.mean), ("ks", s.ks.unwrap_or(0.0)), ("max", s.max)],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityParams {
    pub d: usize,
    pub k: usize,
    pub c: usize,
    pub tau_low: usize,
    pub tau_high: usize,
    pub angles: usize,
    pub reps: usize,
    pub spearman_min: f64,
    pub seed: u64,
}

/// Rank correlation of angle against average Hamming distance at `tau_high`,
/// and variance at a fixed angle shrinking from `tau_low` to `tau_high`.
pub fn check_sensitivity(p: &SensitivityParams) -> Result<CheckResult> {
    let scan = |tau| ScanParams { d: p.d, k: p.k, c: p.c, tau, family: HashFamily::PgHash, seed: p.seed };
    let rows = angle_hamming_scan(&scan(p.tau_high), &angle_grid(p.angles))?;
    let angles: Vec<f64> = rows.iter().map(|r| r.true_angle).collect();
    let ham: Vec<f64> = rows.iter().map(|r| r.avg_hamming).collect();
    let rho = spearman(&angles, &ham);
    let v_low = hamming_variance_at(&scan(p.tau_low), PI / 3.0, p.reps)?;
    let v_high = hamming_variance_at(&scan(p.tau_high), PI / 3.0, p.reps)?;
    Ok(CheckResult {
        name: "sensitivity-scan",
        passed: rho >= p.spearman_min && v_high < v_low,
        detail: format!(
            "Spearman {rho:.4} over {} angles (tau={}); variance at pi/3: {v_low:.4} (tau={}) -> {v_high:.4} (tau={})",
            p.angles, p.tau_high, p.tau_low, p.tau_high
        ),
        metrics: vec![("spearman", rho), ("var_low", v_low), ("var_high", v_high)],
    })
}

/// `|cos(row, x)| ≤ √(c/d)·‖fold x‖/‖x‖` for every periodic projection row.
pub fn check_periodic_row_cosine(d: usize, c: usize, k: usize, instances: usize, seed: u64) -> Result<CheckResult> {
    let fold = FoldingOperator::tiling(d, c)?;
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let rows = periodic_rows(d, c, k, derive_seed(seed, 3, i as u32))?;
        let x = gaussian(d, seed, i);
        let rhs = (c as f64 / d as f64).sqrt() * norm(&fold.fold(&x)?) / norm(&x);
        for r in 0..rows.rows() {
            let lhs = cosine(rows.row(r), &x).expect("nonzero").abs();
            worst = worst.max(lhs / rhs);
        }
    }
    Ok(CheckResult {
        name: "periodic-row-cosine-bound",
        passed: worst <= 1.0 + 1e-12,
        detail: format!("max |cos(row,x)| / bound = {worst:.6} over {instances} instances"),
        metrics: vec![("max_ratio", worst)],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub fold_dims: Vec<(usize, usize)>,
    pub fold_instances: usize,
    pub fold_bits: usize,
    pub collision_pairs: usize,
    pub collision_trials: usize,
    pub collision_d: usize,
    pub collision_c: usize,
    pub variance_pairs: usize,
    pub variance_batches: usize,
    pub distortion_instances: usize,
    pub distortion_d: usize,
    pub distortion_c: usize,
    pub grid: usize,
    pub norm_samples: usize,
    pub norm_d: usize,
    pub norm_c: usize,
    pub ks_max: f64,
    pub sensitivity: SensitivityParams,
    pub seed: u64,
    pub fault: Fault,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            fold_dims: vec![(8, 2), (100, 25), (128, 16)],
            fold_instances: 10_000,
            fold_bits: 16,
            collision_pairs: 100,
            collision_trials: 20_000,
            collision_d: 64,
            collision_c: 8,
            variance_pairs: 4,
            variance_batches: 50,
            distortion_instances: 1_000,
            distortion_d: 64,
            distortion_c: 8,
            grid: 10_000,
            norm_samples: 100_000,
            norm_d: 128,
            norm_c: 16,
            ks_max: 0.01,
            sensitivity: SensitivityParams {
                d: 100,
                k: 25,
                c: 25,
                tau_low: 10,
                tau_high: 100,
                angles: 180,
                reps: 200,
                spearman_min: 0.95,
                seed: 0,
            },
            seed: 0,
            fault: Fault::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub stretch: Option<Stretch>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failing(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        let _ = writeln!(
            s,
            "stretch convention for the distortion bounds: {}",
            self.stretch.map_or("none held", Stretch::name)
        );
        s
    }

    /// One row per metric: `check,passed,metric,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["check", "passed", "metric", "value"])?;
        for c in &self.checks {
            for (m, v) in &c.metrics {
                w.write_record([c.name, &c.passed.to_string(), m, &v.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_text().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

pub fn run_suite(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let mut checks =
        vec![check_fold_sign_equivalence(&cfg.fold_dims, cfg.fold_instances, cfg.fold_bits, cfg.seed, cfg.fault)?];
    log::info!("{}", checks[0].detail);
    checks.push(check_collision(
        cfg.collision_pairs,
        cfg.collision_trials,
        cfg.collision_d,
        cfg.collision_c,
        0.99,
        cfg.seed,
    )?);
    checks.push(check_mismatch_variance(
        cfg.variance_pairs,
        cfg.collision_trials,
        cfg.variance_batches,
        cfg.collision_d,
        cfg.collision_c,
        cfg.seed,
    )?);
    let (distortion, stretch) =
        check_distortion(cfg.distortion_instances, cfg.distortion_d, cfg.distortion_c, cfg.grid, cfg.seed)?;
    checks.push(distortion);
    checks.push(check_folded_norms(cfg.norm_d, cfg.norm_c, cfg.norm_samples, cfg.ks_max, cfg.seed)?);
    checks.push(check_sensitivity(&cfg.sensitivity)?);
    checks.push(check_periodic_row_cosine(cfg.distortion_d, cfg.distortion_c, 8, 200, cfg.seed)?);
    Ok(VerifyReport { checks, stretch })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_flip_fault_is_caught() {
        let ok = check_fold_sign_equivalence(&[(8, 2)], 50, 8, 1, Fault::None).unwrap();
        assert!(ok.passed, "{}", ok.detail);
        let bad = check_fold_sign_equivalence(&[(8, 2)], 50, 8, 1, Fault::FoldSignFlip).unwrap();
        assert!(!bad.passed);
    }

    #[test]
    fn small_checks_pass() {
        assert!(check_periodic_row_cosine(16, 4, 4, 20, 2).unwrap().passed);
        let (d, s) = check_distortion(50, 8, 2, 2000, 3).unwrap();
        assert!(d.passed, "{}", d.detail);
        assert!(s.is_some());
    }
}
