//! Monte-Carlo checks of the hashing and folding statistics, and the
//! angle/Hamming sensitivity scans.

pub mod collision;
pub mod distortion;
pub mod norms;
pub mod scan;
pub mod stats;
pub mod verify;

pub use collision::{collision_estimate, mismatch_batch_means, predicted_match_rate, CollisionEstimate, SignFamily};
pub use distortion::{angle_bounds, distortion_bounds, DistortionReport, Stretch};
pub use norms::{folded_norm_samples, folded_norm_stats, FoldedNormStats};
pub use scan::{angle_grid, angle_hamming_scan, hamming_variance_at, ScanParams, SensitivityScanRow};
pub use verify::{run_suite, CheckResult, Fault, VerifyConfig, VerifyReport};
