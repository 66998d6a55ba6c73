//! CSV outputs and run manifests.

use std::io::Write;
use std::path::Path;

use pghash_core::fed::RoundRecord;

use crate::error::{Error, Result};
use crate::lab::SensitivityScanRow;

pub const LEDGER_HEADER: [&str; 8] =
    ["round", "method", "device_count", "bytes_down", "bytes_up", "avg_active_frac", "loss", "p_at_1"];
pub const SCAN_HEADER: [&str; 8] = ["angle", "avg_hamming", "family", "tau", "k", "c", "d", "seed"];

/// Streaming ledger writer; `p_at_1` is empty on rounds without evaluation.
pub struct LedgerWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl LedgerWriter<std::fs::File> {
    pub fn create(path: &Path) -> Result<Self> {
        Self::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?)
    }
}

impl<W: Write> LedgerWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(LEDGER_HEADER)?;
        Ok(LedgerWriter { inner })
    }

    pub fn row(&mut self, r: &RoundRecord) -> Result<()> {
        self.inner.write_record([
            r.round.to_string(),
            r.method.clone(),
            r.device_count.to_string(),
            r.bytes_down.to_string(),
            r.bytes_up.to_string(),
            r.avg_active_frac.to_string(),
            r.loss.to_string(),
            r.p_at_1.map_or(String::new(), |p| p.to_string()),
        ])?;
        self.inner.flush().map_err(|e| Error::Format(e.to_string()))
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner.into_inner().map_err(|e| Error::Format(e.to_string()))
    }
}

pub fn write_scan<W: Write>(w: W, rows: &[SensitivityScanRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SCAN_HEADER)?;
    for r in rows {
        out.write_record([
            r.true_angle.to_string(),
            r.avg_hamming.to_string(),
            r.family.name().to_string(),
            r.tau.to_string(),
            r.k.to_string(),
            r.c.to_string(),
            r.d.to_string(),
            r.seed.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::Format(e.to_string()))
}

/// `manifest.toml`: the command, the fully resolved settings and the seed.
pub fn write_manifest(dir: &Path, command: &str, settings: &str, seed: u64) -> Result<()> {
    let path = dir.join("manifest.toml");
    let text = format!(
        "# written by pghash {}\ncommand = {command:?}\nseed = {seed}\n\n[settings]\n{settings}",
        env!("CARGO_PKG_VERSION")
    );
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}
