//! `pghash` subcommands. Exit codes: 0 success, 1 failed run or
//! verification, 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pghash_core::data::{synth_dataset, Dataset, SynthConfig};
use pghash_core::fed::Simulator;
use pghash_core::HashFamily;

use crate::checkpoint::{write_checkpoint, Checkpoint};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::lab::verify::SensitivityParams;
use crate::lab::{angle_grid, angle_hamming_scan, run_suite, Fault, ScanParams, VerifyConfig};
use crate::output::{write_manifest, write_scan, LedgerWriter};
use crate::xc::{parse_xc, write_xc};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "pghash", version, about = "Periodic Gaussian hashing experiments")]
pub struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Angle against average Hamming distance, one CSV per (family, tau, c).
    Scan(ScanArgs),
    /// Statistical verification suite.
    Verify(VerifyArgs),
    /// Single-device training run.
    Train(RunArgs),
    /// Federated run over several simulated devices.
    Fed(RunArgs),
    /// Write a synthetic dataset (90/10 train/test split) in the sparse text format.
    GenData(GenArgs),
}

fn list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String> {
    s.split(',').map(|p| p.trim().parse().map_err(|_| format!("bad list element {p:?}"))).collect()
}

// lists are spelled `std::vec::Vec` so clap takes one comma-separated value
#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long, default_value_t = 100)]
    pub d: usize,
    #[arg(long, default_value_t = 25)]
    pub k: usize,
    /// Sketch dimensions, comma separated.
    #[arg(long, default_value = "25", value_parser = list::<usize>)]
    pub c: std::vec::Vec<usize>,
    /// Table counts, comma separated.
    #[arg(long, default_value = "10,100", value_parser = list::<usize>)]
    pub tau: std::vec::Vec<usize>,
    /// Families, comma separated (pghash, simhash).
    #[arg(long, default_value = "pghash,simhash", value_parser = list::<String>)]
    pub family: std::vec::Vec<String>,
    /// Number of angles, evenly spaced inside (0, pi).
    #[arg(long, default_value_t = 180)]
    pub angles: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Samples for the folded-norm distribution check.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Input dimension for the folded-norm check.
    #[arg(long, default_value_t = 128)]
    pub d: usize,
    /// Sketch dimension for the folded-norm check.
    #[arg(long, default_value_t = 16)]
    pub c: usize,
    #[arg(long, default_value_t = 10_000)]
    pub fold_instances: usize,
    #[arg(long, default_value_t = 100)]
    pub pairs: usize,
    #[arg(long, default_value_t = 20_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 1_000)]
    pub distortion_instances: usize,
    #[arg(long, default_value_t = 10_000)]
    pub grid: usize,
    #[arg(long, default_value_t = 0.01)]
    pub ks_max: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Plant a defect to check that the suite fails (none, fold-sign-flip).
    #[arg(long, default_value = "none", hide = true)]
    pub fault: String,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML file of settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// pghash, pghash-d, slide-simhash, slide-dwta, sampled-softmax or dense.
    #[arg(long)]
    pub method: Option<String>,
    /// Number of simulated devices.
    #[arg(long)]
    pub devices: Option<usize>,
    /// Local steps per device over the whole run.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Batch size per local step.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Hash length: bits for the sign families, sampled coordinates for the argmax families.
    #[arg(long)]
    pub k: Option<usize>,
    /// Sketch dimension; must divide the hidden dimension for pghash.
    #[arg(long)]
    pub c: Option<usize>,
    /// Number of hash tables.
    #[arg(long)]
    pub tables: Option<usize>,
    /// Compression ratio: at most floor(cr * labels) output neurons are activated.
    #[arg(long)]
    pub cr: Option<f64>,
    /// Local steps between hashing events.
    #[arg(long)]
    pub steps_per_lsh: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Run seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Hidden layer width.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Training data in the sparse text format (optionally gzipped); synthetic when absent.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Test data; without it the training file is split 90/10.
    #[arg(long)]
    pub test_dataset: Option<PathBuf>,
    /// Evaluate P@1 every this many rounds (0 disables).
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Extra settings as key=value, overriding everything else.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl RunArgs {
    fn flags(&self) -> toml::Table {
        let mut t = toml::Table::new();
        let mut put = |k: &str, v: Option<toml::Value>| {
            if let Some(v) = v {
                t.insert(k.into(), v);
            }
        };
        let int = |v: Option<usize>| v.map(|x| toml::Value::Integer(x as i64));
        put("method", self.method.clone().map(toml::Value::String));
        put("devices", int(self.devices));
        put("steps", int(self.steps));
        put("batch", int(self.batch));
        put("k", int(self.k));
        put("c", int(self.c));
        put("tau", int(self.tables));
        put("cr", self.cr.map(toml::Value::Float));
        put("steps_per_lsh", int(self.steps_per_lsh));
        put("lr", self.lr.map(toml::Value::Float));
        put("seed", self.seed.map(|s| toml::Value::Integer(s as i64)));
        put("hidden", int(self.hidden));
        put("dataset", self.dataset.as_ref().map(|p| toml::Value::String(p.display().to_string())));
        put("test_dataset", self.test_dataset.as_ref().map(|p| toml::Value::String(p.display().to_string())));
        put("eval_every", int(self.eval_every));
        t
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 5500)]
    pub points: usize,
    #[arg(long, default_value_t = 1000)]
    pub features: usize,
    #[arg(long, default_value_t = 2000)]
    pub labels: usize,
    #[arg(long, default_value_t = 20)]
    pub feats_per_point: usize,
    #[arg(long, default_value_t = 2)]
    pub labels_per_point: usize,
    #[arg(long, default_value_t = 4.0)]
    pub signal: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write gzip-compressed files.
    #[arg(long)]
    pub gzip: bool,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e @ Error::Usage(_)) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILED
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Scan(a) => scan(a, &cli.out),
        Command::Verify(a) => verify(a, &cli.out),
        Command::Train(a) => train(a, &cli.out, "train"),
        Command::Fed(a) => train(a, &cli.out, "fed"),
        Command::GenData(a) => gen_data(a, &cli.out),
    }
}

fn scan(a: &ScanArgs, out: &Path) -> Result<i32> {
    if a.angles == 0 {
        return Err(Error::usage("--angles must be at least 1"));
    }
    let families = a
        .family
        .iter()
        .map(|f| match f.as_str() {
            "pghash" => Ok(HashFamily::PgHash),
            "simhash" => Ok(HashFamily::SimHash),
            other => Err(Error::usage(format!("scan family must be pghash or simhash, not {other:?}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    for &c in &a.c {
        if c == 0 || c > a.d || !a.d.is_multiple_of(c) {
            return Err(Error::usage(format!("sketch dim {c} must divide d = {}", a.d)));
        }
    }
    if a.tau.contains(&0) || a.k == 0 || a.k > 64 {
        return Err(Error::usage("tau must be positive and k within 1..=64"));
    }
    create_dir(out)?;
    let grid = angle_grid(a.angles);
    let mut settings = String::new();
    for fam in &families {
        for &tau in &a.tau {
            // SimHash ignores c, so it is scanned once
            let cs: &[usize] = if *fam == HashFamily::SimHash { &a.c[..1] } else { &a.c };
            for &c in cs {
                let p = ScanParams { d: a.d, k: a.k, c, tau, family: *fam, seed: a.seed };
                let rows = angle_hamming_scan(&p, &grid)?;
                let path = out.join(format!("scan_{}_tau{tau}_c{c}.csv", fam.name()));
                let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                write_scan(f, &rows)?;
                println!("wrote {}", path.display());
            }
        }
    }
    settings.push_str(&format!(
        "d = {}\nk = {}\nc = {:?}\ntau = {:?}\nfamily = {:?}\nangles = {}\n",
        a.d, a.k, a.c, a.tau, a.family, a.angles
    ));
    write_manifest(out, "scan", &settings, a.seed)?;
    Ok(EXIT_OK)
}

fn verify(a: &VerifyArgs, out: &Path) -> Result<i32> {
    let fault = match a.fault.as_str() {
        "none" => Fault::None,
        "fold-sign-flip" => Fault::FoldSignFlip,
        f => return Err(Error::usage(format!("unknown fault {f:?}"))),
    };
    if a.c == 0 || a.c > a.d || !a.d.is_multiple_of(a.c) {
        return Err(Error::usage(format!("--c {} must divide --d {}", a.c, a.d)));
    }
    if a.samples == 0 || a.pairs == 0 || a.trials == 0 || a.fold_instances == 0 || a.grid == 0 {
        return Err(Error::usage("sample counts must be positive"));
    }
    let cfg = VerifyConfig {
        fold_instances: a.fold_instances,
        collision_pairs: a.pairs,
        collision_trials: a.trials,
        distortion_instances: a.distortion_instances,
        grid: a.grid,
        norm_samples: a.samples,
        norm_d: a.d,
        norm_c: a.c,
        ks_max: a.ks_max,
        sensitivity: SensitivityParams { seed: a.seed, ..VerifyConfig::default().sensitivity },
        seed: a.seed,
        fault,
        ..VerifyConfig::default()
    };
    create_dir(out)?;
    let report = run_suite(&cfg)?;
    report.write_text(&out.join("verify_report.txt"))?;
    report.write_csv(&out.join("verify_report.csv"))?;
    print!("{}", report.to_text());
    write_manifest(
        out,
        "verify",
        &format!("{cfg:#?}").lines().map(|l| format!("# {l}\n")).collect::<String>(),
        a.seed,
    )?;
    if report.passed() {
        Ok(EXIT_OK)
    } else {
        eprintln!("failing properties: {}", report.failing().join(", "));
        Ok(EXIT_FAILED)
    }
}

/// Train and test splits for a run: files when given, synthetic otherwise.
pub fn load_data(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    match (&cfg.dataset, &cfg.test_dataset) {
        (Some(train), Some(test)) => {
            let (_, tr) = parse_xc(train)?;
            let (_, te) = parse_xc(test)?;
            Ok((tr, te))
        }
        (Some(train), None) => Ok(parse_xc(train)?.1.split(0.9, cfg.seed)),
        (None, Some(_)) => Err(Error::usage("test_dataset needs dataset")),
        (None, None) => Ok(synth_dataset(&cfg.synth_config())?.split(0.9, cfg.seed)),
    }
}

fn train(a: &RunArgs, out: &Path, command: &str) -> Result<i32> {
    let base = RunConfig { devices: if command == "fed" { 4 } else { 1 }, ..RunConfig::default() };
    let cfg = RunConfig::resolve(base, a.config.as_deref(), a.flags(), &a.set)?;
    if command == "train" && cfg.devices != 1 {
        return Err(Error::usage("train runs on one device; use fed for more"));
    }
    let fed = cfg.fed_config()?;
    let (train, test) = load_data(&cfg)?;
    if train.len() < fed.num_devices {
        return Err(Error::usage(format!("{} training points for {} devices", train.len(), fed.num_devices)));
    }
    create_dir(out)?;
    write_manifest(out, command, &cfg.to_toml(), cfg.seed)?;
    let mut ledger = LedgerWriter::create(&out.join("ledger.csv"))?;
    let mut sim = Simulator::new(fed, &train, &test)?;
    let mut write_err = None;
    sim.run_with(|r| {
        if let Some(p) = r.p_at_1 {
            log::info!("round {} loss {:.4} P@1 {p:.4}", r.round, r.loss);
        }
        if let Err(e) = ledger.row(r) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    let optimizers = sim.devices().iter().map(|d| d.optimizer().clone()).collect();
    let (model, _) = sim.into_parts();
    write_checkpoint(&out.join("model.ckpt"), &Checkpoint { model, optimizers })?;
    println!("wrote {}", out.join("ledger.csv").display());
    Ok(EXIT_OK)
}

fn gen_data(a: &GenArgs, out: &Path) -> Result<i32> {
    let cfg = SynthConfig {
        num_points: a.points,
        num_features: a.features,
        num_labels: a.labels,
        feats_per_point: a.feats_per_point,
        labels_per_point: a.labels_per_point,
        signal_strength: a.signal,
        seed: a.seed,
    };
    let data = synth_dataset(&cfg).map_err(|e| Error::usage(e.to_string()))?;
    let (train, test) = data.split(0.9, a.seed);
    create_dir(out)?;
    let ext = if a.gzip { "txt.gz" } else { "txt" };
    for (name, ds) in [("train", &train), ("test", &test)] {
        let path = out.join(format!("{name}.{ext}"));
        write_xc(&path, ds)?;
        println!("wrote {} ({} points)", path.display(), ds.len());
    }
    write_manifest(
        out,
        "gen-data",
        &format!("{cfg:#?}").lines().map(|l| format!("# {l}\n")).collect::<String>(),
        a.seed,
    )?;
    Ok(EXIT_OK)
}
