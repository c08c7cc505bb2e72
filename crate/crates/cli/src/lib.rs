//! Configuration, dispatch and persistence for the `pbv` command.
//!
//! [`run_experiment`] computes a run entirely in memory, then writes its
//! CSV tables, SVG figures, JSON report and a `manifest.json` listing the
//! SHA-256 of every other file. If anything fails, files written by the
//! run are removed again.

pub mod config;
pub mod error;
mod experiments;
pub mod output;
pub mod svg;

use std::path::{Path, PathBuf};
use std::time::Instant;

use pbv_core::calibration::Calibration;
use serde::{Deserialize, Serialize};

pub use config::{load_config, parse_config, Experiment, RunConfig, Sweep};
pub use error::{CliError, Result};
use output::{sha256_hex, Artifacts, FileEntry, Writer};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub experiment: Experiment,
    pub config: serde_json::Value,
    pub calibration: Calibration,
    /// Calibration inputs not constrained by any measurement.
    pub placeholders: Vec<String>,
    pub seed: Option<u64>,
    pub wall_clock_seconds: f64,
    pub output_dir: PathBuf,
    pub files: Vec<FileEntry>,
}

fn compute(cfg: &RunConfig, cal: &Calibration) -> pbv_core::Result<experiments::Output> {
    match &cfg.sweep {
        Sweep::Ple(s) => experiments::ple(cal, s),
        Sweep::Init(s) => experiments::init(cal, s),
        Sweep::Saturation(s) => experiments::saturation(cal, s, cfg.seed),
        // validate() guarantees the seed
        Sweep::Ssr(s) => experiments::ssr(cal, s, cfg.seed.unwrap_or_default()),
        Sweep::T1(s) => experiments::t1(cal, s, cfg.seed),
        Sweep::Cpt(s) => experiments::cpt(cal, s),
        Sweep::Calibrate(s) => experiments::calibrate_run(cal, s),
    }
}

fn artifacts(exp: Experiment, out: experiments::Output) -> Result<Artifacts> {
    let mut a = Artifacts::default();
    for (name, csv) in out.tables {
        a.csv(&name, csv);
    }
    for (name, doc) in &out.documents {
        a.json(name, doc)?;
    }
    a.json(&format!("{exp}_report.json"), &out.report)?;
    for (name, plot) in out.figures {
        a.add(name, plot.render());
    }
    Ok(a)
}

/// Runs `cfg` and writes its outputs plus the manifest into `cfg.output_dir`.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let start = Instant::now();
    let exp = cfg.experiment;
    let cal = cfg.resolve_calibration()?;
    let out = compute(cfg, &cal).map_err(|source| CliError::Experiment {
        experiment: exp.to_string(),
        source,
    })?;
    let files = artifacts(exp, out)?;

    let mut writer = Writer::new(&cfg.output_dir)?;
    let mut entries = Vec::with_capacity(files.files.len());
    for (name, bytes) in &files.files {
        entries.push(writer.write(name, bytes)?);
    }
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: exp,
        config: serde_json::to_value(cfg)?,
        placeholders: cal.placeholders.clone(),
        calibration: cal,
        seed: cfg.seed,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        output_dir: cfg.output_dir.clone(),
        files: entries,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    writer.write(MANIFEST, &bytes)?;
    writer.finish();
    Ok(manifest)
}

/// Re-hashes every file listed in `dir/manifest.json`.
pub fn verify_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    for f in &manifest.files {
        let p = dir.join(&f.name);
        let bytes = std::fs::read(&p).map_err(|e| CliError::io(&p, e))?;
        let hash = sha256_hex(&bytes);
        if hash != f.sha256 || bytes.len() as u64 != f.bytes {
            return Err(CliError::config(
                format!("files[{}]", f.name),
                format!("hash mismatch: manifest {} vs file {hash}", f.sha256),
            ));
        }
    }
    Ok(manifest)
}
