use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{MarkovError, Result};
use crate::stats::report::TestReport;

use super::config::ExperimentConfig;

/// Environment variable read by [`configure_threads`].
pub const THREADS_ENV: &str = "MARKOVGATE_THREADS";

/// Sizes the global rayon pool from `MARKOVGATE_THREADS`, if set.
///
/// Has no effect once the global pool exists.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let k: usize = raw
        .trim()
        .parse()
        .map_err(|_| MarkovError::InvalidInput(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    if k == 0 {
        return Err(MarkovError::InvalidInput(format!("{THREADS_ENV} must be positive")));
    }
    let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    Ok(())
}

/// Hex SHA-256 of the canonical JSON form of `cfg`.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("config serialises");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Everything needed to rerun an experiment. Contains no timestamps, so
/// identical runs write identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub master_seed: u64,
    pub crate_version: String,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &ExperimentConfig, files: Vec<String>) -> Self {
        Manifest {
            command: command.into(),
            config: cfg.clone(),
            config_hash: config_hash(cfg),
            master_seed: cfg.master_seed,
            crate_version: env!("CARGO_PKG_VERSION").into(),
            files,
        }
    }
}

/// Writes `files` (name, contents) and a `manifest.json` into `dir`.
pub fn write_outputs(dir: &Path, command: &str, cfg: &ExperimentConfig, files: &[(&str, String)]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    for (name, body) in files {
        fs::write(dir.join(name), body)?;
    }
    let manifest = Manifest::new(command, cfg, files.iter().map(|(n, _)| n.to_string()).collect());
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x}"))
}

/// Human-readable report.
pub fn render_report_text(r: &TestReport) -> String {
    let mut s = String::new();
    let b = &r.bandwidths;
    let _ = writeln!(s, "statistic      {}", r.kind.name());
    let _ = writeln!(s, "value          {}", r.statistic);
    let _ = writeln!(s, "points used    {}", r.n_used);
    if r.dropped > 0 || r.floor_breaches > 0 {
        let _ = writeln!(s, "floor breaches {} (dropped {})", r.floor_breaches, r.dropped);
    }
    let _ = writeln!(
        s,
        "bandwidths     h1={} h2={} h3={} b1={} b2={}",
        b.h1, b.h2, b.h3, b.b1, b.b2
    );
    if let Some(msg) = &r.calibration_failure {
        let _ = writeln!(s, "calibration    unavailable: {msg}");
    }
    if r.mu.is_some() {
        let _ = writeln!(s, "null mean      {}", opt(r.mu));
        let _ = writeln!(s, "null sd        {}", opt(r.sigma));
        let _ = writeln!(s, "z              {}", opt(r.z_score));
        let _ = writeln!(s, "p (normal)     {}", opt(r.p_normal));
        let _ = writeln!(s, "p (chi-square) {} [r={}, d={}]", opt(r.p_chisq), opt(r.r_scale), opt(r.dof));
    }
    if let Some(p) = r.p_bootstrap {
        let _ = writeln!(s, "p (bootstrap)  {p} [B={}]", r.bootstrap_replicates);
    }
    s
}

/// Report as `key,value` CSV.
pub fn render_report_csv(r: &TestReport) -> String {
    let b = &r.bandwidths;
    let rows: Vec<(&str, String)> = vec![
        ("statistic", r.kind.name().to_string()),
        ("value", format!("{}", r.statistic)),
        ("n_used", r.n_used.to_string()),
        ("floor_breaches", r.floor_breaches.to_string()),
        ("dropped", r.dropped.to_string()),
        ("h1", format!("{}", b.h1)),
        ("h2", format!("{}", b.h2)),
        ("h3", format!("{}", b.h3)),
        ("b1", format!("{}", b.b1)),
        ("b2", format!("{}", b.b2)),
        ("mu", opt(r.mu)),
        ("sigma", opt(r.sigma)),
        ("z_score", opt(r.z_score)),
        ("p_normal", opt(r.p_normal)),
        ("r_scale", opt(r.r_scale)),
        ("dof", opt(r.dof)),
        ("p_chisq", opt(r.p_chisq)),
        ("p_bootstrap", opt(r.p_bootstrap)),
        ("bootstrap_replicates", r.bootstrap_replicates.to_string()),
    ];
    let mut s = String::from("key,value\n");
    for (k, v) in rows {
        let _ = writeln!(s, "{k},{v}");
    }
    s
}
