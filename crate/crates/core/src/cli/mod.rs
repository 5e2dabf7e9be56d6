//! Experiment commands behind the `cnce` binary.
//!
//! Each command resolves an [`ExperimentConfig`] against its defaults, runs the
//! experiment, and writes into `<out>/<command>/<config-hash>/` the resolved
//! config (`config.txt`), plot-ready CSVs with 17 significant digits, and a
//! `summary.json`. Outputs depend only on the resolved config, so reruns are
//! bitwise identical whatever the thread count.

mod config;
mod experiments;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

pub use config::{defaults, ExperimentConfig};
pub use experiments::{
    bias_variance_from_scores, counterexample_from_scores, instdisc, phase_study, toy_bias_variance,
    toy_mi_from_scores, toy_ranked_scores, toy_scores, CounterexampleReport, DataSettings, InstdiscReport,
    InstdiscRun, InstdiscSettings, PairedDelta, PhaseReport, Summary, ToyMiReport, ToySettings, Variant,
};

use crate::error::{Error, Result};
use crate::estimators::{EstimateRecord, SupportStats};
use crate::instdisc::write_log_csv;
use crate::samplers::RingSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Command {
    ToyMi,
    BiasVar,
    Counterexample,
    Instdisc,
    PhaseStudy,
}

impl Command {
    pub const ALL: [Command; 5] =
        [Command::ToyMi, Command::BiasVar, Command::Counterexample, Command::Instdisc, Command::PhaseStudy];

    pub fn name(self) -> &'static str {
        match self {
            Command::ToyMi => "toy-mi",
            Command::BiasVar => "bias-var",
            Command::Counterexample => "counterexample",
            Command::Instdisc => "instdisc",
            Command::PhaseStudy => "phase-study",
        }
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Standard deviation column: `n/a` when a single seed leaves it undefined.
fn spread(r: &EstimateRecord) -> String {
    if r.per_seed.len() < 2 { "n/a".into() } else { num(r.std) }
}

/// Runs `cfg`'s command and returns the directory holding its outputs.
pub fn run(cfg: &ExperimentConfig, out_root: &Path) -> Result<PathBuf> {
    let dir = out_root.join(cfg.command().name()).join(cfg.hash());
    let files = match cfg.command() {
        Command::ToyMi => cmd_toy_mi(cfg)?,
        Command::BiasVar => cmd_bias_var(cfg)?,
        Command::Counterexample => cmd_counterexample(cfg)?,
        Command::Instdisc => cmd_instdisc(cfg)?,
        Command::PhaseStudy => cmd_phase_study(cfg)?,
    };
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.txt"), cfg.resolved_text())?;
    for (name, contents) in files {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, contents)?;
    }
    Ok(dir)
}

/// Output files as `(relative path, contents)`.
type Files = Vec<(String, String)>;

fn summary_json<T: Serialize>(cfg: &ExperimentConfig, report: &T) -> Result<String> {
    let value = json!({ "command": cfg.command().name(), "config_hash": cfg.hash(), "report": report });
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

pub fn cmd_toy_mi(cfg: &ExperimentConfig) -> Result<Files> {
    let settings = ToySettings::from_config(cfg)?;
    let omegas: Vec<f64> = cfg.list("toy_mi.omegas")?;
    let scores = toy_scores(&settings, &experiments::seed_list(cfg)?)?;
    let report = toy_mi_from_scores(&scores, settings.k, &omegas)?;
    Ok(vec![("toy_mi.csv".into(), toy_mi_csv(&report)), ("summary.json".into(), summary_json(cfg, &report)?)])
}

pub fn toy_mi_csv(report: &ToyMiReport) -> String {
    let seeds = report.nce.per_seed.len();
    let mut out = String::from("estimator,omega,mean,stdev,seeds\n");
    let _ = writeln!(out, "true,n/a,{},n/a,{seeds}", num(report.true_mi));
    let _ = writeln!(out, "nce,0,{},{},{seeds}", num(report.nce.mean), spread(&report.nce));
    for (w, r) in &report.cnce {
        let _ = writeln!(out, "cnce,{w},{},{},{seeds}", num(r.mean), spread(r));
    }
    out
}

pub fn cmd_bias_var(cfg: &ExperimentConfig) -> Result<Files> {
    let settings = ToySettings::from_config(cfg)?;
    let spec = RingSpec::new(cfg.get("ring.omega_lower")?, cfg.get("ring.omega_upper")?)?;
    let report =
        toy_bias_variance(&settings, cfg.get("run.seed")?, spec, cfg.get("bias.trials")?, cfg.get("bias.anchors")?)?;
    let mut out = String::from("support,bias,variance,trials,se_mean,se_variance\n");
    let mut row = |name: &str, s: &SupportStats| {
        let _ = writeln!(
            out,
            "{name},{},{},{},{},{}",
            num(s.bias),
            num(s.variance),
            s.trials,
            num(s.se_mean),
            num(s.se_variance)
        );
    };
    row("p", &report.p);
    row("q", &report.q);
    if let Some(c) = &report.complement {
        row("complement", c);
    }
    Ok(vec![("bias_var.csv".into(), out), ("summary.json".into(), summary_json(cfg, &report)?)])
}

pub fn cmd_counterexample(cfg: &ExperimentConfig) -> Result<Files> {
    let settings = ToySettings::from_config(cfg)?;
    let fractions: Vec<f64> = cfg.list("counterexample.fractions")?;
    let scores = toy_scores(&settings, &experiments::seed_list(cfg)?)?;
    let report = counterexample_from_scores(&scores, settings.k, &fractions)?;
    let mut out = String::from("estimator,epsilon_fraction,mean,stdev,seeds,min,max\n");
    let _ = writeln!(out, "true,n/a,{},n/a,{},n/a,n/a", num(report.true_mi), scores.len());
    for (e, r) in &report.rows {
        let min = r.per_seed.iter().copied().fold(f64::INFINITY, f64::min);
        let max = r.per_seed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(out, "adversarial,{e},{},{},{},{},{}", num(r.mean), spread(r), r.per_seed.len(), num(min), num(max));
    }
    Ok(vec![("counterexample.csv".into(), out), ("summary.json".into(), summary_json(cfg, &report)?)])
}

pub fn cmd_instdisc(cfg: &ExperimentConfig) -> Result<Files> {
    let settings = InstdiscSettings::from_config(cfg)?;
    let variants: Vec<Variant> = cfg.list("instdisc.variants")?;
    let report = instdisc(&settings, &variants)?;
    let mut files = Files::new();
    let mut finals = String::from("variant,seed,raw_knn,final_knn\n");
    for run in &report.runs {
        let _ = writeln!(finals, "{},{},{},{}", run.variant.name(), run.seed, num(run.raw_knn), num(run.final_knn));
        let mut csv = Vec::new();
        write_log_csv(&run.outcome.log, &mut csv)?;
        let csv = String::from_utf8(csv).map_err(|e| Error::Config(e.to_string()))?;
        files.push((format!("metrics/{}_seed{}.csv", run.variant.name(), run.seed), csv));
    }
    let mut deltas = String::from("variant,baseline,mean_delta,stdev,seeds\n");
    for d in &report.deltas {
        let sd = if d.delta.values.len() < 2 { "n/a".into() } else { num(d.delta.stdev) };
        let _ = writeln!(
            deltas,
            "{},{},{},{sd},{}",
            d.variant.name(),
            d.baseline.name(),
            num(d.delta.mean),
            d.delta.values.len()
        );
    }
    files.push(("final.csv".into(), finals));
    files.push(("deltas.csv".into(), deltas));
    files.push(("summary.json".into(), summary_json(cfg, &report)?));
    Ok(files)
}

pub fn cmd_phase_study(cfg: &ExperimentConfig) -> Result<Files> {
    let settings = InstdiscSettings::from_config(cfg)?;
    let branches: Vec<usize> = cfg.list("phase.branch_epochs")?;
    let omegas: Vec<f64> = cfg.list("phase.omegas")?;
    let report = phase_study(&settings, &branches, &omegas)?;
    let mut grid = String::from("branch_epoch,omega,mean,stdev,seeds\n");
    let mut per_seed = String::from("seed,branch_epoch,omega,accuracy\n");
    for (b, &branch) in report.branch_epochs.iter().enumerate() {
        for (w, &omega) in report.omegas.iter().enumerate() {
            let values: Vec<f64> = report.grids.iter().map(|g| g.accuracy[b][w]).collect();
            let s = Summary::of(values);
            let sd = if s.values.len() < 2 { "n/a".into() } else { num(s.stdev) };
            let _ = writeln!(grid, "{branch},{omega},{},{sd},{}", num(s.mean), s.values.len());
            for (seed, v) in report.seeds.iter().zip(&s.values) {
                let _ = writeln!(per_seed, "{seed},{branch},{omega},{}", num(*v));
            }
        }
    }
    Ok(vec![
        ("phase_grid.csv".into(), grid),
        ("phase_per_seed.csv".into(), per_seed),
        ("summary.json".into(), summary_json(cfg, &report)?),
    ])
}
