use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::Command;
use crate::error::{Error, Result};

const RUN_SEEDS: &[(&str, &str)] = &[("run.seed", "0"), ("run.seeds", "5")];

const TOY: &[(&str, &str)] = &[
    ("toy.points", "2000"),
    ("toy.k", "100"),
    ("critic.hidden", "10,10,10,10"),
    ("critic.out_dim", "10"),
    ("critic.tau", "0.5"),
    ("critic.lr", "0.03"),
    ("critic.batch", "128"),
    ("critic.epochs", "100"),
];

const INSTDISC: &[(&str, &str)] = &[
    ("data.classes", "8"),
    ("data.per_class", "100"),
    ("data.dim", "16"),
    ("data.class_scale", "1.0"),
    ("data.noise_scale", "0.25"),
    ("model.method", "ir"),
    ("model.hidden", "64"),
    ("model.out_dim", "32"),
    ("opt.lr", "0.03"),
    ("opt.momentum", "0.9"),
    ("opt.weight_decay", "0.0001"),
    ("train.k", "64"),
    ("train.tau", "0.1"),
    ("train.epochs", "100"),
    ("train.batch", "64"),
    ("moco.m", "0.99"),
    ("moco.queue", "256"),
    ("aug.noise_sigma", "0.2"),
    ("aug.scale_lo", "0.8"),
    ("aug.scale_hi", "1.2"),
    ("aug.dropout", "0.1"),
    ("kmeans.k", "8"),
    ("kmeans.iters", "20"),
];

const INSTDISC_ONLY: &[(&str, &str)] = &[
    ("ring.mode", "ring"),
    ("ring.omega_upper", "0.875"),
    ("schedule.kind", "linear"),
    ("schedule.start", "0.0"),
    ("schedule.end", "0.85"),
    ("schedule.horizon", "50"),
    ("schedule.breakpoints", ""),
    ("schedule.delta", "0.05"),
    ("schedule.omega_min", "0.0"),
    ("schedule.omega_max", "0.85"),
    ("instdisc.variants", "off,annealed,no_anneal"),
];

const PHASE_ONLY: &[(&str, &str)] = &[
    ("ring.mode", "ball"),
    ("ring.omega_upper", "1.0"),
    ("phase.branch_epochs", "0,50,90"),
    ("phase.omegas", "0,0.5,0.75,0.9"),
];

/// Every key a command accepts, with its default value.
pub fn defaults(command: Command) -> Vec<(&'static str, &'static str)> {
    let tables: &[&[(&'static str, &'static str)]] = match command {
        Command::ToyMi => &[RUN_SEEDS, TOY, &[("toy_mi.omegas", "0.1,0.25,0.5,0.75,0.9,0.95")]],
        Command::BiasVar => &[
            &[("run.seed", "0")],
            TOY,
            &[
                ("ring.omega_lower", "0.5"),
                ("ring.omega_upper", "1.0"),
                ("bias.trials", "10000"),
                ("bias.anchors", "200"),
            ],
        ],
        Command::Counterexample => &[RUN_SEEDS, TOY, &[("counterexample.fractions", "1,0.5,0.2,0.1,0.05")]],
        Command::Instdisc => &[RUN_SEEDS, INSTDISC, INSTDISC_ONLY],
        Command::PhaseStudy => &[RUN_SEEDS, INSTDISC, PHASE_ONLY],
    };
    tables.iter().flat_map(|t| t.iter().copied()).collect()
}

/// Flat `key = value` configuration resolved against a command's defaults.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExperimentConfig {
    command: Command,
    values: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn defaults(command: Command) -> Self {
        let values = defaults(command).into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        Self { command, values }
    }

    /// Parses `text` over the defaults. Unknown and repeated keys are errors.
    pub fn parse(command: Command, text: &str) -> Result<Self> {
        let mut cfg = Self::defaults(command);
        let mut seen = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
            let key = key.trim();
            if let Some(prev) = seen.insert(key.to_string(), n + 1) {
                return Err(Error::Config(format!("line {}: key `{key}` already set on line {prev}", n + 1)));
            }
            cfg.set(key, value.trim()).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn command(&self) -> Command {
        self.command
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown key `{key}` for command {}", self.command.name()))),
        }
    }

    pub fn raw(&self, key: &str) -> Result<&str> {
        self.values
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Config(format!("key `{key}` is not defined for command {}", self.command.name())))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.raw(key)?;
        raw.parse().map_err(|_| Error::Config(format!("invalid value `{raw}` for key `{key}`")))
    }

    /// Comma-separated list; an empty value is an empty list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self.raw(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|item| {
                let item = item.trim();
                item.parse().map_err(|_| Error::Config(format!("invalid list item `{item}` for key `{key}`")))
            })
            .collect()
    }

    /// Every key with its value, sorted, in the same format the parser reads.
    pub fn resolved_text(&self) -> String {
        let mut out = format!("# cnce {}\n", self.command.name());
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Hex SHA-256 of the resolved text, truncated to 16 characters.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.resolved_text().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
