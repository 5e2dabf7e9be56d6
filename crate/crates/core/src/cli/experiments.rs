use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use crate::annealing::{Schedule, ScheduleKind};
use crate::error::{Error, Result};
use crate::estimators::{
    bias_variance_ranked, estimate_ranked, fit_pair_critic, BiasVarianceReport, CriticTraining, Estimate,
    EstimateRecord, RankedScores, Support,
};
use crate::gaussian_toy::{sample_pairs, GaussianPairSpec};
use crate::instdisc::{
    hardness_phase_study, knn_accuracy, make_synthetic, train, AugmentationSpec, PhaseGrid, RingMode, RunConfig,
    Split, TrainOutcome,
};
use crate::numerics::{mean, sample_variance, Rng};
use crate::samplers::RingSpec;

/// Substream tags under a toy seed.
const TOY_DATA: u64 = 0;
const TOY_TRAIN: u64 = 1;
const TOY_EVAL: u64 = 2;
const TOY_ESTIMATE: u64 = 3;
const TOY_BIAS: u64 = 4;
/// Substream tags under an instance-discrimination seed.
const ID_DATA: u64 = 10;
const ID_SPLIT: u64 = 11;

pub(crate) fn seed_list(cfg: &ExperimentConfig) -> Result<Vec<u64>> {
    let first: u64 = cfg.get("run.seed")?;
    let count: u64 = cfg.get("run.seeds")?;
    if count == 0 {
        return Err(Error::Config("run.seeds must be at least 1".into()));
    }
    Ok((0..count).map(|i| first.wrapping_add(i)).collect())
}

/// Gaussian toy benchmark: sample size, negatives per anchor and critic training.
#[derive(Clone, Debug, PartialEq)]
pub struct ToySettings {
    pub points: usize,
    pub k: usize,
    pub critic: CriticTraining,
}

impl ToySettings {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            points: cfg.get("toy.points")?,
            k: cfg.get("toy.k")?,
            critic: CriticTraining {
                hidden: cfg.list("critic.hidden")?,
                out_dim: cfg.get("critic.out_dim")?,
                tau: cfg.get("critic.tau")?,
                learning_rate: cfg.get("critic.lr")?,
                batch: cfg.get("critic.batch")?,
                epochs: cfg.get("critic.epochs")?,
            },
        })
    }
}

/// Trains a critic on one sample and ranks its scores on a fresh held-out sample.
pub fn toy_ranked_scores(settings: &ToySettings, seed: u64) -> Result<RankedScores> {
    let spec = GaussianPairSpec::benchmark();
    let data = sample_pairs(&spec, settings.points, &mut Rng::from_stream(seed, TOY_DATA))?;
    let critic = fit_pair_critic(&data, &settings.critic, &mut Rng::from_stream(seed, TOY_TRAIN))?;
    let eval = sample_pairs(&spec, settings.points, &mut Rng::from_stream(seed, TOY_EVAL))?;
    Ok(RankedScores::new(&critic.score_matrix(&eval)?))
}

/// Held-out ranked scores for each seed, in seed order.
pub fn toy_scores(settings: &ToySettings, seeds: &[u64]) -> Result<Vec<(u64, RankedScores)>> {
    seeds.par_iter().map(|&s| toy_ranked_scores(settings, s).map(|r| (s, r))).collect()
}

/// Every support of a sweep shares the seed's estimation stream.
fn record(scores: &[(u64, RankedScores)], k: usize, support: Support) -> Result<EstimateRecord> {
    let estimates: Vec<Estimate> = scores
        .iter()
        .map(|(s, r)| estimate_ranked(r, k, support, &mut Rng::from_stream(*s, TOY_ESTIMATE)))
        .collect::<Result<_>>()?;
    EstimateRecord::from_estimates(&estimates)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ToyMiReport {
    pub true_mi: f64,
    pub nce: EstimateRecord,
    /// `(ω_ℓ, estimate)` with `ω_u = 1`.
    pub cnce: Vec<(f64, EstimateRecord)>,
}

pub fn toy_mi_from_scores(scores: &[(u64, RankedScores)], k: usize, omegas: &[f64]) -> Result<ToyMiReport> {
    let cnce = omegas
        .iter()
        .map(|&w| Ok((w, record(scores, k, Support::Ring(RingSpec::ball(w)?))?)))
        .collect::<Result<_>>()?;
    Ok(ToyMiReport {
        true_mi: GaussianPairSpec::benchmark().mutual_information()?,
        nce: record(scores, k, Support::Marginal)?,
        cnce,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CounterexampleReport {
    pub true_mi: f64,
    /// `(epsilon_fraction, estimate)` in the configured order.
    pub rows: Vec<(f64, EstimateRecord)>,
}

pub fn counterexample_from_scores(
    scores: &[(u64, RankedScores)],
    k: usize,
    fractions: &[f64],
) -> Result<CounterexampleReport> {
    let rows = fractions
        .iter()
        .map(|&e| {
            crate::estimators::check_epsilon(e)?;
            Ok((e, record(scores, k, Support::Bottom(e))?))
        })
        .collect::<Result<_>>()?;
    Ok(CounterexampleReport { true_mi: GaussianPairSpec::benchmark().mutual_information()?, rows })
}

/// Monte Carlo bias and variance of one seed's frozen critic.
pub fn toy_bias_variance(
    settings: &ToySettings,
    seed: u64,
    spec: RingSpec,
    trials: usize,
    anchors: usize,
) -> Result<BiasVarianceReport> {
    let ranked = toy_ranked_scores(settings, seed)?;
    bias_variance_from_scores(&ranked, seed, settings.k, spec, trials, anchors)
}

pub fn bias_variance_from_scores(
    ranked: &RankedScores,
    seed: u64,
    k: usize,
    spec: RingSpec,
    trials: usize,
    anchors: usize,
) -> Result<BiasVarianceReport> {
    let true_mi = GaussianPairSpec::benchmark().mutual_information()?;
    bias_variance_ranked(ranked, k, spec, trials, anchors, true_mi, &mut Rng::from_stream(seed, TOY_BIAS))
}

/// Shape of the synthetic clustered dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DataSettings {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub class_scale: f64,
    pub noise_scale: f64,
}

impl DataSettings {
    /// Dataset and 80/20 split for one seed.
    pub fn splits(&self, seed: u64) -> Result<(Split, Split)> {
        let data = make_synthetic(
            self.classes,
            self.per_class,
            self.dim,
            self.class_scale,
            self.noise_scale,
            &mut Rng::from_stream(seed, ID_DATA),
        )?;
        data.split(&mut Rng::from_stream(seed, ID_SPLIT))
    }
}

fn schedule_from_config(cfg: &ExperimentConfig) -> Result<Schedule> {
    let kind: ScheduleKind = cfg.get("schedule.kind")?;
    let start: f64 = cfg.get("schedule.start")?;
    match kind {
        ScheduleKind::Constant => Schedule::constant(start),
        ScheduleKind::Linear => Schedule::linear(start, cfg.get("schedule.end")?, cfg.get("schedule.horizon")?),
        ScheduleKind::Step => {
            let breakpoints = cfg
                .list::<String>("schedule.breakpoints")?
                .iter()
                .map(|item| {
                    let bad = || Error::Config(format!("breakpoint `{item}` is not `epoch:omega`"));
                    let (e, w) = item.split_once(':').ok_or_else(bad)?;
                    Ok((e.trim().parse().map_err(|_| bad())?, w.trim().parse().map_err(|_| bad())?))
                })
                .collect::<Result<Vec<_>>>()?;
            Schedule::step(start, breakpoints)
        }
        ScheduleKind::AdaptiveValidation | ScheduleKind::AdaptiveLoss => Schedule::adaptive(
            kind,
            start,
            cfg.get("schedule.delta")?,
            cfg.get("schedule.omega_min")?,
            cfg.get("schedule.omega_max")?,
        ),
    }
}

/// Training run derived from one instance-discrimination variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Negatives from the whole store.
    Off,
    /// The configured ring mode and schedule.
    Annealed,
    /// The configured ring mode held at the schedule's final `ω_ℓ` from epoch 0.
    NoAnneal,
    /// A ring spanning `(0, 1)`, equal to `off` in distribution.
    Marginal,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Off => "off",
            Variant::Annealed => "annealed",
            Variant::NoAnneal => "no_anneal",
            Variant::Marginal => "marginal",
        }
    }

    pub fn config(self, base: &RunConfig) -> Result<RunConfig> {
        Ok(match self {
            Variant::Off => RunConfig { ring: RingMode::Off, schedule: Schedule::constant(0.0)?, ..base.clone() },
            Variant::Annealed => base.clone(),
            Variant::NoAnneal => {
                let hard = match base.schedule.kind {
                    ScheduleKind::Constant | ScheduleKind::Linear | ScheduleKind::Step => base.schedule.end_omega,
                    ScheduleKind::AdaptiveValidation | ScheduleKind::AdaptiveLoss => base.schedule.omega_max,
                };
                RunConfig { schedule: Schedule::constant(hard)?, ..base.clone() }
            }
            Variant::Marginal => RunConfig {
                ring: RingMode::Ring,
                omega_upper: 1.0,
                schedule: Schedule::constant(0.0)?,
                ..base.clone()
            },
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "off" => Variant::Off,
            "annealed" => Variant::Annealed,
            "no_anneal" => Variant::NoAnneal,
            "marginal" => Variant::Marginal,
            other => return Err(Error::Config(format!("unknown variant `{other}`"))),
        })
    }
}

/// Everything an instance-discrimination experiment needs besides the variant list.
#[derive(Clone, Debug, PartialEq)]
pub struct InstdiscSettings {
    pub data: DataSettings,
    /// Seed field is overwritten per run.
    pub base: RunConfig,
    pub seeds: Vec<u64>,
}

impl InstdiscSettings {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let data = DataSettings {
            classes: cfg.get("data.classes")?,
            per_class: cfg.get("data.per_class")?,
            dim: cfg.get("data.dim")?,
            class_scale: cfg.get("data.class_scale")?,
            noise_scale: cfg.get("data.noise_scale")?,
        };
        let schedule = match cfg.raw("schedule.kind") {
            Ok(_) => schedule_from_config(cfg)?,
            Err(_) => Schedule::constant(0.0)?,
        };
        let base = RunConfig {
            method: cfg.get("model.method")?,
            ring: cfg.get("ring.mode")?,
            omega_upper: cfg.get("ring.omega_upper")?,
            schedule,
            k: cfg.get("train.k")?,
            tau: cfg.get("train.tau")?,
            lr: cfg.get("opt.lr")?,
            sgd_momentum: cfg.get("opt.momentum")?,
            weight_decay: cfg.get("opt.weight_decay")?,
            moco_m: cfg.get("moco.m")?,
            queue: cfg.get("moco.queue")?,
            epochs: cfg.get("train.epochs")?,
            batch: cfg.get("train.batch")?,
            seed: 0,
            hidden: cfg.list("model.hidden")?,
            out_dim: cfg.get("model.out_dim")?,
            augmentation: AugmentationSpec {
                additive_noise_sigma: cfg.get("aug.noise_sigma")?,
                scale_jitter_range: (cfg.get("aug.scale_lo")?, cfg.get("aug.scale_hi")?),
                dropout_prob: cfg.get("aug.dropout")?,
            },
            kmeans_k: cfg.get("kmeans.k")?,
            kmeans_iters: cfg.get("kmeans.iters")?,
        };
        Ok(Self { data, base, seeds: seed_list(cfg)? })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InstdiscRun {
    pub variant: Variant,
    pub seed: u64,
    /// 1-NN accuracy on the raw inputs.
    pub raw_knn: f64,
    #[serde(skip)]
    pub outcome: TrainOutcome,
    pub final_knn: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; zero for one value.
    pub stdev: f64,
    pub values: Vec<f64>,
}

impl Summary {
    pub fn of(values: Vec<f64>) -> Self {
        Self { mean: mean(&values), stdev: sample_variance(&values).sqrt(), values }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairedDelta {
    pub variant: Variant,
    pub baseline: Variant,
    /// Per-seed `variant − baseline` final accuracies.
    pub delta: Summary,
}

#[derive(Clone, Debug, Serialize)]
pub struct InstdiscReport {
    pub seeds: Vec<u64>,
    pub raw_knn: Summary,
    /// Final accuracies per variant, in the requested order.
    pub finals: Vec<(Variant, Summary)>,
    pub deltas: Vec<PairedDelta>,
    /// Runs in (variant, seed) order.
    pub runs: Vec<InstdiscRun>,
}

impl InstdiscReport {
    pub fn final_mean(&self, variant: Variant) -> Option<f64> {
        self.finals.iter().find(|(v, _)| *v == variant).map(|(_, s)| s.mean)
    }
}

/// Trains every variant on every seed. Runs for one seed share data, views and
/// initialization, so per-seed differences are paired.
pub fn instdisc(settings: &InstdiscSettings, variants: &[Variant]) -> Result<InstdiscReport> {
    if variants.is_empty() {
        return Err(Error::Config("instdisc.variants is empty".into()));
    }
    let splits: Vec<(Split, Split, f64)> = settings
        .seeds
        .par_iter()
        .map(|&s| {
            let (tr, te) = settings.data.splits(s)?;
            let raw = knn_accuracy(&tr.points, &tr.labels, &te.points, &te.labels)?;
            Ok((tr, te, raw))
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(Variant, usize)> =
        variants.iter().flat_map(|&v| (0..settings.seeds.len()).map(move |i| (v, i))).collect();
    let runs: Vec<InstdiscRun> = jobs
        .par_iter()
        .map(|&(variant, i)| {
            let seed = settings.seeds[i];
            let (tr, te, raw_knn) = &splits[i];
            let cfg = RunConfig { seed, ..variant.config(&settings.base)? };
            let outcome = train(&cfg, tr, te)?;
            Ok(InstdiscRun { variant, seed, raw_knn: *raw_knn, final_knn: outcome.final_accuracy(), outcome })
        })
        .collect::<Result<_>>()?;
    let finals_of = |v: Variant| -> Vec<f64> { runs.iter().filter(|r| r.variant == v).map(|r| r.final_knn).collect() };
    let finals = variants.iter().map(|&v| (v, Summary::of(finals_of(v)))).collect();
    let mut pairs: Vec<(Variant, Variant)> = Vec::new();
    if variants.contains(&Variant::Off) {
        pairs.extend(variants.iter().filter(|&&v| v != Variant::Off).map(|&v| (v, Variant::Off)));
    }
    if variants.contains(&Variant::Annealed) && variants.contains(&Variant::NoAnneal) {
        pairs.push((Variant::Annealed, Variant::NoAnneal));
    }
    let deltas = pairs
        .into_iter()
        .map(|(variant, baseline)| {
            let d = finals_of(variant).iter().zip(finals_of(baseline)).map(|(a, b)| a - b).collect();
            PairedDelta { variant, baseline, delta: Summary::of(d) }
        })
        .collect();
    Ok(InstdiscReport {
        seeds: settings.seeds.clone(),
        raw_knn: Summary::of(splits.iter().map(|s| s.2).collect()),
        finals,
        deltas,
        runs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseReport {
    pub seeds: Vec<u64>,
    pub branch_epochs: Vec<usize>,
    pub omegas: Vec<f64>,
    /// Per-seed grids in seed order.
    pub grids: Vec<PhaseGrid>,
    /// `mean[b][w]` across seeds.
    pub mean: Vec<Vec<f64>>,
}

impl PhaseReport {
    /// Whether the hardest `ω` (the last listed) has the strictly lowest mean accuracy at branch `b`.
    pub fn hardest_is_worst(&self, b: usize) -> bool {
        let row = &self.mean[b];
        let (last, rest) = row.split_last().expect("omegas are nonempty");
        rest.iter().all(|v| last < v)
    }
}

pub fn phase_study(settings: &InstdiscSettings, branch_epochs: &[usize], omegas: &[f64]) -> Result<PhaseReport> {
    if omegas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("phase.omegas must be strictly increasing".into()));
    }
    let grids: Vec<PhaseGrid> = settings
        .seeds
        .par_iter()
        .map(|&s| {
            let (tr, te) = settings.data.splits(s)?;
            hardness_phase_study(&RunConfig { seed: s, ..settings.base.clone() }, &tr, &te, branch_epochs, omegas)
        })
        .collect::<Result<_>>()?;
    let mean = (0..branch_epochs.len())
        .map(|b| (0..omegas.len()).map(|w| crate::numerics::mean(&grids.iter().map(|g| g.accuracy[b][w]).collect::<Vec<_>>())).collect())
        .collect();
    Ok(PhaseReport {
        seeds: settings.seeds.clone(),
        branch_epochs: branch_epochs.to_vec(),
        omegas: omegas.to_vec(),
        grids,
        mean,
    })
}
