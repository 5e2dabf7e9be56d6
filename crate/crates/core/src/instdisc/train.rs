use serde::Serialize;

use super::data::{augment, knn_accuracy, AugmentationSpec, Split};
use crate::annealing::{omega_at, FeedbackSignal, Schedule, ScheduleKind, SignalKind};
use crate::encoder::{nce_loss, set_ratio_loss, Mlp, MomentumEncoder, Optimizer};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};
use crate::samplers::{
    cave_select, close_neighbor_set, kmeans, ring_select, sample_negatives, ClusterAssignment, FifoQueue,
    MemoryBank, RingSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Memory-bank instance discrimination.
    Ir,
    /// Momentum encoder with a FIFO queue of keys.
    Moco,
    /// Local aggregation: the anchor's k-means cell joins the positives.
    La,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RingMode {
    Off,
    Ring,
    Ball,
    Cave,
    RingPlusClose,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ir" => Self::Ir,
            "moco" => Self::Moco,
            "la" => Self::La,
            other => return Err(Error::Config(format!("unknown method `{other}`"))),
        })
    }
}

impl std::str::FromStr for RingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "off" => Self::Off,
            "ring" => Self::Ring,
            "ball" => Self::Ball,
            "cave" => Self::Cave,
            "ring_plus_close" => Self::RingPlusClose,
            other => return Err(Error::Config(format!("unknown ring mode `{other}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub method: Method,
    pub ring: RingMode,
    /// Upper rank threshold for `ring` and `ring_plus_close`; the lower one
    /// comes from `schedule`.
    pub omega_upper: f64,
    pub schedule: Schedule,
    /// Negatives per anchor for the memory-bank methods.
    pub k: usize,
    pub tau: f64,
    pub lr: f64,
    pub sgd_momentum: f64,
    pub weight_decay: f64,
    /// Momentum-encoder coefficient `m`.
    pub moco_m: f64,
    pub queue: usize,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub out_dim: usize,
    pub augmentation: AugmentationSpec,
    pub kmeans_k: usize,
    pub kmeans_iters: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Ir,
            ring: RingMode::Off,
            omega_upper: 1.0,
            schedule: Schedule::constant(0.0).expect("valid"),
            k: 64,
            tau: 0.1,
            lr: 0.03,
            sgd_momentum: 0.9,
            weight_decay: 1e-4,
            moco_m: 0.99,
            queue: 256,
            epochs: 100,
            batch: 64,
            seed: 0,
            hidden: vec![64],
            out_dim: 32,
            augmentation: AugmentationSpec {
                additive_noise_sigma: 0.2,
                scale_jitter_range: (0.8, 1.2),
                dropout_prob: 0.1,
            },
            kmeans_k: 8,
            kmeans_iters: 20,
        }
    }
}

impl RunConfig {
    /// Upper threshold in effect, or `None` when negatives are not rank-selected.
    fn ring_upper(&self) -> Option<f64> {
        match self.ring {
            RingMode::Ring | RingMode::RingPlusClose => Some(self.omega_upper),
            RingMode::Ball => Some(1.0),
            RingMode::Off | RingMode::Cave => None,
        }
    }

    fn uses_clusters(&self) -> bool {
        self.method == Method::La || matches!(self.ring, RingMode::Cave | RingMode::RingPlusClose)
    }

    fn uses_close_positives(&self) -> bool {
        self.method == Method::La || self.ring == RingMode::RingPlusClose
    }

    fn check_schedule(&self, schedule: &Schedule, candidates: usize) -> Result<()> {
        if let Some(upper) = self.ring_upper() {
            schedule.check_fits(upper, 2.0 / candidates as f64)?;
        }
        Ok(())
    }

    pub fn validate(&self, n_train: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if n_train < 2 {
            return bad(format!("need at least 2 training points, got {n_train}"));
        }
        if !(self.tau > 0.0) {
            return bad(format!("temperature must be positive, got {}", self.tau));
        }
        if !(self.lr >= 0.0) || self.batch == 0 || self.out_dim == 0 {
            return bad("learning rate must be non-negative, batch and out_dim positive".into());
        }
        if !(0.0..=1.0).contains(&self.omega_upper) {
            return bad(format!("omega_upper {} outside [0, 1]", self.omega_upper));
        }
        self.augmentation.validate()?;
        match self.method {
            Method::Moco => {
                if self.queue < self.batch {
                    return bad(format!("queue {} cannot be smaller than the batch {}", self.queue, self.batch));
                }
                if matches!(self.ring, RingMode::Cave | RingMode::RingPlusClose) {
                    return bad(format!("{:?} needs a memory bank, not a queue", self.ring));
                }
                if !(0.0..=1.0).contains(&self.moco_m) {
                    return bad(format!("momentum coefficient {} outside [0, 1]", self.moco_m));
                }
            }
            Method::Ir | Method::La => {
                if self.k == 0 || self.k >= n_train {
                    return bad(format!("need 1 <= k < {n_train}, got {}", self.k));
                }
                if self.method == Method::La && self.ring != RingMode::Off {
                    return bad("la samples its background from the whole bank; use ir with ring_plus_close".into());
                }
            }
        }
        if self.uses_clusters() && (self.kmeans_k == 0 || self.kmeans_k > n_train) {
            return bad(format!("kmeans_k {} outside 1..={n_train}", self.kmeans_k));
        }
        let candidates = if self.method == Method::Moco { self.queue } else { n_train - 1 };
        self.check_schedule(&self.schedule, candidates)
    }
}

/// One row of the per-epoch metrics log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub omega_lower: f64,
    pub knn_acc: f64,
}

/// Embeds both splits with `encoder` and scores 1-NN accuracy in embedding space.
pub fn knn_eval(encoder: &Mlp, train: &Split, test: &Split) -> Result<f64> {
    let embed = |s: &Split| -> Result<Matrix> {
        let rows = s.points.iter_rows().map(|r| encoder.forward(r).map(|e| e.into_vec())).collect::<Result<Vec<_>>>()?;
        Matrix::from_rows(&rows)
    };
    if train.is_empty() || test.is_empty() {
        return Err(Error::Empty("1-NN split"));
    }
    knn_accuracy(&embed(train)?, &train.labels, &embed(test)?, &test.labels)
}

// Substream tags under the run seed.
const INIT: u64 = 0;
const ORDER: u64 = 1;
const VIEWS: u64 = 2;
const NEGATIVES: u64 = 3;
const CLUSTERS: u64 = 4;

/// Resumable training state. Cloning a trainer forks the run: both copies
/// continue with identical random streams.
#[derive(Clone, Debug)]
pub struct Trainer {
    cfg: RunConfig,
    points: Matrix,
    encoder: Mlp,
    key_encoder: Option<MomentumEncoder>,
    optimizer: Optimizer,
    bank: MemoryBank,
    queue: Option<FifoQueue>,
    clusters: Option<ClusterAssignment>,
    schedule: Schedule,
    seeds: [u64; 5],
    epoch: usize,
    step: u64,
    empty_close_sets: usize,
    log: Vec<EpochLog>,
}

struct StepOutput {
    loss: f64,
    embeddings: Vec<(usize, Vec<f64>)>,
    keys: Vec<Vec<f64>>,
}

impl Trainer {
    /// Only the training inputs are handed over; labels never reach the objective.
    pub fn new(cfg: RunConfig, points: Matrix) -> Result<Self> {
        cfg.validate(points.rows())?;
        let seeds = [INIT, ORDER, VIEWS, NEGATIVES, CLUSTERS].map(|tag| Rng::from_stream(cfg.seed, tag).next_u64());
        let mut rng = Rng::new(seeds[0]);
        let mut dims = vec![points.cols()];
        dims.extend_from_slice(&cfg.hidden);
        dims.push(cfg.out_dim);
        let encoder = Mlp::new(&dims, &mut rng)?;
        let bank = MemoryBank::random(points.rows(), cfg.out_dim, &mut rng);
        let (key_encoder, queue) = if cfg.method == Method::Moco {
            (
                Some(MomentumEncoder::new(&encoder, cfg.moco_m)?),
                Some(FifoQueue::random_filled(cfg.queue, cfg.out_dim, &mut rng)?),
            )
        } else {
            (None, None)
        };
        let optimizer = Optimizer::sgd(cfg.lr, cfg.sgd_momentum, cfg.weight_decay, encoder.params().len());
        let schedule = cfg.schedule.clone();
        Ok(Self {
            cfg,
            points,
            encoder,
            key_encoder,
            optimizer,
            bank,
            queue,
            clusters: None,
            schedule,
            seeds,
            epoch: 0,
            step: 0,
            empty_close_sets: 0,
            log: Vec::new(),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn key_encoder(&self) -> Option<&Mlp> {
        self.key_encoder.as_ref().map(MomentumEncoder::encoder)
    }

    pub fn bank(&self) -> &MemoryBank {
        &self.bank
    }

    pub fn queue(&self) -> Option<&FifoQueue> {
        self.queue.as_ref()
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn log(&self) -> &[EpochLog] {
        &self.log
    }

    /// Anchors whose close-neighbour set was empty, so only the anchor's own
    /// entry served as a positive.
    pub fn empty_close_sets(&self) -> usize {
        self.empty_close_sets
    }

    /// Replaces the threshold schedule from the current epoch on.
    pub fn set_schedule(&mut self, schedule: Schedule) -> Result<()> {
        let candidates = if self.cfg.method == Method::Moco { self.cfg.queue } else { self.points.rows() - 1 };
        self.cfg.check_schedule(&schedule, candidates)?;
        self.cfg.schedule = schedule.clone();
        self.schedule = schedule;
        Ok(())
    }

    /// The two augmented views of each batch member for the next step.
    pub fn batch_views(&self, batch: &[usize]) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut rng = Rng::from_stream(self.seeds[2], self.step);
        batch
            .iter()
            .map(|&i| {
                let x = self.points.row(i);
                let a = augment(x, &self.cfg.augmentation, &mut rng);
                let b = augment(x, &self.cfg.augmentation, &mut rng);
                (a, b)
            })
            .collect()
    }

    fn ring_spec(&self, omega: f64) -> Result<Option<RingSpec>> {
        self.cfg.ring_upper().map(|upper| RingSpec::new(omega, upper)).transpose()
    }

    fn bank_negatives(&self, i: usize, z: &[f64], spec: Option<&RingSpec>, rng: &mut Rng) -> Result<Vec<usize>> {
        let n = self.bank.len();
        match (self.cfg.ring, spec) {
            (RingMode::Cave, _) => {
                let clusters = self.clusters.as_ref().expect("clusters computed at epoch start");
                sample_negatives(&cave_select(i, clusters)?, self.cfg.k, rng)
            }
            (_, Some(spec)) => {
                let support = ring_select(z, self.bank.entries(), spec, self.cfg.tau, Some(i))?;
                sample_negatives(&support, self.cfg.k, rng)
            }
            (_, None) => Ok((0..self.cfg.k)
                .map(|_| {
                    let j = rng.below(n - 1);
                    if j >= i { j + 1 } else { j }
                })
                .collect()),
        }
    }

    fn close_positives(&mut self, i: usize) -> Result<Vec<usize>> {
        let clusters = self.clusters.as_ref().expect("clusters computed at epoch start");
        let close = close_neighbor_set(i, clusters)?;
        if close.is_empty() {
            self.empty_close_sets += 1;
        }
        Ok(close)
    }

    fn compute_step(&mut self, batch: &[usize], omega: f64) -> Result<StepOutput> {
        let views = self.batch_views(batch);
        let spec = self.ring_spec(omega)?;
        let mut rng = Rng::from_stream(self.seeds[3], self.step);
        let queue_matrix = self.queue.as_ref().map(FifoQueue::to_matrix);
        let mut grads = vec![0.0; self.encoder.params().len()];
        let mut total = 0.0;
        let mut embeddings = Vec::with_capacity(batch.len());
        let mut keys = Vec::new();
        for (&i, (v1, v2)) in batch.iter().zip(&views) {
            let (z, cache) = self.encoder.forward_cached(v1)?;
            let loss = match &queue_matrix {
                Some(queue) => {
                    let key = self.key_encoder.as_ref().expect("moco has a key encoder").encoder().forward(v2)?;
                    let negatives: Vec<&[f64]> = match &spec {
                        Some(spec) => ring_select(&z, queue, spec, self.cfg.tau, None)?
                            .into_iter()
                            .map(|j| queue.row(j))
                            .collect(),
                        None => queue.iter_rows().collect(),
                    };
                    let l = nce_loss(&z, &key, &negatives, self.cfg.tau)?;
                    keys.push(key.into_vec());
                    l
                }
                None => {
                    let close = if self.cfg.uses_close_positives() { Some(self.close_positives(i)?) } else { None };
                    let negs = self.bank_negatives(i, &z, spec.as_ref(), &mut rng)?;
                    let negatives: Vec<&[f64]> = negs.iter().map(|&j| self.bank.row(j)).collect();
                    if let Some(close) = close {
                        let numerator: Vec<&[f64]> =
                            std::iter::once(i).chain(close).map(|j| self.bank.row(j)).collect();
                        let denominator: Vec<&[f64]> = numerator.iter().chain(&negatives).copied().collect();
                        set_ratio_loss(&z, &numerator, &denominator, self.cfg.tau)?
                    } else {
                        nce_loss(&z, self.bank.row(i), &negatives, self.cfg.tau)?
                    }
                }
            };
            self.encoder.backward_into(&cache, &loss.grad, &mut grads);
            total += loss.loss;
            embeddings.push((i, z.into_vec()));
        }
        let scale = 1.0 / batch.len() as f64;
        grads.iter_mut().for_each(|g| *g *= scale);
        let loss = total * scale;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch: self.epoch, detail: format!("loss {loss} at step {}", self.step) });
        }
        self.optimizer.step(self.encoder.params_mut(), &grads)?;
        Ok(StepOutput { loss, embeddings, keys })
    }

    /// One optimizer step on `batch` (indices into the training points) with
    /// lower threshold `omega`. Returns the mean loss over the batch.
    pub fn step(&mut self, batch: &[usize], omega: f64) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        if let Some(&bad) = batch.iter().find(|&&i| i >= self.points.rows()) {
            return Err(Error::IndexOutOfRange { index: bad, len: self.points.rows() });
        }
        if self.cfg.uses_clusters() && self.clusters.is_none() {
            self.refresh_clusters()?;
        }
        let out = self.compute_step(batch, omega)?;
        for (i, z) in &out.embeddings {
            self.bank.update(*i, z)?;
        }
        if let (Some(key_enc), Some(queue)) = (self.key_encoder.as_mut(), self.queue.as_mut()) {
            key_enc.update(&self.encoder)?;
            for key in &out.keys {
                queue.enqueue(key)?;
            }
        }
        self.step += 1;
        Ok(out.loss)
    }

    fn refresh_clusters(&mut self) -> Result<()> {
        let mut rng = Rng::from_stream(self.seeds[4], self.epoch as u64);
        self.clusters = Some(kmeans(self.bank.entries(), self.cfg.kmeans_k, self.cfg.kmeans_iters, &mut rng)?);
        Ok(())
    }

    fn epoch_omega(&self) -> Result<f64> {
        if self.cfg.ring_upper().is_none() {
            return Ok(0.0);
        }
        if self.schedule.kind.is_adaptive() {
            Ok(self.schedule.current())
        } else {
            omega_at(&self.schedule, self.epoch, None)
        }
    }

    /// One pass over the training points, then a 1-NN evaluation on `train` and
    /// `test`. The validation-adaptive schedule consumes that accuracy.
    pub fn run_epoch(&mut self, train: &Split, test: &Split) -> Result<EpochLog> {
        if self.cfg.uses_clusters() {
            self.refresh_clusters()?;
        }
        let omega = self.epoch_omega()?;
        let mut order: Vec<usize> = (0..self.points.rows()).collect();
        Rng::from_stream(self.seeds[1], self.epoch as u64).shuffle(&mut order);
        let mut total = 0.0;
        let mut batches = 0;
        for batch in order.chunks(self.cfg.batch) {
            let w = if self.schedule.kind == ScheduleKind::AdaptiveLoss && self.cfg.ring_upper().is_some() {
                self.schedule.current()
            } else {
                omega
            };
            let loss = self.step(batch, w)?;
            if self.schedule.kind == ScheduleKind::AdaptiveLoss {
                let signal = FeedbackSignal { kind: SignalKind::NegativeTrainingLoss, value: -loss, index: self.step as usize };
                self.schedule.adaptive_update(signal)?;
            }
            total += loss;
            batches += 1;
        }
        let knn_acc = knn_eval(&self.encoder, train, test)?;
        if self.schedule.kind == ScheduleKind::AdaptiveValidation {
            let signal = FeedbackSignal { kind: SignalKind::ValidationAccuracy, value: knn_acc, index: self.epoch };
            self.schedule.adaptive_update(signal)?;
        }
        let entry = EpochLog { epoch: self.epoch, loss: total / batches as f64, omega_lower: omega, knn_acc };
        self.log.push(entry);
        self.epoch += 1;
        Ok(entry)
    }

    /// Runs epochs until `epochs` have completed in total.
    pub fn run_until(&mut self, epochs: usize, train: &Split, test: &Split) -> Result<()> {
        while self.epoch < epochs {
            self.run_epoch(train, test)?;
        }
        Ok(())
    }
}

/// Result of a full training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub encoder: Mlp,
    pub log: Vec<EpochLog>,
    pub empty_close_sets: usize,
}

impl TrainOutcome {
    pub fn final_accuracy(&self) -> f64 {
        self.log.last().map_or(f64::NAN, |e| e.knn_acc)
    }
}

/// Trains on `train.points` for `config.epochs` epochs, logging 1-NN accuracy
/// against `test` after each one.
pub fn train(config: &RunConfig, train: &Split, test: &Split) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config.clone(), train.points.clone())?;
    trainer.run_until(config.epochs, train, test)?;
    Ok(TrainOutcome {
        encoder: trainer.encoder.clone(),
        log: trainer.log.clone(),
        empty_close_sets: trainer.empty_close_sets,
    })
}

/// Writes `epoch,loss,omega_lower,knn_acc` rows with round-trip float formatting.
pub fn write_log_csv<W: std::io::Write>(log: &[EpochLog], mut out: W) -> Result<()> {
    writeln!(out, "epoch,loss,omega_lower,knn_acc")?;
    for e in log {
        writeln!(out, "{},{:.16e},{:.16e},{:.16e}", e.epoch, e.loss, e.omega_lower, e.knn_acc)?;
    }
    Ok(())
}
