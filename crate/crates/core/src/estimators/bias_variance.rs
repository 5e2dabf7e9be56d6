use rayon::prelude::*;
use serde::Serialize;

use super::{anchor_terms, check_k, PairCritic, RankedScores, Support};
use crate::error::{Error, Result};
use crate::gaussian_toy::PairDataset;
use crate::numerics::{mean, sample_variance, Rng};
use crate::samplers::RingSpec;

/// Monte Carlo moments of the anchor-averaged term `Z` under one negative distribution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupportStats {
    pub mean: f64,
    pub variance: f64,
    /// `mean − true MI`.
    pub bias: f64,
    pub se_mean: f64,
    /// Large-sample standard error of `variance`, `sqrt((m₄ − s⁴) / T)`.
    pub se_variance: f64,
    pub trials: usize,
}

impl SupportStats {
    fn from_samples(samples: &[f64], true_mi: f64) -> Self {
        let t = samples.len() as f64;
        let m = mean(samples);
        let var = sample_variance(samples);
        let m4 = samples.iter().map(|z| (z - m).powi(4)).sum::<f64>() / t;
        Self {
            mean: m,
            variance: var,
            bias: m - true_mi,
            se_mean: (var / t).sqrt(),
            se_variance: ((m4 - var * var).max(0.0) / t).sqrt(),
            trials: samples.len(),
        }
    }
}

/// Marginal (`p`), ring (`q`) and ring-complement statistics for one frozen critic.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiasVarianceReport {
    pub p: SupportStats,
    pub q: SupportStats,
    /// `None` when the ring covers every candidate.
    pub complement: Option<SupportStats>,
    pub spec: RingSpec,
    pub k: usize,
    pub anchors: usize,
    pub true_mi: f64,
}

impl BiasVarianceReport {
    /// The variance-domination premise `Var_q ≤ Var_{complement}`, when measurable.
    pub fn premise_holds(&self) -> Option<bool> {
        self.complement.as_ref().map(|c| self.q.variance <= c.variance)
    }
}

fn trial_samples(
    ranked: &RankedScores,
    anchors: &[usize],
    k: usize,
    support: &Support,
    trials: usize,
    base: u64,
) -> Result<Vec<f64>> {
    support.ranges(ranked.candidates())?;
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = Rng::from_stream(base, t as u64).next_u64();
            anchor_terms(ranked, anchors, k, support, seed).map(|terms| mean(&terms))
        })
        .collect()
}

/// Resamples the negatives `trials` times for the first `anchors` anchors.
pub fn bias_variance_ranked(
    ranked: &RankedScores,
    k: usize,
    spec: RingSpec,
    trials: usize,
    anchors: usize,
    true_mi: f64,
    rng: &mut Rng,
) -> Result<BiasVarianceReport> {
    check_k(k, ranked.anchors())?;
    if trials < 100 {
        return Err(Error::InvalidParameter(format!("need at least 100 trials, got {trials}")));
    }
    if anchors == 0 || anchors > ranked.anchors() {
        return Err(Error::InvalidParameter(format!("anchor count {anchors} outside 1..={}", ranked.anchors())));
    }
    let anchor_set: Vec<usize> = (0..anchors).collect();
    let (base_p, base_q, base_c) = (rng.next_u64(), rng.next_u64(), rng.next_u64());
    let p = trial_samples(ranked, &anchor_set, k, &Support::Marginal, trials, base_p)?;
    let q = trial_samples(ranked, &anchor_set, k, &Support::Ring(spec), trials, base_q)?;
    let complement = match trial_samples(ranked, &anchor_set, k, &Support::RingComplement(spec), trials, base_c) {
        Ok(samples) => Some(SupportStats::from_samples(&samples, true_mi)),
        Err(Error::EmptySupport { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(BiasVarianceReport {
        p: SupportStats::from_samples(&p, true_mi),
        q: SupportStats::from_samples(&q, true_mi),
        complement,
        spec,
        k,
        anchors,
        true_mi,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn bias_variance(
    dataset: &PairDataset,
    critic: &PairCritic,
    k: usize,
    spec: RingSpec,
    trials: usize,
    anchors: usize,
    true_mi: f64,
    rng: &mut Rng,
) -> Result<BiasVarianceReport> {
    let ranked = RankedScores::new(&critic.score_matrix(dataset)?);
    bias_variance_ranked(&ranked, k, spec, trials, anchors, true_mi, rng)
}
