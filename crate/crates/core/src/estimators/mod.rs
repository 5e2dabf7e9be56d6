//! Noise-contrastive mutual information lower bounds.
//!
//! Every estimate uses the mean-normalized term with the positive included in
//! the denominator,
//!
//! ```text
//! s⁺ − log( (e^{s⁺} + Σ_j e^{s_j}) / (k + 1) )
//! ```
//!
//! so each term is at most `ln(k + 1)`. Averaging over `k` terms instead
//! (positive counted among them) shifts every value by the constant
//! `ln((k + 1) / k)`; [`TermConvention::offset_to_k_terms`] reports it.
//!
//! Negatives for anchor `i` are drawn from the `n − 1` other candidates sorted
//! by score. Draw `r` of anchor `i` uses the same uniform `u` for every support
//! (stream `i` of the estimate's base seed) and lands at position `⌊u·|S|⌋` of
//! the support `S`. Because ring supports are top slices of the same sorted
//! list, that coupling makes sweeps over `ω_ℓ` directly comparable.

mod bias_variance;
mod critic;

use rayon::prelude::*;
use serde::Serialize;

use crate::encoder::similarity;
use crate::error::{Error, Result};
use crate::gaussian_toy::PairDataset;
use crate::numerics::{logsumexp, mean, sample_variance, Matrix, Rng};
use crate::samplers::{fraction_floor, position, RingSpec};

pub use bias_variance::{bias_variance, bias_variance_ranked, BiasVarianceReport, SupportStats};
pub use critic::{fit_pair_critic, CriticTraining, PairCritic, RankedScores, ScoreMatrix};

/// How many terms the denominator averages over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TermConvention {
    /// `k` negatives plus the positive, averaged over `k + 1`.
    PositiveIncluded,
}

impl TermConvention {
    pub fn term_count(&self, k: usize) -> usize {
        match self {
            TermConvention::PositiveIncluded => k + 1,
        }
    }

    /// Amount to add to convert an estimate to the `k`-term normalization.
    pub fn offset_to_k_terms(&self, k: usize) -> f64 {
        ((k + 1) as f64 / k as f64).ln()
    }
}

/// Which candidates the negatives are drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Support {
    /// Every other candidate.
    Marginal,
    /// Rank slice `[⌊ω_ℓ·m⌋, ⌊ω_u·m⌋)` of the `m` sorted candidates.
    Ring(RingSpec),
    /// Everything outside the ring slice.
    RingComplement(RingSpec),
    /// The lowest-scoring `⌊ε·m⌋` candidates; not a valid bound.
    Bottom(f64),
}

impl Support {
    /// Position ranges (into the ascending-sorted candidates) forming the support.
    pub(crate) fn ranges(&self, m: usize) -> Result<Vec<std::ops::Range<usize>>> {
        let ranges = match self {
            Support::Marginal => vec![0..m],
            Support::Ring(spec) => {
                let (lo, hi) = spec.slice_bounds(m);
                vec![lo..hi]
            }
            Support::RingComplement(spec) => {
                let (lo, hi) = spec.slice_bounds(m);
                vec![0..lo, hi..m]
            }
            Support::Bottom(eps) => vec![0..fraction_floor(*eps, m)],
        };
        let size: usize = ranges.iter().map(|r| r.len()).sum();
        if size == 0 {
            let (lo, hi) = ranges.first().map_or((0, 0), |r| (r.start, r.end));
            return Err(Error::EmptySupport { lo, hi, n: m });
        }
        Ok(ranges.into_iter().filter(|r| !r.is_empty()).collect())
    }

    pub fn omega(&self) -> Option<RingSpec> {
        match self {
            Support::Ring(s) | Support::RingComplement(s) => Some(*s),
            _ => None,
        }
    }
}

/// Maps a uniform draw onto a support made of disjoint position ranges.
pub(crate) fn support_position(ranges: &[std::ops::Range<usize>], u: f64) -> usize {
    let size: usize = ranges.iter().map(|r| r.len()).sum();
    let mut p = position(u, size);
    for r in ranges {
        if p < r.len() {
            return r.start + p;
        }
        p -= r.len();
    }
    unreachable!("position is below the support size")
}

/// `s⁺ − logsumexp({s⁺} ∪ negatives) + ln(k + 1)`.
pub fn nce_term(pos_sim: f64, neg_sims: &[f64]) -> Result<f64> {
    if neg_sims.is_empty() {
        return Err(Error::NoNegatives("NCE term needs at least one negative".into()));
    }
    if !pos_sim.is_finite() {
        return Err(Error::NonFinite("positive score"));
    }
    let mut all = Vec::with_capacity(neg_sims.len() + 1);
    all.push(pos_sim);
    all.extend_from_slice(neg_sims);
    Ok(pos_sim - logsumexp(&all)? + (all.len() as f64).ln())
}

/// One estimate over a fixed anchor set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Estimate {
    /// Mean term over anchors (nats).
    pub value: f64,
    /// Standard deviation of the per-anchor terms.
    pub anchor_std: f64,
    pub anchors: usize,
    pub k: usize,
    pub support: Support,
    pub convention: TermConvention,
}

impl Estimate {
    pub fn term_count(&self) -> usize {
        self.convention.term_count(self.k)
    }
}

/// Per-anchor terms with negatives drawn from `support`.
pub(crate) fn anchor_terms(
    ranked: &RankedScores,
    anchors: &[usize],
    k: usize,
    support: &Support,
    base_seed: u64,
) -> Result<Vec<f64>> {
    let ranges = support.ranges(ranked.candidates())?;
    let mut terms = Vec::with_capacity(anchors.len());
    let mut negs = vec![0.0; k];
    for &i in anchors {
        let sorted = ranked.sorted(i);
        let mut rng = Rng::from_stream(base_seed, i as u64);
        for n in negs.iter_mut() {
            *n = sorted[support_position(&ranges, rng.uniform())];
        }
        terms.push(nce_term(ranked.positive(i), &negs)?);
    }
    Ok(terms)
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!("need 1 <= k < n = {n}, got k = {k}")));
    }
    Ok(())
}

/// Estimate from precomputed ranked scores over all anchors.
pub fn estimate_ranked(ranked: &RankedScores, k: usize, support: Support, rng: &mut Rng) -> Result<Estimate> {
    check_k(k, ranked.anchors())?;
    let base = rng.next_u64();
    let anchors: Vec<usize> = (0..ranked.anchors()).collect();
    let chunks: Vec<Vec<f64>> = anchors
        .par_chunks(256)
        .map(|chunk| anchor_terms(ranked, chunk, k, &support, base))
        .collect::<Result<_>>()?;
    let terms: Vec<f64> = chunks.into_iter().flatten().collect();
    Ok(Estimate {
        value: mean(&terms),
        anchor_std: sample_variance(&terms).sqrt(),
        anchors: terms.len(),
        k,
        support,
        convention: TermConvention::PositiveIncluded,
    })
}

fn ranked_for(dataset: &PairDataset, critic: &PairCritic) -> Result<RankedScores> {
    Ok(RankedScores::new(&critic.score_matrix(dataset)?))
}

/// NCE with negatives uniform over the other pairs' `v` values.
pub fn nce_estimate(dataset: &PairDataset, critic: &PairCritic, k: usize, rng: &mut Rng) -> Result<Estimate> {
    check_k(k, dataset.len())?;
    estimate_ranked(&ranked_for(dataset, critic)?, k, Support::Marginal, rng)
}

/// CNCE with negatives uniform over each anchor's ring support.
pub fn cnce_estimate(
    dataset: &PairDataset,
    critic: &PairCritic,
    k: usize,
    spec: RingSpec,
    rng: &mut Rng,
) -> Result<Estimate> {
    check_k(k, dataset.len())?;
    estimate_ranked(&ranked_for(dataset, critic)?, k, Support::Ring(spec), rng)
}

/// Negatives restricted to the lowest-scoring `epsilon_fraction` of candidates.
/// Such a proposal puts all its mass below the marginal mean of `e^f`, so the
/// result is not a lower bound and can exceed the true mutual information.
pub fn adversarial_estimate(
    dataset: &PairDataset,
    critic: &PairCritic,
    k: usize,
    epsilon_fraction: f64,
    rng: &mut Rng,
) -> Result<Estimate> {
    check_epsilon(epsilon_fraction)?;
    check_k(k, dataset.len())?;
    estimate_ranked(&ranked_for(dataset, critic)?, k, Support::Bottom(epsilon_fraction), rng)
}

pub(crate) fn check_epsilon(epsilon_fraction: f64) -> Result<()> {
    if !(epsilon_fraction > 0.0 && epsilon_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon fraction must lie in (0, 1], got {epsilon_fraction}")));
    }
    Ok(())
}

/// Log-ratio of mean-exp similarity over the close set `C` to mean-exp
/// similarity over the background set `B`, both indexing rows of `bank`.
pub fn la_objective(anchor: &[f64], bank: &Matrix, close: &[usize], background: &[usize], tau: f64) -> Result<f64> {
    if close.is_empty() || background.is_empty() {
        return Err(Error::Empty("close and background sets must be nonempty"));
    }
    let sims = |set: &[usize]| -> Result<Vec<f64>> {
        set.iter()
            .map(|&j| {
                if j >= bank.rows() {
                    return Err(Error::IndexOutOfRange { index: j, len: bank.rows() });
                }
                similarity(anchor, bank.row(j), tau)
            })
            .collect()
    };
    let c = sims(close)?;
    let b = sims(background)?;
    Ok(logsumexp(&c)? - (c.len() as f64).ln() - logsumexp(&b)? + (b.len() as f64).ln())
}

/// Aggregate of per-seed estimates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub mean: f64,
    /// Sample standard deviation across seeds; zero for a single seed.
    pub std: f64,
    pub per_seed: Vec<f64>,
    pub k: usize,
    pub term_count: usize,
    pub omega: Option<RingSpec>,
}

impl EstimateRecord {
    pub fn from_estimates(estimates: &[Estimate]) -> Result<Self> {
        let first = estimates.first().ok_or(Error::Empty("estimates"))?;
        let per_seed: Vec<f64> = estimates.iter().map(|e| e.value).collect();
        Ok(Self {
            mean: mean(&per_seed),
            std: sample_variance(&per_seed).sqrt(),
            k: first.k,
            term_count: first.term_count(),
            omega: first.support.omega(),
            per_seed,
        })
    }

    /// Single-line CSV row: `mean,std,seeds,k,term_count`.
    pub fn csv_row(&self) -> String {
        format!("{:.16e},{:.16e},{},{},{}", self.mean, self.std, self.per_seed.len(), self.k, self.term_count)
    }
}
