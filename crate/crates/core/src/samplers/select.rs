use crate::encoder::similarity;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

/// Fractional rank thresholds `0 ≤ ω_ℓ < ω_u ≤ 1` over similarity-sorted candidates.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RingSpec {
    omega_lower: f64,
    omega_upper: f64,
}

impl RingSpec {
    pub fn new(omega_lower: f64, omega_upper: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&omega_lower) || !(0.0..=1.0).contains(&omega_upper) || omega_lower >= omega_upper {
            return Err(Error::InvalidParameter(format!(
                "ring thresholds must satisfy 0 <= lower < upper <= 1, got ({omega_lower}, {omega_upper})"
            )));
        }
        Ok(Self { omega_lower, omega_upper })
    }

    /// The whole candidate set.
    pub fn marginal() -> Self {
        Self { omega_lower: 0.0, omega_upper: 1.0 }
    }

    pub fn ball(omega_lower: f64) -> Result<Self> {
        Self::new(omega_lower, 1.0)
    }

    pub fn lower(&self) -> f64 {
        self.omega_lower
    }

    pub fn upper(&self) -> f64 {
        self.omega_upper
    }

    /// Rank slice `[⌊ω_ℓ·n⌋, ⌊ω_u·n⌋)`.
    pub fn slice_bounds(&self, n: usize) -> (usize, usize) {
        (fraction_floor(self.omega_lower, n), fraction_floor(self.omega_upper, n))
    }
}

/// `⌊ω·n⌋`, absorbing representation error such as `0.29 * 100 = 28.999…`.
pub(crate) fn fraction_floor(omega: f64, n: usize) -> usize {
    ((omega * n as f64 + 1e-9).floor() as usize).min(n)
}

/// Indices of `scores` sorted ascending by score; ties keep ascending index.
pub fn rank_ascending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    order
}

/// Ring slice of a precomputed score vector, returned in ascending-score order.
pub fn ring_slice(scores: &[f64], spec: &RingSpec) -> Result<Vec<usize>> {
    if scores.is_empty() {
        return Err(Error::Empty("candidate store"));
    }
    let (lo, hi) = spec.slice_bounds(scores.len());
    if lo >= hi {
        return Err(Error::EmptySupport { lo, hi, n: scores.len() });
    }
    let order = rank_ascending(scores);
    Ok(order[lo..hi].to_vec())
}

/// Ring support for `anchor` among the rows of `store`, optionally excluding one
/// row (the anchor's own entry). Indices refer to `store` rows and come back in
/// ascending-similarity order.
pub fn ring_select(
    anchor: &[f64],
    store: &Matrix,
    spec: &RingSpec,
    tau: f64,
    exclude: Option<usize>,
) -> Result<Vec<usize>> {
    let candidates: Vec<usize> = (0..store.rows()).filter(|&j| Some(j) != exclude).collect();
    let scores = candidates
        .iter()
        .map(|&j| similarity(anchor, store.row(j), tau))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ring_slice(&scores, spec)?.into_iter().map(|r| candidates[r]).collect())
}

/// Ring with the upper threshold at 1.
pub fn ball_select(
    anchor: &[f64],
    store: &Matrix,
    omega_lower: f64,
    tau: f64,
    exclude: Option<usize>,
) -> Result<Vec<usize>> {
    ring_select(anchor, store, &RingSpec::ball(omega_lower)?, tau, exclude)
}

/// `m` draws, i.i.d. uniform with replacement over `support`.
///
/// Draw `r` takes position `⌊u_r · |support|⌋` for a fresh uniform `u_r`, so
/// supports ordered by similarity share their random numbers across widths.
pub fn sample_negatives(support: &[usize], m: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if support.is_empty() {
        return Err(Error::Empty("negative support"));
    }
    Ok((0..m).map(|_| support[position(rng.uniform(), support.len())]).collect())
}

pub(crate) fn position(u: f64, len: usize) -> usize {
    ((u * len as f64) as usize).min(len - 1)
}
