use serde::Serialize;

use super::data::Split;
use super::train::{RingMode, RunConfig, Trainer};
use crate::annealing::Schedule;
use crate::error::{Error, Result};

/// Final 1-NN accuracy for each (branch epoch, ω_ℓ) pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseGrid {
    pub branch_epochs: Vec<usize>,
    pub omegas: Vec<f64>,
    /// `accuracy[b][w]` for `branch_epochs[b]` and `omegas[w]`.
    pub accuracy: Vec<Vec<f64>>,
}

/// Trains a baseline with the full support (`ω_ℓ = 0` on a ring), and at each
/// branch epoch forks it into one run per fixed `ω_ℓ`, each trained to the
/// end of the horizon.
pub fn hardness_phase_study(
    base: &RunConfig,
    train: &Split,
    test: &Split,
    branch_epochs: &[usize],
    omegas: &[f64],
) -> Result<PhaseGrid> {
    if branch_epochs.is_empty() || omegas.is_empty() {
        return Err(Error::InvalidParameter("phase study needs branch epochs and omegas".into()));
    }
    if branch_epochs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("branch epochs must be strictly increasing".into()));
    }
    if let Some(&last) = branch_epochs.last() {
        if last >= base.epochs {
            return Err(Error::InvalidParameter(format!("branch epoch {last} is not before epoch {}", base.epochs)));
        }
    }
    let ring = if base.ring == RingMode::Off { RingMode::Ring } else { base.ring };
    if !matches!(ring, RingMode::Ring | RingMode::Ball) {
        return Err(Error::InvalidParameter(format!("phase study needs a rank-based support, got {ring:?}")));
    }
    let baseline = RunConfig { ring, schedule: Schedule::constant(0.0)?, ..base.clone() };
    let mut trainer = Trainer::new(baseline, train.points.clone())?;
    let mut accuracy = Vec::with_capacity(branch_epochs.len());
    for &branch in branch_epochs {
        trainer.run_until(branch, train, test)?;
        let row = omegas
            .iter()
            .map(|&w| {
                let mut fork = trainer.clone();
                fork.set_schedule(Schedule::constant(w)?)?;
                fork.run_until(base.epochs, train, test)?;
                Ok(fork.log().last().map_or(f64::NAN, |e| e.knn_acc))
            })
            .collect::<Result<Vec<f64>>>()?;
        accuracy.push(row);
    }
    Ok(PhaseGrid { branch_epochs: branch_epochs.to_vec(), omegas: omegas.to_vec(), accuracy })
}
