//! Instance discrimination on synthetic clustered data.
//!
//! Memory-bank (IR), momentum-queue (MoCo) and local-aggregation (LA)
//! objectives, each optionally restricted to ring, ball or k-means cell
//! negatives, evaluated by 1-NN accuracy in embedding space.
//!
//! Every random draw in a run comes from a counter-based substream of the run
//! seed (init, batch order per epoch, views per step, negatives per step,
//! k-means per epoch), so two configs with the same seed see the same batches
//! and views and differ only in how negatives are chosen.

mod data;
mod phase;
mod train;

pub use data::{augment, knn_accuracy, make_synthetic, AugmentationSpec, Split, SyntheticDataset};
pub use phase::{hardness_phase_study, PhaseGrid};
pub use train::{knn_eval, train, write_log_csv, EpochLog, Method, RingMode, RunConfig, TrainOutcome, Trainer};
