//! Schedules for the ring lower threshold `ω_ℓ` over training.
//!
//! Larger `ω_ℓ` means a smaller support and harder negatives. Fixed schedules
//! are pure functions of the epoch. Adaptive schedules harden by `delta` when
//! the feedback signal improves on the previous one and relax by `delta`
//! otherwise; `omega_at` replays a signal history from scratch, so the same
//! history always yields the same trajectory.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    Linear,
    Step,
    AdaptiveValidation,
    AdaptiveLoss,
}

impl ScheduleKind {
    pub fn is_adaptive(self) -> bool {
        matches!(self, Self::AdaptiveValidation | Self::AdaptiveLoss)
    }

    /// The feedback an adaptive kind consumes.
    pub fn signal_kind(self) -> Option<SignalKind> {
        match self {
            Self::AdaptiveValidation => Some(SignalKind::ValidationAccuracy),
            Self::AdaptiveLoss => Some(SignalKind::NegativeTrainingLoss),
            _ => None,
        }
    }
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "constant" => Self::Constant,
            "linear" => Self::Linear,
            "step" => Self::Step,
            "adaptive_validation" => Self::AdaptiveValidation,
            "adaptive_loss" => Self::AdaptiveLoss,
            other => return Err(Error::Config(format!("unknown schedule kind `{other}`"))),
        })
    }
}

/// Which quantity an adaptive schedule watches. Both are "higher is better".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    ValidationAccuracy,
    NegativeTrainingLoss,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FeedbackSignal {
    pub kind: SignalKind,
    pub value: f64,
    /// Epoch or step at which the signal was observed.
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub start_omega: f64,
    pub end_omega: f64,
    pub horizon_epochs: usize,
    /// `(epoch, ω)` pairs for the step kind, ascending by epoch.
    pub step_breakpoints: Vec<(usize, f64)>,
    pub delta: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    current: f64,
    last: Option<FeedbackSignal>,
}

fn check_fraction(name: &str, v: f64) -> Result<()> {
    if !(0.0..1.0).contains(&v) {
        return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1), got {v}")));
    }
    Ok(())
}

impl Schedule {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: ScheduleKind,
        start_omega: f64,
        end_omega: f64,
        horizon_epochs: usize,
        step_breakpoints: Vec<(usize, f64)>,
        delta: f64,
        omega_min: f64,
        omega_max: f64,
    ) -> Result<Self> {
        check_fraction("omega_min", omega_min)?;
        check_fraction("omega_max", omega_max)?;
        if omega_min > omega_max {
            return Err(Error::InvalidParameter(format!("omega_min {omega_min} exceeds omega_max {omega_max}")));
        }
        for (name, v) in [("start_omega", start_omega), ("end_omega", end_omega)] {
            check_fraction(name, v)?;
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta must be finite and non-negative, got {delta}")));
        }
        for (i, &(epoch, w)) in step_breakpoints.iter().enumerate() {
            check_fraction("breakpoint omega", w)?;
            if i > 0 && epoch <= step_breakpoints[i - 1].0 {
                return Err(Error::InvalidParameter("step breakpoints must have strictly increasing epochs".into()));
            }
        }
        if kind == ScheduleKind::Step && step_breakpoints.is_empty() {
            return Err(Error::InvalidParameter("step schedule needs at least one breakpoint".into()));
        }
        let current = start_omega.clamp(omega_min, omega_max);
        Ok(Self {
            kind,
            start_omega,
            end_omega,
            horizon_epochs,
            step_breakpoints,
            delta,
            omega_min,
            omega_max,
            current,
            last: None,
        })
    }

    pub fn constant(omega: f64) -> Result<Self> {
        Self::new(ScheduleKind::Constant, omega, omega, 0, Vec::new(), 0.0, omega, omega)
    }

    /// Interpolates `start → end` over `horizon` epochs, then holds `end`.
    pub fn linear(start: f64, end: f64, horizon: usize) -> Result<Self> {
        Self::new(ScheduleKind::Linear, start, end, horizon, Vec::new(), 0.0, start.min(end), start.max(end))
    }

    /// Holds `start` until the first breakpoint, then each breakpoint's value.
    pub fn step(start: f64, breakpoints: Vec<(usize, f64)>) -> Result<Self> {
        let values = breakpoints.iter().map(|b| b.1).chain([start]);
        let lo = values.clone().fold(f64::INFINITY, f64::min);
        let hi = values.fold(f64::NEG_INFINITY, f64::max);
        Self::new(ScheduleKind::Step, start, breakpoints.last().map_or(start, |b| b.1), 0, breakpoints, 0.0, lo, hi)
    }

    pub fn adaptive(kind: ScheduleKind, start: f64, delta: f64, omega_min: f64, omega_max: f64) -> Result<Self> {
        if !kind.is_adaptive() {
            return Err(Error::InvalidParameter(format!("{kind:?} is not an adaptive schedule")));
        }
        Self::new(kind, start, start, 0, Vec::new(), delta, omega_min, omega_max)
    }

    /// Errors unless every emitted `ω_ℓ` leaves a slice of at least
    /// `min_width` below `omega_upper`.
    pub fn check_fits(&self, omega_upper: f64, min_width: f64) -> Result<()> {
        if self.omega_max > omega_upper - min_width {
            return Err(Error::InvalidParameter(format!(
                "schedule reaches {} but the ring upper threshold {omega_upper} needs width {min_width}",
                self.omega_max
            )));
        }
        Ok(())
    }

    /// Current internal `ω_ℓ` of an adaptive schedule.
    pub fn current(&self) -> f64 {
        self.current
    }

    fn clamp(&self, w: f64) -> f64 {
        w.clamp(self.omega_min, self.omega_max)
    }

    /// Folds one signal into the adaptive state and returns the new `ω_ℓ`.
    pub fn adaptive_update(&mut self, signal: FeedbackSignal) -> Result<f64> {
        let expected = self
            .kind
            .signal_kind()
            .ok_or_else(|| Error::InvalidParameter(format!("{:?} schedule takes no feedback", self.kind)))?;
        if signal.kind != expected {
            return Err(Error::InvalidParameter(format!("{:?} schedule fed a {:?} signal", self.kind, signal.kind)));
        }
        if !signal.value.is_finite() {
            return Err(Error::NonFinite("feedback signal"));
        }
        if let Some(prev) = self.last {
            if signal.index <= prev.index {
                return Err(Error::InvalidParameter(format!(
                    "feedback index {} does not follow {}",
                    signal.index, prev.index
                )));
            }
            let step = if signal.value > prev.value { self.delta } else { -self.delta };
            self.current = self.clamp(self.current + step);
        }
        self.last = Some(signal);
        Ok(self.current)
    }
}

/// `ω_ℓ` at `epoch`. Adaptive kinds replay `history` from the start value
/// and ignore `epoch`; an absent or empty history gives the start value.
pub fn omega_at(schedule: &Schedule, epoch: usize, history: Option<&[FeedbackSignal]>) -> Result<f64> {
    let w = match schedule.kind {
        ScheduleKind::Constant => schedule.start_omega,
        ScheduleKind::Linear => {
            if epoch >= schedule.horizon_epochs {
                schedule.end_omega
            } else {
                let t = epoch as f64 / schedule.horizon_epochs as f64;
                (1.0 - t) * schedule.start_omega + t * schedule.end_omega
            }
        }
        ScheduleKind::Step => schedule
            .step_breakpoints
            .iter()
            .take_while(|(e, _)| *e <= epoch)
            .last()
            .map_or(schedule.start_omega, |b| b.1),
        ScheduleKind::AdaptiveValidation | ScheduleKind::AdaptiveLoss => {
            let mut replay = Schedule { current: schedule.clamp(schedule.start_omega), last: None, ..schedule.clone() };
            for s in history.unwrap_or_default() {
                replay.adaptive_update(*s)?;
            }
            return Ok(replay.current);
        }
    };
    Ok(schedule.clamp(w))
}
