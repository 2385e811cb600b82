//! Acceptance criteria and the four-level outcome of an iteration.

use std::fmt;

use rand::Rng;
use thiserror::Error;

/// Absolute tolerance for strict improvement and equality.
pub const IMPROVEMENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutcomeKind {
    Best,
    Better,
    Accepted,
    Rejected,
}

impl OutcomeKind {
    pub const ALL: [OutcomeKind; 4] = [
        OutcomeKind::Best,
        OutcomeKind::Better,
        OutcomeKind::Accepted,
        OutcomeKind::Rejected,
    ];

    /// Position in a reward vector.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeKind::Best => "best",
            OutcomeKind::Better => "better",
            OutcomeKind::Accepted => "accepted",
            OutcomeKind::Rejected => "rejected",
        }
    }
}

impl fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid annealing schedule t0={t0}, t_end={t_end}, step={step}")]
pub struct ScheduleError {
    pub t0: f64,
    pub t_end: f64,
    pub step: f64,
}

/// Linear cooling from `t0` to `t_end`, `step` per iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealingSchedule {
    pub t0: f64,
    pub t_end: f64,
    pub step: f64,
}

impl Default for AnnealingSchedule {
    fn default() -> Self {
        AnnealingSchedule {
            t0: 20.0,
            t_end: 1.0,
            step: 0.1,
        }
    }
}

impl AnnealingSchedule {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        let ok = self.t_end > 0.0 && self.t0 >= self.t_end && self.step > 0.0 && self.t0.is_finite();
        if ok {
            Ok(())
        } else {
            Err(ScheduleError {
                t0: self.t0,
                t_end: self.t_end,
                step: self.step,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    HillClimbing,
    SimulatedAnnealing(AnnealingSchedule),
}

impl Criterion {
    pub fn short_name(&self) -> &'static str {
        match self {
            Criterion::HillClimbing => "hc",
            Criterion::SimulatedAnnealing(_) => "sa",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionState {
    criterion: Criterion,
    temperature: f64,
}

impl CriterionState {
    pub fn new(criterion: Criterion) -> Result<Self, ScheduleError> {
        let temperature = match criterion {
            Criterion::HillClimbing => 0.0,
            Criterion::SimulatedAnnealing(s) => {
                s.validate()?;
                s.t0
            }
        };
        Ok(CriterionState { criterion, temperature })
    }

    pub fn hill_climbing() -> Self {
        CriterionState {
            criterion: Criterion::HillClimbing,
            temperature: 0.0,
        }
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion
    }

    /// Current temperature; `None` under hill climbing.
    pub fn temperature(&self) -> Option<f64> {
        match self.criterion {
            Criterion::HillClimbing => None,
            Criterion::SimulatedAnnealing(_) => Some(self.temperature),
        }
    }

    /// Classifies the candidate and decides whether it becomes the current
    /// state. A new best is always accepted.
    pub fn decide(&self, current: f64, candidate: f64, best: f64, rng: &mut impl Rng) -> (OutcomeKind, bool) {
        if candidate < best - IMPROVEMENT_TOL {
            return (OutcomeKind::Best, true);
        }
        if candidate < current - IMPROVEMENT_TOL {
            return (OutcomeKind::Better, true);
        }
        let accepted = if candidate <= current + IMPROVEMENT_TOL {
            true
        } else {
            match self.criterion {
                Criterion::HillClimbing => false,
                Criterion::SimulatedAnnealing(_) => {
                    let p = (-(candidate - current) / self.temperature).exp();
                    rng.random::<f64>() < p
                }
            }
        };
        if accepted {
            (OutcomeKind::Accepted, true)
        } else {
            (OutcomeKind::Rejected, false)
        }
    }

    /// One cooling step; no-op under hill climbing.
    pub fn advance(&mut self) {
        if let Criterion::SimulatedAnnealing(s) = self.criterion {
            self.temperature = (self.temperature - s.step).max(s.t_end);
        }
    }
}
