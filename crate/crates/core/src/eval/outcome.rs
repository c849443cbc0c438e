//! Trial outcome taxonomy and trial-level metrics.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::sim::{ObjectPreset, SimConfig, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    RobotCollision,
    EarlyStopping,
    OverTracing,
    ObjectDropping,
}

impl Outcome {
    pub const ALL: [Outcome; 5] = [
        Outcome::Success,
        Outcome::RobotCollision,
        Outcome::EarlyStopping,
        Outcome::OverTracing,
        Outcome::ObjectDropping,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::RobotCollision => "robot collision",
            Outcome::EarlyStopping => "early stopping",
            Outcome::OverTracing => "over-tracing",
            Outcome::ObjectDropping => "object dropping",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// What a finished rollout leaves behind for classification.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub final_status: Status,
    pub budget_exhausted: bool,
    pub grasping_at_end: bool,
    /// Largest grasped arc length reached (m).
    pub reached_arc: f64,
    pub last_contact: Option<Vec2>,
    pub p0: Vec2,
    pub steps: usize,
    pub duration: f64,
    /// Time at which the grasp first entered the final stretch.
    pub final_stretch_time: Option<f64>,
}

impl Trajectory {
    pub fn is_terminated(&self) -> bool {
        self.final_status != Status::Running || self.budget_exhausted
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub outcome: Outcome,
    /// Seconds until the grasp entered the final stretch; successes only.
    pub success_time: Option<f64>,
    pub completion_ratio: f64,
    /// False when no contact was ever observed (the ratio is then 0).
    pub contact_seen: bool,
    pub final_arc_length: f64,
    pub steps: usize,
    pub seed: u64,
    pub preset: ObjectPreset,
}

/// `‖p_last − p_0‖ / L`, with a flag telling whether any contact was seen.
pub fn completion_ratio(traj: &Trajectory, length: f64) -> (f64, bool) {
    match traj.last_contact {
        Some(p) => ((p - traj.p0).norm() / length, true),
        None => (0.0, false),
    }
}

pub fn classify_outcome(traj: &Trajectory, config: &SimConfig, seed: u64) -> Result<TrialOutcome> {
    if !traj.is_terminated() {
        return Err(Error::Precondition("trajectory has not terminated".into()));
    }
    let reached_end = traj.reached_arc >= config.stop_fraction * config.length;
    let outcome = if traj.final_status == Status::Collided {
        Outcome::RobotCollision
    } else if reached_end {
        if traj.grasping_at_end {
            Outcome::Success
        } else {
            Outcome::OverTracing
        }
    } else if traj.grasping_at_end {
        Outcome::EarlyStopping
    } else {
        Outcome::ObjectDropping
    };
    let (ratio, seen) = completion_ratio(traj, config.length);
    Ok(TrialOutcome {
        outcome,
        success_time: (outcome == Outcome::Success).then(|| traj.final_stretch_time.unwrap_or(traj.duration)),
        completion_ratio: ratio,
        contact_seen: seen,
        final_arc_length: traj.reached_arc,
        steps: traj.steps,
        seed,
        preset: config.preset,
    })
}
