//! The discrete PointGoal action space.

use crate::geometry::Egomotion;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Nominal forward step, meters.
pub const FORWARD_STEP: f64 = 0.25;
/// Nominal turn angle, radians (30 degrees).
pub const TURN_ANGLE: f64 = PI / 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Stop,
    MoveForward,
    TurnLeft,
    TurnRight,
}

impl Action {
    /// The noise-free motion the action commands; `None` for STOP.
    pub fn nominal_egomotion(&self) -> Option<Egomotion> {
        match self {
            Action::Stop => None,
            Action::MoveForward => Some(Egomotion::new(FORWARD_STEP, 0.0, 0.0)),
            Action::TurnLeft => Some(Egomotion::new(0.0, 0.0, TURN_ANGLE)),
            Action::TurnRight => Some(Egomotion::new(0.0, 0.0, -TURN_ANGLE)),
        }
    }

    pub fn is_motion(&self) -> bool {
        *self != Action::Stop
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Action::Stop => "STOP",
            Action::MoveForward => "MOVE_FORWARD",
            Action::TurnLeft => "TURN_LEFT",
            Action::TurnRight => "TURN_RIGHT",
        };
        f.write_str(s)
    }
}
