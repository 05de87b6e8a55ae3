//! SE(2) pose algebra and the goal-vector update that closes the
//! localization loop.
//!
//! Conventions used throughout the crate: world frame x east / y north,
//! headings in radians CCW from +x and wrapped to `(-pi, pi]`; the agent's
//! local frame is +x forward / +y left.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Sub};

/// Wrap an angle to the half-open interval `(-pi, pi]`.
///
/// Angles already in range are returned bit-identical, so exact negation
/// round-trips (needed by the mirror transforms in `odometry`).
pub fn wrap_angle(theta: f64) -> f64 {
    assert!(theta.is_finite(), "wrap_angle: non-finite angle");
    if theta > -PI && theta <= PI {
        return theta;
    }
    let w = theta.rem_euclid(2.0 * PI); // [0, 2pi)
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// A 2D world point in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(&self, other: Point) -> f64 {
        (*self - other).norm()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// An SE(2) agent pose: position in meters, heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    /// Build a pose, wrapping the heading to `(-pi, pi]`.
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub const fn identity() -> Self {
        Pose {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    /// World pose of a frame located at `b_rel` in this pose's local frame
    /// (the SE(2) group operation).
    pub fn compose(&self, b_rel: &Pose) -> Pose {
        let (s, c) = self.theta.sin_cos();
        Pose::new(
            self.x + c * b_rel.x - s * b_rel.y,
            self.y + s * b_rel.x + c * b_rel.y,
            self.theta + b_rel.theta,
        )
    }

    /// SE(2) inverse: `compose(p, inverse(p)) = identity`.
    pub fn inverse(&self) -> Pose {
        let (s, c) = self.theta.sin_cos();
        // (-R(-theta) t, -theta)
        Pose::new(
            -(c * self.x + s * self.y),
            -(-s * self.x + c * self.y),
            -self.theta,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// Frame-to-frame rigid motion expressed in the earlier pose's local frame:
/// `ex` forward, `ey` left (meters), `etheta` CCW (radians).
///
/// The 3D convention used by RGB-D simulators carries an (x, y, z, yaw)
/// tuple with y vertical; this planar type maps that to (left, 0, forward,
/// yaw) and the vertical component is identically zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Egomotion {
    pub ex: f64,
    pub ey: f64,
    pub etheta: f64,
}

/// Sanity bound on a single simulator step: at most 1 m of translation per
/// axis (nominal forward is 0.25 m).
pub const MAX_STEP_TRANSLATION: f64 = 1.0;

impl Egomotion {
    pub fn new(ex: f64, ey: f64, etheta: f64) -> Self {
        Egomotion {
            ex,
            ey,
            etheta: wrap_angle(etheta),
        }
    }

    pub const fn zero() -> Self {
        Egomotion {
            ex: 0.0,
            ey: 0.0,
            etheta: 0.0,
        }
    }

    /// The same rigid motion viewed as a local-frame pose.
    pub fn as_pose(&self) -> Pose {
        Pose::new(self.ex, self.ey, self.etheta)
    }

    pub fn from_pose(p: &Pose) -> Self {
        Egomotion::new(p.x, p.y, p.theta)
    }

    /// SE(2) inverse of the motion (the time-reversed step).
    pub fn inverse(&self) -> Egomotion {
        Egomotion::from_pose(&self.as_pose().inverse())
    }

    /// True when finite and within the single-step sanity bounds.
    pub fn within_step_bounds(&self) -> bool {
        self.ex.is_finite()
            && self.ey.is_finite()
            && self.etheta.is_finite()
            && self.ex.abs() <= MAX_STEP_TRANSLATION
            && self.ey.abs() <= MAX_STEP_TRANSLATION
            && self.etheta.abs() <= PI
    }
}

/// Goal coordinates relative to the current agent frame: `gx` forward,
/// `gy` left, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalVector {
    pub gx: f64,
    pub gy: f64,
}

impl GoalVector {
    pub const fn new(gx: f64, gy: f64) -> Self {
        GoalVector { gx, gy }
    }

    pub fn norm(&self) -> f64 {
        self.gx.hypot(self.gy)
    }

    /// Bearing of the goal in the agent frame, radians CCW from forward.
    pub fn bearing(&self) -> f64 {
        self.gy.atan2(self.gx)
    }
}

/// New world pose after applying a local-frame egomotion: translate
/// (ex forward, ey left), then rotate etheta.
pub fn apply_egomotion(p: &Pose, e: &Egomotion) -> Pose {
    p.compose(&e.as_pose())
}

/// The goal-vector update: the estimated pose change is subtracted from the
/// goal location, re-expressed in the new agent frame.
///
/// `g_new = R(-etheta) * (g_prev - (ex, ey))`. With the exact egomotion the
/// world-frame goal point reconstructed from (pose, goal vector) is
/// invariant under this update.
pub fn update_goal(g_prev: &GoalVector, e_est: &Egomotion) -> GoalVector {
    let dx = g_prev.gx - e_est.ex;
    let dy = g_prev.gy - e_est.ey;
    let (s, c) = e_est.etheta.sin_cos();
    GoalVector::new(c * dx + s * dy, -s * dx + c * dy)
}

/// World point of a goal expressed relative to `pose`.
pub fn goal_world_point(pose: &Pose, g: &GoalVector) -> Point {
    let (s, c) = pose.theta.sin_cos();
    Point::new(
        pose.x + c * g.gx - s * g.gy,
        pose.y + s * g.gx + c * g.gy,
    )
}

/// Goal vector of a world point as seen from `pose`.
pub fn goal_in_frame(pose: &Pose, goal: Point) -> GoalVector {
    let dx = goal.x - pose.x;
    let dy = goal.y - pose.y;
    let (s, c) = pose.theta.sin_cos();
    GoalVector::new(c * dx + s * dy, -s * dx + c * dy)
}
