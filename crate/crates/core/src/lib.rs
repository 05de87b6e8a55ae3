//! Planar PointGoal navigation toolkit.
//!
//! A self-contained simulator for GPS-free point-goal navigation under
//! noisy actuation and sensing: occupancy-grid worlds with raycast depth
//! scans, an egomotion-estimation interface (ground truth, dead reckoning,
//! noisy oracle, ICP scan matching), the goal-vector update that turns pose
//! estimates into navigation, and the Success/SPL metric family.

pub mod action;
pub mod agent;
pub mod geometry;
pub mod gridworld;
pub mod metrics;
pub mod noise;
pub mod odometry;
pub mod planner;

pub use action::Action;
pub use geometry::{Egomotion, GoalVector, Point, Pose};
pub use gridworld::{AgentBody, DepthScan, OccupancyGrid, ScanParams};
pub use planner::{DistanceField, Episode};
