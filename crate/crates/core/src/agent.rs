//! The episode execution loop: act, transition through the noisy world,
//! observe, estimate egomotion, update the goal estimate, decide the next
//! action.
//!
//! The policy is a replanning shortest-path follower. It plans on the
//! *known* map but localizes only through the egomotion estimator, which
//! isolates how localization quality propagates into navigation metrics.
//! The goal estimate starts at the ground-truth goal location and is only
//! ever updated by subtracting estimated pose changes.

use crate::action::Action;
use crate::geometry::{
    apply_egomotion, goal_in_frame, update_goal, Egomotion, GoalVector, Point, Pose,
};
use crate::gridworld::{
    is_navigable, move_with_collision, render_scan, AgentBody, DepthScan, OccupancyGrid,
    ScanParams,
};
use crate::noise::{
    corrupt_scan, derive_rng, median_filter, sample_actuation, ActuationNoiseConfig,
    SensorNoiseConfig,
};
use crate::odometry::{estimate, EstimatorKind, OdomError, VOTuple};
use crate::planner::{shortest_path, DistanceField, Episode};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{BufRead, Write};

/// Stop-and-steer parameters for the shortest-path follower.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyParams {
    /// STOP when the estimated goal distance drops below this (the success
    /// zone: 2 x agent radius).
    pub stop_distance: f64,
    /// Turn instead of moving when the waypoint bearing error exceeds this.
    pub turn_threshold: f64,
    pub max_steps: usize,
    /// How far ahead on the planned path the steering waypoint sits.
    pub waypoint_lookahead: f64,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams {
            stop_distance: 0.36,
            turn_threshold: PI / 12.0,
            max_steps: 500,
            waypoint_lookahead: 0.75,
        }
    }
}

/// Everything fixed about the world during an episode.
pub struct World<'a> {
    pub grid: &'a OccupancyGrid,
    pub body: AgentBody,
    pub scan: ScanParams,
    pub actuation: ActuationNoiseConfig,
    pub sensor: SensorNoiseConfig,
}

/// Loop state: the true pose, the dead-reckoned/estimated pose, and the
/// running goal estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub pose_true: Pose,
    pub pose_est: Pose,
    pub goal_est: GoalVector,
    pub step_count: usize,
    pub collided_last: bool,
}

impl AgentState {
    /// Initial state: the estimated pose coincides with the true start and
    /// the goal estimate equals the ground-truth goal location.
    pub fn init(episode: &Episode) -> Self {
        AgentState {
            pose_true: episode.start,
            pose_est: episode.start,
            goal_est: goal_in_frame(&episode.start, episode.goal),
            step_count: 0,
            collided_last: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Stop,
    MaxSteps,
}

/// One executed motion step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub action: Action,
    pub egomotion_true: Egomotion,
    pub egomotion_est: Egomotion,
    pub pose_true: Pose,
    pub pose_est: Pose,
    pub goal_est: GoalVector,
    pub collided: bool,
    /// True when the estimator fell back to dead reckoning for this step.
    pub fallback: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scan: Option<DepthScan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub episode: Episode,
    pub seed: u64,
    pub config_digest: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub initial_scan: Option<DepthScan>,
    pub records: Vec<StepRecord>,
    pub termination: Termination,
}

#[derive(Serialize, Deserialize)]
struct LogHeader {
    episode: Episode,
    seed: u64,
    config_digest: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    initial_scan: Option<DepthScan>,
}

#[derive(Serialize, Deserialize)]
struct LogFooter {
    termination: Termination,
    steps: usize,
    d_goal_final: f64,
}

impl TrajectoryLog {
    pub fn final_pose(&self) -> Pose {
        self.records
            .last()
            .map(|r| r.pose_true)
            .unwrap_or(self.episode.start)
    }

    pub fn d_goal_final(&self) -> f64 {
        self.final_pose().position().dist(self.episode.goal)
    }

    /// True-trajectory arc length (start pose included).
    pub fn true_positions(&self) -> Vec<Pose> {
        let mut poses = Vec::with_capacity(self.records.len() + 1);
        poses.push(self.episode.start);
        poses.extend(self.records.iter().map(|r| r.pose_true));
        poses
    }

    /// Per-step VO tuples; requires scans to have been stored.
    pub fn vo_tuples(&self) -> Result<Vec<VOTuple>, OdomError> {
        let missing = || OdomError::MissingScans {
            episode_id: self.episode.id.clone(),
        };
        let mut prev = self.initial_scan.as_ref().ok_or_else(missing)?;
        let mut tuples = Vec::with_capacity(self.records.len());
        for r in &self.records {
            let cur = r.scan.as_ref().ok_or_else(missing)?;
            tuples.push(VOTuple {
                scan_prev: prev.clone(),
                scan_cur: cur.clone(),
                action: r.action,
                egomotion_gt: r.egomotion_true,
            });
            prev = cur;
        }
        Ok(tuples)
    }

    /// JSONL serialization: header record, one record per step, footer.
    pub fn write_jsonl<W: Write>(&self, sink: &mut W) -> std::io::Result<()> {
        let header = LogHeader {
            episode: self.episode.clone(),
            seed: self.seed,
            config_digest: self.config_digest.clone(),
            initial_scan: self.initial_scan.clone(),
        };
        serde_json::to_writer(&mut *sink, &header).map_err(std::io::Error::other)?;
        sink.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut *sink, r).map_err(std::io::Error::other)?;
            sink.write_all(b"\n")?;
        }
        let footer = LogFooter {
            termination: self.termination,
            steps: self.records.len(),
            d_goal_final: self.d_goal_final(),
        };
        serde_json::to_writer(&mut *sink, &footer).map_err(std::io::Error::other)?;
        sink.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> std::io::Result<TrajectoryLog> {
        let mut lines = reader.lines();
        let header: LogHeader = match lines.next() {
            Some(line) => serde_json::from_str(&line?).map_err(std::io::Error::other)?,
            None => return Err(std::io::Error::other("empty trajectory file")),
        };
        let mut records = Vec::new();
        let mut footer: Option<LogFooter> = None;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if line.contains("\"termination\"") {
                footer = Some(serde_json::from_str(&line).map_err(std::io::Error::other)?);
            } else {
                records.push(serde_json::from_str(&line).map_err(std::io::Error::other)?);
            }
        }
        let footer = footer.ok_or_else(|| std::io::Error::other("missing trajectory footer"))?;
        Ok(TrajectoryLog {
            episode: header.episode,
            seed: header.seed,
            config_digest: header.config_digest,
            initial_scan: header.initial_scan,
            records,
            termination: footer.termination,
        })
    }
}

/// Execute one motion action: sample the noisy egomotion, apply the
/// rotation exactly as sampled, push the translation through the no-sliding
/// collision model (truncation shrinks the *realized* egomotion), then
/// render and corrupt the new scan.
pub fn step<R: rand::Rng>(
    world: &World,
    state: &AgentState,
    action: Action,
    rng_act: &mut R,
    rng_sensor: &mut R,
) -> (AgentState, Egomotion, DepthScan, bool) {
    let sampled = sample_actuation(action, &world.actuation, rng_act)
        .expect("step is only called with motion actions");

    let pose = state.pose_true;
    let translation = sampled.ex.hypot(sampled.ey);
    let (new_pos, collided, scale) = if translation > 0.0 {
        let cast_bearing = pose.theta + sampled.ey.atan2(sampled.ex);
        let cast_pose = Pose::new(pose.x, pose.y, cast_bearing);
        let (moved_pose, collided) =
            move_with_collision(world.grid, &cast_pose, translation, world.body.radius);
        let moved = moved_pose.position().dist(pose.position());
        (moved_pose.position(), collided, moved / translation)
    } else {
        (pose.position(), false, 1.0)
    };

    let realized = Egomotion::new(sampled.ex * scale, sampled.ey * scale, sampled.etheta);
    let pose_true = Pose::new(new_pos.x, new_pos.y, pose.theta + sampled.etheta);
    debug_assert!(is_navigable(world.grid, pose_true.position(), world.body.radius));

    let clean = render_scan(world.grid, &pose_true, &world.scan)
        .expect("the realized pose is navigable, so its cell is free");
    let scan = corrupt_scan(&clean, &world.sensor, rng_sensor);

    let next = AgentState {
        pose_true,
        pose_est: state.pose_est,
        goal_est: state.goal_est,
        step_count: state.step_count + 1,
        collided_last: collided,
    };
    (next, realized, scan, collided)
}

/// Point on the planned path `lookahead` meters of arc from its start.
fn waypoint_on_path(path: &[Point], lookahead: f64) -> Option<Point> {
    if path.len() < 2 {
        return None;
    }
    let mut remaining = lookahead;
    for w in path.windows(2) {
        let seg = w[1] - w[0];
        let len = seg.norm();
        if len >= remaining && len > 0.0 {
            let f = remaining / len;
            return Some(Point::new(w[0].x + f * seg.x, w[0].y + f * seg.y));
        }
        remaining -= len;
    }
    path.last().copied()
}

/// Choose the next action from the goal estimate (and the known-map field
/// when available): STOP inside the estimated success zone, otherwise turn
/// toward / move toward the steering waypoint.
pub fn decide(state: &AgentState, field: Option<&DistanceField>, params: &PolicyParams) -> Action {
    if state.goal_est.norm() < params.stop_distance {
        return Action::Stop;
    }
    let target: GoalVector = field
        .and_then(|f| {
            let path = shortest_path(f, state.pose_est.position()).ok()?;
            let wp = waypoint_on_path(&path, params.waypoint_lookahead)?;
            let g = goal_in_frame(&state.pose_est, wp);
            (g.norm() > 1e-9).then_some(g)
        })
        .unwrap_or(state.goal_est);

    let bearing_err = target.bearing();
    if bearing_err.abs() > params.turn_threshold {
        if bearing_err > 0.0 {
            Action::TurnLeft
        } else {
            Action::TurnRight
        }
    } else {
        Action::MoveForward
    }
}

/// Everything `run_episode` needs beyond the world and the episode itself.
pub struct RunSetup<'a> {
    pub estimator: EstimatorKind,
    pub params: PolicyParams,
    /// Known-map distance field for the follower; direction-only steering
    /// when absent.
    pub field: Option<&'a DistanceField>,
    pub global_seed: u64,
    pub config_digest: String,
    pub store_scans: bool,
    /// Median-filter window applied to the scans the estimator sees.
    pub median_window: Option<usize>,
    pub flip_average: bool,
}

/// Run the full loop until STOP or the step limit. Deterministic in
/// (episode, configs, seed): all randomness flows through streams derived
/// from (seed, episode id, stream label).
pub fn run_episode(world: &World, episode: &Episode, setup: &RunSetup) -> TrajectoryLog {
    let mut rng_act = derive_rng(setup.global_seed, &episode.id, "actuation");
    let mut rng_sensor = derive_rng(setup.global_seed, &episode.id, "sensor");
    let mut rng_est = derive_rng(setup.global_seed, &episode.id, "estimator");

    let mut state = AgentState::init(episode);
    let clean = render_scan(world.grid, &episode.start, &world.scan)
        .expect("episode start poses are navigable");
    let mut scan_prev = corrupt_scan(&clean, &world.sensor, &mut rng_sensor);
    let initial_scan = setup.store_scans.then(|| scan_prev.clone());

    let filter = |scan: &DepthScan| -> DepthScan {
        match setup.median_window {
            Some(w) => median_filter(scan, w).expect("window validated by the caller"),
            None => scan.clone(),
        }
    };

    let mut records = Vec::new();
    let termination = loop {
        if state.step_count >= setup.params.max_steps {
            break Termination::MaxSteps;
        }
        let action = decide(&state, setup.field, &setup.params);
        if action == Action::Stop {
            break Termination::Stop;
        }

        let (next, realized, scan_cur, collided) =
            step(world, &state, action, &mut rng_act, &mut rng_sensor);

        let est = estimate(
            &setup.estimator,
            &filter(&scan_prev),
            &filter(&scan_cur),
            action,
            Some(&realized),
            Some(&mut rng_est),
            setup.flip_average,
        )
        .expect("motion actions with ground truth and rng available");

        state = AgentState {
            pose_est: apply_egomotion(&state.pose_est, &est.egomotion),
            goal_est: update_goal(&state.goal_est, &est.egomotion),
            ..next
        };

        records.push(StepRecord {
            action,
            egomotion_true: realized,
            egomotion_est: est.egomotion,
            pose_true: state.pose_true,
            pose_est: state.pose_est,
            goal_est: state.goal_est,
            collided,
            fallback: est.fallback,
            scan: setup.store_scans.then(|| scan_cur.clone()),
        });
        scan_prev = scan_cur;
    };

    TrajectoryLog {
        episode: episode.clone(),
        seed: setup.global_seed,
        config_digest: setup.config_digest.clone(),
        initial_scan,
        records,
        termination,
    }
}
