//! Egomotion estimation behind a single interface, plus the flip/swap
//! label transforms and the VO training-tuple exporter.
//!
//! Every estimator fills the same slot: given two consecutive depth scans
//! and the action taken between them, produce the frame-to-frame pose
//! change. `GroundTruth` and `NoisyOracle` peek at the simulator,
//! `DeadReckon` integrates nominal action motions, and `Icp` aligns the two
//! scans starting from the nominal motion — the same prior a learned
//! module gets from its action input.

use crate::action::Action;
use crate::agent::TrajectoryLog;
use crate::geometry::{wrap_angle, Egomotion, Point, Pose};
use crate::gridworld::DepthScan;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OdomError {
    #[error("STOP produces no frame pair to estimate from")]
    StopAction,
    #[error("estimator `{0}` requires the ground-truth egomotion")]
    MissingGroundTruth(&'static str),
    #[error("estimator `{0}` requires a random stream")]
    MissingRng(&'static str),
    #[error("swap is undefined for MOVE_FORWARD: the reversed motion has no action label")]
    SwapForward,
    #[error("too few scan points: {points} (need at least {min})")]
    TooFewPoints { points: usize, min: usize },
    #[error("too few correspondences at iteration {iteration}: {inliers} (need {min})")]
    TooFewInliers {
        iteration: usize,
        inliers: usize,
        min: usize,
    },
    #[error("trajectory log for {episode_id} has no stored scans; re-run with scan storage enabled")]
    MissingScans { episode_id: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A VO training sample: two consecutive scans, the action between them,
/// and the realized egomotion as the label.
#[derive(Debug, Clone, PartialEq)]
pub struct VOTuple {
    pub scan_prev: DepthScan,
    pub scan_cur: DepthScan,
    pub action: Action,
    pub egomotion_gt: Egomotion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpParams {
    pub max_iterations: usize,
    pub convergence_eps_trans: f64,
    pub convergence_eps_rot: f64,
    pub max_correspondence_dist: f64,
    pub min_inliers: usize,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams {
            max_iterations: 40,
            convergence_eps_trans: 1e-6,
            convergence_eps_rot: 1e-6,
            max_correspondence_dist: 0.5,
            min_inliers: 10,
        }
    }
}

/// Which estimator fills the VO slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum EstimatorKind {
    GroundTruth,
    DeadReckon,
    NoisyOracle { sigma_t: f64, sigma_r: f64 },
    Icp {
        #[serde(default)]
        params: IcpParams,
    },
}

impl EstimatorKind {
    fn name(&self) -> &'static str {
        match self {
            EstimatorKind::GroundTruth => "ground_truth",
            EstimatorKind::DeadReckon => "dead_reckon",
            EstimatorKind::NoisyOracle { .. } => "noisy_oracle",
            EstimatorKind::Icp { .. } => "icp",
        }
    }
}

/// An estimate plus whether the estimator fell back to dead reckoning
/// (ICP divergence is reported, never silently returned).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub egomotion: Egomotion,
    pub fallback: bool,
}

/// Estimate the egomotion between two frames.
///
/// `flip_average` additionally runs the estimator on the mirrored pair and
/// averages the un-mirrored result; it only changes the ICP kind (the other
/// kinds are exactly mirror-symmetric).
pub fn estimate<R: Rng>(
    kind: &EstimatorKind,
    scan_prev: &DepthScan,
    scan_cur: &DepthScan,
    action: Action,
    gt: Option<&Egomotion>,
    rng: Option<&mut R>,
    flip_average: bool,
) -> Result<Estimate, OdomError> {
    if action == Action::Stop {
        return Err(OdomError::StopAction);
    }
    let nominal = action.nominal_egomotion().expect("motion action");
    match kind {
        EstimatorKind::GroundTruth => {
            let gt = gt.ok_or(OdomError::MissingGroundTruth(kind.name()))?;
            Ok(Estimate {
                egomotion: *gt,
                fallback: false,
            })
        }
        EstimatorKind::DeadReckon => Ok(Estimate {
            egomotion: nominal,
            fallback: false,
        }),
        EstimatorKind::NoisyOracle { sigma_t, sigma_r } => {
            let gt = gt.ok_or(OdomError::MissingGroundTruth(kind.name()))?;
            let rng = rng.ok_or(OdomError::MissingRng(kind.name()))?;
            let nt = Normal::new(0.0, *sigma_t).map_err(|_| OdomError::MissingRng("sigma_t"))?;
            let nr = Normal::new(0.0, *sigma_r).map_err(|_| OdomError::MissingRng("sigma_r"))?;
            Ok(Estimate {
                egomotion: Egomotion::new(
                    gt.ex + nt.sample(rng),
                    gt.ey + nt.sample(rng),
                    gt.etheta + nr.sample(rng),
                ),
                fallback: false,
            })
        }
        EstimatorKind::Icp { params } => {
            let primary = icp_estimate(scan_prev, scan_cur, &nominal, params);
            let result = if flip_average {
                let mirrored = icp_estimate(
                    &flip_scan(scan_prev),
                    &flip_scan(scan_cur),
                    &flip_egomotion(&nominal),
                    params,
                )
                .map(|e| flip_egomotion(&e));
                match (primary, mirrored) {
                    (Ok(a), Ok(b)) => Ok(average_egomotion(&a, &b)),
                    (Ok(a), Err(_)) => Ok(a),
                    (Err(_), Ok(b)) => Ok(b),
                    (Err(e), Err(_)) => Err(e),
                }
            } else {
                primary
            };
            match result {
                Ok(e) if e.within_step_bounds() => Ok(Estimate {
                    egomotion: e,
                    fallback: false,
                }),
                _ => Ok(Estimate {
                    egomotion: nominal,
                    fallback: true,
                }),
            }
        }
    }
}

fn average_egomotion(a: &Egomotion, b: &Egomotion) -> Egomotion {
    Egomotion::new(
        0.5 * (a.ex + b.ex),
        0.5 * (a.ey + b.ey),
        a.etheta + 0.5 * wrap_angle(b.etheta - a.etheta),
    )
}

/// One 2D point per ray that returned (rays at max range are non-returns).
pub fn scan_to_points(scan: &DepthScan) -> Vec<Point> {
    scan.ranges
        .iter()
        .enumerate()
        .filter(|&(_, &r)| r < scan.max_range)
        .map(|(k, &r)| {
            let (s, c) = scan.bearing(k).sin_cos();
            Point::new(r * c, r * s)
        })
        .collect()
}

/// Uniform-bucket nearest-neighbor index over the target point set.
struct PointHash {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl PointHash {
    fn build(points: &[Point], cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets
                .entry(((p.x / cell).floor() as i64, (p.y / cell).floor() as i64))
                .or_default()
                .push(i);
        }
        PointHash { cell, buckets }
    }

    /// Nearest target point within one bucket radius (= the gating
    /// distance), if any.
    fn nearest_within(&self, points: &[Point], q: Point, max_d: f64) -> Option<(usize, f64)> {
        let (bx, by) = (
            (q.x / self.cell).floor() as i64,
            (q.y / self.cell).floor() as i64,
        );
        let mut best: Option<(usize, f64)> = None;
        for dy in -1..=1 {
            for dx in -1..=1 {
                let Some(bucket) = self.buckets.get(&(bx + dx, by + dy)) else {
                    continue;
                };
                for &i in bucket {
                    let d = points[i].dist(q);
                    if d <= max_d && best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((i, d));
                    }
                }
            }
        }
        best
    }
}

/// Closed-form least-squares rigid alignment via the 2x2 cross-covariance:
/// the transform (R, t) minimizing sum |R*from_i + t - to_i|^2.
fn rigid_align(pairs: &[(Point, Point)]) -> Pose {
    let n = pairs.len() as f64;
    let mut fm = Point::new(0.0, 0.0);
    let mut tm = Point::new(0.0, 0.0);
    for (f, t) in pairs {
        fm = fm + *f;
        tm = tm + *t;
    }
    fm = Point::new(fm.x / n, fm.y / n);
    tm = Point::new(tm.x / n, tm.y / n);

    let (mut sxx, mut sxy, mut syx, mut syy) = (0.0, 0.0, 0.0, 0.0);
    for (f, t) in pairs {
        let fx = f.x - fm.x;
        let fy = f.y - fm.y;
        let tx = t.x - tm.x;
        let ty = t.y - tm.y;
        sxx += tx * fx;
        sxy += tx * fy;
        syx += ty * fx;
        syy += ty * fy;
    }
    let theta = (syx - sxy).atan2(sxx + syy);
    let (s, c) = theta.sin_cos();
    Pose::new(tm.x - (c * fm.x - s * fm.y), tm.y - (s * fm.x + c * fm.y), theta)
}

fn transform_point(t: &Pose, p: &Point) -> Point {
    let (s, c) = t.theta.sin_cos();
    Point::new(t.x + c * p.x - s * p.y, t.y + s * p.x + c * p.y)
}

/// Diagnostics from one ICP run; `residuals` holds the mean correspondence
/// distance of each accepted iteration (non-increasing by construction).
#[derive(Debug, Clone)]
pub struct IcpResult {
    pub egomotion: Egomotion,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub inliers: usize,
}

/// Iterative closest point between two scans of the same sensor.
///
/// Estimates the transform mapping frame-t points into frame-(t-1)
/// coordinates — exactly the egomotion convention — starting from `init`.
/// Iterations that increase the mean correspondence residual are rejected
/// and the best transform so far is kept.
pub fn icp_estimate(
    scan_prev: &DepthScan,
    scan_cur: &DepthScan,
    init: &Egomotion,
    params: &IcpParams,
) -> Result<Egomotion, OdomError> {
    icp_estimate_detailed(scan_prev, scan_cur, init, params).map(|r| r.egomotion)
}

pub fn icp_estimate_detailed(
    scan_prev: &DepthScan,
    scan_cur: &DepthScan,
    init: &Egomotion,
    params: &IcpParams,
) -> Result<IcpResult, OdomError> {
    let target = scan_to_points(scan_prev);
    let source = scan_to_points(scan_cur);
    let min = params.min_inliers.max(3);
    if target.len() < min || source.len() < min {
        return Err(OdomError::TooFewPoints {
            points: target.len().min(source.len()),
            min,
        });
    }
    let hash = PointHash::build(&target, params.max_correspondence_dist);

    let mut cur = init.as_pose();
    let mut best = cur;
    let mut best_res = f64::INFINITY;
    let mut residuals = Vec::new();
    let mut inliers = 0;

    for iteration in 0..params.max_iterations {
        let mut pairs: Vec<(Point, Point)> = Vec::with_capacity(source.len());
        let mut sum = 0.0;
        for q in &source {
            let moved = transform_point(&cur, q);
            if let Some((j, d)) =
                hash.nearest_within(&target, moved, params.max_correspondence_dist)
            {
                sum += d;
                pairs.push((moved, target[j]));
            }
        }
        if pairs.len() < min {
            return Err(OdomError::TooFewInliers {
                iteration,
                inliers: pairs.len(),
                min,
            });
        }
        let res = sum / pairs.len() as f64;
        if res > best_res + 1e-12 {
            break;
        }
        best = cur;
        best_res = res;
        inliers = pairs.len();
        residuals.push(res);

        let delta = rigid_align(&pairs);
        cur = delta.compose(&cur);
        if delta.x.hypot(delta.y) < params.convergence_eps_trans
            && delta.theta.abs() < params.convergence_eps_rot
        {
            best = cur;
            break;
        }
    }

    Ok(IcpResult {
        egomotion: Egomotion::from_pose(&best),
        iterations: residuals.len(),
        residuals,
        inliers,
    })
}

// --- flip / swap label transforms ---------------------------------------

/// Mirror a scan about the forward axis: ray order reverses.
pub fn flip_scan(scan: &DepthScan) -> DepthScan {
    let mut ranges = scan.ranges.clone();
    ranges.reverse();
    DepthScan {
        ranges,
        ..scan.clone()
    }
}

/// Mirror an egomotion about the forward axis.
pub fn flip_egomotion(e: &Egomotion) -> Egomotion {
    Egomotion::new(e.ex, -e.ey, -e.etheta)
}

pub fn flip_action(action: Action) -> Action {
    match action {
        Action::TurnLeft => Action::TurnRight,
        Action::TurnRight => Action::TurnLeft,
        other => other,
    }
}

/// Mirror the whole tuple about the forward axis. An exact involution.
pub fn flip_tuple(t: &VOTuple) -> VOTuple {
    VOTuple {
        scan_prev: flip_scan(&t.scan_prev),
        scan_cur: flip_scan(&t.scan_cur),
        action: flip_action(t.action),
        egomotion_gt: flip_egomotion(&t.egomotion_gt),
    }
}

/// Time-reverse a turn tuple: scans exchanged, egomotion inverted, turn
/// label mirrored. A reversed MOVE_FORWARD has no label in the action
/// space, so forward tuples are rejected.
pub fn swap_tuple(t: &VOTuple) -> Result<VOTuple, OdomError> {
    if t.action == Action::MoveForward {
        return Err(OdomError::SwapForward);
    }
    if t.action == Action::Stop {
        return Err(OdomError::StopAction);
    }
    Ok(VOTuple {
        scan_prev: t.scan_cur.clone(),
        scan_cur: t.scan_prev.clone(),
        action: flip_action(t.action),
        egomotion_gt: t.egomotion_gt.inverse(),
    })
}

// --- VO dataset export ----------------------------------------------------

#[derive(Debug, Clone, Copy, Default)]
pub struct ExportOptions {
    pub flip: bool,
    pub swap: bool,
    /// Export time-reversed forward tuples with the action field set to
    /// "UNLABELED" instead of skipping them.
    pub unlabeled_forward_swap: bool,
}

#[derive(Serialize)]
struct EgoFields {
    ex: f64,
    ey: f64,
    etheta: f64,
}

#[derive(Serialize)]
struct VoRecord {
    episode_id: String,
    step: usize,
    action: String,
    ranges_prev: Vec<f64>,
    ranges_cur: Vec<f64>,
    ego: EgoFields,
    augmentation: &'static str,
}

fn emit<W: Write>(
    sink: &mut W,
    episode_id: &str,
    step: usize,
    t: &VOTuple,
    action_label: Option<String>,
    augmentation: &'static str,
) -> Result<(), OdomError> {
    let record = VoRecord {
        episode_id: episode_id.to_string(),
        step,
        action: action_label.unwrap_or_else(|| t.action.to_string()),
        ranges_prev: t.scan_prev.ranges.clone(),
        ranges_cur: t.scan_cur.ranges.clone(),
        ego: EgoFields {
            ex: t.egomotion_gt.ex,
            ey: t.egomotion_gt.ey,
            etheta: t.egomotion_gt.etheta,
        },
        augmentation,
    };
    serde_json::to_writer(&mut *sink, &record).map_err(std::io::Error::other)?;
    sink.write_all(b"\n")?;
    Ok(())
}

/// Stream VO tuples (plus enabled augmented variants) as JSONL. Records are
/// independent and order-insensitive; returns the number written.
pub fn export_tuples<W: Write>(
    logs: &[TrajectoryLog],
    opts: &ExportOptions,
    sink: &mut W,
) -> Result<usize, OdomError> {
    let mut written = 0;
    for log in logs {
        for (step, tuple) in log.vo_tuples()?.into_iter().enumerate() {
            emit(sink, &log.episode.id, step, &tuple, None, "none")?;
            written += 1;
            let flipped = opts.flip.then(|| flip_tuple(&tuple));
            if let Some(f) = &flipped {
                emit(sink, &log.episode.id, step, f, None, "flip")?;
                written += 1;
            }
            if opts.swap {
                let swapped = match swap_tuple(&tuple) {
                    Ok(s) => Some((s, None)),
                    Err(OdomError::SwapForward) if opts.unlabeled_forward_swap => {
                        let mut s = VOTuple {
                            scan_prev: tuple.scan_cur.clone(),
                            scan_cur: tuple.scan_prev.clone(),
                            action: tuple.action,
                            egomotion_gt: tuple.egomotion_gt.inverse(),
                        };
                        s.action = Action::MoveForward;
                        Some((s, Some("UNLABELED".to_string())))
                    }
                    Err(OdomError::SwapForward) => None,
                    Err(e) => return Err(e),
                };
                if let Some((s, label)) = swapped {
                    emit(sink, &log.episode.id, step, &s, label.clone(), "swap")?;
                    written += 1;
                    if opts.flip {
                        let fs = flip_tuple(&s);
                        emit(sink, &log.episode.id, step, &fs, label, "flip_swap")?;
                        written += 1;
                    }
                }
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::Action;
    use crate::geometry::apply_egomotion;
    use crate::gridworld::{generate_map, render_scan, MapSpec, ScanParams};
    use crate::noise::derive_rng;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn scan_of(ranges: Vec<f64>) -> DepthScan {
        DepthScan {
            fov: std::f64::consts::FRAC_PI_2,
            n_rays: ranges.len(),
            max_range: 10.0,
            ranges,
        }
    }

    fn turn_tuple(e: Egomotion, action: Action) -> VOTuple {
        VOTuple {
            scan_prev: scan_of(vec![1.0, 2.0, 3.0]),
            scan_cur: scan_of(vec![3.0, 2.0, 1.5]),
            action,
            egomotion_gt: e,
        }
    }

    #[test]
    fn estimate_ground_truth_is_verbatim() {
        let gt = Egomotion::new(0.24, 0.01, 0.02);
        let s = scan_of(vec![1.0; 8]);
        let est = estimate::<rand_chacha::ChaCha8Rng>(
            &EstimatorKind::GroundTruth,
            &s,
            &s,
            Action::MoveForward,
            Some(&gt),
            None,
            false,
        )
        .unwrap();
        assert_eq!(est.egomotion, gt);
        assert!(!est.fallback);
    }

    #[test]
    fn estimate_dead_reckon_returns_nominal() {
        let s = scan_of(vec![1.0; 8]);
        let est = estimate::<rand_chacha::ChaCha8Rng>(
            &EstimatorKind::DeadReckon,
            &s,
            &s,
            Action::MoveForward,
            None,
            None,
            false,
        )
        .unwrap();
        assert_eq!(est.egomotion, Egomotion::new(0.25, 0.0, 0.0));
    }

    #[test]
    fn estimate_noisy_oracle_degenerate_sigma_is_gt() {
        let gt = Egomotion::new(0.2, -0.03, 0.1);
        let s = scan_of(vec![1.0; 8]);
        let mut rng = derive_rng(0, "t", "estimator");
        let est = estimate(
            &EstimatorKind::NoisyOracle {
                sigma_t: 0.0,
                sigma_r: 0.0,
            },
            &s,
            &s,
            Action::TurnLeft,
            Some(&gt),
            Some(&mut rng),
            false,
        )
        .unwrap();
        assert_eq!(est.egomotion, gt);
    }

    #[test]
    fn estimate_rejects_stop_and_missing_gt() {
        let s = scan_of(vec![1.0; 8]);
        assert!(matches!(
            estimate::<rand_chacha::ChaCha8Rng>(
                &EstimatorKind::DeadReckon,
                &s,
                &s,
                Action::Stop,
                None,
                None,
                false
            ),
            Err(OdomError::StopAction)
        ));
        assert!(matches!(
            estimate::<rand_chacha::ChaCha8Rng>(
                &EstimatorKind::GroundTruth,
                &s,
                &s,
                Action::MoveForward,
                None,
                None,
                false
            ),
            Err(OdomError::MissingGroundTruth(_))
        ));
    }

    #[test]
    fn scan_to_points_drops_max_range_rays() {
        let scan = scan_of(vec![10.0, 10.0, 10.0]);
        assert!(scan_to_points(&scan).is_empty());

        let single = DepthScan {
            fov: 0.0,
            n_rays: 1,
            max_range: 10.0,
            ranges: vec![2.0],
        };
        let pts = scan_to_points(&single);
        assert_eq!(pts.len(), 1);
        assert_abs_diff_eq!(pts[0].x, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pts[0].y, 0.0, epsilon = 1e-12);

        let mixed = scan_of(vec![1.0, 10.0, 2.0, 9.999]);
        assert_eq!(scan_to_points(&mixed).len(), 3);
    }

    #[test]
    fn rigid_align_recovers_random_transform() {
        let mut rng = derive_rng(5, "align", "test");
        use rand::Rng;
        for _ in 0..50 {
            let t = Pose::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-PI..PI),
            );
            let pairs: Vec<(Point, Point)> = (0..40)
                .map(|_| {
                    let p = Point::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
                    (p, transform_point(&t, &p))
                })
                .collect();
            let rec = rigid_align(&pairs);
            assert_abs_diff_eq!(rec.x, t.x, epsilon = 1e-9);
            assert_abs_diff_eq!(rec.y, t.y, epsilon = 1e-9);
            assert_abs_diff_eq!(wrap_angle(rec.theta - t.theta), 0.0, epsilon = 1e-9);
        }
    }

    fn cluttered_grid(seed: u64) -> crate::gridworld::OccupancyGrid {
        generate_map(&MapSpec {
            width: 80,
            height: 80,
            cell_size: 0.1,
            room_count: 4,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn icp_identity_on_identical_scans() {
        let grid = cluttered_grid(2);
        let pose = Pose::new(2.0, 2.0, 0.4);
        let params = ScanParams::default();
        let scan = render_scan(&grid, &pose, &params).unwrap();
        let e = icp_estimate(
            &scan,
            &scan,
            &Egomotion::zero(),
            &IcpParams::default(),
        )
        .unwrap();
        assert!(e.ex.abs() < 1e-9 && e.ey.abs() < 1e-9 && e.etheta.abs() < 1e-9);
    }

    #[test]
    fn icp_recovers_forward_and_turn_steps() {
        let grid = cluttered_grid(3);
        let params = ScanParams {
            n_rays: 256,
            ..ScanParams::default()
        };
        let pose = Pose::new(2.35, 2.15, 0.9);
        for action in [Action::MoveForward, Action::TurnLeft, Action::TurnRight] {
            let gt = action.nominal_egomotion().unwrap();
            let next = apply_egomotion(&pose, &gt);
            let prev = render_scan(&grid, &pose, &params).unwrap();
            let cur = render_scan(&grid, &next, &params).unwrap();
            let e = icp_estimate(&prev, &cur, &gt, &IcpParams::default()).unwrap();
            assert_abs_diff_eq!(e.ex, gt.ex, epsilon = 1e-3);
            assert_abs_diff_eq!(e.ey, gt.ey, epsilon = 1e-3);
            assert_abs_diff_eq!(e.etheta, gt.etheta, epsilon = 1e-3);
        }
    }

    #[test]
    fn icp_residuals_never_increase() {
        let grid = cluttered_grid(7);
        let params = ScanParams::default();
        let pose = Pose::new(3.05, 2.45, -0.7);
        let gt = Egomotion::new(0.23, 0.02, 0.03);
        let next = apply_egomotion(&pose, &gt);
        let prev = render_scan(&grid, &pose, &params).unwrap();
        let cur = render_scan(&grid, &next, &params).unwrap();
        // start from the nominal forward motion, not the exact gt
        let res = icp_estimate_detailed(
            &prev,
            &cur,
            &Egomotion::new(0.25, 0.0, 0.0),
            &IcpParams::default(),
        )
        .unwrap();
        for w in res.residuals.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "residuals increased: {:?}", res.residuals);
        }
        assert!(res.iterations >= 1);
    }

    #[test]
    fn icp_errors_without_points() {
        let empty = scan_of(vec![10.0; 32]);
        assert!(matches!(
            icp_estimate(&empty, &empty, &Egomotion::zero(), &IcpParams::default()),
            Err(OdomError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn flip_is_exact_involution() {
        let t = turn_tuple(Egomotion::new(0.24, 0.013, -0.27), Action::TurnRight);
        let ff = flip_tuple(&flip_tuple(&t));
        assert_eq!(ff, t);
    }

    #[test]
    fn flip_examples() {
        let t = VOTuple {
            action: Action::MoveForward,
            ..turn_tuple(Egomotion::new(0.24, 0.01, 0.02), Action::MoveForward)
        };
        let f = flip_tuple(&t);
        assert_eq!(f.action, Action::MoveForward);
        assert_eq!(f.egomotion_gt, Egomotion::new(0.24, -0.01, -0.02));

        let t = turn_tuple(Egomotion::new(0.0, 0.0, PI / 6.0), Action::TurnLeft);
        let f = flip_tuple(&t);
        assert_eq!(f.action, Action::TurnRight);
        assert_eq!(f.egomotion_gt, Egomotion::new(0.0, 0.0, -PI / 6.0));
    }

    #[test]
    fn flip_mirrors_the_world() {
        // Simulate the mirrored scene directly and compare scans: a pose
        // mirrored about the x axis sees the reversed ray order.
        let grid = cluttered_grid(11);
        // mirror the grid about the horizontal midline by rebuilding rows
        let text = grid.save();
        let mut lines: Vec<&str> = text.lines().collect();
        let header = lines.remove(0);
        lines.reverse();
        let mirrored = crate::gridworld::OccupancyGrid::load(&format!(
            "{header}\n{}\n",
            lines.join("\n")
        ))
        .unwrap();

        let params = ScanParams::default();
        let world_h = grid.height() as f64 * grid.cell_size();
        let pose = Pose::new(2.3, 2.1, 0.5);
        let mirror_pose = Pose::new(2.3, world_h - 2.1, -0.5);
        let scan = render_scan(&grid, &pose, &params).unwrap();
        let mirror_scan = render_scan(&mirrored, &mirror_pose, &params).unwrap();
        let flipped = flip_scan(&scan);
        for k in 0..params.n_rays {
            assert_abs_diff_eq!(flipped.ranges[k], mirror_scan.ranges[k], epsilon = 1e-9);
        }
    }

    #[test]
    fn swap_pure_turn_examples() {
        let t = turn_tuple(Egomotion::new(0.0, 0.0, PI / 6.0), Action::TurnLeft);
        let s = swap_tuple(&t).unwrap();
        assert_eq!(s.action, Action::TurnRight);
        assert_eq!(s.egomotion_gt, Egomotion::new(0.0, 0.0, -PI / 6.0));
        // swap exchanges the scans
        assert_eq!(s.scan_prev, t.scan_cur);
        assert_eq!(s.scan_cur, t.scan_prev);
        // pure-turn double swap is exact
        assert_eq!(swap_tuple(&s).unwrap(), t);
    }

    #[test]
    fn swap_composes_to_identity() {
        let e = Egomotion::new(0.25, 0.02, 0.1);
        let t = turn_tuple(e, Action::TurnLeft);
        let s = swap_tuple(&t).unwrap();
        let composed = e.as_pose().compose(&s.egomotion_gt.as_pose());
        assert!(composed.x.abs() < 1e-12);
        assert!(composed.y.abs() < 1e-12);
        assert!(wrap_angle(composed.theta).abs() < 1e-12);
    }

    #[test]
    fn swap_rejects_forward() {
        let t = VOTuple {
            action: Action::MoveForward,
            ..turn_tuple(Egomotion::new(0.25, 0.0, 0.0), Action::MoveForward)
        };
        assert!(matches!(swap_tuple(&t), Err(OdomError::SwapForward)));
    }

    #[test]
    fn flip_commutes_with_composition() {
        let mut rng = derive_rng(13, "flipcomp", "test");
        use rand::Rng;
        for _ in 0..200 {
            let seq: Vec<Egomotion> = (0..5)
                .map(|_| {
                    Egomotion::new(
                        rng.random_range(-0.3..0.3),
                        rng.random_range(-0.3..0.3),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect();
            let composed = seq
                .iter()
                .fold(Pose::identity(), |acc, e| acc.compose(&e.as_pose()));
            let flipped_composed = seq
                .iter()
                .fold(Pose::identity(), |acc, e| acc.compose(&flip_egomotion(e).as_pose()));
            let f = flip_egomotion(&Egomotion::from_pose(&composed));
            assert_abs_diff_eq!(f.ex, flipped_composed.x, epsilon = 1e-9);
            assert_abs_diff_eq!(f.ey, flipped_composed.y, epsilon = 1e-9);
            assert_abs_diff_eq!(
                wrap_angle(f.etheta - flipped_composed.theta),
                0.0,
                epsilon = 1e-9
            );
        }
    }
}
