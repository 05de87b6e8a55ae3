//! Navigation and odometry metrics with per-action and per-distance-bin
//! breakdowns.
//!
//! SPL is the standard success-weighted normalized-inverse-path-length,
//! with the geodesic start distance as the shortest-path reference. SoftSPL
//! ships in two variants: the bare path ratio and the soft-success-weighted
//! form; reported tables in the wild match the bare ratio, so that is the
//! default. Odometry error units follow the usual convention: centimeters
//! for translation, centi-radians for rotation.

use crate::action::Action;
use crate::agent::{Termination, TrajectoryLog};
use crate::geometry::{wrap_angle, Egomotion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("egomotion sequences and actions must have equal nonzero length")]
    LengthMismatch,
    #[error("cannot aggregate an empty episode set")]
    EmptyInput,
    #[error("bin edges must be strictly increasing")]
    BadBinEdges,
    #[error("geodesic_start must be positive for every episode")]
    NonPositiveGeodesic,
}

/// Per-episode outcome, the raw material of every navigation metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub d_goal_final: f64,
    pub geodesic_start: f64,
    pub path_length: f64,
    pub steps: usize,
    pub termination: Termination,
}

impl EpisodeResult {
    pub fn from_log(log: &TrajectoryLog, threshold: f64) -> Self {
        let d = log.d_goal_final();
        EpisodeResult {
            success: success(d, threshold),
            d_goal_final: d,
            geodesic_start: log.episode.geodesic_start,
            path_length: path_length_of(&log.true_positions()),
            steps: log.records.len(),
            termination: log.termination,
        }
    }
}

/// Strict success test: inside the zone means strictly closer than the
/// threshold.
pub fn success(d_final: f64, threshold: f64) -> bool {
    d_final < threshold
}

/// Arc length of a pose sequence (positions only; turning in place is free).
pub fn path_length_of(poses: &[crate::geometry::Pose]) -> f64 {
    poses
        .windows(2)
        .map(|w| w[0].position().dist(w[1].position()))
        .sum()
}

/// Success weighted by path efficiency, averaged over episodes.
pub fn spl(results: &[EpisodeResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    let sum: f64 = results
        .iter()
        .map(|r| {
            if r.success {
                r.geodesic_start / r.path_length.max(r.geodesic_start)
            } else {
                0.0
            }
        })
        .sum();
    sum / results.len() as f64
}

/// Continuous success relaxation: how much of the initial geodesic distance
/// was closed, clamped to [0, 1].
pub fn soft_success(d_final: f64, geodesic_start: f64) -> f64 {
    (1.0 - d_final / geodesic_start).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoftSplVariant {
    /// Bare path ratio: geodesic / max(path, geodesic).
    Ratio,
    /// Soft-success times the path ratio.
    Habitat,
}

pub fn softspl(
    variant: SoftSplVariant,
    d_final: f64,
    geodesic_start: f64,
    path_length: f64,
) -> f64 {
    let ratio = geodesic_start / path_length.max(geodesic_start);
    match variant {
        SoftSplVariant::Ratio => ratio,
        SoftSplVariant::Habitat => soft_success(d_final, geodesic_start) * ratio,
    }
}

/// Per-action value with the count-weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerAction {
    pub total: f64,
    pub forward: f64,
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionCounts {
    pub total: usize,
    pub forward: usize,
    pub left: usize,
    pub right: usize,
}

/// Egomotion error report: translation in centimeters, rotation in
/// centi-radians, total and per action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaeReport {
    pub translation_mae: PerAction,
    pub rotation_mae: PerAction,
    pub counts: ActionCounts,
}

/// Mean absolute egomotion error. The translation term sums the per-axis
/// absolute errors over (left, vertical, forward) with the vertical
/// component identically zero in the planar setting; rotation errors are
/// wrapped before taking magnitudes.
pub fn mae(
    gt: &[Egomotion],
    est: &[Egomotion],
    actions: &[Action],
) -> Result<MaeReport, MetricsError> {
    if gt.len() != est.len() || gt.len() != actions.len() || gt.is_empty() {
        return Err(MetricsError::LengthMismatch);
    }
    let mut t_sum = [0.0f64; 3]; // forward, left, right
    let mut r_sum = [0.0f64; 3];
    let mut count = [0usize; 3];
    for ((g, e), a) in gt.iter().zip(est).zip(actions) {
        let slot = match a {
            Action::MoveForward => 0,
            Action::TurnLeft => 1,
            Action::TurnRight => 2,
            Action::Stop => continue,
        };
        // (x, y, z) = (left, vertical = 0, forward)
        let t_err = (g.ey - e.ey).abs() + 0.0 + (g.ex - e.ex).abs();
        let r_err = wrap_angle(g.etheta - e.etheta).abs();
        t_sum[slot] += t_err;
        r_sum[slot] += r_err;
        count[slot] += 1;
    }
    let n: usize = count.iter().sum();
    if n == 0 {
        return Err(MetricsError::LengthMismatch);
    }
    let per = |sum: &[f64; 3], slot: usize| -> f64 {
        if count[slot] == 0 {
            0.0
        } else {
            sum[slot] / count[slot] as f64
        }
    };
    let total = |sum: &[f64; 3]| -> f64 { sum.iter().sum::<f64>() / n as f64 };
    // meters -> cm and radians -> centi-radians share the factor 100
    let scale = 100.0;
    Ok(MaeReport {
        translation_mae: PerAction {
            total: scale * total(&t_sum),
            forward: scale * per(&t_sum, 0),
            left: scale * per(&t_sum, 1),
            right: scale * per(&t_sum, 2),
        },
        rotation_mae: PerAction {
            total: scale * total(&r_sum),
            forward: scale * per(&r_sum, 0),
            left: scale * per(&r_sum, 1),
            right: scale * per(&r_sum, 2),
        },
        counts: ActionCounts {
            total: n,
            forward: count[0],
            left: count[1],
            right: count[2],
        },
    })
}

/// One geodesic-distance bucket `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBin {
    pub lo: f64,
    pub hi: f64,
    pub rate: f64,
    pub count: usize,
}

/// Bucket success rates by geodesic start distance. Empty bins are reported
/// with a zero count; episodes outside the edge span are excluded.
pub fn success_by_distance_bins(
    results: &[EpisodeResult],
    edges: &[f64],
) -> Result<Vec<GeoBin>, MetricsError> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MetricsError::BadBinEdges);
    }
    let mut bins: Vec<GeoBin> = edges
        .windows(2)
        .map(|w| GeoBin {
            lo: w[0],
            hi: w[1],
            rate: 0.0,
            count: 0,
        })
        .collect();
    let mut hits = vec![0usize; bins.len()];
    for r in results {
        let g = r.geodesic_start;
        if let Some(i) = bins.iter().position(|b| g >= b.lo && g < b.hi) {
            bins[i].count += 1;
            if r.success {
                hits[i] += 1;
            }
        }
    }
    for (b, h) in bins.iter_mut().zip(hits) {
        if b.count > 0 {
            b.rate = h as f64 / b.count as f64;
        }
    }
    Ok(bins)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRate {
    pub threshold: f64,
    pub rate: f64,
}

/// The full aggregated report; serialized as a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub episodes: usize,
    pub success_rate: f64,
    pub spl: f64,
    pub soft_success_mean: f64,
    pub softspl_ratio_mean: f64,
    pub softspl_habitat_mean: f64,
    pub d_goal_mean: f64,
    pub success_by_threshold: Vec<ThresholdRate>,
    pub success_by_geo_bin: Vec<GeoBin>,
    pub mae: MaeReport,
}

/// Egomotion samples pooled across an episode set for the MAE report.
#[derive(Debug, Clone, Default)]
pub struct MaeSamples {
    pub gt: Vec<Egomotion>,
    pub est: Vec<Egomotion>,
    pub actions: Vec<Action>,
}

impl MaeSamples {
    pub fn extend_from_log(&mut self, log: &TrajectoryLog) {
        for r in &log.records {
            self.gt.push(r.egomotion_true);
            self.est.push(r.egomotion_est);
            self.actions.push(r.action);
        }
    }
}

/// Compute every metric over one episode set. `results` must already carry
/// success at `thresholds[0]`; the remaining thresholds are reported as
/// additional success rates.
pub fn aggregate(
    results: &[EpisodeResult],
    samples: &MaeSamples,
    thresholds: &[f64],
    bin_edges: &[f64],
) -> Result<MetricsReport, MetricsError> {
    if results.is_empty() || thresholds.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if results.iter().any(|r| !(r.geodesic_start > 0.0)) {
        return Err(MetricsError::NonPositiveGeodesic);
    }
    let n = results.len() as f64;
    let success_rate = results.iter().filter(|r| r.success).count() as f64 / n;
    let spl_v = spl(results);
    assert!(
        spl_v <= success_rate + 1e-12,
        "spl {spl_v} exceeds success rate {success_rate}"
    );
    let soft_success_mean = results
        .iter()
        .map(|r| soft_success(r.d_goal_final, r.geodesic_start))
        .sum::<f64>()
        / n;
    let mean_softspl = |variant| {
        results
            .iter()
            .map(|r| softspl(variant, r.d_goal_final, r.geodesic_start, r.path_length))
            .sum::<f64>()
            / n
    };
    let success_by_threshold = thresholds
        .iter()
        .map(|&t| ThresholdRate {
            threshold: t,
            rate: results.iter().filter(|r| success(r.d_goal_final, t)).count() as f64 / n,
        })
        .collect();

    let mae_report = mae(&samples.gt, &samples.est, &samples.actions)?;

    Ok(MetricsReport {
        episodes: results.len(),
        success_rate,
        spl: spl_v,
        soft_success_mean,
        softspl_ratio_mean: mean_softspl(SoftSplVariant::Ratio),
        softspl_habitat_mean: mean_softspl(SoftSplVariant::Habitat),
        d_goal_mean: results.iter().map(|r| r.d_goal_final).sum::<f64>() / n,
        success_by_threshold,
        success_by_geo_bin: success_by_distance_bins(results, bin_edges)?,
        mae: mae_report,
    })
}

/// Build per-episode results and pooled MAE samples from trajectory logs,
/// then aggregate.
pub fn report_from_logs(
    logs: &[TrajectoryLog],
    thresholds: &[f64],
    bin_edges: &[f64],
) -> Result<MetricsReport, MetricsError> {
    if logs.is_empty() || thresholds.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let results: Vec<EpisodeResult> = logs
        .iter()
        .map(|l| EpisodeResult::from_log(l, thresholds[0]))
        .collect();
    let mut samples = MaeSamples::default();
    for log in logs {
        samples.extend_from_log(log);
    }
    aggregate(&results, &samples, thresholds, bin_edges)
}
