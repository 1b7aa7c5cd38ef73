//! Trajectory evaluation: least-squares alignment of estimated trajectories
//! against a reference, absolute and relative error metrics, and a
//! perspective-n-point solver that rebuilds a camera trajectory from 2D-3D
//! correspondences, with or without object masks applied to the point set.

use std::collections::{HashMap, HashSet};

use nalgebra::{
    Cholesky, DMatrix, Matrix2x3, Matrix3, Matrix3x4, Matrix3x6, Matrix6, Rotation3,
    UnitQuaternion, Vector2, Vector3, Vector6,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamic_points::PointTrack;
use crate::geometry::{
    CameraIntrinsics, Pose, SimilarityTransform, Trajectory, TrajectoryEntry,
};
use crate::object_filter::{remove_masked_points, ObjectMask};
use crate::scene::ScenePackage;

/// Minimum number of 2D-3D correspondences a frame must supply before the
/// pose solver will touch it.
pub const MIN_PNP_OBSERVATIONS: usize = 6;

/// Observations whose current depth estimate falls at or below this value are
/// skipped during refinement instead of producing unbounded residuals.
const PNP_DEPTH_EPSILON: f64 = 1e-6;
const PNP_MAX_ITERATIONS: usize = 100;
const PNP_STEP_TOLERANCE: f64 = 1e-10;
/// A refined pose whose mean reprojection error exceeds this multiple of the
/// initialization's error is reported as diverged.
const PNP_DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, Error)]
pub enum TrajEvalError {
    #[error("insufficient trajectory overlap: {detail}")]
    InsufficientOverlap { detail: String },
    #[error("degenerate configuration: {detail}")]
    DegenerateConfiguration { detail: String },
    #[error("frame {frame} has only {count} observations, needs {MIN_PNP_OBSERVATIONS}")]
    TooFewObservations { frame: usize, count: usize },
    #[error(
        "pose solver diverged at frame {frame}: mean reprojection error went \
         from {initial_error:.6} to {final_error:.6} pixels"
    )]
    SolverDiverged {
        frame: usize,
        initial_error: f64,
        final_error: f64,
    },
    #[error("invalid parameter: {detail}")]
    InvalidParameter { detail: String },
}

/// Alignment family used before computing absolute trajectory error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignmentMode {
    /// Rigid alignment: rotation and translation, scale fixed at one.
    Se3,
    /// Similarity alignment: rotation, translation, and a positive scale.
    Sim3,
}

impl std::fmt::Display for AlignmentMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AlignmentMode::Se3 => f.write_str("se3"),
            AlignmentMode::Sim3 => f.write_str("sim3"),
        }
    }
}

impl std::str::FromStr for AlignmentMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "se3" => Ok(AlignmentMode::Se3),
            "sim3" => Ok(AlignmentMode::Sim3),
            other => Err(format!("unknown alignment mode `{other}`, expected se3 or sim3")),
        }
    }
}

/// Evaluation parameters shared by the metric computations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub alignment: AlignmentMode,
    pub rpe_delta: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            alignment: AlignmentMode::Sim3,
            rpe_delta: 1,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), TrajEvalError> {
        if self.rpe_delta == 0 {
            return Err(TrajEvalError::InvalidParameter {
                detail: "rpe_delta must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Output of [`umeyama_align`]: the fitted transform together with the
/// per-frame residual norms it leaves behind.
#[derive(Debug, Clone)]
pub struct AlignmentResult {
    pub mode: AlignmentMode,
    /// Frames shared by both trajectories, ascending; parallel to `residuals`.
    pub frames: Vec<usize>,
    /// Maps estimated positions onto the reference.
    pub transform: SimilarityTransform,
    /// `norm(reference_i - transform(estimate_i))` per common frame.
    pub residuals: Vec<f64>,
}

impl AlignmentResult {
    pub fn rmse(&self) -> f64 {
        rmse(&self.residuals)
    }
}

/// Absolute and relative trajectory error summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryMetrics {
    /// Root-mean-square translation residual after alignment, meters.
    pub ate_rmse: f64,
    /// Root-mean-square relative translation error over frame pairs, meters.
    pub rpe_translation_rmse: f64,
    /// Root-mean-square relative rotation error over frame pairs, degrees.
    pub rpe_rotation_rmse_deg: f64,
    /// Frame spacing the relative errors were computed at.
    pub rpe_delta: usize,
}

fn rmse(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// Frames present in both trajectories, ascending.
fn common_frames(a: &Trajectory, b: &Trajectory) -> Vec<usize> {
    let mut out = Vec::new();
    let entries_b = b.entries();
    let mut ib = 0;
    for ea in a.iter() {
        while ib < entries_b.len() && entries_b[ib].frame < ea.frame {
            ib += 1;
        }
        if ib < entries_b.len() && entries_b[ib].frame == ea.frame {
            out.push(ea.frame);
        }
    }
    out
}

/// Fits the similarity (or rigid) transform that maps the estimated camera
/// positions onto the reference positions with least-squares optimal
/// rotation, translation, and (in [`AlignmentMode::Sim3`]) scale.
///
/// The fit uses the closed-form solution built on the singular value
/// decomposition of the cross-covariance between the two centered point
/// sets, with the determinant-sign correction that keeps the rotation
/// proper. Collinear but non-coincident trajectories are fine; the rotation
/// component orthogonal to the data line is gauge freedom that does not
/// affect the residuals. Errors:
///
/// * fewer than 3 shared frames: [`TrajEvalError::InsufficientOverlap`];
/// * rank-zero cross-covariance (either point set coincident):
///   [`TrajEvalError::DegenerateConfiguration`];
/// * zero estimate variance or non-positive optimal scale under `Sim3`:
///   [`TrajEvalError::DegenerateConfiguration`].
pub fn umeyama_align(
    estimated: &Trajectory,
    reference: &Trajectory,
    mode: AlignmentMode,
) -> Result<AlignmentResult, TrajEvalError> {
    let frames = common_frames(estimated, reference);
    if frames.len() < 3 {
        return Err(TrajEvalError::InsufficientOverlap {
            detail: format!(
                "alignment needs at least 3 shared frames, found {}",
                frames.len()
            ),
        });
    }
    let est: Vec<Vector3<f64>> = frames
        .iter()
        .map(|&f| estimated.pose_at(f).expect("common frame").translation)
        .collect();
    let reference_pts: Vec<Vector3<f64>> = frames
        .iter()
        .map(|&f| reference.pose_at(f).expect("common frame").translation)
        .collect();
    let n = frames.len() as f64;
    let mu_est: Vector3<f64> = est.iter().sum::<Vector3<f64>>() / n;
    let mu_ref: Vector3<f64> = reference_pts.iter().sum::<Vector3<f64>>() / n;

    let mut var_est = 0.0;
    let mut var_ref = 0.0;
    let mut cross = Matrix3::zeros();
    for (e, r) in est.iter().zip(&reference_pts) {
        let ec = e - mu_est;
        let rc = r - mu_ref;
        var_est += ec.norm_squared();
        var_ref += rc.norm_squared();
        cross += rc * ec.transpose();
    }
    var_est /= n;
    var_ref /= n;
    cross /= n;

    let svd = cross.svd(true, true);
    let u = svd.u.expect("svd of 3x3 requested u");
    let v_t = svd.v_t.expect("svd of 3x3 requested v_t");
    let d = svd.singular_values;
    if d[0] <= 1e-12 * (var_est * var_ref).sqrt() {
        return Err(TrajEvalError::DegenerateConfiguration {
            detail: "cross-covariance between the trajectories has rank zero".into(),
        });
    }
    let sign = if u.determinant() * v_t.determinant() < 0.0 {
        -1.0
    } else {
        1.0
    };
    let rotation_matrix = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign)) * v_t;
    let rotation =
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rotation_matrix));
    let scale = match mode {
        AlignmentMode::Se3 => 1.0,
        AlignmentMode::Sim3 => {
            if var_est <= 0.0 {
                return Err(TrajEvalError::DegenerateConfiguration {
                    detail: "estimated trajectory has zero spatial variance, scale is undefined"
                        .into(),
                });
            }
            let s = (d[0] + d[1] + sign * d[2]) / var_est;
            if s <= 0.0 {
                return Err(TrajEvalError::DegenerateConfiguration {
                    detail: format!("optimal scale {s:.6e} is not positive"),
                });
            }
            s
        }
    };
    let translation = mu_ref - scale * (rotation * mu_est);
    let transform = SimilarityTransform::new(scale, rotation, translation).map_err(|e| {
        TrajEvalError::DegenerateConfiguration {
            detail: e.to_string(),
        }
    })?;
    let residuals = est
        .iter()
        .zip(&reference_pts)
        .map(|(e, r)| (r - transform.apply_point(e)).norm())
        .collect();
    Ok(AlignmentResult {
        mode,
        frames,
        transform,
        residuals,
    })
}

/// Absolute trajectory error: RMSE of the camera-position residuals after
/// aligning the estimate onto the reference with [`umeyama_align`].
pub fn ate_rmse(
    estimated: &Trajectory,
    reference: &Trajectory,
    mode: AlignmentMode,
) -> Result<f64, TrajEvalError> {
    Ok(umeyama_align(estimated, reference, mode)?.rmse())
}

/// Relative pose error over all shared frame pairs `(f, f + delta)`.
///
/// For each pair the relative motions `ref_f^-1 ref_{f+delta}` and
/// `est_f^-1 est_{f+delta}` are compared; the error motion's translation norm
/// (meters) and rotation angle (degrees) enter the two returned RMSE values
/// as `(translation, rotation)`. No alignment is needed because relative
/// motions are invariant to a global rigid change of frame.
pub fn rpe(
    estimated: &Trajectory,
    reference: &Trajectory,
    delta: usize,
) -> Result<(f64, f64), TrajEvalError> {
    if delta == 0 {
        return Err(TrajEvalError::InvalidParameter {
            detail: "rpe delta must be at least 1".into(),
        });
    }
    let common = common_frames(estimated, reference);
    let mut translation_errors = Vec::new();
    let mut rotation_errors = Vec::new();
    for &f in &common {
        let g = f + delta;
        if common.binary_search(&g).is_err() {
            continue;
        }
        let rel_ref = reference
            .pose_at(f)
            .expect("common frame")
            .inverse()
            .compose(reference.pose_at(g).expect("common frame"));
        let rel_est = estimated
            .pose_at(f)
            .expect("common frame")
            .inverse()
            .compose(estimated.pose_at(g).expect("common frame"));
        let error = rel_ref.inverse().compose(&rel_est);
        translation_errors.push(error.translation.norm());
        rotation_errors.push(error.rotation_angle().to_degrees());
    }
    if translation_errors.is_empty() {
        return Err(TrajEvalError::InsufficientOverlap {
            detail: format!("no shared frame pairs at spacing {delta}"),
        });
    }
    Ok((rmse(&translation_errors), rmse(&rotation_errors)))
}

/// Computes the full metric summary of an estimate against a reference.
pub fn trajectory_metrics(
    estimated: &Trajectory,
    reference: &Trajectory,
    config: &EvalConfig,
) -> Result<TrajectoryMetrics, TrajEvalError> {
    config.validate()?;
    let ate = ate_rmse(estimated, reference, config.alignment)?;
    let (rpe_translation, rpe_rotation) = rpe(estimated, reference, config.rpe_delta)?;
    Ok(TrajectoryMetrics {
        ate_rmse: ate,
        rpe_translation_rmse: rpe_translation,
        rpe_rotation_rmse_deg: rpe_rotation,
        rpe_delta: config.rpe_delta,
    })
}

/// One 2D-3D correspondence: a pixel measurement of a world landmark.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub track_id: u64,
    pub pixel: Vector2<f64>,
    pub landmark: Vector3<f64>,
}

/// All correspondences available in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameObservations {
    pub frame: usize,
    pub timestamp: f64,
    pub observations: Vec<Observation>,
}

/// Per-frame correspondence sets, frames strictly increasing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationSet {
    pub frames: Vec<FrameObservations>,
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Direct linear transform initialization: solves for the 3x4 projection in
/// intrinsics-normalized coordinates from the SVD null vector of the stacked
/// constraint matrix, then factors out the nearest rotation and a uniform
/// scale. The 3D points are centered and isotropically scaled first for
/// conditioning.
fn dlt_init(frame: &FrameObservations, k: &CameraIntrinsics) -> Result<Pose, TrajEvalError> {
    let n = frame.observations.len();
    let centroid: Vector3<f64> = frame
        .observations
        .iter()
        .map(|o| o.landmark)
        .sum::<Vector3<f64>>()
        / n as f64;
    let mean_dist = frame
        .observations
        .iter()
        .map(|o| (o.landmark - centroid).norm())
        .sum::<f64>()
        / n as f64;
    if mean_dist <= 0.0 {
        return Err(TrajEvalError::DegenerateConfiguration {
            detail: format!("frame {}: all landmarks coincide", frame.frame),
        });
    }
    let point_scale = 3f64.sqrt() / mean_dist;

    let mut a = DMatrix::<f64>::zeros(2 * n, 12);
    for (i, obs) in frame.observations.iter().enumerate() {
        let xn = (obs.pixel.x - k.cx) / k.fx;
        let yn = (obs.pixel.y - k.cy) / k.fy;
        let p = (obs.landmark - centroid) * point_scale;
        let row_x = [
            p.x, p.y, p.z, 1.0, 0.0, 0.0, 0.0, 0.0, -xn * p.x, -xn * p.y, -xn * p.z, -xn,
        ];
        let row_y = [
            0.0, 0.0, 0.0, 0.0, p.x, p.y, p.z, 1.0, -yn * p.x, -yn * p.y, -yn * p.z, -yn,
        ];
        for c in 0..12 {
            a[(2 * i, c)] = row_x[c];
            a[(2 * i + 1, c)] = row_y[c];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("svd requested v_t");
    let p_vec = v_t.row(11);
    let p_conditioned = Matrix3x4::from_fn(|r, c| p_vec[4 * r + c]);

    // Undo the point conditioning: the estimated map consumed
    // `point_scale * (X - centroid)`.
    let m_conditioned = p_conditioned.fixed_view::<3, 3>(0, 0).into_owned();
    let mut m = m_conditioned * point_scale;
    let mut t_col = p_conditioned.column(3).into_owned() - m_conditioned * (centroid * point_scale);
    if m.determinant() < 0.0 {
        m = -m;
        t_col = -t_col;
    }
    let svd_m = m.svd(true, true);
    let singular = svd_m.singular_values;
    if singular[2] <= 1e-12 * singular[0] {
        return Err(TrajEvalError::DegenerateConfiguration {
            detail: format!(
                "frame {}: projection estimate is rank-deficient, landmarks are likely coplanar",
                frame.frame
            ),
        });
    }
    let scale = (singular[0] + singular[1] + singular[2]) / 3.0;
    let u = svd_m.u.expect("svd of 3x3 requested u");
    let v_t_m = svd_m.v_t.expect("svd of 3x3 requested v_t");
    let sign = if u.determinant() * v_t_m.determinant() < 0.0 {
        -1.0
    } else {
        1.0
    };
    let rotation_matrix = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign)) * v_t_m;
    let rotation =
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rotation_matrix));
    Ok(Pose::new(rotation, t_col / scale))
}

/// Mean pixel reprojection error of `cam_from_world` over the frame's
/// observations, skipping points at or behind the depth cutoff. Infinite when
/// nothing projects.
fn mean_reprojection_error(
    cam_from_world: &Pose,
    frame: &FrameObservations,
    k: &CameraIntrinsics,
) -> f64 {
    let mut total = 0.0;
    let mut used = 0usize;
    for obs in &frame.observations {
        let p = cam_from_world.transform_point(&obs.landmark);
        if p.z <= PNP_DEPTH_EPSILON {
            continue;
        }
        let u = k.fx * p.x / p.z + k.cx;
        let v = k.fy * p.y / p.z + k.cy;
        total += (Vector2::new(u, v) - obs.pixel).norm();
        used += 1;
    }
    if used == 0 {
        f64::INFINITY
    } else {
        total / used as f64
    }
}

/// One damped Gauss-Newton step for the reprojection objective, parameterized
/// by a left increment `(omega, nu)`: `R <- exp(omega) R`,
/// `t <- exp(omega) t + nu`. Returns `None` when too few observations remain
/// in front of the camera or the normal equations stay singular.
fn gauss_newton_step(
    cam_from_world: &Pose,
    frame: &FrameObservations,
    k: &CameraIntrinsics,
) -> Option<Vector6<f64>> {
    let mut h = Matrix6::<f64>::zeros();
    let mut g = Vector6::<f64>::zeros();
    let mut used = 0usize;
    for obs in &frame.observations {
        let p = cam_from_world.transform_point(&obs.landmark);
        if p.z <= PNP_DEPTH_EPSILON {
            continue;
        }
        used += 1;
        let z_inv = 1.0 / p.z;
        let mut j_projection = Matrix2x3::<f64>::zeros();
        j_projection[(0, 0)] = k.fx * z_inv;
        j_projection[(0, 2)] = -k.fx * p.x * z_inv * z_inv;
        j_projection[(1, 1)] = k.fy * z_inv;
        j_projection[(1, 2)] = -k.fy * p.y * z_inv * z_inv;
        let mut j_motion = Matrix3x6::<f64>::zeros();
        j_motion.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew(&p)));
        j_motion
            .fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&Matrix3::identity());
        let jacobian = j_projection * j_motion;
        let residual = Vector2::new(
            k.fx * p.x * z_inv + k.cx - obs.pixel.x,
            k.fy * p.y * z_inv + k.cy - obs.pixel.y,
        );
        h += jacobian.transpose() * jacobian;
        g += jacobian.transpose() * residual;
    }
    if used < MIN_PNP_OBSERVATIONS {
        return None;
    }
    let mut damping = 0.0;
    for _ in 0..8 {
        if let Some(chol) = Cholesky::new(h + Matrix6::identity() * damping) {
            return Some(-chol.solve(&g));
        }
        damping = if damping == 0.0 {
            1e-9 * (1.0 + h.trace())
        } else {
            damping * 10.0
        };
    }
    None
}

/// Solves one frame's camera-from-world pose from its correspondences.
fn solve_pnp_frame(
    frame: &FrameObservations,
    k: &CameraIntrinsics,
) -> Result<Pose, TrajEvalError> {
    let mut pose = dlt_init(frame, k)?;
    let initial_error = mean_reprojection_error(&pose, frame, k);
    for _ in 0..PNP_MAX_ITERATIONS {
        let Some(step) = gauss_newton_step(&pose, frame, k) else {
            break;
        };
        let omega = Vector3::new(step[0], step[1], step[2]);
        let nu = Vector3::new(step[3], step[4], step[5]);
        let increment = UnitQuaternion::from_scaled_axis(omega);
        pose = Pose::new(
            increment * pose.rotation,
            increment * pose.translation + nu,
        );
        if step.norm() < PNP_STEP_TOLERANCE {
            break;
        }
    }
    let final_error = mean_reprojection_error(&pose, frame, k);
    // The absolute floor keeps machine-precision noise on exact data from
    // tripping the relative check.
    if final_error > PNP_DIVERGENCE_FACTOR * initial_error && final_error > 1e-9 {
        return Err(TrajEvalError::SolverDiverged {
            frame: frame.frame,
            initial_error,
            final_error,
        });
    }
    Ok(pose)
}

/// Estimates a world-from-camera trajectory by solving an independent
/// perspective-n-point problem per frame: a direct linear transform
/// initialization refined by damped Gauss-Newton on the pixel reprojection
/// objective. Each frame needs at least [`MIN_PNP_OBSERVATIONS`]
/// correspondences; observations behind the current camera estimate are
/// skipped during refinement.
pub fn estimate_trajectory_pnp(
    observations: &ObservationSet,
    intrinsics: &CameraIntrinsics,
) -> Result<Trajectory, TrajEvalError> {
    intrinsics
        .validate()
        .map_err(|e| TrajEvalError::InvalidParameter {
            detail: e.to_string(),
        })?;
    let mut entries = Vec::with_capacity(observations.frames.len());
    for frame in &observations.frames {
        if frame.observations.len() < MIN_PNP_OBSERVATIONS {
            return Err(TrajEvalError::TooFewObservations {
                frame: frame.frame,
                count: frame.observations.len(),
            });
        }
        let cam_from_world = solve_pnp_frame(frame, intrinsics)?;
        entries.push(TrajectoryEntry {
            frame: frame.frame,
            timestamp: frame.timestamp,
            pose: cam_from_world.inverse(),
        });
    }
    Trajectory::from_entries(entries).map_err(|e| TrajEvalError::InvalidParameter {
        detail: e.to_string(),
    })
}

/// Builds per-frame 2D-3D correspondences from tracks and their assumed
/// static landmark positions: every track visible in a frame contributes its
/// pixel position there, paired with `initial_landmarks[i]`. `timestamps`
/// supplies one entry per frame. With `masks`, tracks whose pixel falls on a
/// set mask cell are dropped frame by frame; a mask must be supplied for
/// every frame.
pub fn build_observations(
    tracks: &[PointTrack],
    initial_landmarks: &[Vector3<f64>],
    timestamps: &[f64],
    masks: Option<&[ObjectMask]>,
) -> Result<ObservationSet, TrajEvalError> {
    if tracks.len() != initial_landmarks.len() {
        return Err(TrajEvalError::InvalidParameter {
            detail: format!(
                "{} tracks but {} landmarks",
                tracks.len(),
                initial_landmarks.len()
            ),
        });
    }
    let mut frames = Vec::with_capacity(timestamps.len());
    for (t, &timestamp) in timestamps.iter().enumerate() {
        let visible: Vec<usize> = (0..tracks.len())
            .filter(|&i| t < tracks[i].window() && tracks[i].visible_at(t))
            .collect();
        let retained: Option<HashSet<u64>> = match masks {
            None => None,
            Some(masks) => {
                let mask = masks.iter().find(|m| m.frame == t).ok_or_else(|| {
                    TrajEvalError::InvalidParameter {
                        detail: format!("no object mask supplied for frame {t}"),
                    }
                })?;
                let pairs: Vec<(u64, Vector2<f64>)> = visible
                    .iter()
                    .map(|&i| (tracks[i].track_id, tracks[i].positions[t]))
                    .collect();
                Some(
                    remove_masked_points(&pairs, mask)
                        .into_iter()
                        .map(|(id, _)| id)
                        .collect(),
                )
            }
        };
        let observations = visible
            .iter()
            .filter(|&&i| {
                retained
                    .as_ref()
                    .is_none_or(|kept| kept.contains(&tracks[i].track_id))
            })
            .map(|&i| Observation {
                track_id: tracks[i].track_id,
                pixel: tracks[i].positions[t],
                landmark: initial_landmarks[i],
            })
            .collect();
        frames.push(FrameObservations {
            frame: t,
            timestamp,
            observations,
        });
    }
    Ok(ObservationSet { frames })
}

/// [`build_observations`] applied to a simulated scene: landmarks are each
/// track's world position at frame zero, so points on moving objects feed
/// the solver a stale landmark, which is exactly the contamination masking
/// is meant to remove.
pub fn scene_observations(
    scene: &ScenePackage,
    masks: Option<&[ObjectMask]>,
) -> Result<ObservationSet, TrajEvalError> {
    let initial: Vec<Vector3<f64>> = scene.landmarks.iter().map(|l| l[0]).collect();
    let timestamps: Vec<f64> = (0..scene.num_frames())
        .map(|t| scene.config.timestamp(t))
        .collect();
    build_observations(&scene.tracks, &initial, &timestamps, masks)
}

/// One pose-estimation run with its metrics against the scene ground truth.
#[derive(Debug, Clone)]
pub struct EvaluatedRun {
    pub trajectory: Trajectory,
    pub metrics: TrajectoryMetrics,
    /// `(frame, translation residual after alignment)`, ascending frames.
    pub ate_residuals: Vec<(usize, f64)>,
    /// `(frame, correspondences fed to the solver)`, ascending frames.
    pub observation_counts: Vec<(usize, usize)>,
}

/// Paired evaluation of the same scene solved with and without masks.
#[derive(Debug, Clone)]
pub struct ComparisonOutcome {
    pub unmasked: EvaluatedRun,
    pub masked: EvaluatedRun,
    /// `(unmasked ATE - masked ATE) / unmasked ATE`; zero when the unmasked
    /// ATE is already zero.
    pub ate_improvement: f64,
}

/// Estimates a trajectory from the observations and scores it against the
/// reference: ATE after alignment, relative pose errors, and the per-frame
/// residual series used for plotting.
pub fn evaluate_observations(
    observations: &ObservationSet,
    intrinsics: &CameraIntrinsics,
    reference: &Trajectory,
    config: &EvalConfig,
) -> Result<EvaluatedRun, TrajEvalError> {
    let trajectory = estimate_trajectory_pnp(observations, intrinsics)?;
    let alignment = umeyama_align(&trajectory, reference, config.alignment)?;
    let (rpe_translation, rpe_rotation) = rpe(&trajectory, reference, config.rpe_delta)?;
    let metrics = TrajectoryMetrics {
        ate_rmse: alignment.rmse(),
        rpe_translation_rmse: rpe_translation,
        rpe_rotation_rmse_deg: rpe_rotation,
        rpe_delta: config.rpe_delta,
    };
    let ate_residuals = alignment
        .frames
        .iter()
        .copied()
        .zip(alignment.residuals.iter().copied())
        .collect();
    let observation_counts = observations
        .frames
        .iter()
        .map(|f| (f.frame, f.observations.len()))
        .collect();
    Ok(EvaluatedRun {
        trajectory,
        metrics,
        ate_residuals,
        observation_counts,
    })
}

/// Runs pose estimation twice on the same scene, once on all visible tracks
/// and once with masked tracks removed, and evaluates both trajectories
/// against the scene's ground truth with the same configuration.
pub fn compare_masked_vs_unmasked(
    scene: &ScenePackage,
    masks: &[ObjectMask],
    intrinsics: &CameraIntrinsics,
    config: &EvalConfig,
) -> Result<ComparisonOutcome, TrajEvalError> {
    config.validate()?;
    let all = scene_observations(scene, None)?;
    let kept = scene_observations(scene, Some(masks))?;
    let unmasked = evaluate_observations(&all, intrinsics, &scene.gt_trajectory, config)?;
    let masked = evaluate_observations(&kept, intrinsics, &scene.gt_trajectory, config)?;
    Ok(compare_runs(unmasked, masked))
}

/// Pairs two already-evaluated runs into a comparison outcome.
pub fn compare_runs(unmasked: EvaluatedRun, masked: EvaluatedRun) -> ComparisonOutcome {
    let ate_improvement = if unmasked.metrics.ate_rmse > 0.0 {
        (unmasked.metrics.ate_rmse - masked.metrics.ate_rmse) / unmasked.metrics.ate_rmse
    } else {
        0.0
    };
    ComparisonOutcome {
        unmasked,
        masked,
        ate_improvement,
    }
}

/// Convenience map from track id to its index in a scene's track list.
pub fn track_index_by_id(scene: &ScenePackage) -> HashMap<u64, usize> {
    scene
        .tracks
        .iter()
        .enumerate()
        .map(|(i, t)| (t.track_id, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometryError;
    use crate::object_filter::{rasterize_masks, BoxDynamics, BoxRasterizer, FilteredBoxSet};
    use crate::scene::{CameraPath, ObjectSpec, SceneConfig};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trajectory_from_translations(points: &[Vector3<f64>]) -> Trajectory {
        let entries = points
            .iter()
            .enumerate()
            .map(|(i, p)| TrajectoryEntry {
                frame: i,
                timestamp: i as f64 / 30.0,
                pose: Pose::new(UnitQuaternion::identity(), *p),
            })
            .collect();
        Trajectory::from_entries(entries).unwrap()
    }

    fn random_trajectory(seed: u64, len: usize) -> Trajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = (0..len)
            .map(|i| {
                let axis = Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                let translation = Vector3::new(
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-5.0..5.0),
                );
                TrajectoryEntry {
                    frame: i,
                    timestamp: i as f64 / 30.0,
                    pose: Pose::new(UnitQuaternion::from_scaled_axis(axis), translation),
                }
            })
            .collect();
        Trajectory::from_entries(entries).unwrap()
    }

    fn random_rigid(seed: u64) -> SimilarityTransform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let axis = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let translation = Vector3::new(
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
        );
        SimilarityTransform::new(1.0, UnitQuaternion::from_scaled_axis(axis), translation)
            .unwrap()
    }

    fn residual_sum_of_squares(
        estimated: &Trajectory,
        reference: &Trajectory,
        transform: &SimilarityTransform,
    ) -> f64 {
        estimated
            .iter()
            .zip(reference.iter())
            .map(|(e, r)| {
                (r.pose.translation - transform.apply_point(&e.pose.translation)).norm_squared()
            })
            .sum()
    }

    #[test]
    fn alignment_of_identical_trajectories_is_identity() {
        let traj = random_trajectory(11, 8);
        for mode in [AlignmentMode::Se3, AlignmentMode::Sim3] {
            let result = umeyama_align(&traj, &traj, mode).unwrap();
            assert_relative_eq!(result.transform.scale(), 1.0, epsilon = 1e-9);
            assert!(result.transform.rotation.angle() < 1e-9);
            assert!(result.transform.translation.norm() < 1e-9);
            assert!(result.rmse() < 1e-9);
            assert_eq!(result.frames, (0..8).collect::<Vec<_>>());
        }
    }

    #[test]
    fn alignment_recovers_an_applied_rigid_motion() {
        let reference = random_trajectory(3, 10);
        let motion = random_rigid(17);
        let estimated = motion.apply_trajectory(&reference);
        let result = umeyama_align(&estimated, &reference, AlignmentMode::Se3).unwrap();
        assert!(result.rmse() < 1e-9, "rmse {}", result.rmse());
        for (e, r) in estimated.iter().zip(reference.iter()) {
            let mapped = result.transform.apply_point(&e.pose.translation);
            assert_abs_diff_eq!(mapped, r.pose.translation, epsilon = 1e-9);
        }
    }

    #[test]
    fn similarity_alignment_recovers_the_scale_factor() {
        let reference = random_trajectory(5, 9);
        let half: Vec<Vector3<f64>> = reference.iter().map(|e| 0.5 * e.pose.translation).collect();
        let estimated = trajectory_from_translations(&half);
        let sim = umeyama_align(&estimated, &reference, AlignmentMode::Sim3).unwrap();
        assert_relative_eq!(sim.transform.scale(), 2.0, epsilon = 1e-9);
        assert!(sim.rmse() < 1e-9);
        let rigid = umeyama_align(&estimated, &reference, AlignmentMode::Se3).unwrap();
        assert!(rigid.rmse() > 1e-3);
        assert!(sim.rmse() <= rigid.rmse() + 1e-12);
    }

    #[test]
    fn collinear_alignment_matches_the_one_dimensional_closed_form() {
        // Both trajectories live on the x axis, so the problem reduces to
        // scalar least squares fitting ref = s * est + t. That solution is
        // derived here from first principles as the oracle.
        let est_x = [0.0, 1.0, 3.0];
        let ref_x = [0.0, 1.0, 2.0];
        let n = 3.0;
        let mu_e: f64 = est_x.iter().sum::<f64>() / n;
        let mu_r: f64 = ref_x.iter().sum::<f64>() / n;
        let var_e: f64 = est_x.iter().map(|x| (x - mu_e) * (x - mu_e)).sum::<f64>() / n;
        let cov: f64 = est_x
            .iter()
            .zip(&ref_x)
            .map(|(e, r)| (r - mu_r) * (e - mu_e))
            .sum::<f64>()
            / n;
        let s_expected = cov / var_e;
        let t_expected = mu_r - s_expected * mu_e;
        let rmse_expected = (est_x
            .iter()
            .zip(&ref_x)
            .map(|(e, r)| {
                let d = r - (s_expected * e + t_expected);
                d * d
            })
            .sum::<f64>()
            / n)
            .sqrt();
        assert_relative_eq!(s_expected, 9.0 / 14.0, epsilon = 1e-15);
        assert_relative_eq!(t_expected, 1.0 / 7.0, epsilon = 1e-15);

        let estimated = trajectory_from_translations(
            &est_x.map(|x| Vector3::new(x, 0.0, 0.0)),
        );
        let reference = trajectory_from_translations(
            &ref_x.map(|x| Vector3::new(x, 0.0, 0.0)),
        );
        let result = umeyama_align(&estimated, &reference, AlignmentMode::Sim3).unwrap();
        assert_relative_eq!(result.transform.scale(), s_expected, epsilon = 1e-12);
        assert_abs_diff_eq!(
            result.transform.translation,
            Vector3::new(t_expected, 0.0, 0.0),
            epsilon = 1e-12
        );
        assert_relative_eq!(result.rmse(), rmse_expected, epsilon = 1e-12);
        // The rotation is gauge freedom orthogonal to the data line; on the
        // line itself it must act as the identity.
        let on_axis = result.transform.rotation * Vector3::x();
        assert_abs_diff_eq!(on_axis, Vector3::x(), epsilon = 1e-9);
    }

    #[test]
    fn alignment_rejects_degenerate_configurations() {
        let coincident = trajectory_from_translations(&[Vector3::new(1.0, 2.0, 3.0); 4]);
        let spread = random_trajectory(7, 4);
        for mode in [AlignmentMode::Se3, AlignmentMode::Sim3] {
            assert!(matches!(
                umeyama_align(&coincident, &spread, mode),
                Err(TrajEvalError::DegenerateConfiguration { .. })
            ));
            assert!(matches!(
                umeyama_align(&spread, &coincident, mode),
                Err(TrajEvalError::DegenerateConfiguration { .. })
            ));
        }
        let two = trajectory_from_translations(&[Vector3::zeros(), Vector3::x()]);
        assert!(matches!(
            umeyama_align(&two, &two, AlignmentMode::Se3),
            Err(TrajEvalError::InsufficientOverlap { .. })
        ));
        let late_entries: Vec<TrajectoryEntry> = (10..14)
            .map(|f| TrajectoryEntry {
                frame: f,
                timestamp: f as f64 / 30.0,
                pose: Pose::new(UnitQuaternion::identity(), Vector3::x() * f as f64),
            })
            .collect();
        let late = Trajectory::from_entries(late_entries).unwrap();
        assert!(matches!(
            umeyama_align(&spread, &late, AlignmentMode::Se3),
            Err(TrajEvalError::InsufficientOverlap { .. })
        ));
    }

    #[test]
    fn fitted_transform_is_a_least_squares_optimum() {
        // Perturbing the fitted transform must never reduce the residual sum
        // of squares.
        let reference = random_trajectory(23, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let noisy: Vec<Vector3<f64>> = reference
            .iter()
            .map(|e| {
                e.pose.translation
                    + Vector3::new(
                        rng.gen_range(-0.05..0.05),
                        rng.gen_range(-0.05..0.05),
                        rng.gen_range(-0.05..0.05),
                    )
            })
            .collect();
        let estimated = trajectory_from_translations(&noisy);
        for mode in [AlignmentMode::Se3, AlignmentMode::Sim3] {
            let fit = umeyama_align(&estimated, &reference, mode).unwrap();
            let best = residual_sum_of_squares(&estimated, &reference, &fit.transform);
            for magnitude in [1e-3, 1e-2] {
                for _ in 0..20 {
                    let axis = Vector3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    ) * magnitude;
                    let shift = Vector3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    ) * magnitude;
                    let scale_bump = match mode {
                        AlignmentMode::Se3 => 1.0,
                        AlignmentMode::Sim3 => 1.0 + rng.gen_range(-magnitude..magnitude),
                    };
                    let perturbed = SimilarityTransform::new(
                        fit.transform.scale() * scale_bump,
                        UnitQuaternion::from_scaled_axis(axis) * fit.transform.rotation,
                        fit.transform.translation + shift,
                    )
                    .unwrap();
                    let worse = residual_sum_of_squares(&estimated, &reference, &perturbed);
                    assert!(
                        worse + 1e-12 >= best,
                        "{mode:?}: perturbed rss {worse} beat optimum {best}"
                    );
                }
            }
        }
    }

    #[test]
    fn ate_is_invariant_to_global_motions_of_the_estimate() {
        for seed in 0..8u64 {
            let reference = random_trajectory(seed, 10);
            let estimated = random_trajectory(seed + 100, 10);
            let rigid = random_rigid(seed + 200);
            let moved = rigid.apply_trajectory(&estimated);
            let base_se3 = ate_rmse(&estimated, &reference, AlignmentMode::Se3).unwrap();
            let moved_se3 = ate_rmse(&moved, &reference, AlignmentMode::Se3).unwrap();
            assert_relative_eq!(base_se3, moved_se3, epsilon = 1e-9);

            let similarity = SimilarityTransform::new(
                2.0,
                rigid.rotation,
                rigid.translation,
            )
            .unwrap();
            let scaled = similarity.apply_trajectory(&estimated);
            let base_sim3 = ate_rmse(&estimated, &reference, AlignmentMode::Sim3).unwrap();
            let scaled_sim3 = ate_rmse(&scaled, &reference, AlignmentMode::Sim3).unwrap();
            assert_relative_eq!(base_sim3, scaled_sim3, epsilon = 1e-9);
            assert!(base_sim3 <= base_se3 + 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn similarity_alignment_never_loses_to_rigid(seed in 0u64..1u64 << 32) {
            let reference = random_trajectory(seed, 8);
            let estimated = random_trajectory(seed ^ 0xdead_beef, 8);
            let sim3 = ate_rmse(&estimated, &reference, AlignmentMode::Sim3).unwrap();
            let se3 = ate_rmse(&estimated, &reference, AlignmentMode::Se3).unwrap();
            prop_assert!(sim3 <= se3 + 1e-12);
        }
    }

    #[test]
    fn rpe_of_identical_trajectories_is_zero() {
        let traj = random_trajectory(31, 9);
        let (translation, rotation) = rpe(&traj, &traj, 1).unwrap();
        assert!(translation < 1e-12);
        assert!(rotation < 1e-9);
    }

    #[test]
    fn rpe_matches_a_hand_rotated_middle_pose() {
        let reference = trajectory_from_translations(&[Vector3::zeros(); 3]);
        let mut entries: Vec<TrajectoryEntry> = reference.entries().to_vec();
        entries[1].pose = Pose::new(
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 10f64.to_radians()),
            Vector3::zeros(),
        );
        let estimated = Trajectory::from_entries(entries).unwrap();
        let (translation, rotation) = rpe(&estimated, &reference, 1).unwrap();
        // Both frame pairs see exactly a ten degree relative rotation error
        // and no translation error, so the RMSE is ten degrees.
        assert_abs_diff_eq!(translation, 0.0, epsilon = 1e-12);
        assert_relative_eq!(rotation, 10.0, epsilon = 1e-9);
    }

    #[test]
    fn rpe_respects_the_frame_spacing() {
        let reference = trajectory_from_translations(&[Vector3::zeros(); 5]);
        let drift: Vec<Vector3<f64>> = (0..5).map(|i| Vector3::x() * (0.1 * i as f64)).collect();
        let estimated = trajectory_from_translations(&drift);
        let (t1, r1) = rpe(&estimated, &reference, 1).unwrap();
        assert_relative_eq!(t1, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(r1, 0.0, epsilon = 1e-9);
        let (t2, _) = rpe(&estimated, &reference, 2).unwrap();
        assert_relative_eq!(t2, 0.2, epsilon = 1e-12);
        assert!(matches!(
            rpe(&estimated, &reference, 0),
            Err(TrajEvalError::InvalidParameter { .. })
        ));
        assert!(matches!(
            rpe(&estimated, &reference, 10),
            Err(TrajEvalError::InsufficientOverlap { .. })
        ));
    }

    #[test]
    fn rpe_uses_only_shared_frame_pairs() {
        let reference_entries: Vec<TrajectoryEntry> = [0usize, 1, 3]
            .iter()
            .map(|&f| TrajectoryEntry {
                frame: f,
                timestamp: f as f64 / 30.0,
                pose: Pose::identity(),
            })
            .collect();
        let reference = Trajectory::from_entries(reference_entries).unwrap();
        let estimated_points: Vec<Vector3<f64>> =
            (0..4).map(|i| Vector3::x() * (i * i) as f64).collect();
        let estimated = trajectory_from_translations(&estimated_points);
        // Common frames are {0, 1, 3}: spacing 1 leaves the single pair
        // (0, 1); spacing 2 leaves the single pair (1, 3).
        let (t1, _) = rpe(&estimated, &reference, 1).unwrap();
        assert_relative_eq!(t1, 1.0, epsilon = 1e-12);
        let (t2, _) = rpe(&estimated, &reference, 2).unwrap();
        assert_relative_eq!(t2, 8.0, epsilon = 1e-12);
    }

    fn clean_static_config(num_frames: usize) -> SceneConfig {
        SceneConfig {
            num_frames,
            num_static_points: 40,
            moving_objects: Vec::new(),
            camera_path: CameraPath::Linear { speed: 0.6 },
            intrinsics: CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap(),
            track_noise_sigma: 0.0,
            flow_noise_sigma: 0.0,
            detector_box_jitter: 0.0,
            seed: 404,
        }
    }

    fn crossing_object_config() -> SceneConfig {
        SceneConfig {
            num_frames: 10,
            num_static_points: 18,
            moving_objects: vec![ObjectSpec {
                box_dims: Vector3::new(1.5, 1.5, 1.5),
                initial_pose: Pose::new(UnitQuaternion::identity(), Vector3::new(0.5, 0.0, 6.5)),
                velocity: Vector3::new(-1.0, 0.0, 0.0),
                angular_velocity: Vector3::zeros(),
                surface_point_count: 14,
            }],
            camera_path: CameraPath::Linear { speed: 0.4 },
            intrinsics: CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap(),
            track_noise_sigma: 0.0,
            flow_noise_sigma: 0.0,
            detector_box_jitter: 0.0,
            seed: 902,
        }
    }

    #[test]
    fn pose_solver_recovers_ground_truth_on_a_clean_scene() {
        let scene = crate::scene::generate_scene(&clean_static_config(12)).unwrap();
        let observations = scene_observations(&scene, None).unwrap();
        for frame in &observations.frames {
            assert!(frame.observations.len() >= MIN_PNP_OBSERVATIONS);
        }
        let estimated = estimate_trajectory_pnp(&observations, scene.intrinsics()).unwrap();
        assert_eq!(estimated.len(), scene.num_frames());
        for (est, truth) in estimated.iter().zip(scene.gt_trajectory.iter()) {
            assert_eq!(est.frame, truth.frame);
            let difference = truth.pose.inverse().compose(&est.pose);
            assert!(
                difference.translation.norm() < 1e-6,
                "frame {}: translation off by {}",
                est.frame,
                difference.translation.norm()
            );
            assert!(
                difference.rotation_angle() < 1e-6,
                "frame {}: rotation off by {}",
                est.frame,
                difference.rotation_angle()
            );
        }
    }

    #[test]
    fn pose_solver_requires_six_observations_per_frame() {
        let scene = generate_scene_for_observations();
        let mut observations = scene_observations(&scene, None).unwrap();
        observations.frames[0].observations.truncate(5);
        let k = scene.intrinsics().clone();
        let err = estimate_trajectory_pnp(&observations, &k).unwrap_err();
        assert!(matches!(
            err,
            TrajEvalError::TooFewObservations { frame: 0, count: 5 }
        ));
    }

    fn generate_scene_for_observations() -> ScenePackage {
        crate::scene::generate_scene(&clean_static_config(4)).unwrap()
    }

    #[test]
    fn pose_solver_is_no_worse_than_truth_at_reprojection() {
        let scene = crate::scene::generate_scene(&clean_static_config(8)).unwrap();
        let observations = scene_observations(&scene, None).unwrap();
        let estimated = estimate_trajectory_pnp(&observations, scene.intrinsics()).unwrap();
        for (frame, est) in observations.frames.iter().zip(estimated.iter()) {
            let est_error =
                mean_reprojection_error(&est.pose.inverse(), frame, scene.intrinsics());
            let truth_error = mean_reprojection_error(
                &scene.gt_trajectory.pose_at(frame.frame).unwrap().inverse(),
                frame,
                scene.intrinsics(),
            );
            assert!(
                est_error <= truth_error + 1e-9,
                "frame {}: estimate reprojects at {est_error}, truth at {truth_error}",
                frame.frame
            );
        }
    }

    #[test]
    fn stale_landmarks_on_moving_geometry_corrupt_the_estimate() {
        let scene = crate::scene::generate_scene(&crossing_object_config()).unwrap();
        let all = scene_observations(&scene, None).unwrap();
        let index_of = track_index_by_id(&scene);
        let static_only = ObservationSet {
            frames: all
                .frames
                .iter()
                .map(|f| FrameObservations {
                    frame: f.frame,
                    timestamp: f.timestamp,
                    observations: f
                        .observations
                        .iter()
                        .filter(|o| !scene.gt_dynamic_labels[index_of[&o.track_id]])
                        .cloned()
                        .collect(),
                })
                .collect(),
        };
        let dynamic_share = 1.0
            - static_only.frames.iter().map(|f| f.observations.len()).sum::<usize>() as f64
                / all.frames.iter().map(|f| f.observations.len()).sum::<usize>() as f64;
        assert!(
            dynamic_share > 0.2,
            "scene too tame to demonstrate corruption: {dynamic_share}"
        );
        let k = scene.intrinsics();
        let corrupted = estimate_trajectory_pnp(&all, k).unwrap();
        let clean = estimate_trajectory_pnp(&static_only, k).unwrap();
        let ate_corrupted =
            ate_rmse(&corrupted, &scene.gt_trajectory, AlignmentMode::Sim3).unwrap();
        let ate_clean = ate_rmse(&clean, &scene.gt_trajectory, AlignmentMode::Sim3).unwrap();
        assert!(ate_clean < 1e-6, "clean run should be exact, got {ate_clean}");
        assert!(
            ate_corrupted > 100.0 * ate_clean.max(1e-9),
            "corrupted {ate_corrupted} vs clean {ate_clean}"
        );
    }

    fn mask_from_boxes(
        frame: usize,
        boxes: Vec<crate::object_filter::BoundingBox>,
        k: &CameraIntrinsics,
    ) -> ObjectMask {
        let set = FilteredBoxSet {
            frame,
            kept: boxes
                .into_iter()
                .map(|bounding_box| BoxDynamics {
                    bounding_box,
                    dynamic_count: 0,
                    threshold: 0.0,
                })
                .collect(),
            unit_box: None,
            tau_0: 5.0,
        };
        rasterize_masks(&set, k.width as usize, k.height as usize, &BoxRasterizer)
    }

    fn oracle_masks(scene: &ScenePackage) -> Vec<ObjectMask> {
        let k = scene.intrinsics();
        (0..scene.num_frames())
            .map(|t| {
                let moving: Vec<_> = scene.detections[t]
                    .iter()
                    .filter(|b| b.gt_moving == Some(true))
                    .cloned()
                    .collect();
                mask_from_boxes(t, moving, k)
            })
            .collect()
    }

    #[test]
    fn oracle_masks_restore_trajectory_accuracy() {
        let scene = crate::scene::generate_scene(&crossing_object_config()).unwrap();
        let masks = oracle_masks(&scene);
        let outcome = compare_masked_vs_unmasked(
            &scene,
            &masks,
            scene.intrinsics(),
            &EvalConfig::default(),
        )
        .unwrap();
        assert!(
            outcome.masked.metrics.ate_rmse < outcome.unmasked.metrics.ate_rmse,
            "masked {} vs unmasked {}",
            outcome.masked.metrics.ate_rmse,
            outcome.unmasked.metrics.ate_rmse
        );
        assert!(
            outcome.masked.metrics.ate_rmse < 1e-6,
            "masked run should be near exact, got {}",
            outcome.masked.metrics.ate_rmse
        );
        assert!(outcome.ate_improvement > 0.9);
        for ((frame_masked, masked_count), (frame_all, all_count)) in outcome
            .masked
            .observation_counts
            .iter()
            .zip(&outcome.unmasked.observation_counts)
        {
            assert_eq!(frame_masked, frame_all);
            assert!(masked_count <= all_count);
        }
    }

    #[test]
    fn comparison_without_objects_changes_nothing() {
        let scene = crate::scene::generate_scene(&clean_static_config(6)).unwrap();
        let k = scene.intrinsics();
        let blank_masks: Vec<ObjectMask> = (0..scene.num_frames())
            .map(|t| mask_from_boxes(t, Vec::new(), k))
            .collect();
        let outcome =
            compare_masked_vs_unmasked(&scene, &blank_masks, k, &EvalConfig::default()).unwrap();
        assert_eq!(
            outcome.unmasked.metrics, outcome.masked.metrics,
            "blank masks must not change the solve"
        );
        assert_eq!(outcome.ate_improvement, 0.0);
        assert_eq!(
            outcome.unmasked.observation_counts,
            outcome.masked.observation_counts
        );
    }

    #[test]
    fn missing_masks_are_reported() {
        let scene = crate::scene::generate_scene(&clean_static_config(4)).unwrap();
        let k = scene.intrinsics();
        let short: Vec<ObjectMask> = (0..2).map(|t| mask_from_boxes(t, Vec::new(), k)).collect();
        assert!(matches!(
            scene_observations(&scene, Some(&short)),
            Err(TrajEvalError::InvalidParameter { .. })
        ));
    }

    #[test]
    fn eval_config_serialization_round_trips_and_rejects_unknown_fields() {
        let config = EvalConfig {
            alignment: AlignmentMode::Se3,
            rpe_delta: 3,
        };
        let json = serde_json::to_string(&config).unwrap();
        assert!(json.contains("\"se3\""));
        let back: EvalConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, config);
        let defaulted: EvalConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(defaulted, EvalConfig::default());
        assert!(serde_json::from_str::<EvalConfig>("{\"rpe_delta\": 2, \"bogus\": 1}").is_err());
        assert_eq!("sim3".parse::<AlignmentMode>().unwrap(), AlignmentMode::Sim3);
        assert_eq!("se3".parse::<AlignmentMode>().unwrap(), AlignmentMode::Se3);
        assert!("euclidean".parse::<AlignmentMode>().is_err());
        assert_eq!(AlignmentMode::Sim3.to_string(), "sim3");
    }

    #[test]
    fn metrics_helper_matches_the_individual_calls() {
        let reference = random_trajectory(41, 10);
        let estimated = random_trajectory(43, 10);
        let config = EvalConfig {
            alignment: AlignmentMode::Se3,
            rpe_delta: 2,
        };
        let metrics = trajectory_metrics(&estimated, &reference, &config).unwrap();
        let ate = ate_rmse(&estimated, &reference, AlignmentMode::Se3).unwrap();
        let (rpe_t, rpe_r) = rpe(&estimated, &reference, 2).unwrap();
        assert_eq!(metrics.ate_rmse, ate);
        assert_eq!(metrics.rpe_translation_rmse, rpe_t);
        assert_eq!(metrics.rpe_rotation_rmse_deg, rpe_r);
        assert_eq!(metrics.rpe_delta, 2);
        assert!(matches!(
            trajectory_metrics(
                &estimated,
                &reference,
                &EvalConfig {
                    alignment: AlignmentMode::Se3,
                    rpe_delta: 0
                }
            ),
            Err(TrajEvalError::InvalidParameter { .. })
        ));
    }

    #[test]
    fn trajectory_entries_reject_non_increasing_frames() {
        let entries = vec![
            TrajectoryEntry {
                frame: 1,
                timestamp: 0.0,
                pose: Pose::identity(),
            },
            TrajectoryEntry {
                frame: 1,
                timestamp: 0.1,
                pose: Pose::identity(),
            },
        ];
        assert!(matches!(
            Trajectory::from_entries(entries),
            Err(GeometryError::NonIncreasingFrames { index: 1 })
        ));
    }
}
