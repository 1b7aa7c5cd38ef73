//! Dynamic-point extraction: anchor-predicted camera-motion priors,
//! heavy-tailed trajectory likelihoods, and adaptive optical-flow gating.
//!
//! A point track is scored in two independent ways. First, its window of
//! image positions is evaluated under a multivariate Cauchy distribution
//! whose mean is predicted from anchor-point displacements (assumed static
//! scene structure) and whose scale matrix is a regularized linear kernel
//! of the track's appearance features; the track's negative log-likelihood
//! is ranked against the anchors' own leave-one-out scores to obtain a
//! dynamic probability. Second, the track's instantaneous optical-flow
//! magnitude is compared against a per-frame adaptive threshold. A track
//! is flagged dynamic at a frame only when both tests agree.

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Visibility values at or above this are treated as visible when masking
/// likelihood terms.
pub const VISIBILITY_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum DynamicPointsError {
    #[error("grid count {k} is invalid for a {width}x{height} map")]
    InvalidGrid { k: usize, width: usize, height: usize },
    #[error("gradient map storage is inconsistent: {detail}")]
    InvalidGradientMap { detail: String },
    #[error("regularization lambda must be positive, got {lambda}")]
    NonPositiveLambda { lambda: f64 },
    #[error("scale matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: {detail}")]
    DimensionMismatch { detail: String },
    #[error("track has {visible} visible frames, need at least 2")]
    TooFewVisible { visible: usize },
    #[error("fewer than 2 anchors visible at frame {frame}")]
    InsufficientAnchors { frame: usize },
    #[error("flow sample set is empty")]
    EmptySampleSet,
    #[error("invalid track: {detail}")]
    InvalidTrack { detail: String },
    #[error("invalid parameter: {detail}")]
    InvalidParameter { detail: String },
}

/// A tracked image point over a fixed window of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTrack {
    pub track_id: u64,
    /// Frame the point was picked from; its position there is the query
    /// position the motion prior is anchored at.
    pub query_frame: usize,
    pub positions: Vec<Vector2<f64>>,
    /// Per-frame visibility in [0, 1]; binarized at [`VISIBILITY_THRESHOLD`].
    pub visibility: Vec<f64>,
    /// Appearance features, one d-vector per frame (d rows, window columns).
    pub features: DMatrix<f64>,
    pub is_anchor: bool,
}

impl PointTrack {
    pub fn new(
        track_id: u64,
        query_frame: usize,
        positions: Vec<Vector2<f64>>,
        visibility: Vec<f64>,
        features: DMatrix<f64>,
        is_anchor: bool,
    ) -> Result<Self, DynamicPointsError> {
        let fail = |detail: String| Err(DynamicPointsError::InvalidTrack { detail });
        let window = positions.len();
        if window < 2 {
            return fail(format!("window length {window} is below 2"));
        }
        if visibility.len() != window {
            return fail(format!(
                "visibility length {} does not match window {window}",
                visibility.len()
            ));
        }
        if features.ncols() != window || features.nrows() == 0 {
            return fail(format!(
                "features are {}x{}, expected d x {window} with d >= 1",
                features.nrows(),
                features.ncols()
            ));
        }
        if query_frame >= window {
            return fail(format!("query frame {query_frame} outside window {window}"));
        }
        if positions.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return fail("non-finite position".into());
        }
        if visibility.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return fail("visibility outside [0, 1]".into());
        }
        Ok(PointTrack {
            track_id,
            query_frame,
            positions,
            visibility,
            features,
            is_anchor,
        })
    }

    pub fn window(&self) -> usize {
        self.positions.len()
    }

    pub fn visible_at(&self, frame: usize) -> bool {
        self.visibility[frame] >= VISIBILITY_THRESHOLD
    }

    pub fn query_position(&self) -> Vector2<f64> {
        self.positions[self.query_frame]
    }
}

/// Per-pixel non-negative saliency map, row-major.
#[derive(Debug, Clone)]
pub struct GradientMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl GradientMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, DynamicPointsError> {
        let fail = |detail: String| Err(DynamicPointsError::InvalidGradientMap { detail });
        if width == 0 || height == 0 {
            return fail(format!("map size {width}x{height} is empty"));
        }
        if values.len() != width * height {
            return fail(format!(
                "{} values for a {width}x{height} map",
                values.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return fail("saliency values must be finite and non-negative".into());
        }
        Ok(GradientMap {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

/// Picks one query point per cell of a k x k grid: the pixel with the
/// highest saliency, ties resolved toward the smallest (row, col).
///
/// Returns exactly k^2 points in row-major cell order as (x, y) pixel
/// coordinates.
pub fn select_anchor_points(
    map: &GradientMap,
    k: usize,
) -> Result<Vec<Vector2<f64>>, DynamicPointsError> {
    if k == 0 || k > map.width || k > map.height {
        return Err(DynamicPointsError::InvalidGrid {
            k,
            width: map.width,
            height: map.height,
        });
    }
    let mut points = Vec::with_capacity(k * k);
    for gy in 0..k {
        let r0 = gy * map.height / k;
        let r1 = (gy + 1) * map.height / k;
        for gx in 0..k {
            let c0 = gx * map.width / k;
            let c1 = (gx + 1) * map.width / k;
            let mut best = (r0, c0);
            let mut best_value = map.value(r0, c0);
            for row in r0..r1 {
                for col in c0..c1 {
                    // Strict comparison in scan order keeps the smallest
                    // (row, col) among ties.
                    if map.value(row, col) > best_value {
                        best_value = map.value(row, col);
                        best = (row, col);
                    }
                }
            }
            points.push(Vector2::new(best.1 as f64, best.0 as f64));
        }
    }
    Ok(points)
}

/// Scale matrix of the trajectory distribution: the linear feature kernel
/// `f' f` plus `lambda` on the diagonal.
pub fn build_scale_matrix(
    features: &DMatrix<f64>,
    lambda: f64,
) -> Result<DMatrix<f64>, DynamicPointsError> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(DynamicPointsError::NonPositiveLambda { lambda });
    }
    let mut sigma = features.transpose() * features;
    for i in 0..sigma.nrows() {
        sigma[(i, i)] += lambda;
    }
    Ok(sigma)
}

/// ln Gamma(n/2) for positive integer n, via the half-integer recurrence
/// from Gamma(1/2) = sqrt(pi) and Gamma(1) = 1. Exact up to rounding for
/// every argument this crate uses.
fn ln_gamma_half(n: usize) -> f64 {
    assert!(n >= 1);
    let mut x = n;
    let mut acc = 0.0;
    while x > 2 {
        x -= 2;
        acc += (x as f64 / 2.0).ln();
    }
    if x == 1 {
        acc + 0.5 * std::f64::consts::PI.ln()
    } else {
        acc
    }
}

/// Log-density of the multivariate Cauchy distribution (a Student-t with one
/// degree of freedom):
///
/// ```text
/// ln Gamma((S+1)/2) - ln Gamma(1/2) - (S/2) ln pi - (1/2) ln|Sigma|
///   - ((S+1)/2) ln(1 + z' Sigma^-1 z),   z = x - mu
/// ```
///
/// The quadratic form and determinant come from one Cholesky factorization;
/// the scale matrix is never inverted explicitly.
pub fn cauchy_log_density(
    x: &DVector<f64>,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
) -> Result<f64, DynamicPointsError> {
    let s = x.len();
    if s == 0 || mu.len() != s || sigma.nrows() != s || sigma.ncols() != s {
        return Err(DynamicPointsError::DimensionMismatch {
            detail: format!(
                "x has {} entries, mu {}, sigma is {}x{}",
                s,
                mu.len(),
                sigma.nrows(),
                sigma.ncols()
            ),
        });
    }
    let chol = nalgebra::Cholesky::new(sigma.clone())
        .ok_or(DynamicPointsError::NotPositiveDefinite)?;
    let l = chol.l();
    let half_log_det: f64 = (0..s).map(|i| l[(i, i)].ln()).sum();
    // Solve L w = z; then z' Sigma^-1 z = |w|^2.
    let w = l
        .solve_lower_triangular(&(x - mu))
        .ok_or(DynamicPointsError::NotPositiveDefinite)?;
    let quad = w.norm_squared();
    let s_f = s as f64;
    Ok(ln_gamma_half(s + 1) - ln_gamma_half(1) - 0.5 * s_f * std::f64::consts::PI.ln()
        - half_log_det
        - 0.5 * (s_f + 1.0) * quad.ln_1p())
}

/// Per-axis Cauchy trajectory model over a track window: mean vectors and
/// SPD scale matrices for the x and y pixel coordinates, plus the
/// regularization weight the scales were built with.
#[derive(Debug, Clone)]
pub struct TrajectoryDistribution {
    pub mu_x: DVector<f64>,
    pub mu_y: DVector<f64>,
    pub sigma_x: DMatrix<f64>,
    pub sigma_y: DMatrix<f64>,
    pub lambda: f64,
}

impl TrajectoryDistribution {
    pub fn new(
        mu_x: DVector<f64>,
        mu_y: DVector<f64>,
        sigma_x: DMatrix<f64>,
        sigma_y: DMatrix<f64>,
        lambda: f64,
    ) -> Result<Self, DynamicPointsError> {
        let s = mu_x.len();
        if s == 0
            || mu_y.len() != s
            || sigma_x.nrows() != s
            || sigma_x.ncols() != s
            || sigma_y.nrows() != s
            || sigma_y.ncols() != s
        {
            return Err(DynamicPointsError::DimensionMismatch {
                detail: format!("inconsistent distribution dimensions for window {s}"),
            });
        }
        if !(lambda > 0.0) {
            return Err(DynamicPointsError::NonPositiveLambda { lambda });
        }
        for (name, m) in [("sigma_x", &sigma_x), ("sigma_y", &sigma_y)] {
            for i in 0..s {
                for j in (i + 1)..s {
                    if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 {
                        return Err(DynamicPointsError::DimensionMismatch {
                            detail: format!("{name} is not symmetric at ({i}, {j})"),
                        });
                    }
                }
            }
        }
        Ok(TrajectoryDistribution {
            mu_x,
            mu_y,
            sigma_x,
            sigma_y,
            lambda,
        })
    }

    pub fn window(&self) -> usize {
        self.mu_x.len()
    }
}

fn principal_submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Log-likelihood of a track under a trajectory distribution, restricted to
/// the track's visible frames. The two pixel axes are modeled independently,
/// so the result is the sum of two Cauchy log-densities over the visible
/// sub-window.
pub fn track_log_likelihood(
    track: &PointTrack,
    dist: &TrajectoryDistribution,
) -> Result<f64, DynamicPointsError> {
    let window = track.window();
    if dist.window() != window {
        return Err(DynamicPointsError::DimensionMismatch {
            detail: format!(
                "track window {window} vs distribution window {}",
                dist.window()
            ),
        });
    }
    let visible: Vec<usize> = (0..window).filter(|&t| track.visible_at(t)).collect();
    if visible.len() < 2 {
        return Err(DynamicPointsError::TooFewVisible {
            visible: visible.len(),
        });
    }
    let xs = DVector::from_iterator(visible.len(), visible.iter().map(|&t| track.positions[t].x));
    let ys = DVector::from_iterator(visible.len(), visible.iter().map(|&t| track.positions[t].y));
    let ll_x = cauchy_log_density(
        &xs,
        &subvector(&dist.mu_x, &visible),
        &principal_submatrix(&dist.sigma_x, &visible),
    )?;
    let ll_y = cauchy_log_density(
        &ys,
        &subvector(&dist.mu_y, &visible),
        &principal_submatrix(&dist.sigma_y, &visible),
    )?;
    Ok(ll_x + ll_y)
}

fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("non-finite displacement"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Predicts where a static point at `query_position` (picked at
/// `query_frame`) would appear in every frame of the window, using the
/// componentwise median displacement of the anchors as a camera-motion
/// estimate.
///
/// Every frame needs at least two anchors visible both there and at the
/// query frame; otherwise the frame's median is undefined and the whole
/// prior fails with [`DynamicPointsError::InsufficientAnchors`].
pub fn estimate_camera_motion_prior(
    anchors: &[&PointTrack],
    query_position: Vector2<f64>,
    query_frame: usize,
) -> Result<(DVector<f64>, DVector<f64>), DynamicPointsError> {
    let window = match anchors.first() {
        Some(a) => a.window(),
        None => {
            return Err(DynamicPointsError::InsufficientAnchors { frame: query_frame });
        }
    };
    if anchors.iter().any(|a| a.window() != window) {
        return Err(DynamicPointsError::DimensionMismatch {
            detail: "anchors have differing window lengths".into(),
        });
    }
    if query_frame >= window {
        return Err(DynamicPointsError::DimensionMismatch {
            detail: format!("query frame {query_frame} outside window {window}"),
        });
    }
    let mut mu_x = DVector::zeros(window);
    let mut mu_y = DVector::zeros(window);
    for t in 0..window {
        let mut dx = Vec::new();
        let mut dy = Vec::new();
        for a in anchors {
            if a.visible_at(query_frame) && a.visible_at(t) {
                let d = a.positions[t] - a.positions[query_frame];
                dx.push(d.x);
                dy.push(d.y);
            }
        }
        if dx.len() < 2 {
            return Err(DynamicPointsError::InsufficientAnchors { frame: t });
        }
        mu_x[t] = query_position.x + median(&mut dx);
        mu_y[t] = query_position.y + median(&mut dy);
    }
    Ok((mu_x, mu_y))
}

/// Rank-based dynamic probability: the fraction of anchor NLLs strictly
/// below the detection's NLL. High values mean the track fits the static
/// camera-motion model worse than nearly all anchors.
pub fn dynamic_probability(
    detection_nll: f64,
    anchor_nlls: &[f64],
) -> Result<f64, DynamicPointsError> {
    if anchor_nlls.len() < 2 {
        return Err(DynamicPointsError::InsufficientAnchors { frame: 0 });
    }
    let below = anchor_nlls.iter().filter(|&&nll| nll < detection_nll).count();
    Ok(below as f64 / anchor_nlls.len() as f64)
}

/// One optical-flow observation: the image position it was sampled at and
/// the flow vector to the next frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSample {
    pub position: Vector2<f64>,
    pub flow: Vector2<f64>,
}

/// Flow samples between frame `frame` and `frame + 1`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowSampleSet {
    pub frame: usize,
    pub samples: Vec<FlowSample>,
}

/// Mean Euclidean flow magnitude over a sample set.
pub fn mean_flow_magnitude(set: &FlowSampleSet) -> Result<f64, DynamicPointsError> {
    if set.samples.is_empty() {
        return Err(DynamicPointsError::EmptySampleSet);
    }
    Ok(set.samples.iter().map(|s| s.flow.norm()).sum::<f64>() / set.samples.len() as f64)
}

/// Per-frame flow threshold: `max(flow_scale * mean_magnitude, theta_min)`.
/// The floor keeps near-static frames from flagging noise.
pub fn adaptive_threshold(mean_magnitude: f64, flow_scale: f64, theta_min: f64) -> f64 {
    (flow_scale * mean_magnitude).max(theta_min)
}

/// Mean flow magnitude and the adaptive threshold derived from it, for one
/// frame
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowFrameStats {
    pub frame: usize,
    pub mean_magnitude: f64,
    pub threshold: f64,
}

/// Tunables for dynamic-point extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicConfig {
    /// Scale-matrix regularization weight, strictly positive.
    pub lambda: f64,
    /// Multiplier on the mean flow magnitude (`c`), strictly positive.
    pub flow_scale: f64,
    /// Lower bound on the flow threshold in pixels, non-negative.
    pub theta_min: f64,
    /// Dynamic-probability cutoff in [0, 1].
    pub p_min: f64,
    /// Anchor selection grid count (k x k cells).
    pub grid_k: usize,
    /// Expected appearance-feature dimension.
    pub feature_dim: usize,
}

impl Default for DynamicConfig {
    fn default() -> Self {
        DynamicConfig {
            lambda: 1.0,
            flow_scale: 1.5,
            theta_min: 0.5,
            p_min: 0.5,
            grid_k: 8,
            feature_dim: 8,
        }
    }
}

impl DynamicConfig {
    pub fn validate(&self) -> Result<(), DynamicPointsError> {
        let fail = |detail: String| Err(DynamicPointsError::InvalidParameter { detail });
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return fail(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.flow_scale > 0.0) || !self.flow_scale.is_finite() {
            return fail(format!("flow_scale must be positive, got {}", self.flow_scale));
        }
        if !(self.theta_min >= 0.0) || !self.theta_min.is_finite() {
            return fail(format!("theta_min must be non-negative, got {}", self.theta_min));
        }
        if !(0.0..=1.0).contains(&self.p_min) {
            return fail(format!("p_min must be in [0, 1], got {}", self.p_min));
        }
        if self.grid_k == 0 {
            return fail("grid_k must be at least 1".into());
        }
        if self.feature_dim == 0 {
            return fail("feature_dim must be at least 1".into());
        }
        Ok(())
    }
}

/// Outcome of scoring one detection track.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicScore {
    pub track_id: u64,
    /// Rank-based dynamic probability; `None` when the track could not be
    /// scored (too few visible frames or an unusable anchor prior) and was
    /// defaulted to static.
    pub probability: Option<f64>,
    /// One flag per window frame; a flag is set only where the track is
    /// visible, its probability passes `p_min`, and its flow magnitude
    /// exceeds the frame threshold. The final frame has no forward flow
    /// pair of its own, so it inherits the preceding frame's verdict: the
    /// pair at `S - 2` measures exactly the motion into frame `S - 1`.
    pub flags: Vec<bool>,
}

impl DynamicScore {
    pub fn is_dynamic(&self) -> bool {
        self.flags.iter().any(|&f| f)
    }
}

/// Scores plus the per-frame flow statistics they were gated with.
#[derive(Debug, Clone, Default)]
pub struct ClassificationOutput {
    pub scores: Vec<DynamicScore>,
    pub frame_stats: Vec<FlowFrameStats>,
}

fn nearest_flow_magnitude(set: &FlowSampleSet, position: &Vector2<f64>) -> Option<f64> {
    set.samples
        .iter()
        .map(|s| ((s.position - position).norm_squared(), s.flow.norm()))
        .min_by(|a, b| a.0.partial_cmp(&b.0).expect("non-finite flow distance"))
        .map(|(_, magnitude)| magnitude)
}

/// Classifies every non-anchor track in the window.
///
/// Anchor leave-one-out NLLs are computed once and shared by all detection
/// ranks. A detection failing its own precondition (too few visible frames,
/// unusable prior) defaults to static with an indeterminate probability;
/// numerical failures propagate.
pub fn classify_dynamic_points(
    tracks: &[PointTrack],
    flow: &[FlowSampleSet],
    config: &DynamicConfig,
) -> Result<ClassificationOutput, DynamicPointsError> {
    config.validate()?;
    let window = match tracks.first() {
        Some(t) => t.window(),
        None => return Ok(ClassificationOutput::default()),
    };
    if tracks.iter().any(|t| t.window() != window) {
        return Err(DynamicPointsError::DimensionMismatch {
            detail: "tracks have differing window lengths".into(),
        });
    }

    let anchors: Vec<&PointTrack> = tracks.iter().filter(|t| t.is_anchor).collect();

    // Leave-one-out anchor scores: each anchor is evaluated under the prior
    // built from the remaining anchors, so it never votes for itself.
    let mut anchor_nlls = Vec::with_capacity(anchors.len());
    for (i, anchor) in anchors.iter().enumerate() {
        let others: Vec<&PointTrack> = anchors
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, a)| *a)
            .collect();
        let nll = score_track(anchor, &others, config.lambda);
        match nll {
            Ok(value) => anchor_nlls.push(value),
            Err(
                DynamicPointsError::InsufficientAnchors { .. }
                | DynamicPointsError::TooFewVisible { .. },
            ) => {}
            Err(other) => return Err(other),
        }
    }

    // Flow statistics by frame; frames without samples contribute no stats
    // and gate nothing.
    let mut frame_stats = Vec::new();
    for set in flow {
        if set.samples.is_empty() {
            continue;
        }
        let mean_magnitude = mean_flow_magnitude(set)?;
        frame_stats.push(FlowFrameStats {
            frame: set.frame,
            mean_magnitude,
            threshold: adaptive_threshold(mean_magnitude, config.flow_scale, config.theta_min),
        });
    }
    frame_stats.sort_by_key(|s| s.frame);

    let mut scores = Vec::new();
    for track in tracks.iter().filter(|t| !t.is_anchor) {
        let probability = match score_track(track, &anchors, config.lambda) {
            Ok(nll) => match dynamic_probability(nll, &anchor_nlls) {
                Ok(p) => Some(p),
                Err(DynamicPointsError::InsufficientAnchors { .. }) => None,
                Err(other) => return Err(other),
            },
            Err(
                DynamicPointsError::InsufficientAnchors { .. }
                | DynamicPointsError::TooFewVisible { .. },
            ) => None,
            Err(other) => return Err(other),
        };

        let mut flags = vec![false; window];
        if probability.is_some_and(|p| p >= config.p_min) {
            for stats in &frame_stats {
                let t = stats.frame;
                if t >= window || !track.visible_at(t) {
                    continue;
                }
                let set = flow.iter().find(|s| s.frame == t).expect("stats from flow");
                if let Some(magnitude) = nearest_flow_magnitude(set, &track.positions[t]) {
                    if magnitude > stats.threshold {
                        flags[t] = true;
                    }
                }
            }
            // No flow pair starts at the final frame; the pair at the
            // previous frame measured the motion into it, so that verdict
            // carries over while the track stays visible.
            if window >= 2 && flags[window - 2] && track.visible_at(window - 1) {
                flags[window - 1] = true;
            }
        }
        scores.push(DynamicScore {
            track_id: track.track_id,
            probability,
            flags,
        });
    }

    Ok(ClassificationOutput {
        scores,
        frame_stats,
    })
}

/// NLL of `track` under the anchor-predicted prior with its own feature
/// kernel as scale.
fn score_track(
    track: &PointTrack,
    anchors: &[&PointTrack],
    lambda: f64,
) -> Result<f64, DynamicPointsError> {
    let (mu_x, mu_y) =
        estimate_camera_motion_prior(anchors, track.query_position(), track.query_frame)?;
    let sigma = build_scale_matrix(&track.features, lambda)?;
    let dist = TrajectoryDistribution::new(mu_x, mu_y, sigma.clone(), sigma, lambda)?;
    Ok(-track_log_likelihood(track, &dist)?)
}
