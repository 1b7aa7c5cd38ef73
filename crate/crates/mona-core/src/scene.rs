//! Seeded synthetic dynamic-scene generator: point tracks, flow samples,
//! detections, and ground truth, replacing real video plus neural
//! perception with an exact, cheap oracle.
//!
//! Everything is a pure function of the configuration (seed included).
//! Randomness comes from one counter-based generator keyed by the seed,
//! with a dedicated stream per concern: the base stream drives scene
//! construction, and each frame's flow and detections draw from their own
//! streams, so [`synth_flow`] and [`synth_detections`] reproduce the
//! packaged artifacts bit-for-bit when called standalone.

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamic_points::{FlowSample, FlowSampleSet, PointTrack};
use crate::geometry::{CameraIntrinsics, Pose, Trajectory, TrajectoryEntry};
use crate::object_filter::BoundingBox;

/// Frames per second used to convert frame indices to timestamps.
pub const FRAME_RATE_HZ: f64 = 30.0;
/// Appearance-feature dimension the simulator emits.
pub const FEATURE_DIM: usize = 8;

/// Static background landmarks are unprojected from the first frame with
/// pixel coordinates inside this margin fraction of the image and depths in
/// this range (meters).
const STATIC_PIXEL_MARGIN: f64 = 0.1;
const STATIC_DEPTH_RANGE: (f64, f64) = (5.0, 11.0);
/// Distractor objects sit in the center-left of the first frame, a bit
/// closer than the far static background; the band leaves the right half
/// free so scene designers can route moving objects clear of it.
const DISTRACTOR_PIXEL_BAND: (f64, f64) = (0.35, 0.5);
const DISTRACTOR_DEPTH_RANGE: (f64, f64) = (6.0, 9.0);
const DISTRACTOR_SURFACE_POINTS: usize = 16;
/// Per-frame pose noise of the jittered-linear camera path.
const CAMERA_JITTER_TRANSLATION_M: f64 = 0.005;
const CAMERA_JITTER_ROTATION_RAD: f64 = 0.002;
/// The arc path orbits this point, starting at the world origin.
const ORBIT_CENTER_Z: f64 = 8.0;

/// Stream ids for the per-concern generators.
const BASE_STREAM: u64 = 0;
const FLOW_STREAM_BASE: u64 = 1 << 32;
const DETECTION_STREAM_BASE: u64 = 2 << 32;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid scene config: {detail}")]
    InvalidConfig { detail: String },
    #[error("degenerate scene: {detail}")]
    DegenerateScene { detail: String },
    #[error("frame {frame} is the last frame; it has no forward flow")]
    LastFrame { frame: usize },
    #[error("frame {frame} outside the window of {num_frames} frames")]
    FrameOutOfRange { frame: usize, num_frames: usize },
}

/// Camera motion over the window. Speeds are meters per second; frame
/// timestamps advance at [`FRAME_RATE_HZ`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CameraPath {
    /// Camera fixed at the world origin looking down +z.
    Static,
    /// Constant translation along +x.
    Linear { speed: f64 },
    /// Orbit of radius [`ORBIT_CENTER_Z`] around the point (0, 0, 8),
    /// always facing it.
    Arc { speed: f64 },
    /// Linear path with per-frame pose noise, imitating handheld capture.
    JitteredLinear { speed: f64 },
}

impl CameraPath {
    fn speed(&self) -> f64 {
        match self {
            CameraPath::Static => 0.0,
            CameraPath::Linear { speed }
            | CameraPath::Arc { speed }
            | CameraPath::JitteredLinear { speed } => *speed,
        }
    }
}

mod vec3_serde {
    use nalgebra::Vector3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector3<f64>, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector3<f64>, D::Error> {
        <[f64; 3]>::deserialize(d).map(Vector3::from)
    }
}

fn zero_vector3() -> Vector3<f64> {
    Vector3::zeros()
}

/// A rigid box moving through the scene, sampled on its surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    /// Box edge lengths in meters, componentwise positive.
    #[serde(with = "vec3_serde")]
    pub box_dims: Vector3<f64>,
    pub initial_pose: Pose,
    /// World-frame linear velocity, meters per second.
    #[serde(with = "vec3_serde", default = "zero_vector3")]
    pub velocity: Vector3<f64>,
    /// World-frame angular velocity about the object center, radians per
    /// second (scaled-axis form).
    #[serde(with = "vec3_serde", default = "zero_vector3")]
    pub angular_velocity: Vector3<f64>,
    pub surface_point_count: usize,
}

/// Full description of a synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub num_frames: usize,
    pub num_static_points: usize,
    #[serde(default)]
    pub moving_objects: Vec<ObjectSpec>,
    pub camera_path: CameraPath,
    pub intrinsics: CameraIntrinsics,
    /// Gaussian noise on tracked positions, pixels.
    #[serde(default)]
    pub track_noise_sigma: f64,
    /// Gaussian noise on flow vectors, pixels per frame.
    #[serde(default)]
    pub flow_noise_sigma: f64,
    /// Gaussian noise on detection box edges, pixels.
    #[serde(default)]
    pub detector_box_jitter: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        let fail = |detail: String| Err(SceneError::InvalidConfig { detail });
        if self.num_frames < 2 {
            return fail(format!("num_frames must be at least 2, got {}", self.num_frames));
        }
        if self.num_static_points < 8 {
            return fail(format!(
                "num_static_points must be at least 8, got {}",
                self.num_static_points
            ));
        }
        self.intrinsics.validate().map_err(|e| SceneError::InvalidConfig {
            detail: format!("intrinsics: {e}"),
        })?;
        for (name, sigma) in [
            ("track_noise_sigma", self.track_noise_sigma),
            ("flow_noise_sigma", self.flow_noise_sigma),
            ("detector_box_jitter", self.detector_box_jitter),
        ] {
            if !sigma.is_finite() || sigma < 0.0 {
                return fail(format!("{name} must be finite and non-negative, got {sigma}"));
            }
        }
        let speed = self.camera_path.speed();
        if !speed.is_finite() || speed < 0.0 {
            return fail(format!("camera speed must be finite and non-negative, got {speed}"));
        }
        for (i, obj) in self.moving_objects.iter().enumerate() {
            if obj.box_dims.iter().any(|d| !d.is_finite() || *d <= 0.0) {
                return fail(format!("moving_objects[{i}].box_dims must be positive"));
            }
            if obj.surface_point_count < 4 {
                return fail(format!(
                    "moving_objects[{i}].surface_point_count must be at least 4, got {}",
                    obj.surface_point_count
                ));
            }
            if obj.velocity.iter().chain(obj.angular_velocity.iter()).any(|v| !v.is_finite()) {
                return fail(format!("moving_objects[{i}] velocities must be finite"));
            }
        }
        Ok(())
    }

    pub fn timestamp(&self, frame: usize) -> f64 {
        frame as f64 / FRAME_RATE_HZ
    }
}

/// Where a track's landmark lives: the static background, the surface of a
/// moving object, or the surface of a static distractor object.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackSource {
    StaticBackground,
    MovingObject(usize),
    Distractor(usize),
}

/// Everything the rest of the pipeline consumes: ground truth plus the
/// synthetic sensor outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePackage {
    pub config: SceneConfig,
    /// World-from-camera pose per frame.
    pub gt_trajectory: Trajectory,
    pub tracks: Vec<PointTrack>,
    /// Parallel to `tracks`.
    pub track_sources: Vec<TrackSource>,
    /// Parallel to `tracks`: true exactly for tracks on moving objects.
    pub gt_dynamic_labels: Vec<bool>,
    /// Parallel to `tracks`: world position of each track's landmark at
    /// every frame.
    pub landmarks: Vec<Vec<Vector3<f64>>>,
    /// One sample set per frame pair (t, t+1).
    pub flow: Vec<FlowSampleSet>,
    /// Detection boxes per frame.
    pub detections: Vec<Vec<BoundingBox>>,
}

impl ScenePackage {
    pub fn num_frames(&self) -> usize {
        self.config.num_frames
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.config.intrinsics
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// World pose of an object at a given time: its center translates with the
/// linear velocity while the body spins about the center.
fn object_pose_at(spec: &ObjectSpec, time: f64) -> Pose {
    Pose::new(
        UnitQuaternion::from_scaled_axis(spec.angular_velocity * time)
            * spec.initial_pose.rotation,
        spec.initial_pose.translation + spec.velocity * time,
    )
}

/// Uniform sample on the surface of a centered axis-aligned box, faces
/// weighted by area. Consumes exactly three draws.
fn sample_surface_point(rng: &mut ChaCha8Rng, dims: &Vector3<f64>) -> Vector3<f64> {
    let (dx, dy, dz) = (dims.x, dims.y, dims.z);
    let areas = [dy * dz, dy * dz, dx * dz, dx * dz, dx * dy, dx * dy];
    let total: f64 = areas.iter().sum();
    let mut pick = rng.gen_range(0.0..total);
    let mut face = 5;
    for (i, area) in areas.iter().enumerate() {
        if pick < *area {
            face = i;
            break;
        }
        pick -= area;
    }
    let a = rng.gen_range(-0.5..0.5);
    let b = rng.gen_range(-0.5..0.5);
    match face {
        0 => Vector3::new(-dx / 2.0, a * dy, b * dz),
        1 => Vector3::new(dx / 2.0, a * dy, b * dz),
        2 => Vector3::new(a * dx, -dy / 2.0, b * dz),
        3 => Vector3::new(a * dx, dy / 2.0, b * dz),
        4 => Vector3::new(a * dx, b * dy, -dz / 2.0),
        _ => Vector3::new(a * dx, b * dy, dz / 2.0),
    }
}

fn build_camera_trajectory(config: &SceneConfig, rng: &mut ChaCha8Rng) -> Trajectory {
    let mut entries = Vec::with_capacity(config.num_frames);
    for frame in 0..config.num_frames {
        let time = config.timestamp(frame);
        let pose = match config.camera_path {
            CameraPath::Static => Pose::identity(),
            CameraPath::Linear { speed } => Pose::new(
                UnitQuaternion::identity(),
                Vector3::new(speed * time, 0.0, 0.0),
            ),
            CameraPath::Arc { speed } => {
                let radius = ORBIT_CENTER_Z;
                let center = Vector3::new(0.0, 0.0, ORBIT_CENTER_Z);
                let phi = speed * time / radius;
                let position = center + radius * Vector3::new(phi.sin(), 0.0, -phi.cos());
                let rotation = UnitQuaternion::face_towards(&(center - position), &Vector3::y());
                Pose::new(rotation, position)
            }
            CameraPath::JitteredLinear { speed } => {
                let translation_noise = Vector3::new(gauss(rng), gauss(rng), gauss(rng))
                    * CAMERA_JITTER_TRANSLATION_M;
                let rotation_noise = Vector3::new(gauss(rng), gauss(rng), gauss(rng))
                    * CAMERA_JITTER_ROTATION_RAD;
                Pose::new(
                    UnitQuaternion::from_scaled_axis(rotation_noise),
                    Vector3::new(speed * time, 0.0, 0.0) + translation_noise,
                )
            }
        };
        entries.push(TrajectoryEntry {
            frame,
            timestamp: time,
            pose,
        });
    }
    Trajectory::from_entries(entries).expect("frames are strictly increasing")
}

/// Exact projection of a world point, `Some` only when it lands inside the
/// image with positive depth.
fn visible_projection(
    intrinsics: &CameraIntrinsics,
    cam_from_world: &Pose,
    world: &Vector3<f64>,
) -> Option<Vector2<f64>> {
    let (pixel, _depth) = intrinsics.project(cam_from_world, world).ok()?;
    let in_image = pixel.x >= 0.0
        && pixel.x <= (intrinsics.width - 1) as f64
        && pixel.y >= 0.0
        && pixel.y <= (intrinsics.height - 1) as f64;
    in_image.then_some(pixel)
}

/// Projection with positive depth, ignoring the image bounds; detection
/// hulls use every surface point in front of the camera.
fn positive_depth_projection(
    intrinsics: &CameraIntrinsics,
    cam_from_world: &Pose,
    world: &Vector3<f64>,
) -> Option<Vector2<f64>> {
    intrinsics.project(cam_from_world, world).ok().map(|(pixel, _)| pixel)
}

struct ProtoTrack {
    source: TrackSource,
    landmarks: Vec<Vector3<f64>>,
}

/// Generates the complete scene package for a configuration.
///
/// Deterministic: identical configurations (seed included) produce
/// bit-identical packages.
pub fn generate_scene(config: &SceneConfig) -> Result<ScenePackage, SceneError> {
    config.validate()?;
    let s = config.num_frames;
    let intrinsics = &config.intrinsics;
    let width = intrinsics.width as f64;
    let height = intrinsics.height as f64;
    let mut rng = stream_rng(config.seed, BASE_STREAM);

    let gt_trajectory = build_camera_trajectory(config, &mut rng);
    let cam_from_world: Vec<Pose> = gt_trajectory.iter().map(|e| e.pose.inverse()).collect();

    // Landmarks, in a fixed order: static background, then each moving
    // object's surface, then each distractor's surface.
    let mut protos: Vec<ProtoTrack> = Vec::new();
    for _ in 0..config.num_static_points {
        let pixel = Vector2::new(
            rng.gen_range(STATIC_PIXEL_MARGIN * width..(1.0 - STATIC_PIXEL_MARGIN) * width),
            rng.gen_range(STATIC_PIXEL_MARGIN * height..(1.0 - STATIC_PIXEL_MARGIN) * height),
        );
        let depth = rng.gen_range(STATIC_DEPTH_RANGE.0..STATIC_DEPTH_RANGE.1);
        let world = intrinsics
            .unproject(&cam_from_world[0], &pixel, depth)
            .expect("depth is positive");
        protos.push(ProtoTrack {
            source: TrackSource::StaticBackground,
            landmarks: vec![world; s],
        });
    }
    for (i, spec) in config.moving_objects.iter().enumerate() {
        for _ in 0..spec.surface_point_count {
            let local = sample_surface_point(&mut rng, &spec.box_dims);
            let landmarks = (0..s)
                .map(|t| object_pose_at(spec, config.timestamp(t)).transform_point(&local))
                .collect();
            protos.push(ProtoTrack {
                source: TrackSource::MovingObject(i),
                landmarks,
            });
        }
    }
    // One parked twin per moving object: same dimensions, zero motion,
    // placed centrally so detectors have a static box to be fooled by.
    for (i, spec) in config.moving_objects.iter().enumerate() {
        let pixel = Vector2::new(
            rng.gen_range(DISTRACTOR_PIXEL_BAND.0 * width..DISTRACTOR_PIXEL_BAND.1 * width),
            rng.gen_range(DISTRACTOR_PIXEL_BAND.0 * height..DISTRACTOR_PIXEL_BAND.1 * height),
        );
        let depth = rng.gen_range(DISTRACTOR_DEPTH_RANGE.0..DISTRACTOR_DEPTH_RANGE.1);
        let center = intrinsics
            .unproject(&cam_from_world[0], &pixel, depth)
            .expect("depth is positive");
        for _ in 0..DISTRACTOR_SURFACE_POINTS {
            let local = sample_surface_point(&mut rng, &spec.box_dims);
            protos.push(ProtoTrack {
                source: TrackSource::Distractor(i),
                landmarks: vec![center + local; s],
            });
        }
    }

    // Exact projections and visibility.
    let projections: Vec<Vec<Option<Vector2<f64>>>> = protos
        .iter()
        .map(|proto| {
            (0..s)
                .map(|t| visible_projection(intrinsics, &cam_from_world[t], &proto.landmarks[t]))
                .collect()
        })
        .collect();

    // Features are drawn for every landmark (dropped ones included) so the
    // draw sequence does not depend on visibility.
    let features: Vec<Vec<f64>> = protos
        .iter()
        .map(|_| (0..FEATURE_DIM).map(|_| gauss(&mut rng)).collect())
        .collect();

    // Noisy tracked positions: visible frames take the exact projection
    // plus noise; invisible frames hold the last visible position (frames
    // before first visibility backfill from it).
    let mut tracks = Vec::new();
    let mut track_sources = Vec::new();
    let mut gt_dynamic_labels = Vec::new();
    let mut landmarks = Vec::new();
    for (id, proto) in protos.iter().enumerate() {
        let mut positions: Vec<Option<Vector2<f64>>> = vec![None; s];
        let mut visibility = vec![0.0; s];
        for t in 0..s {
            if let Some(exact) = projections[id][t] {
                let noise = Vector2::new(gauss(&mut rng), gauss(&mut rng)) * config.track_noise_sigma;
                positions[t] = Some(exact + noise);
                visibility[t] = 1.0;
            }
        }
        let Some(first_visible) = positions.iter().position(Option::is_some) else {
            continue; // never visible: no track, but its draws stay consumed
        };
        let mut filled = Vec::with_capacity(s);
        let mut last = positions[first_visible].expect("first visible position");
        for position in &positions {
            if let Some(p) = position {
                last = *p;
            }
            filled.push(last);
        }
        // Leading invisible frames hold the first visible position.
        for t in 0..first_visible {
            filled[t] = positions[first_visible].expect("first visible position");
        }
        let feature_matrix = nalgebra::DMatrix::from_fn(FEATURE_DIM, s, |r, _| features[id][r]);
        let track = PointTrack::new(
            id as u64,
            first_visible,
            filled,
            visibility,
            feature_matrix,
            false,
        )
        .expect("simulator tracks satisfy the track invariants");
        tracks.push(track);
        track_sources.push(proto.source);
        gt_dynamic_labels.push(matches!(proto.source, TrackSource::MovingObject(_)));
        landmarks.push(proto.landmarks.clone());
    }

    if tracks.is_empty() {
        return Err(SceneError::DegenerateScene {
            detail: "no static point or object point is ever visible".into(),
        });
    }

    // Anchor marking: the most consistently visible static-background
    // tracks, ties toward the smallest id.
    let anchor_count = (config.num_static_points / 4).max(4);
    let mut static_indexes: Vec<usize> = (0..tracks.len())
        .filter(|&i| track_sources[i] == TrackSource::StaticBackground)
        .collect();
    static_indexes.sort_by_key(|&i| {
        let visible = tracks[i].visibility.iter().filter(|&&v| v >= 0.5).count();
        (std::cmp::Reverse(visible), tracks[i].track_id)
    });
    for &i in static_indexes.iter().take(anchor_count) {
        tracks[i].is_anchor = true;
    }

    let mut package = ScenePackage {
        config: config.clone(),
        gt_trajectory,
        tracks,
        track_sources,
        gt_dynamic_labels,
        landmarks,
        flow: Vec::new(),
        detections: Vec::new(),
    };
    package.flow = (0..s - 1)
        .map(|t| synth_flow(&package, t).expect("t below the last frame"))
        .collect();
    package.detections = (0..s)
        .map(|t| synth_detections(&package, t).expect("t within the window"))
        .collect();
    Ok(package)
}

/// Flow samples between frames `t` and `t+1`: one sample per track visible
/// at both, positioned at the exact projection at `t`, with flow equal to
/// the exact projection difference plus noise.
///
/// Draws from the frame's own generator stream, so the result is identical
/// whether called inside [`generate_scene`] or standalone on its package.
pub fn synth_flow(scene: &ScenePackage, t: usize) -> Result<FlowSampleSet, SceneError> {
    let s = scene.num_frames();
    if t + 1 >= s {
        return Err(SceneError::LastFrame { frame: t });
    }
    let intrinsics = scene.intrinsics();
    let cam_t = scene.gt_trajectory.entries()[t].pose.inverse();
    let cam_next = scene.gt_trajectory.entries()[t + 1].pose.inverse();
    let mut rng = stream_rng(scene.config.seed, FLOW_STREAM_BASE + t as u64);
    let mut samples = Vec::new();
    for (i, _track) in scene.tracks.iter().enumerate() {
        let Some(at_t) = visible_projection(intrinsics, &cam_t, &scene.landmarks[i][t]) else {
            continue;
        };
        let Some(at_next) = visible_projection(intrinsics, &cam_next, &scene.landmarks[i][t + 1])
        else {
            continue;
        };
        let noise = Vector2::new(gauss(&mut rng), gauss(&mut rng)) * scene.config.flow_noise_sigma;
        samples.push(FlowSample {
            position: at_t,
            flow: at_next - at_t + noise,
        });
    }
    Ok(FlowSampleSet { frame: t, samples })
}

/// Detection boxes for frame `t`: per visible object (moving objects first,
/// then static distractors), the axis-aligned hull of its surface points'
/// positive-depth projections, clipped to the image and edge-jittered.
///
/// Same standalone-reproducibility guarantee as [`synth_flow`].
pub fn synth_detections(scene: &ScenePackage, t: usize) -> Result<Vec<BoundingBox>, SceneError> {
    let s = scene.num_frames();
    if t >= s {
        return Err(SceneError::FrameOutOfRange {
            frame: t,
            num_frames: s,
        });
    }
    let intrinsics = scene.intrinsics();
    let width = intrinsics.width as f64;
    let height = intrinsics.height as f64;
    let cam = scene.gt_trajectory.entries()[t].pose.inverse();
    let mut rng = stream_rng(scene.config.seed, DETECTION_STREAM_BASE + t as u64);
    let mut boxes = Vec::new();

    let object_count = scene.config.moving_objects.len();
    let groups = (0..object_count)
        .map(|i| (TrackSource::MovingObject(i), true))
        .chain((0..object_count).map(|i| (TrackSource::Distractor(i), false)));

    for (source, moving) in groups {
        let mut hull: Option<(f64, f64, f64, f64)> = None;
        let mut any_visible = false;
        for (i, _) in scene
            .track_sources
            .iter()
            .enumerate()
            .filter(|(_, src)| **src == source)
        {
            let world = &scene.landmarks[i][t];
            let Some(pixel) = positive_depth_projection(intrinsics, &cam, world) else {
                continue;
            };
            any_visible |= visible_projection(intrinsics, &cam, world).is_some();
            hull = Some(match hull {
                None => (pixel.x, pixel.y, pixel.x, pixel.y),
                Some((x0, y0, x1, y1)) => {
                    (x0.min(pixel.x), y0.min(pixel.y), x1.max(pixel.x), y1.max(pixel.y))
                }
            });
        }
        let Some((x0, y0, x1, y1)) = hull else { continue };
        if !any_visible {
            continue;
        }
        let (x0, y0) = (x0.max(0.0), y0.max(0.0));
        let (x1, y1) = (x1.min(width - 1.0), y1.min(height - 1.0));
        if x0 >= x1 || y0 >= y1 {
            continue;
        }
        let jitter = scene.config.detector_box_jitter;
        let (x0, y0, x1, y1) = (
            x0 + gauss(&mut rng) * jitter,
            y0 + gauss(&mut rng) * jitter,
            x1 + gauss(&mut rng) * jitter,
            y1 + gauss(&mut rng) * jitter,
        );
        if x0 >= x1 || y0 >= y1 {
            continue; // jitter collapsed the box
        }
        let score = rng.gen_range(0.5..1.0);
        boxes.push(BoundingBox {
            frame: t,
            x_min: x0,
            y_min: y0,
            x_max: x1,
            y_max: y1,
            class_id: 0,
            score,
            gt_moving: Some(moving),
        });
    }
    Ok(boxes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix4;

    fn test_intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    fn one_object(velocity: Vector3<f64>) -> ObjectSpec {
        ObjectSpec {
            box_dims: Vector3::new(1.0, 1.0, 1.0),
            initial_pose: Pose::new(UnitQuaternion::identity(), Vector3::new(0.8, 0.0, 6.5)),
            velocity,
            angular_velocity: Vector3::zeros(),
            surface_point_count: 12,
        }
    }

    fn base_config() -> SceneConfig {
        SceneConfig {
            num_frames: 8,
            num_static_points: 24,
            moving_objects: vec![one_object(Vector3::new(-1.5, 0.0, 0.0))],
            camera_path: CameraPath::Linear { speed: 0.5 },
            intrinsics: test_intrinsics(),
            track_noise_sigma: 0.0,
            flow_noise_sigma: 0.0,
            detector_box_jitter: 0.0,
            seed: 7,
        }
    }

    /// Independent projection: homogeneous inverse and the raw pinhole
    /// equations, sharing no code with the geometry module's helpers.
    fn oracle_projection(
        k: &CameraIntrinsics,
        world_from_camera: &Pose,
        world: &Vector3<f64>,
    ) -> Option<Vector2<f64>> {
        let m: Matrix4<f64> = world_from_camera
            .to_homogeneous()
            .try_inverse()
            .expect("rigid transforms are invertible");
        let p = m * world.push(1.0);
        if p.z <= 0.0 {
            return None;
        }
        Some(Vector2::new(
            k.fx * p.x / p.z + k.cx,
            k.fy * p.y / p.z + k.cy,
        ))
    }

    #[test]
    fn generation_is_bit_deterministic() {
        let config = {
            let mut c = base_config();
            c.track_noise_sigma = 0.4;
            c.flow_noise_sigma = 0.2;
            c.detector_box_jitter = 1.0;
            c.camera_path = CameraPath::JitteredLinear { speed: 0.5 };
            c
        };
        let a = generate_scene(&config).unwrap();
        let b = generate_scene(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_objects_means_no_dynamic_labels_and_no_boxes() {
        let mut config = base_config();
        config.moving_objects.clear();
        let scene = generate_scene(&config).unwrap();
        assert!(scene.gt_dynamic_labels.iter().all(|&l| !l));
        assert!(scene.detections.iter().all(|d| d.is_empty()));
        assert_eq!(scene.tracks.len(), 24);
    }

    #[test]
    fn static_camera_flow_is_zero_except_on_the_object() {
        let mut config = base_config();
        config.camera_path = CameraPath::Static;
        let scene = generate_scene(&config).unwrap();
        // Object track positions at each frame, to attribute samples.
        for set in &scene.flow {
            for sample in &set.samples {
                let on_object = scene
                    .tracks
                    .iter()
                    .zip(&scene.gt_dynamic_labels)
                    .any(|(track, &dynamic)| {
                        dynamic && (track.positions[set.frame] - sample.position).norm() < 1e-9
                    });
                if on_object {
                    assert!(sample.flow.norm() > 0.1, "object sample must move");
                } else {
                    assert_relative_eq!(sample.flow.norm(), 0.0, epsilon = 1e-12);
                }
            }
            assert!(set.samples.iter().any(|s| s.flow.norm() > 0.1));
            assert!(set.samples.iter().any(|s| s.flow.norm() < 1e-12));
        }
    }

    #[test]
    fn flow_matches_projection_difference_oracle() {
        let scene = generate_scene(&base_config()).unwrap();
        let k = scene.intrinsics();
        for t in 0..scene.num_frames() - 1 {
            let set = &scene.flow[t];
            let mut checked = 0;
            for (i, track) in scene.tracks.iter().enumerate() {
                if !(track.visible_at(t) && track.visible_at(t + 1)) {
                    continue;
                }
                let pose_t = &scene.gt_trajectory.entries()[t].pose;
                let pose_next = &scene.gt_trajectory.entries()[t + 1].pose;
                let at_t = oracle_projection(k, pose_t, &scene.landmarks[i][t]).unwrap();
                let at_next = oracle_projection(k, pose_next, &scene.landmarks[i][t + 1]).unwrap();
                let sample = set
                    .samples
                    .iter()
                    .find(|s| (s.position - at_t).norm() < 1e-9)
                    .expect("each doubly visible track has a sample");
                assert_relative_eq!(sample.flow.x, (at_next - at_t).x, epsilon = 1e-9);
                assert_relative_eq!(sample.flow.y, (at_next - at_t).y, epsilon = 1e-9);
                checked += 1;
            }
            assert_eq!(checked, set.samples.len());
        }
    }

    #[test]
    fn flow_rejects_the_last_frame() {
        let scene = generate_scene(&base_config()).unwrap();
        assert!(matches!(
            synth_flow(&scene, scene.num_frames() - 1),
            Err(SceneError::LastFrame { .. })
        ));
    }

    #[test]
    fn packaged_flow_and_detections_reproduce_standalone() {
        let mut config = base_config();
        config.flow_noise_sigma = 0.25;
        config.detector_box_jitter = 1.5;
        let scene = generate_scene(&config).unwrap();
        for t in 0..scene.num_frames() - 1 {
            assert_eq!(synth_flow(&scene, t).unwrap(), scene.flow[t]);
        }
        for t in 0..scene.num_frames() {
            assert_eq!(synth_detections(&scene, t).unwrap(), scene.detections[t]);
        }
        assert!(matches!(
            synth_detections(&scene, scene.num_frames()),
            Err(SceneError::FrameOutOfRange { .. })
        ));
    }

    #[test]
    fn zero_jitter_box_is_the_projection_hull() {
        let scene = generate_scene(&base_config()).unwrap();
        let k = scene.intrinsics();
        for t in 0..scene.num_frames() {
            let object_box = scene.detections[t]
                .iter()
                .find(|b| b.gt_moving == Some(true))
                .expect("object stays in view");
            let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
            let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for (i, source) in scene.track_sources.iter().enumerate() {
                if *source != TrackSource::MovingObject(0) {
                    continue;
                }
                let pose = &scene.gt_trajectory.entries()[t].pose;
                let p = oracle_projection(k, pose, &scene.landmarks[i][t]).unwrap();
                x0 = x0.min(p.x);
                y0 = y0.min(p.y);
                x1 = x1.max(p.x);
                y1 = y1.max(p.y);
            }
            assert_relative_eq!(object_box.x_min, x0, epsilon = 1e-9);
            assert_relative_eq!(object_box.y_min, y0, epsilon = 1e-9);
            assert_relative_eq!(object_box.x_max, x1, epsilon = 1e-9);
            assert_relative_eq!(object_box.y_max, y1, epsilon = 1e-9);
            assert!((0.5..1.0).contains(&object_box.score));
        }
    }

    #[test]
    fn behind_camera_object_emits_no_box() {
        let mut config = base_config();
        config.camera_path = CameraPath::Static;
        config.moving_objects = vec![ObjectSpec {
            box_dims: Vector3::new(1.0, 1.0, 1.0),
            initial_pose: Pose::new(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, -10.0)),
            velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
            surface_point_count: 8,
        }];
        let scene = generate_scene(&config).unwrap();
        for frame_boxes in &scene.detections {
            assert!(frame_boxes.iter().all(|b| b.gt_moving == Some(false)));
        }
        // The distractor twin still produces boxes.
        assert!(scene.detections.iter().any(|d| !d.is_empty()));
    }

    #[test]
    fn jittered_boxes_keep_most_object_points() {
        // Aggregate containment over 100 seeds at 2 px edge jitter.
        let mut inside = 0usize;
        let mut total = 0usize;
        for seed in 0..100 {
            let mut config = base_config();
            config.camera_path = CameraPath::Static;
            config.detector_box_jitter = 2.0;
            // A large, close object: a 2 px edge jitter trims only a thin
            // band relative to its ~250 px projected extent.
            config.moving_objects[0] = ObjectSpec {
                box_dims: Vector3::new(2.0, 2.0, 2.0),
                initial_pose: Pose::new(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, 5.0)),
                velocity: Vector3::new(-0.5, 0.0, 0.0),
                angular_velocity: Vector3::zeros(),
                surface_point_count: 30,
            };
            config.seed = seed;
            let scene = generate_scene(&config).unwrap();
            let k = scene.intrinsics();
            for t in 0..scene.num_frames() {
                let Some(object_box) =
                    scene.detections[t].iter().find(|b| b.gt_moving == Some(true))
                else {
                    continue;
                };
                for (i, source) in scene.track_sources.iter().enumerate() {
                    if *source != TrackSource::MovingObject(0) {
                        continue;
                    }
                    let pose = &scene.gt_trajectory.entries()[t].pose;
                    let Some(p) = oracle_projection(k, pose, &scene.landmarks[i][t]) else {
                        continue;
                    };
                    total += 1;
                    inside += object_box.contains(&p) as usize;
                }
            }
        }
        let fraction = inside as f64 / total as f64;
        assert!(total > 10_000, "enough samples: {total}");
        assert!(fraction >= 0.9, "containment fraction {fraction}");
    }

    #[test]
    fn static_labels_have_constant_landmarks_and_exact_positions() {
        let scene = generate_scene(&base_config()).unwrap();
        let k = scene.intrinsics();
        for (i, track) in scene.tracks.iter().enumerate() {
            if !scene.gt_dynamic_labels[i] {
                for t in 1..scene.num_frames() {
                    assert_relative_eq!(
                        (scene.landmarks[i][t] - scene.landmarks[i][0]).norm(),
                        0.0
                    );
                }
            }
            // Zero noise: visible positions equal the oracle projection.
            for t in 0..scene.num_frames() {
                if track.visible_at(t) {
                    let pose = &scene.gt_trajectory.entries()[t].pose;
                    let p = oracle_projection(k, pose, &scene.landmarks[i][t]).unwrap();
                    assert_relative_eq!(track.positions[t].x, p.x, epsilon = 1e-9);
                    assert_relative_eq!(track.positions[t].y, p.y, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn invisible_frames_hold_and_backfill_positions() {
        // A fast object crossing the image: its points enter and exit view.
        let mut config = base_config();
        config.num_frames = 40;
        config.camera_path = CameraPath::Static;
        config.moving_objects = vec![ObjectSpec {
            box_dims: Vector3::new(1.0, 1.0, 1.0),
            initial_pose: Pose::new(UnitQuaternion::identity(), Vector3::new(5.0, 0.0, 6.0)),
            velocity: Vector3::new(-8.0, 0.0, 0.0),
            angular_velocity: Vector3::zeros(),
            surface_point_count: 16,
        }];
        let scene = generate_scene(&config).unwrap();
        let mut saw_backfill = false;
        let mut saw_hold = false;
        for track in &scene.tracks {
            let first = (0..scene.num_frames()).find(|&t| track.visible_at(t)).unwrap();
            if first > 0 {
                saw_backfill = true;
                for t in 0..first {
                    assert_eq!(track.positions[t], track.positions[first]);
                }
                assert_eq!(track.query_frame, first);
            }
            if let Some(last) = (0..scene.num_frames()).rev().find(|&t| track.visible_at(t)) {
                if last + 1 < scene.num_frames() {
                    saw_hold = true;
                    for t in last + 1..scene.num_frames() {
                        assert_eq!(track.positions[t], track.positions[last]);
                    }
                }
            }
        }
        assert!(saw_backfill, "some object point must enter view late");
        assert!(saw_hold, "some object point must leave view early");
    }

    #[test]
    fn config_validation_names_the_violated_bound() {
        let mut config = base_config();
        config.num_frames = 1;
        let err = generate_scene(&config).unwrap_err();
        assert!(err.to_string().contains("num_frames"), "{err}");

        let mut config = base_config();
        config.num_static_points = 4;
        assert!(generate_scene(&config).unwrap_err().to_string().contains("num_static_points"));

        let mut config = base_config();
        config.track_noise_sigma = -0.5;
        assert!(generate_scene(&config)
            .unwrap_err()
            .to_string()
            .contains("track_noise_sigma"));

        let mut config = base_config();
        config.moving_objects[0].surface_point_count = 3;
        assert!(generate_scene(&config)
            .unwrap_err()
            .to_string()
            .contains("surface_point_count"));
    }

    #[test]
    fn anchors_are_the_most_visible_static_tracks() {
        let scene = generate_scene(&base_config()).unwrap();
        let anchors: Vec<usize> = (0..scene.tracks.len())
            .filter(|&i| scene.tracks[i].is_anchor)
            .collect();
        assert_eq!(anchors.len(), 6); // max(4, 24 / 4)
        for &i in &anchors {
            assert_eq!(scene.track_sources[i], TrackSource::StaticBackground);
        }
        // Everything static is fully visible here, so the smallest ids win.
        assert_eq!(anchors, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn arc_path_orbits_facing_the_center() {
        let mut config = base_config();
        config.camera_path = CameraPath::Arc { speed: 2.0 };
        let scene = generate_scene(&config).unwrap();
        let center = Vector3::new(0.0, 0.0, ORBIT_CENTER_Z);
        for entry in scene.gt_trajectory.iter() {
            assert_relative_eq!((entry.pose.translation - center).norm(), ORBIT_CENTER_Z, epsilon = 1e-9);
            // The camera's +z axis points at the orbit center.
            let forward = entry.pose.rotation * Vector3::z();
            let to_center = (center - entry.pose.translation).normalize();
            assert_relative_eq!((forward - to_center).norm(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn scene_config_round_trips_through_json() {
        let mut config = base_config();
        config.camera_path = CameraPath::JitteredLinear { speed: 0.8 };
        config.moving_objects[0].angular_velocity = Vector3::new(0.0, 0.2, 0.0);
        let text = serde_json::to_string_pretty(&config).unwrap();
        let back: SceneConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, config);
        // Unknown fields are rejected, naming the field.
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["surprise"] = serde_json::json!(1);
        let err = serde_json::from_value::<SceneConfig>(value).unwrap_err();
        assert!(err.to_string().contains("surprise"));
    }
}
