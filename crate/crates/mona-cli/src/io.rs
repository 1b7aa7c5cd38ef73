//! Artifact file formats: strict JSON schemas for tracks, flow, detections,
//! labels, landmarks, dynamic points, filtered boxes, and masks, plus TUM
//! trajectory text. Every reader rejects unknown fields and names the
//! offending file and field; every writer emits a deterministic byte stream
//! so golden files and composition tests can compare outputs exactly.

use std::fs;
use std::path::Path;

use mona_core::dynamic_points::{
    DynamicConfig, DynamicScore, FlowFrameStats, FlowSample, FlowSampleSet, PointTrack,
};
use mona_core::geometry::{Pose, Trajectory, TrajectoryEntry};
use mona_core::object_filter::{BoundingBox, FilteredBoxSet, ObjectMask};
use nalgebra::{DMatrix, Quaternion, UnitQuaternion, Vector2, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Standard artifact names inside a run directory.
pub const PIPELINE_CONFIG_FILE: &str = "pipeline_config.json";
pub const TRACKS_FILE: &str = "tracks.json";
pub const FLOW_FILE: &str = "flow.json";
pub const DETECTIONS_FILE: &str = "detections.json";
pub const GT_TRAJECTORY_FILE: &str = "gt_trajectory.tum";
pub const LABELS_FILE: &str = "labels.json";
pub const LANDMARKS_FILE: &str = "landmarks.json";
pub const DYNAMIC_POINTS_FILE: &str = "dynamic_points.json";
pub const FILTERED_BOXES_FILE: &str = "filtered_boxes.json";
pub const MASKS_FILE: &str = "masks.json";
pub const UNMASKED_TRAJECTORY_FILE: &str = "estimated_unmasked.tum";
pub const MASKED_TRAJECTORY_FILE: &str = "estimated_masked.tum";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const PLOT_ATE_FILE: &str = "plot_ate.txt";
pub const BATCH_SUMMARY_FILE: &str = "batch_summary.json";

/// Reads and parses a JSON artifact; both failures are input errors.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(path, e))
}

/// Writes a JSON artifact: pretty-printed, trailing newline, deterministic
/// field order.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::output(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::output(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::output(path, e))
}

// ---- tracks.json ----------------------------------------------------------

/// One tracked point: positions and visibility per window frame, appearance
/// features as a row-major `d x window` matrix flattened to one array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackRecord {
    pub track_id: u64,
    pub t_q: usize,
    pub positions: Vec<[f64; 2]>,
    pub visibility: Vec<f64>,
    pub features: Vec<f64>,
    pub is_anchor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TracksFile {
    pub tracks: Vec<TrackRecord>,
}

impl TrackRecord {
    pub fn from_track(track: &PointTrack) -> TrackRecord {
        let mut features = Vec::with_capacity(track.features.len());
        for r in 0..track.features.nrows() {
            for c in 0..track.features.ncols() {
                features.push(track.features[(r, c)]);
            }
        }
        TrackRecord {
            track_id: track.track_id,
            t_q: track.query_frame,
            positions: track.positions.iter().map(|p| [p.x, p.y]).collect(),
            visibility: track.visibility.clone(),
            features,
            is_anchor: track.is_anchor,
        }
    }

    pub fn into_track(self, path: &Path) -> Result<PointTrack, CliError> {
        let window = self.positions.len();
        if window == 0 || self.features.len() % window != 0 {
            return Err(CliError::input(
                path,
                format!(
                    "track {}: features length {} is not a multiple of the {}-frame window",
                    self.track_id,
                    self.features.len(),
                    window
                ),
            ));
        }
        let dim = self.features.len() / window;
        let features = DMatrix::from_row_slice(dim, window, &self.features);
        let positions = self
            .positions
            .iter()
            .map(|p| Vector2::new(p[0], p[1]))
            .collect();
        PointTrack::new(
            self.track_id,
            self.t_q,
            positions,
            self.visibility,
            features,
            self.is_anchor,
        )
        .map_err(|e| CliError::input(path, format!("track {}: {e}", self.track_id)))
    }
}

impl TracksFile {
    pub fn from_tracks(tracks: &[PointTrack]) -> TracksFile {
        TracksFile {
            tracks: tracks.iter().map(TrackRecord::from_track).collect(),
        }
    }

    pub fn into_tracks(self, path: &Path) -> Result<Vec<PointTrack>, CliError> {
        self.tracks
            .into_iter()
            .map(|r| r.into_track(path))
            .collect()
    }
}

// ---- flow.json -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSampleRecord {
    /// Sample position in pixels.
    pub x: [f64; 2],
    /// Displacement toward the next frame in pixels.
    pub u: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowFrameRecord {
    pub t: usize,
    pub samples: Vec<FlowSampleRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowFile {
    pub frames: Vec<FlowFrameRecord>,
}

impl FlowFile {
    pub fn from_sets(sets: &[FlowSampleSet]) -> FlowFile {
        FlowFile {
            frames: sets
                .iter()
                .map(|s| FlowFrameRecord {
                    t: s.frame,
                    samples: s
                        .samples
                        .iter()
                        .map(|sample| FlowSampleRecord {
                            x: [sample.position.x, sample.position.y],
                            u: [sample.flow.x, sample.flow.y],
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn into_sets(self) -> Vec<FlowSampleSet> {
        self.frames
            .into_iter()
            .map(|f| FlowSampleSet {
                frame: f.t,
                samples: f
                    .samples
                    .into_iter()
                    .map(|s| FlowSample {
                        position: Vector2::new(s.x[0], s.x[1]),
                        flow: Vector2::new(s.u[0], s.u[1]),
                    })
                    .collect(),
            })
            .collect()
    }
}

// ---- detections.json -------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    /// `[x_min, y_min, x_max, y_max]` in pixels.
    pub xyxy: [f64; 4],
    pub class_id: u32,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_moving: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionFrameRecord {
    pub t: usize,
    pub boxes: Vec<DetectionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionsFile {
    pub frames: Vec<DetectionFrameRecord>,
}

impl DetectionsFile {
    pub fn from_frames(frames: &[Vec<BoundingBox>]) -> DetectionsFile {
        DetectionsFile {
            frames: frames
                .iter()
                .enumerate()
                .map(|(t, boxes)| DetectionFrameRecord {
                    t,
                    boxes: boxes
                        .iter()
                        .map(|b| DetectionRecord {
                            xyxy: [b.x_min, b.y_min, b.x_max, b.y_max],
                            class_id: b.class_id,
                            score: b.score,
                            gt_moving: b.gt_moving,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Converts to per-frame box lists, validating geometry and requiring the
    /// frame sequence 0, 1, 2, ...
    pub fn into_frames(self, path: &Path) -> Result<Vec<Vec<BoundingBox>>, CliError> {
        let mut out = Vec::with_capacity(self.frames.len());
        for (expected, frame) in self.frames.into_iter().enumerate() {
            if frame.t != expected {
                return Err(CliError::input(
                    path,
                    format!("frame records out of order: expected t={expected}, found t={}", frame.t),
                ));
            }
            let mut boxes = Vec::with_capacity(frame.boxes.len());
            for (i, record) in frame.boxes.into_iter().enumerate() {
                let b = BoundingBox {
                    frame: expected,
                    x_min: record.xyxy[0],
                    y_min: record.xyxy[1],
                    x_max: record.xyxy[2],
                    y_max: record.xyxy[3],
                    class_id: record.class_id,
                    score: record.score,
                    gt_moving: record.gt_moving,
                };
                b.validate()
                    .map_err(|e| CliError::input(path, format!("frame {expected}, box {i}: {e}")))?;
                boxes.push(b);
            }
            out.push(boxes);
        }
        Ok(out)
    }
}

// ---- labels.json -----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRecord {
    pub track_id: u64,
    pub dynamic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelsFile {
    pub labels: Vec<LabelRecord>,
}

// ---- landmarks.json --------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkTrackRecord {
    pub track_id: u64,
    /// World position of the track's landmark at every frame.
    pub positions: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarksFile {
    pub tracks: Vec<LandmarkTrackRecord>,
}

impl LandmarksFile {
    pub fn from_scene(track_ids: &[u64], landmarks: &[Vec<Vector3<f64>>]) -> LandmarksFile {
        LandmarksFile {
            tracks: track_ids
                .iter()
                .zip(landmarks)
                .map(|(&track_id, positions)| LandmarkTrackRecord {
                    track_id,
                    positions: positions.iter().map(|p| [p.x, p.y, p.z]).collect(),
                })
                .collect(),
        }
    }
}

// ---- dynamic_points.json ---------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRecord {
    pub track_id: u64,
    /// Rank-based dynamic probability; null when the track was unscorable
    /// and defaulted to static.
    pub probability: Option<f64>,
    pub flags: Vec<bool>,
}

impl ScoreRecord {
    pub fn from_score(score: &DynamicScore) -> ScoreRecord {
        ScoreRecord {
            track_id: score.track_id,
            probability: score.probability,
            flags: score.flags.clone(),
        }
    }

    pub fn into_score(self) -> DynamicScore {
        DynamicScore {
            track_id: self.track_id,
            probability: self.probability,
            flags: self.flags,
        }
    }
}

/// Per-frame list of the points flagged dynamic, parallel arrays of ids and
/// pixel positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicFrameRecord {
    pub t: usize,
    pub track_ids: Vec<u64>,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicPointsFile {
    /// Effective parameters the extraction ran with.
    pub config: DynamicConfig,
    pub scores: Vec<ScoreRecord>,
    pub frame_stats: Vec<FlowFrameStats>,
    pub frames: Vec<DynamicFrameRecord>,
}

impl DynamicPointsFile {
    /// Pixel positions of the dynamic points in frame `t`, or an input error
    /// naming the frame when the record is missing.
    pub fn points_at(&self, t: usize, path: &Path) -> Result<Vec<Vector2<f64>>, CliError> {
        let record = self.frames.iter().find(|f| f.t == t).ok_or_else(|| {
            CliError::input(path, format!("no dynamic-point record for frame {t}"))
        })?;
        Ok(record
            .points
            .iter()
            .map(|p| Vector2::new(p[0], p[1]))
            .collect())
    }
}

// ---- filtered_boxes.json and masks.json -------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilteredBoxesFile {
    /// Effective base threshold the filter ran with.
    pub tau_0: f64,
    pub frames: Vec<FilteredBoxSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MasksFile {
    pub frames: Vec<ObjectMask>,
}

impl MasksFile {
    pub fn validated(self, path: &Path) -> Result<Vec<ObjectMask>, CliError> {
        for mask in &self.frames {
            mask.validate()
                .map_err(|e| CliError::input(path, format!("frame {}: {e}", mask.frame)))?;
        }
        Ok(self.frames)
    }
}

// ---- TUM trajectories --------------------------------------------------------

const TUM_HEADER: &str = "# timestamp tx ty tz qx qy qz qw";
/// Quaternions within this of unit norm pass through bit-exactly.
const QUAT_NORM_EXACT: f64 = 1e-9;
/// Quaternions within this are renormalized; anything further out is an
/// input error.
const QUAT_NORM_ACCEPT: f64 = 1e-6;

/// Writes a trajectory as TUM text: one `timestamp tx ty tz qx qy qz qw`
/// line per pose. Floats use shortest-round-trip formatting, so reading the
/// file back reproduces every value bit-exactly.
pub fn write_tum(path: &Path, trajectory: &Trajectory) -> Result<(), CliError> {
    let mut out = String::with_capacity(64 * (trajectory.len() + 1));
    out.push_str(TUM_HEADER);
    out.push('\n');
    for entry in trajectory.iter() {
        let t = &entry.pose.translation;
        let q = entry.pose.rotation.quaternion();
        out.push_str(&format!(
            "{} {} {} {} {} {} {} {}\n",
            entry.timestamp, t.x, t.y, t.z, q.i, q.j, q.k, q.w
        ));
    }
    write_text(path, &out)
}

/// Reads TUM text into `(timestamp, pose)` rows. `#` comment lines and blank
/// lines are ignored; every data line must have exactly 8 finite fields and
/// a quaternion within [`QUAT_NORM_ACCEPT`] of unit norm. Timestamps must
/// strictly increase.
pub fn read_tum(path: &Path) -> Result<Vec<(f64, Pose)>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    let mut rows: Vec<(f64, Pose)> = Vec::new();
    for (line_index, line) in text.lines().enumerate() {
        let line_number = line_index + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(CliError::input(
                path,
                format!(
                    "line {line_number}: expected 8 fields (timestamp tx ty tz qx qy qz qw), found {}",
                    fields.len()
                ),
            ));
        }
        let mut values = [0.0f64; 8];
        for (i, field) in fields.iter().enumerate() {
            values[i] = field.parse::<f64>().map_err(|e| {
                CliError::input(path, format!("line {line_number}, field {}: {e}", i + 1))
            })?;
            if !values[i].is_finite() {
                return Err(CliError::input(
                    path,
                    format!("line {line_number}, field {}: value is not finite", i + 1),
                ));
            }
        }
        let timestamp = values[0];
        if let Some(&(previous, _)) = rows.last() {
            if timestamp <= previous {
                return Err(CliError::input(
                    path,
                    format!(
                        "line {line_number}: timestamp {timestamp} does not increase past {previous}"
                    ),
                ));
            }
        }
        let quaternion = Quaternion::new(values[7], values[4], values[5], values[6]);
        let norm = quaternion.norm();
        let rotation = if (norm - 1.0).abs() <= QUAT_NORM_EXACT {
            UnitQuaternion::new_unchecked(quaternion)
        } else if (norm - 1.0).abs() <= QUAT_NORM_ACCEPT {
            UnitQuaternion::new_normalize(quaternion)
        } else {
            return Err(CliError::input(
                path,
                format!("line {line_number}: quaternion norm {norm} is too far from 1"),
            ));
        };
        let translation = Vector3::new(values[1], values[2], values[3]);
        rows.push((timestamp, Pose::new(rotation, translation)));
    }
    Ok(rows)
}

/// Interprets TUM rows as a trajectory with frame indices 0, 1, 2, ... in
/// row order. Trajectories whose frames were contiguous from zero round-trip
/// exactly through [`write_tum`].
pub fn rows_to_trajectory(rows: Vec<(f64, Pose)>) -> Trajectory {
    let entries = rows
        .into_iter()
        .enumerate()
        .map(|(frame, (timestamp, pose))| TrajectoryEntry {
            frame,
            timestamp,
            pose,
        })
        .collect();
    Trajectory::from_entries(entries).expect("row indices strictly increase")
}

/// Pairs two row sets by timestamp (within `tolerance` seconds, two-pointer
/// over the sorted rows) and assigns each matched pair the same frame index,
/// so downstream metrics compare corresponding poses.
pub fn associate_by_timestamp(
    estimated: Vec<(f64, Pose)>,
    reference: Vec<(f64, Pose)>,
    tolerance: f64,
) -> (Trajectory, Trajectory) {
    let mut est_entries = Vec::new();
    let mut ref_entries = Vec::new();
    let mut j = 0usize;
    let mut frame = 0usize;
    for (t_est, pose_est) in estimated {
        while j < reference.len() && reference[j].0 < t_est - tolerance {
            j += 1;
        }
        if j < reference.len() && (reference[j].0 - t_est).abs() <= tolerance {
            est_entries.push(TrajectoryEntry {
                frame,
                timestamp: t_est,
                pose: pose_est,
            });
            ref_entries.push(TrajectoryEntry {
                frame,
                timestamp: reference[j].0,
                pose: reference[j].1,
            });
            frame += 1;
            j += 1;
        }
    }
    (
        Trajectory::from_entries(est_entries).expect("frames strictly increase"),
        Trajectory::from_entries(ref_entries).expect("frames strictly increase"),
    )
}
