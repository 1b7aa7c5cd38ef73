//! Rigid-body poses, pinhole projection, similarity transforms, and
//! timestamped camera trajectories.
//!
//! Conventions used throughout the crate: `Trajectory` entries store
//! world-from-camera poses (the camera's pose in the world), projection
//! takes a camera-from-world pose, and `Pose::compose(a, b)` applies `b`
//! first, matching homogeneous-matrix multiplication `A * B`.

use nalgebra::{Matrix4, Quaternion, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Points closer to the camera plane than this are treated as unprojectable.
pub const DEPTH_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point depth {depth} is not positive")]
    NonPositiveDepth { depth: f64 },
    #[error("invalid intrinsics: {detail}")]
    InvalidIntrinsics { detail: String },
    #[error("trajectory frame indices must be strictly increasing (entry {index})")]
    NonIncreasingFrames { index: usize },
    #[error("similarity scale {scale} is not positive")]
    NonPositiveScale { scale: f64 },
}

/// Rigid transform: rotation followed by translation.
///
/// Serializes as `{translation: [x, y, z], rotation_scaled_axis: [rx, ry, rz]}`
/// so configuration files stay hand-editable; the scaled axis encodes the
/// rotation as axis times angle in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseRepr {
    translation: [f64; 3],
    #[serde(default)]
    rotation_scaled_axis: [f64; 3],
}

impl From<PoseRepr> for Pose {
    fn from(r: PoseRepr) -> Pose {
        Pose {
            rotation: UnitQuaternion::from_scaled_axis(Vector3::from(r.rotation_scaled_axis)),
            translation: Vector3::from(r.translation),
        }
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> PoseRepr {
        PoseRepr {
            translation: p.translation.into(),
            rotation_scaled_axis: p.rotation.scaled_axis().into(),
        }
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    /// `a.compose(&b)` maps `x` to `a(b(x))`: `b` is applied first.
    ///
    /// The rotation product is renormalized so quaternion drift cannot
    /// accumulate over long composition chains.
    pub fn compose(&self, other: &Pose) -> Pose {
        let rotation = UnitQuaternion::new_normalize(
            self.rotation.into_inner() * other.rotation.into_inner(),
        );
        Pose {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv_rot = self.rotation.inverse();
        Pose {
            rotation: inv_rot,
            translation: -(inv_rot * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotation angle in radians, computed as `2 atan2(|vec|, |w|)`.
    ///
    /// The absolute value on the scalar part folds the quaternion double
    /// cover, so `q` and `-q` report the same angle in `[0, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        let q: &Quaternion<f64> = self.rotation.quaternion();
        2.0 * q.imag().norm().atan2(q.w.abs())
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(self.rotation.to_rotation_matrix().matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

/// Pinhole camera: focal lengths and principal point in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let fail = |detail: String| Err(GeometryError::InvalidIntrinsics { detail });
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return fail(format!("focal lengths must be positive, got fx={} fy={}", self.fx, self.fy));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return fail(format!("principal point must be finite, got cx={} cy={}", self.cx, self.cy));
        }
        if self.width == 0 || self.height == 0 {
            return fail(format!("image size must be nonzero, got {}x{}", self.width, self.height));
        }
        Ok(())
    }

    /// Projects a world point through `cam_from_world`, returning the pixel
    /// position and the camera-frame depth.
    pub fn project(
        &self,
        cam_from_world: &Pose,
        point_world: &Vector3<f64>,
    ) -> Result<(Vector2<f64>, f64), GeometryError> {
        let p = cam_from_world.transform_point(point_world);
        if p.z <= DEPTH_EPSILON {
            return Err(GeometryError::NonPositiveDepth { depth: p.z });
        }
        let pixel = Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        );
        Ok((pixel, p.z))
    }

    /// Inverse of [`project`](Self::project): lifts a pixel at a known depth
    /// back to a world point.
    pub fn unproject(
        &self,
        cam_from_world: &Pose,
        pixel: &Vector2<f64>,
        depth: f64,
    ) -> Result<Vector3<f64>, GeometryError> {
        if depth <= DEPTH_EPSILON {
            return Err(GeometryError::NonPositiveDepth { depth });
        }
        let p_cam = Vector3::new(
            (pixel.x - self.cx) * depth / self.fx,
            (pixel.y - self.cy) * depth / self.fy,
            depth,
        );
        Ok(cam_from_world.inverse().transform_point(&p_cam))
    }
}

/// Similarity transform `p -> scale * R * p + t`, scale strictly positive.
#[derive(Debug, Clone, Copy)]
pub struct SimilarityTransform {
    scale: f64,
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn new(
        scale: f64,
        rotation: UnitQuaternion<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(GeometryError::NonPositiveScale { scale });
        }
        Ok(SimilarityTransform {
            scale,
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        SimilarityTransform {
            scale: 1.0,
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn apply_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let inv_rot = self.rotation.inverse();
        SimilarityTransform {
            scale: 1.0 / self.scale,
            rotation: inv_rot,
            translation: -(inv_rot * self.translation) / self.scale,
        }
    }

    /// Maps a whole trajectory: translations through the similarity, rotations
    /// left-multiplied by the rotation part. Frames and timestamps are kept.
    pub fn apply_trajectory(&self, trajectory: &Trajectory) -> Trajectory {
        let entries = trajectory
            .iter()
            .map(|e| TrajectoryEntry {
                frame: e.frame,
                timestamp: e.timestamp,
                pose: Pose {
                    rotation: UnitQuaternion::new_normalize(
                        self.rotation.into_inner() * e.pose.rotation.into_inner(),
                    ),
                    translation: self.apply_point(&e.pose.translation),
                },
            })
            .collect();
        // Frame order is untouched, so the strict-increase invariant holds.
        Trajectory { entries }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryEntry {
    pub frame: usize,
    pub timestamp: f64,
    pub pose: Pose,
}

/// Timestamped sequence of world-from-camera poses with strictly increasing
/// frame indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    entries: Vec<TrajectoryEntry>,
}

impl Trajectory {
    pub fn from_entries(entries: Vec<TrajectoryEntry>) -> Result<Self, GeometryError> {
        for i in 1..entries.len() {
            if entries[i].frame <= entries[i - 1].frame {
                return Err(GeometryError::NonIncreasingFrames { index: i });
            }
        }
        Ok(Trajectory { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TrajectoryEntry> {
        self.entries.iter()
    }

    pub fn entries(&self) -> &[TrajectoryEntry] {
        &self.entries
    }

    /// Pose lookup by frame index. Entries are sorted, so this is a binary
    /// search.
    pub fn pose_at(&self, frame: usize) -> Option<&Pose> {
        self.entries
            .binary_search_by_key(&frame, |e| e.frame)
            .ok()
            .map(|i| &self.entries[i].pose)
    }

    pub fn frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.frame)
    }
}
