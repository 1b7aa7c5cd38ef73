//! Moving-object segmentation: counting dynamic points per detection box,
//! area-adaptive box filtering, and mask generation through a pluggable
//! segmenter.
//!
//! The filter picks a per-frame unit box (the smallest detection holding at
//! least `tau_0` dynamic points) and scales every box's threshold by its
//! area ratio to that unit, so large boxes need proportionally more dynamic
//! evidence to survive. Surviving boxes are rasterized into a run-length
//! encoded mask used to drop unreliable correspondences before pose
//! estimation.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default base dynamic-point count a unit box must reach.
pub const DEFAULT_TAU_0: f64 = 5.0;

#[derive(Debug, Error)]
pub enum ObjectFilterError {
    #[error("invalid bounding box: {detail}")]
    InvalidBox { detail: String },
    #[error("unit box area must be positive, got {area}")]
    ZeroUnitArea { area: f64 },
    #[error("base threshold tau_0 must be positive, got {tau_0}")]
    NonPositiveTau { tau_0: f64 },
    #[error("invalid mask: {detail}")]
    InvalidMask { detail: String },
}

/// An axis-aligned detection box in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundingBox {
    pub frame: usize,
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub class_id: u32,
    /// Detector confidence in [0, 1].
    pub score: f64,
    /// Ground-truth motion label, present only on simulator output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_moving: Option<bool>,
}

impl BoundingBox {
    pub fn validate(&self) -> Result<(), ObjectFilterError> {
        let fail = |detail: String| Err(ObjectFilterError::InvalidBox { detail });
        for (name, v) in [
            ("x_min", self.x_min),
            ("y_min", self.y_min),
            ("x_max", self.x_max),
            ("y_max", self.y_max),
        ] {
            if !v.is_finite() {
                return fail(format!("{name} is not finite"));
            }
        }
        if self.x_min >= self.x_max || self.y_min >= self.y_max {
            return fail(format!(
                "degenerate extent [{}, {}] x [{}, {}]",
                self.x_min, self.x_max, self.y_min, self.y_max
            ));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return fail(format!("score {} outside [0, 1]", self.score));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    /// Boundary-inclusive membership test.
    pub fn contains(&self, point: &Vector2<f64>) -> bool {
        self.x_min <= point.x
            && point.x <= self.x_max
            && self.y_min <= point.y
            && point.y <= self.y_max
    }
}

/// A detection box together with its dynamic-point count and the adaptive
/// threshold it was compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDynamics {
    pub bounding_box: BoundingBox,
    pub dynamic_count: usize,
    pub threshold: f64,
}

/// The outcome of filtering one frame's detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilteredBoxSet {
    pub frame: usize,
    /// Boxes whose dynamic count met their adaptive threshold.
    pub kept: Vec<BoxDynamics>,
    /// The frame's unit box, when one qualified.
    pub unit_box: Option<BoundingBox>,
    pub tau_0: f64,
}

/// Counts the dynamic points inside a box, boundaries included.
pub fn count_dynamic_in_box(bounding_box: &BoundingBox, points: &[Vector2<f64>]) -> usize {
    points.iter().filter(|p| bounding_box.contains(p)).count()
}

/// Frame-local index of the unit box: among boxes whose dynamic count
/// reaches `tau_0`, the one of minimum area, ties broken toward the
/// smallest index. `None` when no box qualifies.
pub fn select_unit_box(boxes_with_counts: &[BoxDynamics], tau_0: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, bd) in boxes_with_counts.iter().enumerate() {
        if (bd.dynamic_count as f64) < tau_0 {
            continue;
        }
        let area = bd.bounding_box.area();
        // Strict comparison in index order keeps the smallest index on ties.
        if best.is_none_or(|(_, best_area)| area < best_area) {
            best = Some((i, area));
        }
    }
    best.map(|(i, _)| i)
}

/// Per-box threshold scaled by the area ratio to the unit box:
/// `tau_0 * area_i / area_u`.
pub fn adaptive_box_threshold(
    tau_0: f64,
    area_i: f64,
    area_u: f64,
) -> Result<f64, ObjectFilterError> {
    if area_u <= 0.0 || !area_u.is_finite() {
        return Err(ObjectFilterError::ZeroUnitArea { area: area_u });
    }
    Ok(tau_0 * area_i / area_u)
}

/// Filters one frame's detections against its dynamic points.
///
/// When no box holds `tau_0` dynamic points there is no unit box and the
/// kept set is empty: absent dynamic evidence, no moving-object claims are
/// made for the frame.
pub fn filter_boxes(
    frame: usize,
    boxes: &[BoundingBox],
    dynamic_points: &[Vector2<f64>],
    tau_0: f64,
) -> Result<FilteredBoxSet, ObjectFilterError> {
    if !(tau_0 > 0.0) || !tau_0.is_finite() {
        return Err(ObjectFilterError::NonPositiveTau { tau_0 });
    }
    for b in boxes {
        b.validate()?;
        if b.frame != frame {
            return Err(ObjectFilterError::InvalidBox {
                detail: format!("box for frame {} in frame {frame} input", b.frame),
            });
        }
    }
    let mut dynamics: Vec<BoxDynamics> = boxes
        .iter()
        .map(|b| BoxDynamics {
            bounding_box: b.clone(),
            dynamic_count: count_dynamic_in_box(b, dynamic_points),
            threshold: 0.0,
        })
        .collect();

    let Some(unit_index) = select_unit_box(&dynamics, tau_0) else {
        return Ok(FilteredBoxSet {
            frame,
            kept: Vec::new(),
            unit_box: None,
            tau_0,
        });
    };
    let unit_area = dynamics[unit_index].bounding_box.area();

    let mut kept = Vec::new();
    for bd in &mut dynamics {
        bd.threshold = adaptive_box_threshold(tau_0, bd.bounding_box.area(), unit_area)?;
        if bd.dynamic_count as f64 >= bd.threshold {
            kept.push(bd.clone());
        }
    }
    Ok(FilteredBoxSet {
        frame,
        kept,
        unit_box: Some(dynamics[unit_index].bounding_box.clone()),
        tau_0,
    })
}

/// Produces the pixel region for one box. The built-in implementation fills
/// the box; an external segmenter can refine it. Frames are always
/// processed in index order, so implementations need no internal
/// synchronization.
pub trait Segmenter {
    /// Sets (ORs) the pixels belonging to `bounding_box` into `bitmap`,
    /// a row-major `width * height` buffer.
    fn rasterize(&self, bounding_box: &BoundingBox, width: usize, height: usize, bitmap: &mut [bool]);
}

/// Default segmenter: the filled box, clipped to the image. A pixel
/// (row, col) belongs to the box when `round(x_min) <= col <= round(x_max)`
/// and `round(y_min) <= row <= round(y_max)`, i.e. the box covers every
/// pixel cell some point of the box rounds into. This makes the removal
/// direction of the mask-filter duality exact: any point inside a kept box,
/// boundary included, lands on a set pixel in [`remove_masked_points`].
#[derive(Debug, Clone, Copy, Default)]
pub struct BoxRasterizer;

impl Segmenter for BoxRasterizer {
    fn rasterize(&self, b: &BoundingBox, width: usize, height: usize, bitmap: &mut [bool]) {
        let c0 = (b.x_min.round() as i64).max(0);
        let c1 = (b.x_max.round() as i64).min(width as i64 - 1);
        let r0 = (b.y_min.round() as i64).max(0);
        let r1 = (b.y_max.round() as i64).min(height as i64 - 1);
        for row in r0..=r1 {
            for col in c0..=c1 {
                bitmap[row as usize * width + col as usize] = true;
            }
        }
    }
}

/// A binary per-frame mask stored as run-length encoded rows. Each row's
/// runs alternate unset/set and start with an unset run (possibly of length
/// zero); every row's runs sum to the mask width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectMask {
    pub frame: usize,
    pub width: usize,
    pub height: usize,
    pub rows: Vec<Vec<usize>>,
}

impl ObjectMask {
    pub fn from_bitmap(frame: usize, width: usize, height: usize, bitmap: &[bool]) -> ObjectMask {
        assert_eq!(bitmap.len(), width * height, "bitmap size mismatch");
        let mut rows = Vec::with_capacity(height);
        for r in 0..height {
            let mut runs = Vec::new();
            let mut current = false;
            let mut len = 0usize;
            for c in 0..width {
                let v = bitmap[r * width + c];
                if v == current {
                    len += 1;
                } else {
                    runs.push(len);
                    current = v;
                    len = 1;
                }
            }
            runs.push(len);
            rows.push(runs);
        }
        ObjectMask {
            frame,
            width,
            height,
            rows,
        }
    }

    pub fn validate(&self) -> Result<(), ObjectFilterError> {
        if self.rows.len() != self.height {
            return Err(ObjectFilterError::InvalidMask {
                detail: format!(
                    "frame {}: {} rows for height {}",
                    self.frame,
                    self.rows.len(),
                    self.height
                ),
            });
        }
        for (r, runs) in self.rows.iter().enumerate() {
            let total: usize = runs.iter().sum();
            if total != self.width {
                return Err(ObjectFilterError::InvalidMask {
                    detail: format!(
                        "frame {}: row {r} runs sum to {total}, expected width {}",
                        self.frame, self.width
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn to_bitmap(&self) -> Vec<bool> {
        let mut bitmap = vec![false; self.width * self.height];
        for (r, runs) in self.rows.iter().enumerate() {
            let mut col = 0usize;
            let mut set = false;
            for &run in runs {
                if set {
                    let start = r * self.width + col;
                    bitmap[start..start + run].fill(true);
                }
                col += run;
                set = !set;
            }
        }
        bitmap
    }

    /// Number of set pixels.
    pub fn population(&self) -> usize {
        self.rows
            .iter()
            .map(|runs| runs.iter().skip(1).step_by(2).sum::<usize>())
            .sum()
    }
}

/// Rasterizes one frame's kept boxes into a single union mask.
pub fn rasterize_masks(
    kept: &FilteredBoxSet,
    width: usize,
    height: usize,
    segmenter: &dyn Segmenter,
) -> ObjectMask {
    debug_assert!(width > 0 && height > 0, "frame dimensions must be positive");
    let mut bitmap = vec![false; width * height];
    for bd in &kept.kept {
        segmenter.rasterize(&bd.bounding_box, width, height, &mut bitmap);
    }
    ObjectMask::from_bitmap(kept.frame, width, height, &bitmap)
}

/// Drops the points whose nearest integer pixel (clamped to the image) is
/// set in the mask; everything else is retained in order.
pub fn remove_masked_points(
    points: &[(u64, Vector2<f64>)],
    mask: &ObjectMask,
) -> Vec<(u64, Vector2<f64>)> {
    let bitmap = mask.to_bitmap();
    points
        .iter()
        .filter(|(_, p)| {
            let col = (p.x.round() as i64).clamp(0, mask.width as i64 - 1) as usize;
            let row = (p.y.round() as i64).clamp(0, mask.height as i64 - 1) as usize;
            !bitmap[row * mask.width + col]
        })
        .cloned()
        .collect()
}
