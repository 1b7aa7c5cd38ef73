//! Pipeline stages behind the subcommands. Every stage works through the
//! run directory: it reads the artifacts earlier stages wrote and writes its
//! own, so running the full pipeline in one process and running the four
//! subcommands separately produce byte-identical directories.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use log::info;
use mona_core::dynamic_points::{classify_dynamic_points, PointTrack};
use mona_core::object_filter::{filter_boxes, rasterize_masks, BoxRasterizer};
use mona_core::traj_eval::{
    build_observations, evaluate_observations, trajectory_metrics, EvalConfig, EvaluatedRun,
    TrajectoryMetrics,
};
use nalgebra::{Vector2, Vector3};

use crate::config::{ParamOverrides, PipelineConfig};
use crate::error::CliError;
use crate::io::{
    self, associate_by_timestamp, read_json, read_tum, rows_to_trajectory, write_json,
    write_text, write_tum, DetectionsFile, DynamicFrameRecord, DynamicPointsFile,
    FilteredBoxesFile, FlowFile, LabelRecord, LabelsFile, LandmarksFile, MasksFile, ScoreRecord,
    TracksFile,
};
use crate::report::{
    improvement_percent, median, render_ate_plot, BatchSummary, PerFrameCounts,
    ReportConfigEcho, RunReport, SeedOutcome,
};

/// Timestamps closer than this are considered the same instant when pairing
/// two externally supplied trajectory files.
pub const TIMESTAMP_ASSOCIATION_TOLERANCE: f64 = 1e-3;

fn tool_version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

/// Reads and validates the effective configuration stored in a run
/// directory.
pub fn load_run_config(out_dir: &Path) -> Result<PipelineConfig, CliError> {
    let config: PipelineConfig = read_json(&out_dir.join(io::PIPELINE_CONFIG_FILE))?;
    config.validate()?;
    Ok(config)
}

/// Generates the scene for `config` and writes the simulator artifacts plus
/// the effective configuration into `out_dir`.
pub fn run_simulate(config: &PipelineConfig, out_dir: &Path) -> Result<(), CliError> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::output(out_dir, e))?;

    let scene = mona_core::scene::generate_scene(&config.scene)?;
    write_json(&out_dir.join(io::PIPELINE_CONFIG_FILE), config)?;
    write_json(
        &out_dir.join(io::TRACKS_FILE),
        &TracksFile::from_tracks(&scene.tracks),
    )?;
    write_json(&out_dir.join(io::FLOW_FILE), &FlowFile::from_sets(&scene.flow))?;
    write_json(
        &out_dir.join(io::DETECTIONS_FILE),
        &DetectionsFile::from_frames(&scene.detections),
    )?;
    write_tum(&out_dir.join(io::GT_TRAJECTORY_FILE), &scene.gt_trajectory)?;
    let labels = LabelsFile {
        labels: scene
            .tracks
            .iter()
            .zip(&scene.gt_dynamic_labels)
            .map(|(t, &dynamic)| LabelRecord {
                track_id: t.track_id,
                dynamic,
            })
            .collect(),
    };
    write_json(&out_dir.join(io::LABELS_FILE), &labels)?;
    let track_ids: Vec<u64> = scene.tracks.iter().map(|t| t.track_id).collect();
    write_json(
        &out_dir.join(io::LANDMARKS_FILE),
        &LandmarksFile::from_scene(&track_ids, &scene.landmarks),
    )?;
    info!(
        "simulated {} frames, {} tracks, seed {}",
        scene.num_frames(),
        scene.tracks.len(),
        config.scene.seed
    );
    Ok(())
}

/// Scores the stored tracks against the stored flow and writes the
/// dynamic-points artifact.
pub fn run_extract(out_dir: &Path, overrides: &ParamOverrides) -> Result<(), CliError> {
    let config = overrides.apply(load_run_config(out_dir)?)?;
    let tracks_path = out_dir.join(io::TRACKS_FILE);
    let tracks = read_json::<TracksFile>(&tracks_path)?.into_tracks(&tracks_path)?;
    let flow = read_json::<FlowFile>(&out_dir.join(io::FLOW_FILE))?.into_sets();

    let output = classify_dynamic_points(&tracks, &flow, &config.dynamic)?;

    let by_id: HashMap<u64, &PointTrack> = tracks.iter().map(|t| (t.track_id, t)).collect();
    let window = tracks.first().map_or(0, |t| t.window());
    let mut frames = Vec::with_capacity(window);
    for t in 0..window {
        let mut track_ids = Vec::new();
        let mut points = Vec::new();
        for score in &output.scores {
            if score.flags[t] {
                let track = by_id[&score.track_id];
                track_ids.push(score.track_id);
                let p = track.positions[t];
                points.push([p.x, p.y]);
            }
        }
        frames.push(DynamicFrameRecord { t, track_ids, points });
    }

    let file = DynamicPointsFile {
        config: config.dynamic,
        scores: output.scores.iter().map(ScoreRecord::from_score).collect(),
        frame_stats: output.frame_stats,
        frames,
    };
    let flagged: usize = file.frames.iter().map(|f| f.track_ids.len()).sum();
    write_json(&out_dir.join(io::DYNAMIC_POINTS_FILE), &file)?;
    info!(
        "scored {} tracks, {} dynamic flags across {} frames",
        file.scores.len(),
        flagged,
        window
    );
    Ok(())
}

/// Filters the stored detections against the stored dynamic points and
/// writes the kept boxes and their rasterized masks.
pub fn run_filter(out_dir: &Path, overrides: &ParamOverrides) -> Result<(), CliError> {
    let config = overrides.apply(load_run_config(out_dir)?)?;
    let det_path = out_dir.join(io::DETECTIONS_FILE);
    let detections = read_json::<DetectionsFile>(&det_path)?.into_frames(&det_path)?;
    let dp_path = out_dir.join(io::DYNAMIC_POINTS_FILE);
    let dynamic: DynamicPointsFile = read_json(&dp_path)?;

    let width = config.scene.intrinsics.width as usize;
    let height = config.scene.intrinsics.height as usize;
    let segmenter = BoxRasterizer;
    let mut frames = Vec::with_capacity(detections.len());
    let mut masks = Vec::with_capacity(detections.len());
    for (t, boxes) in detections.iter().enumerate() {
        let points: Vec<Vector2<f64>> = dynamic.points_at(t, &dp_path)?;
        let set = filter_boxes(t, boxes, &points, config.tau_0)?;
        masks.push(rasterize_masks(&set, width, height, &segmenter));
        frames.push(set);
    }
    let kept: usize = frames.iter().map(|f| f.kept.len()).sum();
    write_json(
        &out_dir.join(io::FILTERED_BOXES_FILE),
        &FilteredBoxesFile {
            tau_0: config.tau_0,
            frames,
        },
    )?;
    write_json(&out_dir.join(io::MASKS_FILE), &MasksFile { frames: masks })?;
    info!("kept {kept} boxes across {} frames", detections.len());
    Ok(())
}

/// Solves the stored scene twice (all points, then mask-survivors only),
/// writes both estimated trajectories, the per-frame error series, and the
/// run report.
pub fn run_evaluate_pipeline(
    out_dir: &Path,
    overrides: &ParamOverrides,
) -> Result<RunReport, CliError> {
    let config = overrides.apply(load_run_config(out_dir)?)?;
    let tracks_path = out_dir.join(io::TRACKS_FILE);
    let tracks = read_json::<TracksFile>(&tracks_path)?.into_tracks(&tracks_path)?;

    let landmarks_path = out_dir.join(io::LANDMARKS_FILE);
    let landmarks: LandmarksFile = read_json(&landmarks_path)?;
    let initial_by_id: HashMap<u64, Vector3<f64>> = landmarks
        .tracks
        .iter()
        .filter(|t| !t.positions.is_empty())
        .map(|t| {
            let p = t.positions[0];
            (t.track_id, Vector3::new(p[0], p[1], p[2]))
        })
        .collect();
    let initial: Vec<Vector3<f64>> = tracks
        .iter()
        .map(|t| {
            initial_by_id.get(&t.track_id).copied().ok_or_else(|| {
                CliError::input(
                    &landmarks_path,
                    format!("no landmark for track {}", t.track_id),
                )
            })
        })
        .collect::<Result<_, _>>()?;

    let reference = rows_to_trajectory(read_tum(&out_dir.join(io::GT_TRAJECTORY_FILE))?);
    let timestamps: Vec<f64> = reference.iter().map(|e| e.timestamp).collect();

    let masks_path = out_dir.join(io::MASKS_FILE);
    let masks = read_json::<MasksFile>(&masks_path)?.validated(&masks_path)?;

    let intrinsics = config.scene.intrinsics;
    let unmasked_obs = build_observations(&tracks, &initial, &timestamps, None)?;
    let masked_obs = build_observations(&tracks, &initial, &timestamps, Some(&masks))?;
    let unmasked = evaluate_observations(&unmasked_obs, &intrinsics, &reference, &config.eval)?;
    let masked = evaluate_observations(&masked_obs, &intrinsics, &reference, &config.eval)?;

    write_tum(&out_dir.join(io::UNMASKED_TRAJECTORY_FILE), &unmasked.trajectory)?;
    write_tum(&out_dir.join(io::MASKED_TRAJECTORY_FILE), &masked.trajectory)?;
    write_text(
        &out_dir.join(io::PLOT_ATE_FILE),
        &render_ate_plot(&unmasked.ate_residuals, &masked.ate_residuals),
    )?;

    let report = build_report(out_dir, &config, &tracks, &unmasked, &masked)?;
    write_json(&out_dir.join(io::REPORT_JSON_FILE), &report)?;
    write_text(&out_dir.join(io::REPORT_TEXT_FILE), &report.render_text())?;
    info!(
        "evaluated seed {}: unmasked ate {:.6}, masked ate {:.6}",
        report.seed, report.unmasked.ate_rmse, report.masked.ate_rmse
    );
    Ok(report)
}

/// Assembles the run report from the artifacts the earlier stages wrote, so
/// the echoed parameters are the ones each stage actually ran with.
fn build_report(
    out_dir: &Path,
    config: &PipelineConfig,
    tracks: &[PointTrack],
    unmasked: &EvaluatedRun,
    masked: &EvaluatedRun,
) -> Result<RunReport, CliError> {
    let dynamic: DynamicPointsFile = read_json(&out_dir.join(io::DYNAMIC_POINTS_FILE))?;
    let filtered: FilteredBoxesFile = read_json(&out_dir.join(io::FILTERED_BOXES_FILE))?;
    let det_path = out_dir.join(io::DETECTIONS_FILE);
    let detections = read_json::<DetectionsFile>(&det_path)?.into_frames(&det_path)?;

    let num_frames = detections.len();
    let mut per_frame = Vec::with_capacity(num_frames);
    for t in 0..num_frames {
        let detection_points = tracks
            .iter()
            .filter(|tr| !tr.is_anchor && t < tr.window() && tr.visible_at(t))
            .count();
        let anchors = tracks
            .iter()
            .filter(|tr| tr.is_anchor && t < tr.window() && tr.visible_at(t))
            .count();
        let dynamic_points = dynamic
            .frames
            .iter()
            .find(|f| f.t == t)
            .map_or(0, |f| f.track_ids.len());
        let kept_boxes = filtered
            .frames
            .iter()
            .find(|f| f.frame == t)
            .map_or(0, |f| f.kept.len());
        per_frame.push(PerFrameCounts {
            frame: t,
            detection_points,
            anchors,
            dynamic_points,
            boxes: detections[t].len(),
            kept_boxes,
        });
    }

    Ok(RunReport {
        tool_version: tool_version(),
        seed: config.scene.seed,
        config: ReportConfigEcho {
            dynamic: dynamic.config,
            tau_0: filtered.tau_0,
            eval: config.eval,
        },
        per_frame,
        flow_stats: dynamic.frame_stats,
        unmasked: unmasked.metrics,
        masked: masked.metrics,
        ate_improvement_percent: improvement_percent(
            unmasked.metrics.ate_rmse,
            masked.metrics.ate_rmse,
        ),
        rpe_translation_improvement_percent: improvement_percent(
            unmasked.metrics.rpe_translation_rmse,
            masked.metrics.rpe_translation_rmse,
        ),
        rpe_rotation_improvement_percent: improvement_percent(
            unmasked.metrics.rpe_rotation_rmse_deg,
            masked.metrics.rpe_rotation_rmse_deg,
        ),
    })
}

/// Compares two externally supplied TUM files after timestamp association.
pub fn run_evaluate_files(
    estimated_path: &Path,
    reference_path: &Path,
    overrides: &ParamOverrides,
) -> Result<TrajectoryMetrics, CliError> {
    let mut eval = EvalConfig::default();
    if let Some(align) = overrides.align {
        eval.alignment = align;
    }
    if let Some(delta) = overrides.rpe_delta {
        eval.rpe_delta = delta;
    }
    eval.validate().map_err(CliError::from)?;

    let estimated = read_tum(estimated_path)?;
    let reference = read_tum(reference_path)?;
    let (est, reference) =
        associate_by_timestamp(estimated, reference, TIMESTAMP_ASSOCIATION_TOLERANCE);
    info!("associated {} pose pairs", est.len());
    Ok(trajectory_metrics(&est, &reference, &eval)?)
}

/// Renders file-mode metrics for stdout.
pub fn format_metrics(metrics: &TrajectoryMetrics) -> String {
    format!(
        "ate_rmse={:.6}\nrpe_trans_rmse={:.6}\nrpe_rot_rmse_deg={:.6}\n",
        metrics.ate_rmse, metrics.rpe_translation_rmse, metrics.rpe_rotation_rmse_deg
    )
}

/// Runs simulate, extract, filter, and evaluate in order against one
/// directory. `config` must already have every override applied; the stages
/// re-read it from the directory exactly as the individual subcommands
/// would.
pub fn run_pipeline(config: &PipelineConfig, out_dir: &Path) -> Result<RunReport, CliError> {
    run_simulate(config, out_dir)?;
    let no_overrides = ParamOverrides::default();
    run_extract(out_dir, &no_overrides)?;
    run_filter(out_dir, &no_overrides)?;
    run_evaluate_pipeline(out_dir, &no_overrides)
}

/// Runs the full pipeline once per seed (base, base+1, ...), each into its
/// own `seed_NNNN` subdirectory, and writes the aggregate summary.
pub fn run_batch(
    config: &PipelineConfig,
    out_dir: &Path,
    num_seeds: usize,
) -> Result<BatchSummary, CliError> {
    if num_seeds == 0 {
        return Err(CliError::Validation(
            "--seeds must be at least 1".to_string(),
        ));
    }
    fs::create_dir_all(out_dir).map_err(|e| CliError::output(out_dir, e))?;
    let base_seed = config.scene.seed;
    let mut seeds = Vec::with_capacity(num_seeds);
    for i in 0..num_seeds {
        let seed = base_seed + i as u64;
        let mut seed_config = config.clone();
        seed_config.scene.seed = seed;
        let seed_dir = out_dir.join(format!("seed_{seed:04}"));
        let report = run_pipeline(&seed_config, &seed_dir)?;
        seeds.push(SeedOutcome {
            seed,
            unmasked_ate: report.unmasked.ate_rmse,
            masked_ate: report.masked.ate_rmse,
            ate_improvement_percent: report.ate_improvement_percent,
        });
    }
    let improvements: Vec<f64> = seeds.iter().map(|s| s.ate_improvement_percent).collect();
    let not_worse = seeds
        .iter()
        .filter(|s| s.masked_ate <= s.unmasked_ate)
        .count();
    let summary = BatchSummary {
        tool_version: tool_version(),
        base_seed,
        seeds,
        median_ate_improvement_percent: median(&improvements),
        masked_not_worse_fraction: not_worse as f64 / num_seeds as f64,
    };
    write_json(&out_dir.join(io::BATCH_SUMMARY_FILE), &summary)?;
    Ok(summary)
}
