//! Imitation data: closed-loop rule-policy rollouts cut into 50-frame windows
//! (10 history, 40 future) per main-lane vehicle.

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, FrameTransform};
use crate::policy::PlannedTrajectory;
use crate::road::RoadGeometry;
use crate::sample::{build_sample_with_ids, leader_of, vehicles_in_range, Sample, Snapshot, LEADING_RANGE, T_FUT, T_HIS};
use crate::scenario::{sample_scenario, DensityClass, ScenarioParams};
use crate::sim::{rollout_with_ego, EnvPolicy, IdmGapAcceptance, EGO_ID};
use crate::types::{PlannedFrame, VehicleId, VehicleState};

pub const WINDOW: usize = T_HIS + T_FUT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub sample: Sample,
    /// Ground truth for the target in its anchor-frame coordinates.
    pub target_future: PlannedTrajectory,
    /// Ground truth for every vehicle row of the sample, target first.
    pub aux_future: Vec<PlannedTrajectory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// Frames per rollout, including the initial one.
    pub scene_frames: usize,
    pub stride: usize,
    pub max_leader_gap: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    /// Keep only windows with a merge-lane vehicle in the interaction range.
    pub require_interaction: bool,
    pub densities: Vec<DensityClass>,
    pub scenario: ScenarioParams,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            scene_frames: 100,
            stride: 1,
            max_leader_gap: LEADING_RANGE,
            min_speed: 1.0,
            max_speed: 5.0,
            require_interaction: true,
            densities: DensityClass::ALL.to_vec(),
            scenario: ScenarioParams::default(),
        }
    }
}

/// Why windows were kept or dropped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub scenes: usize,
    pub windows: usize,
    pub kept: usize,
    pub no_close_leader: usize,
    pub speed_out_of_band: usize,
    pub no_interaction: usize,
    pub incomplete_future: usize,
}

impl DatasetReport {
    fn merge(mut self, o: DatasetReport) -> Self {
        self.scenes += o.scenes;
        self.windows += o.windows;
        self.kept += o.kept;
        self.no_close_leader += o.no_close_leader;
        self.speed_out_of_band += o.speed_out_of_band;
        self.no_interaction += o.no_interaction;
        self.incomplete_future += o.incomplete_future;
        self
    }
}

/// Start indices of the stride-1 windows in a rollout of `n_frames`.
pub fn window_starts(n_frames: usize) -> RangeInclusive<usize> {
    if n_frames < WINDOW {
        #[allow(clippy::reversed_empty_ranges)]
        return 1..=0;
    }
    0..=n_frames - WINDOW
}

fn local_frame(v: &VehicleState, f: &Frame) -> PlannedFrame {
    let l = v.to_frame(f);
    PlannedFrame {
        x: l.x,
        y: l.y,
        theta: l.theta,
        speed: v.speed(),
    }
}

fn future_of(frames: &[Snapshot], id: VehicleId, f: &Frame) -> Option<PlannedTrajectory> {
    frames
        .iter()
        .map(|s| s.get(&id).map(|v| local_frame(v, f)))
        .collect::<Option<Vec<_>>>()
        .map(|frames| PlannedTrajectory { frames })
}

/// Cuts one rollout into filtered training windows for every vehicle
/// accepted by `is_target`.
pub fn examples_from_rollout(
    frames: &[Snapshot],
    road: &RoadGeometry,
    is_target: impl Fn(VehicleId) -> bool,
    cfg: &DatasetConfig,
) -> (Vec<TrainingExample>, DatasetReport) {
    let mut out = Vec::new();
    let mut report = DatasetReport::default();
    for start in window_starts(frames.len()).step_by(cfg.stride.max(1)) {
        let anchor = start + T_HIS - 1;
        let snap = &frames[anchor];
        for (id, state) in snap.iter().filter(|(id, _)| is_target(**id)) {
            report.windows += 1;
            if !leader_of(snap, *id).is_some_and(|(_, gap)| gap <= cfg.max_leader_gap) {
                report.no_close_leader += 1;
                continue;
            }
            let v = state.speed();
            if !(v >= cfg.min_speed && v <= cfg.max_speed) {
                report.speed_out_of_band += 1;
                continue;
            }
            if cfg.require_interaction && !vehicles_in_range(snap, *id).iter().any(|o| snap[o].lane != state.lane) {
                report.no_interaction += 1;
                continue;
            }
            let Ok((sample, ids)) = build_sample_with_ids(&frames[start..=anchor], *id, road) else {
                report.incomplete_future += 1;
                continue;
            };
            let f = Frame::of_vehicle(state);
            let future = &frames[anchor + 1..start + WINDOW];
            let rows: Option<Vec<PlannedTrajectory>> =
                std::iter::once(id).chain(&ids).map(|i| future_of(future, *i, &f)).collect();
            let Some(aux_future) = rows else {
                report.incomplete_future += 1;
                continue;
            };
            report.kept += 1;
            out.push(TrainingExample {
                sample,
                target_future: aux_future[0].clone(),
                aux_future,
            });
        }
    }
    (out, report)
}

fn scene_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64)
}

/// Rolls out `n_scenes` scenarios (cycling through the configured densities)
/// with the rule policy and an ego merging among them, and returns every
/// window that passes the filters. The count may be below what the scenes
/// could hold; the report says why.
pub fn generate_dataset(n_scenes: usize, seed: u64, cfg: &DatasetConfig) -> Result<(Vec<TrainingExample>, DatasetReport)> {
    if n_scenes == 0 {
        return Err(Error::validation("n_scenes must be at least 1"));
    }
    if cfg.densities.is_empty() || cfg.scene_frames < WINDOW {
        return Err(Error::validation(format!(
            "dataset needs at least one density and scenes of {WINDOW} frames"
        )));
    }
    let per_scene: Vec<(Vec<TrainingExample>, DatasetReport)> = (0..n_scenes)
        .into_par_iter()
        .map(|i| {
            let density = cfg.densities[i % cfg.densities.len()];
            let s = sample_scenario(scene_seed(seed, i), density, &cfg.scenario)?;
            let mut ego = IdmGapAcceptance::default();
            let frames = rollout_with_ego(&s, &mut ego, &EnvPolicy::RuleBased, cfg.scene_frames - 1, seed)?;
            let (ex, mut rep) = examples_from_rollout(&frames, &s.road, |id| id != EGO_ID, cfg);
            rep.scenes = 1;
            Ok((ex, rep))
        })
        .collect::<Result<_>>()?;
    let mut all = Vec::new();
    let mut report = DatasetReport::default();
    for (ex, rep) in per_scene {
        all.extend(ex);
        report = report.merge(rep);
    }
    log::info!("dataset: kept {} of {} windows from {} scenes", report.kept, report.windows, report.scenes);
    Ok((all, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Lane, StyleLabel};

    /// Target 2 follows leader 3 at a fixed bumper gap; vehicle 4 rolls
    /// alongside on the ramp.
    fn convoy(frames: usize, gap: f64, speed: f64) -> Vec<Snapshot> {
        (0..frames)
            .map(|k| {
                let x = 20.0 + speed * 0.1 * k as f64;
                let mut s = Snapshot::new();
                s.insert(2, VehicleState::new(x, 0.0, 0.0, speed, StyleLabel::Friendly, Lane::Main));
                s.insert(3, VehicleState::new(x + gap + 4.7, 0.0, 0.0, speed, StyleLabel::Offensive, Lane::Main));
                s.insert(4, VehicleState::new(x + 1.0, -3.5, 0.0, speed, StyleLabel::Friendly, Lane::Merge));
                s
            })
            .collect()
    }

    #[test]
    fn window_arithmetic() {
        assert_eq!(window_starts(100).count(), 51);
        assert_eq!(window_starts(50).count(), 1);
        assert_eq!(window_starts(49).count(), 0);
    }

    #[test]
    fn compliant_scene_yields_every_window() {
        let frames = convoy(100, 4.0, 2.0);
        let road = RoadGeometry::default();
        let (ex, rep) = examples_from_rollout(&frames, &road, |id| id == 2, &DatasetConfig::default());
        assert_eq!(ex.len(), 51);
        assert_eq!(rep.kept, 51);
        for e in &ex {
            assert!((1.0..=5.0).contains(&e.sample.target_speed()));
            assert_eq!(e.target_future.frames.len(), T_FUT);
            assert_eq!(e.aux_future.len(), 1 + e.sample.neighbors.len());
            // constant speed along x in the anchor frame
            assert!((e.target_future.frames[0].x - 0.2).abs() < 1e-9);
            assert!((e.target_future.frames[39].x - 8.0).abs() < 1e-9);
        }
    }

    #[test]
    fn distant_leader_rejected() {
        let frames = convoy(100, 15.0, 2.0);
        let (ex, rep) = examples_from_rollout(&frames, &RoadGeometry::default(), |id| id == 2, &DatasetConfig::default());
        assert!(ex.is_empty());
        assert_eq!(rep.no_close_leader, 51);
    }

    #[test]
    fn speed_band_enforced() {
        let frames = convoy(60, 4.0, 0.5);
        let (ex, rep) = examples_from_rollout(&frames, &RoadGeometry::default(), |id| id == 2, &DatasetConfig::default());
        assert!(ex.is_empty());
        assert_eq!(rep.speed_out_of_band, 11);
    }

    #[test]
    fn generated_windows_pass_filters() {
        let (ex, rep) = generate_dataset(3, 7, &DatasetConfig::default()).unwrap();
        assert_eq!(rep.scenes, 3);
        assert_eq!(rep.kept, ex.len());
        for e in &ex {
            let v = e.sample.target_speed();
            assert!((1.0..=5.0).contains(&v), "{v}");
        }
    }
}
