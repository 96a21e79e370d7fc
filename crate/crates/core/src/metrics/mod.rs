//! Per-episode metrics for the merging vehicle.

pub mod report;
pub mod stats;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::collision::OrientedBox;
use crate::error::{Error, Result};
use crate::sample::Snapshot;
use crate::scenario::DensityClass;
use crate::sim::{EpisodeLog, Outcome, EGO_ID};
use crate::types::DT;

pub use report::{aggregate, aggregate_records, aggregate_with, BenchmarkReport, DensityRow, EpisodeRecord};
pub use stats::{mse, pearson};

/// Gap recorded on ticks where the ego has the road to itself.
pub const OPEN_ROAD_GAP: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveMode {
    Hurry,
    Medium,
    Relax,
}

impl DriveMode {
    pub const ALL: [DriveMode; 3] = [DriveMode::Hurry, DriveMode::Medium, DriveMode::Relax];

    pub fn as_str(self) -> &'static str {
        match self {
            DriveMode::Hurry => "hurry",
            DriveMode::Medium => "medium",
            DriveMode::Relax => "relax",
        }
    }
}

impl fmt::Display for DriveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DriveMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hurry" => Ok(DriveMode::Hurry),
            "medium" => Ok(DriveMode::Medium),
            "relax" => Ok(DriveMode::Relax),
            other => Err(Error::validation(format!("unknown drive mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub total_time: f64,
    pub avg_speed: f64,
    pub merging_point_x: Option<f64>,
    pub avg_jerk: f64,
    pub max_jerk: f64,
    /// Mean |d ax / dt| and |d ay / dt|, for diagnostics.
    pub avg_jerk_x: f64,
    pub avg_jerk_y: f64,
    pub avg_gap: f64,
    pub min_gap: f64,
    pub others_avg_speed: f64,
    pub outcome: Outcome,
    pub drive_mode: DriveMode,
    pub density: DensityClass,
    pub scenario_seed: u64,
    pub planner: String,
}

/// Bumper-to-bumper distance along the line of centers, floored at 0.
pub fn pair_gap(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let (dx, dy) = (b.center[0] - a.center[0], b.center[1] - a.center[1]);
    let d = dx.hypot(dy);
    if d == 0.0 {
        return 0.0;
    }
    let u = [dx / d, dy / d];
    (d - a.projected_radius(u) - b.projected_radius(u)).max(0.0)
}

/// Folds snapshots one at a time; memory stays constant in episode length.
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    snapshots: usize,
    speed_sum: f64,
    prev_accel: Option<(f64, f64, f64)>,
    jerk_n: usize,
    jerk_sum: f64,
    jerk_max: f64,
    jerk_x_sum: f64,
    jerk_y_sum: f64,
    gap_sum: f64,
    gap_min: f64,
    others_speed_sum: f64,
    others_n: usize,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        MetricsAccumulator {
            gap_min: f64::INFINITY,
            ..Default::default()
        }
    }

    pub fn push(&mut self, snap: &Snapshot) -> Result<()> {
        let ego = snap.get(&EGO_ID).ok_or(Error::UnknownVehicle(EGO_ID))?;
        self.snapshots += 1;
        self.speed_sum += ego.speed();

        let a = (ego.ax, ego.ay, ego.accel_magnitude());
        if let Some(p) = self.prev_accel {
            let j = (a.2 - p.2).abs() / DT;
            self.jerk_n += 1;
            self.jerk_sum += j;
            self.jerk_max = self.jerk_max.max(j);
            self.jerk_x_sum += (a.0 - p.0).abs() / DT;
            self.jerk_y_sum += (a.1 - p.1).abs() / DT;
        }
        self.prev_accel = Some(a);

        let eb = OrientedBox::of_vehicle(ego);
        let mut nearest = OPEN_ROAD_GAP;
        for (id, v) in snap {
            if *id == EGO_ID {
                continue;
            }
            nearest = nearest.min(pair_gap(&eb, &OrientedBox::of_vehicle(v)));
            self.others_speed_sum += v.speed();
            self.others_n += 1;
        }
        self.gap_sum += nearest;
        self.gap_min = self.gap_min.min(nearest);
        Ok(())
    }

    pub fn finish(
        &self,
        outcome: Outcome,
        mode: DriveMode,
        density: DensityClass,
        scenario_seed: u64,
        planner: &str,
    ) -> Result<EpisodeMetrics> {
        if self.snapshots == 0 {
            return Err(Error::validation("cannot compute metrics of an empty log"));
        }
        let n = self.snapshots as f64;
        let mean_jerk = |s: f64| if self.jerk_n == 0 { 0.0 } else { s / self.jerk_n as f64 };
        let avg_gap = self.gap_sum / n;
        Ok(EpisodeMetrics {
            total_time: (self.snapshots - 1) as f64 * DT,
            avg_speed: self.speed_sum / n,
            merging_point_x: match outcome {
                Outcome::Merged { at_x, .. } => Some(at_x),
                _ => None,
            },
            avg_jerk: mean_jerk(self.jerk_sum).min(self.jerk_max),
            max_jerk: self.jerk_max,
            avg_jerk_x: mean_jerk(self.jerk_x_sum),
            avg_jerk_y: mean_jerk(self.jerk_y_sum),
            avg_gap: avg_gap.max(self.gap_min),
            min_gap: self.gap_min,
            others_avg_speed: if self.others_n == 0 {
                0.0
            } else {
                self.others_speed_sum / self.others_n as f64
            },
            outcome,
            drive_mode: mode,
            density,
            scenario_seed,
            planner: planner.to_string(),
        })
    }
}

pub fn compute_metrics(log: &EpisodeLog, mode: DriveMode) -> Result<EpisodeMetrics> {
    let mut acc = MetricsAccumulator::new();
    for s in &log.snapshots {
        acc.push(s)?;
    }
    acc.finish(log.outcome.clone(), mode, log.density, log.scenario_seed, &log.planner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road::RoadGeometry;
    use crate::sim::SimConfig;
    use crate::types::{Lane, StyleLabel, VehicleState};

    fn log_of(egos: Vec<VehicleState>, other: Option<VehicleState>) -> EpisodeLog {
        let snapshots = egos
            .into_iter()
            .map(|e| {
                let mut s = Snapshot::new();
                s.insert(EGO_ID, e);
                if let Some(o) = other {
                    s.insert(1, o);
                }
                s
            })
            .collect::<Vec<_>>();
        EpisodeLog {
            scenario_seed: 0,
            density: DensityClass::HighlyDense,
            seed: 0,
            planner: "test".into(),
            env_policy: "rule".into(),
            config: SimConfig::default(),
            road: RoadGeometry::default(),
            controls: vec![],
            outcome: Outcome::Timeout {
                tick: snapshots.len() - 1,
            },
            snapshots,
        }
    }

    fn ego(x: f64, speed: f64, ax: f64) -> VehicleState {
        let mut v = VehicleState::new(x, -3.5, 0.0, speed, StyleLabel::Friendly, Lane::Merge);
        v.ax = ax;
        v
    }

    #[test]
    fn constant_velocity() {
        let log = log_of((0..=10).map(|k| ego(k as f64 * 0.3, 3.0, 0.0)).collect(), None);
        let m = compute_metrics(&log, DriveMode::Medium).unwrap();
        assert_eq!((m.avg_jerk, m.max_jerk), (0.0, 0.0));
        assert!((m.avg_speed - 3.0).abs() < 1e-12);
        assert_eq!(m.total_time, 10.0 * DT);
        assert_eq!(m.avg_gap, OPEN_ROAD_GAP);
        assert_eq!(m.merging_point_x, None);
    }

    #[test]
    fn accel_step_jerk() {
        let log = log_of(vec![ego(0.0, 1.0, 0.0), ego(0.1, 1.0, 1.0)], None);
        let m = compute_metrics(&log, DriveMode::Hurry).unwrap();
        assert!((m.max_jerk - 10.0).abs() < 1e-12);
        assert!((m.avg_jerk_x - 10.0).abs() < 1e-12);
        assert_eq!(m.avg_jerk_y, 0.0);
    }

    #[test]
    fn single_tick_log() {
        let m = compute_metrics(&log_of(vec![ego(0.0, 2.0, 0.0)], None), DriveMode::Relax).unwrap();
        assert_eq!((m.total_time, m.avg_jerk, m.max_jerk), (0.0, 0.0, 0.0));
    }

    #[test]
    fn gap_along_line_of_centers() {
        let other = VehicleState::new(10.0, -3.5, 0.0, 2.0, StyleLabel::Friendly, Lane::Merge);
        let m = compute_metrics(&log_of(vec![ego(0.0, 2.0, 0.0)], Some(other)), DriveMode::Relax).unwrap();
        assert!((m.min_gap - (10.0 - 4.7)).abs() < 1e-12);
        assert!((m.others_avg_speed - 2.0).abs() < 1e-12);
        // side by side, 3.5 m apart
        let beside = VehicleState::new(0.0, 0.0, 0.0, 2.0, StyleLabel::Friendly, Lane::Main);
        let m = compute_metrics(&log_of(vec![ego(0.0, 2.0, 0.0)], Some(beside)), DriveMode::Relax).unwrap();
        assert!((m.min_gap - (3.5 - 1.9)).abs() < 1e-12);
        // overlapping boxes floor at zero
        let on_top = VehicleState::new(1.0, -3.5, 0.0, 2.0, StyleLabel::Friendly, Lane::Merge);
        let m = compute_metrics(&log_of(vec![ego(0.0, 2.0, 0.0)], Some(on_top)), DriveMode::Relax).unwrap();
        assert_eq!(m.min_gap, 0.0);
    }

    #[test]
    fn invariants_on_real_episode() {
        use crate::scenario::{sample_scenario, ScenarioParams};
        use crate::sim::{run_episode, EnvPolicy, IdmGapAcceptance};
        let s = sample_scenario(21, DensityClass::HighlyDense, &ScenarioParams::default()).unwrap();
        let log = run_episode(&s, &mut IdmGapAcceptance::default(), &EnvPolicy::RuleBased, &SimConfig::default()).unwrap();
        let m = compute_metrics(&log, DriveMode::Hurry).unwrap();
        assert!(m.min_gap <= m.avg_gap);
        assert!(m.max_jerk >= m.avg_jerk && m.avg_jerk >= 0.0);
        assert_eq!(m.total_time, log.ticks() as f64 * DT);
        if let Outcome::Merged { at_x, .. } = log.outcome {
            assert_eq!(m.merging_point_x, Some(at_x));
        }
    }
}
