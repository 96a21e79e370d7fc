//! Episode outcomes and the per-tick termination rules.

use serde::{Deserialize, Serialize};

use crate::road::{project, RoadGeometry};
use crate::types::{wrap_angle, Lane, VehicleId, VehicleState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    /// Confirmed in the main lane; `at_x`/`at_tick` mark the first tick of the hold.
    Merged { at_x: f64, at_tick: usize },
    Collision { tick: usize, vehicle_id: VehicleId, other_id: VehicleId },
    Timeout { tick: usize },
    Stagnation { tick: usize },
    /// The ego planner errored, returned non-finite controls or overran its budget.
    PlannerFault { tick: usize, message: String },
    /// An environment plan could not be executed.
    Invalid { tick: usize, message: String },
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Merged { .. })
    }

    pub fn is_fault(&self) -> bool {
        matches!(self, Outcome::PlannerFault { .. } | Outcome::Invalid { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Merged { .. } => "merged",
            Outcome::Collision { .. } => "collision",
            Outcome::Timeout { .. } => "timeout",
            Outcome::Stagnation { .. } => "stagnation",
            Outcome::PlannerFault { .. } => "planner_fault",
            Outcome::Invalid { .. } => "invalid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminationConfig {
    pub timeout_ticks: usize,
    pub merged_hold: usize,
    pub heading_tolerance: f64,
    pub stagnation_ticks: usize,
    pub stagnation_speed: f64,
}

impl Default for TerminationConfig {
    fn default() -> Self {
        TerminationConfig {
            timeout_ticks: 300,
            merged_hold: 5,
            heading_tolerance: 0.1,
            stagnation_ticks: 50,
            stagnation_speed: 0.1,
        }
    }
}

/// Streaming form of [`check_termination`]: feed the ego state of every tick
/// in order, starting at tick 0.
#[derive(Debug, Clone, Default)]
pub struct TerminationTracker {
    hold_start: Option<(usize, f64)>,
    still_since: Option<usize>,
}

impl TerminationTracker {
    pub fn update(
        &mut self,
        tick: usize,
        ego: &VehicleState,
        road: &RoadGeometry,
        cfg: &TerminationConfig,
    ) -> Option<Outcome> {
        let p = project(&road.main_centerline, [ego.x, ego.y]);
        let in_main = p.lateral.abs() < road.lane_width / 4.0
            && wrap_angle(ego.theta - p.heading).abs() < cfg.heading_tolerance;
        if in_main {
            let (start, x) = *self.hold_start.get_or_insert((tick, ego.x));
            if tick + 1 - start >= cfg.merged_hold {
                return Some(Outcome::Merged { at_x: x, at_tick: start });
            }
        } else {
            self.hold_start = None;
        }

        let on_ramp = road.lane_of(ego.x, ego.y) == Lane::Merge;
        if on_ramp && ego.speed() < cfg.stagnation_speed {
            let since = *self.still_since.get_or_insert(tick);
            if tick - since >= cfg.stagnation_ticks {
                return Some(Outcome::Stagnation { tick });
            }
        } else {
            self.still_since = None;
        }

        if tick >= cfg.timeout_ticks || (on_ramp && ego.x >= road.merge_end_x) {
            return Some(Outcome::Timeout { tick });
        }
        None
    }
}

/// First outcome reached along an ego track (index = tick), if any.
pub fn check_termination(ego_track: &[VehicleState], road: &RoadGeometry, cfg: &TerminationConfig) -> Option<Outcome> {
    let mut t = TerminationTracker::default();
    ego_track.iter().enumerate().find_map(|(tick, ego)| t.update(tick, ego, road, cfg))
}
