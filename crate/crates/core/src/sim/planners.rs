//! The ego planner contract and the built-in baselines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::idm::{idm_accel, IdmParams};
use crate::policy::PlannedTrajectory;
use crate::road::{project, RoadGeometry};
use crate::types::{wrap_angle, Control, Lane, VehicleId, VehicleState, DT, MAX_STEER};

/// What the ego planner sees each tick.
#[derive(Debug, Clone, Copy)]
pub struct ObsFrame<'a> {
    pub ego: &'a VehicleState,
    pub others: &'a [(VehicleId, VehicleState)],
    pub road: &'a RoadGeometry,
    pub tick: usize,
}

pub trait Planner: Send {
    fn name(&self) -> String;
    fn observe(&mut self, obs: &ObsFrame<'_>) -> Result<Control>;
}

impl<P: Planner + ?Sized> Planner for Box<P> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn observe(&mut self, obs: &ObsFrame<'_>) -> Result<Control> {
        (**self).observe(obs)
    }
}

/// Steering that pulls the vehicle onto a lane centerline (plus `offset`).
pub fn lane_tracking_steer(ego: &VehicleState, road: &RoadGeometry, lane: Lane, offset: f64) -> f64 {
    let p = project(road.centerline(lane), [ego.x, ego.y]);
    let err = p.lateral - offset;
    let heading_err = wrap_angle(ego.theta - p.heading);
    let wanted = (-0.4 * err).clamp(-0.25, 0.25);
    let yaw_rate = 2.0 * (wanted - heading_err);
    (yaw_rate * ego.length / ego.speed().max(0.5)).atan().clamp(-MAX_STEER, MAX_STEER)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapAcceptanceParams {
    /// Smallest bumper gap to the main-lane vehicle ahead that is accepted.
    pub min_front_gap: f64,
    /// Smallest bumper gap to the main-lane vehicle behind that is accepted.
    pub min_rear_gap: f64,
    /// Desired speed while waiting on the ramp.
    pub creep_speed: f64,
    pub idm: IdmParams,
}

impl Default for GapAcceptanceParams {
    fn default() -> Self {
        GapAcceptanceParams {
            min_front_gap: 1.0,
            min_rear_gap: 1.0,
            creep_speed: 3.0,
            idm: IdmParams {
                v0: 3.5,
                time_headway: 0.8,
                s0: 1.0,
                a_max: 1.5,
                b: 2.0,
                delta: 4.0,
                lateral_gain: 0.0,
                offset_bias: 0.0,
                yield_to_merging: false,
            },
        }
    }
}

/// Merges once the main-lane slot beside it is open, otherwise creeps along
/// the ramp and stops before its end.
#[derive(Debug, Clone)]
pub struct IdmGapAcceptance {
    pub params: GapAcceptanceParams,
    committed: bool,
}

impl IdmGapAcceptance {
    pub fn new(params: GapAcceptanceParams) -> Self {
        IdmGapAcceptance {
            params,
            committed: false,
        }
    }
}

impl Default for IdmGapAcceptance {
    fn default() -> Self {
        IdmGapAcceptance::new(GapAcceptanceParams::default())
    }
}

/// Signed bumper gaps `(front, rear)` to main-lane vehicles, measured along x.
fn main_lane_gaps(ego: &VehicleState, others: &[(VehicleId, VehicleState)], road: &RoadGeometry) -> (f64, f64, f64) {
    let mut front = (f64::INFINITY, 0.0);
    let mut rear = f64::INFINITY;
    for (_, o) in others {
        if road.lane_of(o.x, o.y) != Lane::Main {
            continue;
        }
        let dx = o.x - ego.x;
        let gap = dx.abs() - 0.5 * (ego.length + o.length);
        if dx >= 0.0 {
            if gap < front.0 {
                front = (gap, o.speed());
            }
        } else if gap < rear {
            rear = gap;
        }
    }
    (front.0, front.1, rear)
}

impl Planner for IdmGapAcceptance {
    fn name(&self) -> String {
        "idm-gap-acceptance".into()
    }

    fn observe(&mut self, obs: &ObsFrame<'_>) -> Result<Control> {
        let ego = obs.ego;
        let p = &self.params;
        let (front, front_speed, rear) = main_lane_gaps(ego, obs.others, obs.road);
        if !self.committed && front >= p.min_front_gap && rear >= p.min_rear_gap {
            self.committed = true;
        }
        if self.committed || obs.road.lane_of(ego.x, ego.y) == Lane::Main {
            let accel = idm_accel(ego.speed(), front_speed, front, &p.idm);
            return Ok(Control::new(accel, lane_tracking_steer(ego, obs.road, Lane::Main, 0.0)));
        }
        let creep = IdmParams {
            v0: p.creep_speed,
            ..p.idm
        };
        let stop_gap = obs.road.merge_end_x - ego.x - 0.5 * ego.length;
        let accel = idm_accel(ego.speed(), 0.0, stop_gap, &creep);
        Ok(Control::new(accel, lane_tracking_steer(ego, obs.road, Lane::Merge, 0.0)))
    }
}

type ControlFn = Box<dyn FnMut(&ObsFrame<'_>) -> Control + Send>;

/// Open-loop or hand-written control law, mostly for fixtures.
pub struct Scripted {
    name: String,
    f: ControlFn,
}

impl Scripted {
    pub fn from_fn(name: impl Into<String>, f: impl FnMut(&ObsFrame<'_>) -> Control + Send + 'static) -> Self {
        Scripted {
            name: name.into(),
            f: Box::new(f),
        }
    }

    pub fn constant(u: Control) -> Self {
        Scripted::from_fn("scripted-constant", move |_| u)
    }

    /// Full braking, wheels straight.
    pub fn brake_to_stop() -> Self {
        Scripted::from_fn("scripted-brake", |_| Control::new(-3.0, 0.0))
    }

    /// Replays `controls`, holding the last one.
    pub fn sequence(controls: Vec<Control>) -> Self {
        Scripted::from_fn("scripted-sequence", move |obs| {
            controls
                .get(obs.tick)
                .or(controls.last())
                .copied()
                .unwrap_or(Control::new(0.0, 0.0))
        })
    }
}

impl Planner for Scripted {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn observe(&mut self, obs: &ObsFrame<'_>) -> Result<Control> {
        Ok((self.f)(obs))
    }
}

type TrajectoryFn = Box<dyn FnMut(&ObsFrame<'_>) -> Result<PlannedTrajectory> + Send>;

/// Adapter for planners that emit global-frame trajectories: converts the
/// first planned frame into the control that reaches it under the bicycle
/// model.
pub struct TrajectoryFollower {
    name: String,
    f: TrajectoryFn,
}

impl TrajectoryFollower {
    pub fn new(
        name: impl Into<String>,
        f: impl FnMut(&ObsFrame<'_>) -> Result<PlannedTrajectory> + Send + 'static,
    ) -> Self {
        TrajectoryFollower {
            name: name.into(),
            f: Box::new(f),
        }
    }
}

/// Control that moves `ego` to `next` in one tick as closely as the bicycle
/// model allows.
pub fn control_towards(ego: &VehicleState, next_theta: f64, next_speed: f64) -> Control {
    let accel = (next_speed - ego.speed()) / DT;
    let yaw_rate = wrap_angle(next_theta - ego.theta) / DT;
    let steer = (yaw_rate * ego.length / ego.speed().max(0.1)).atan();
    Control::new(accel, steer)
}

impl Planner for TrajectoryFollower {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn observe(&mut self, obs: &ObsFrame<'_>) -> Result<Control> {
        let plan = (self.f)(obs)?;
        let first = plan
            .frames
            .first()
            .ok_or_else(|| Error::validation("trajectory planner returned no frames"))?;
        Ok(control_towards(obs.ego, first.theta, first.speed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::step_bicycle;
    use crate::types::{PlannedFrame, StyleLabel};

    #[test]
    fn steering_converges_to_main_lane() {
        let road = RoadGeometry::default();
        let mut ego = VehicleState::new(30.0, -3.5, 0.0, 3.0, StyleLabel::Friendly, Lane::Merge);
        for _ in 0..200 {
            let steer = lane_tracking_steer(&ego, &road, Lane::Main, 0.0);
            ego = step_bicycle(&ego, Control::new(0.0, steer), DT).unwrap();
        }
        assert!(ego.y.abs() < 0.05, "y = {}", ego.y);
        assert!(ego.theta.abs() < 0.02);
    }

    #[test]
    fn gap_acceptance_waits_for_room() {
        let road = RoadGeometry::default();
        let ego = VehicleState::new(30.0, -3.5, 0.0, 2.0, StyleLabel::Friendly, Lane::Merge);
        let beside = [(1, VehicleState::new(31.0, 0.0, 0.0, 2.0, StyleLabel::Friendly, Lane::Main))];
        let mut p = IdmGapAcceptance::default();
        let obs = ObsFrame {
            ego: &ego,
            others: &beside,
            road: &road,
            tick: 0,
        };
        let u = p.observe(&obs).unwrap();
        assert!(!p.committed);
        assert!(u.steer.abs() < 1e-9);
        let open = [(1, VehicleState::new(45.0, 0.0, 0.0, 2.0, StyleLabel::Friendly, Lane::Main))];
        let u = p.observe(&ObsFrame { others: &open, ..obs }).unwrap();
        assert!(p.committed);
        assert!(u.steer > 0.0);
    }

    #[test]
    fn follower_reaches_planned_frame() {
        let road = RoadGeometry::default();
        let ego = VehicleState::new(30.0, -3.5, 0.0, 2.0, StyleLabel::Friendly, Lane::Merge);
        let mut f = TrajectoryFollower::new("straight", |obs| {
            Ok(PlannedTrajectory {
                frames: vec![PlannedFrame::from_array([obs.ego.x + 0.2, obs.ego.y, 0.02, 2.5]); 40],
            })
        });
        let u = f
            .observe(&ObsFrame {
                ego: &ego,
                others: &[],
                road: &road,
                tick: 0,
            })
            .unwrap();
        let next = step_bicycle(&ego, u, DT).unwrap();
        assert!((next.speed() - 2.5).abs() < 1e-9);
        assert!((next.theta - 0.02).abs() < 1e-9);
    }
}
