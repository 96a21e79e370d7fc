//! Construction of the per-vehicle record consumed by the environment
//! policies: the target's recent history, the histories of the vehicles in
//! its leading and interaction ranges, and the nearby road polylines, all
//! expressed in the target's current frame.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, FrameTransform};
use crate::road::{point_at_extended, project, Point, RoadGeometry};
use crate::types::{wrap_angle, Lane, StyleLabel, VehicleId, VehicleState, DT};

pub const T_HIS: usize = 10;
pub const T_FUT: usize = 40;
/// Per-frame channels of the target vehicle, see [`CHANNELS`].
pub const D_V: usize = 13;
pub const NEIGHBOR_FEATURES: usize = 5;
pub const MAX_NEIGHBORS: usize = 15;
/// Points per road polyline token.
pub const ROAD_POINTS: usize = 20;
pub const ROAD_BEHIND: f64 = 20.0;
pub const ROAD_SPACING: f64 = 5.0;
/// Same-lane bumper gap ahead within which a vehicle is a leader.
pub const LEADING_RANGE: f64 = 10.0;
/// Adjacent-lane bumper gap, ahead or behind, within which a vehicle interacts.
pub const INTERACTION_RANGE: f64 = 5.0;
/// Value of the headway channel when no leader exists.
pub const NO_LEADER_GAP: f64 = 30.0;

pub const CHANNELS: [&str; D_V] = [
    "x", "y", "theta", "vx", "vy", "ax", "ay", "accel", "steer", "thw", "offset", "label", "length",
];

pub mod ch {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const THETA: usize = 2;
    pub const VX: usize = 3;
    pub const VY: usize = 4;
    pub const THW: usize = 9;
    pub const OFFSET: usize = 10;
    pub const LABEL: usize = 11;
    pub const LENGTH: usize = 12;
}

/// All vehicles at one tick, keyed by id.
pub type Snapshot = BTreeMap<VehicleId, VehicleState>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborTrack {
    /// x, y, theta, vx, vy per history frame.
    pub history: [[f64; NEIGHBOR_FEATURES]; T_HIS],
    pub length: f64,
    pub lane: Lane,
}

impl NeighborTrack {
    pub fn current(&self) -> &[f64; NEIGHBOR_FEATURES] {
        &self.history[T_HIS - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub target_history: [[f64; D_V]; T_HIS],
    /// Nearest first, at most [`MAX_NEIGHBORS`].
    pub neighbors: Vec<NeighborTrack>,
    /// Main then merge polyline, [`ROAD_POINTS`] points each.
    pub road: [Vec<Point>; 2],
    pub label: StyleLabel,
    pub lane: Lane,
    pub lane_width: f64,
}

impl Sample {
    pub fn target_current(&self) -> &[f64; D_V] {
        &self.target_history[T_HIS - 1]
    }

    pub fn target_speed(&self) -> f64 {
        let c = self.target_current();
        c[ch::VX].hypot(c[ch::VY])
    }

    pub fn target_length(&self) -> f64 {
        self.target_current()[ch::LENGTH]
    }
}

/// Longitudinal bumper gap between two vehicles measured along `reference`'s
/// heading; negative when the bodies overlap longitudinally.
pub fn bumper_gap(reference: &VehicleState, other: &VehicleState) -> (f64, f64) {
    let local = [other.x, other.y].to_frame(&Frame::of_vehicle(reference));
    let dx = local[0];
    (dx, dx.abs() - 0.5 * (reference.length + other.length))
}

/// Closest same-lane vehicle ahead and its bumper gap.
pub fn leader_of(snapshot: &Snapshot, id: VehicleId) -> Option<(VehicleId, f64)> {
    let me = snapshot.get(&id)?;
    snapshot
        .iter()
        .filter(|(oid, o)| **oid != id && o.lane == me.lane)
        .filter_map(|(oid, o)| {
            let (dx, gap) = bumper_gap(me, o);
            (dx > 0.0).then_some((*oid, gap))
        })
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal))
}

/// Ids of the vehicles in the target's leading or interaction range.
pub fn vehicles_in_range(snapshot: &Snapshot, id: VehicleId) -> Vec<VehicleId> {
    let Some(me) = snapshot.get(&id) else {
        return Vec::new();
    };
    snapshot
        .iter()
        .filter(|(oid, _)| **oid != id)
        .filter(|(_, o)| {
            let (dx, gap) = bumper_gap(me, o);
            if o.lane == me.lane {
                dx > 0.0 && gap <= LEADING_RANGE
            } else {
                gap <= INTERACTION_RANGE
            }
        })
        .map(|(oid, _)| *oid)
        .collect()
}

fn lane_offset(road: &RoadGeometry, v: &VehicleState) -> f64 {
    project(road.centerline(v.lane), [v.x, v.y]).lateral
}

fn target_features(
    state: &VehicleState,
    prev: &VehicleState,
    snapshot: &Snapshot,
    id: VehicleId,
    road: &RoadGeometry,
    frame: &Frame,
) -> [f64; D_V] {
    let local = state.to_frame(frame);
    let yaw_rate = wrap_angle(state.theta - prev.theta) / DT;
    let steer = (yaw_rate * state.length / state.speed().max(0.5)).atan();
    let thw = leader_of(snapshot, id).map_or(NO_LEADER_GAP, |(_, g)| g.min(NO_LEADER_GAP));
    [
        local.x,
        local.y,
        wrap_angle(local.theta),
        local.vx,
        local.vy,
        local.ax,
        local.ay,
        state.accel_magnitude(),
        steer,
        thw,
        lane_offset(road, state),
        state.label.code(),
        state.length,
    ]
}

fn road_tokens(road: &RoadGeometry, target: &VehicleState, frame: &Frame) -> [Vec<Point>; 2] {
    [&road.main_centerline, &road.merge_centerline].map(|line| {
        let s0 = project(line, [target.x, target.y]).s;
        (0..ROAD_POINTS)
            .map(|j| point_at_extended(line, s0 - ROAD_BEHIND + ROAD_SPACING * j as f64).0.to_frame(frame))
            .collect()
    })
}

/// Builds the record for `target` from the trailing frames of `history`.
/// Fewer than [`T_HIS`] frames are padded by repeating the earliest one.
pub fn build_sample(history: &[Snapshot], target: VehicleId, road: &RoadGeometry) -> Result<Sample> {
    build_sample_with_ids(history, target, road).map(|(s, _)| s)
}

/// As [`build_sample`], also returning the neighbor ids in sample order.
pub fn build_sample_with_ids(
    history: &[Snapshot],
    target: VehicleId,
    road: &RoadGeometry,
) -> Result<(Sample, Vec<VehicleId>)> {
    let frames: Vec<&Snapshot> = history.iter().filter(|s| s.contains_key(&target)).collect();
    if frames.is_empty() {
        return Err(Error::UnknownVehicle(target));
    }
    let tail = &frames[frames.len().saturating_sub(T_HIS)..];
    let pad = T_HIS - tail.len();
    let window: Vec<&Snapshot> = std::iter::repeat(tail[0]).take(pad).chain(tail.iter().copied()).collect();

    let current_snapshot = window[T_HIS - 1];
    let current = current_snapshot[&target];
    let frame = Frame::of_vehicle(&current);

    let mut target_history = [[0.0; D_V]; T_HIS];
    for k in 0..T_HIS {
        let state = &window[k][&target];
        let prev = if k == 0 { state } else { &window[k - 1][&target] };
        target_history[k] = target_features(state, prev, window[k], target, road, &frame);
    }

    let mut ids = vehicles_in_range(current_snapshot, target);
    let keyed = |id: &VehicleId| {
        let l = [current_snapshot[id].x, current_snapshot[id].y].to_frame(&frame);
        (l[0].hypot(l[1]), l[0], l[1])
    };
    ids.sort_by(|a, b| keyed(a).partial_cmp(&keyed(b)).unwrap_or(Ordering::Equal));
    ids.truncate(MAX_NEIGHBORS);

    let neighbors = ids
        .iter()
        .map(|id| {
            let earliest = window.iter().find_map(|s| s.get(id)).copied().unwrap_or(current_snapshot[id]);
            let mut hist = [[0.0; NEIGHBOR_FEATURES]; T_HIS];
            for (k, snap) in window.iter().enumerate() {
                let st = snap.get(id).copied().unwrap_or(earliest).to_frame(&frame);
                hist[k] = [st.x, st.y, wrap_angle(st.theta), st.vx, st.vy];
            }
            let cur = &current_snapshot[id];
            NeighborTrack {
                history: hist,
                length: cur.length,
                lane: cur.lane,
            }
        })
        .collect();

    Ok((
        Sample {
            target_history,
            neighbors,
            road: road_tokens(road, &current, &frame),
            label: current.label,
            lane: current.lane,
            lane_width: road.lane_width,
        },
        ids,
    ))
}
