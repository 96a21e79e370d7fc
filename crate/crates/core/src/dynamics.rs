//! Vehicle state propagation.

use crate::error::{Error, Result};
use crate::types::{Control, PlannedFrame, VehicleState, DT};

/// Largest position change accepted from a planned frame in one tick.
pub const TELEPORT_LIMIT: f64 = 5.0;

/// Kinematic bicycle, explicit Euler. Position integrates the speed held at
/// the start of the step; speed is floored at zero.
pub fn step_bicycle(state: &VehicleState, u: Control, dt: f64) -> Result<VehicleState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::validation(format!("dt must be positive and finite, got {dt}")));
    }
    if !state.is_finite() || !u.is_finite() {
        return Err(Error::validation("non-finite state or control"));
    }
    let u = u.clipped();
    let v = state.speed();
    let (s, c) = state.theta.sin_cos();
    let theta = state.theta + v * u.steer.tan() / state.length * dt;
    let v_next = (v + u.accel * dt).max(0.0);
    let (sn, cn) = theta.sin_cos();
    let (vx, vy) = (v_next * cn, v_next * sn);
    Ok(VehicleState {
        x: state.x + v * c * dt,
        y: state.y + v * s * dt,
        theta,
        vx,
        vy,
        ax: (vx - state.vx) / dt,
        ay: (vy - state.vy) / dt,
        ..*state
    })
}

/// Moves a vehicle onto the first frame of its plan. Accelerations are the
/// finite difference of the velocity vector over [`DT`].
pub fn apply_trajectory_step(state: &VehicleState, next: &PlannedFrame) -> Result<VehicleState> {
    let jump = (next.x - state.x).hypot(next.y - state.y);
    if !jump.is_finite() || !next.theta.is_finite() || !next.speed.is_finite() {
        return Err(Error::validation("planned frame is not finite"));
    }
    if jump > TELEPORT_LIMIT {
        return Err(Error::Teleport {
            jump,
            limit: TELEPORT_LIMIT,
        });
    }
    let speed = next.speed.max(0.0);
    let (s, c) = next.theta.sin_cos();
    let (vx, vy) = (speed * c, speed * s);
    Ok(VehicleState {
        x: next.x,
        y: next.y,
        theta: next.theta,
        vx,
        vy,
        ax: (vx - state.vx) / DT,
        ay: (vy - state.vy) / DT,
        ..*state
    })
}
