//! Style-aware rule policy: IDM longitudinally, plus a lateral offset that
//! reacts to merging vehicles alongside.

use rand::Rng;

use crate::policy::idm::{idm_accel, IdmParams};
use crate::policy::PlannedTrajectory;
use crate::road::{point_at_extended, project};
use crate::sample::{Sample, INTERACTION_RANGE, T_FUT};
use crate::types::{PlannedFrame, DT};

/// Lateral offset time constant, s.
pub const LATERAL_TAU: f64 = 1.0;
/// Planned offsets are clamped to this magnitude.
pub const MAX_LATERAL_OFFSET: f64 = 0.8;
/// Relative spread of the per-plan desired speed.
pub const DESIRED_SPEED_JITTER: f64 = 0.1;

/// Pressure from merging vehicles in the interaction range, in [0, 1].
pub fn merge_pressure(sample: &Sample) -> f64 {
    let length = sample.target_length();
    sample
        .neighbors
        .iter()
        .filter(|n| n.lane != sample.lane)
        .map(|n| {
            let gap = n.current()[0].abs() - 0.5 * (length + n.length);
            (1.0 - gap / INTERACTION_RANGE).clamp(0.0, 1.0)
        })
        .fold(0.0, f64::max)
}

struct Leader {
    x: f64,
    vx: f64,
    half_length: f64,
}

fn leaders(sample: &Sample, p: &IdmParams) -> Vec<Leader> {
    let length = sample.target_length();
    sample
        .neighbors
        .iter()
        .filter(|n| {
            let c = n.current();
            if n.lane == sample.lane {
                c[0] > 0.0
            } else {
                // a merging vehicle whose centre is ahead of our rear bumper
                p.yield_to_merging
                    && c[0] > -0.5 * length
                    && c[0].abs() - 0.5 * (length + n.length) <= INTERACTION_RANGE
            }
        })
        .map(|n| Leader {
            x: n.current()[0],
            vx: n.current()[3],
            half_length: 0.5 * n.length,
        })
        .collect()
}

/// Plans [`T_FUT`] frames in the target's local frame.
pub fn rule_policy_plan<R: Rng + ?Sized>(sample: &Sample, p: &IdmParams, rng: &mut R) -> PlannedTrajectory {
    let lane_line = match sample.lane {
        crate::types::Lane::Main => &sample.road[0],
        crate::types::Lane::Merge => &sample.road[1],
    };
    let origin = project(lane_line, [0.0, 0.0]);
    let half_length = 0.5 * sample.target_length();

    let jitter = 1.0 + DESIRED_SPEED_JITTER * rng.random_range(-1.0..=1.0);
    let params = IdmParams {
        v0: p.v0 * jitter,
        ..*p
    };
    let offset_target = (p.offset_bias - p.lateral_gain * merge_pressure(sample))
        .clamp(-MAX_LATERAL_OFFSET, MAX_LATERAL_OFFSET);
    let lead = leaders(sample, p);

    let relax = 1.0 - (-DT / LATERAL_TAU).exp();
    let mut v = sample.target_speed();
    let mut s = 0.0;
    let mut offset = origin.lateral;
    let mut frames = Vec::with_capacity(T_FUT);
    for k in 1..=T_FUT {
        let t = (k - 1) as f64 * DT;
        let (gap, v_lead) = lead
            .iter()
            .map(|l| (l.x + l.vx * t - s - half_length - l.half_length, l.vx))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap_or((f64::INFINITY, 0.0));
        let a = idm_accel(v, v_lead, gap, &params);
        let v_next = (v + a * DT).max(0.0);
        let ds = 0.5 * (v + v_next) * DT;
        let progress = (v_next / 0.5).min(1.0);
        let offset_next = offset + (offset_target - offset) * relax * progress;
        let (c, heading) = point_at_extended(lane_line, origin.s + s + ds);
        let (sn, cs) = heading.sin_cos();
        let slope = if ds > 1e-9 { ((offset_next - offset) / ds).atan() } else { 0.0 };
        frames.push(PlannedFrame {
            x: c[0] - sn * offset_next,
            y: c[1] + cs * offset_next,
            theta: heading + slope,
            speed: v_next,
        });
        v = v_next;
        s += ds;
        offset = offset_next;
    }
    PlannedTrajectory { frames }
}
