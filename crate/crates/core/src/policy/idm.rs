//! Intelligent Driver Model with per-style calibration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{StyleLabel, MAX_ACCEL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    /// Desired speed, m/s.
    pub v0: f64,
    /// Time headway, s.
    pub time_headway: f64,
    /// Jam gap, m.
    pub s0: f64,
    pub a_max: f64,
    /// Comfortable deceleration, m/s^2.
    pub b: f64,
    pub delta: f64,
    /// How strongly a merging vehicle alongside pulls the lateral target.
    pub lateral_gain: f64,
    /// Signed resting offset from the lane centre, m (negative = merge side).
    pub offset_bias: f64,
    /// Treat a merging vehicle alongside as a virtual leader.
    pub yield_to_merging: bool,
}

impl IdmParams {
    pub fn for_style(label: StyleLabel) -> Self {
        match label {
            StyleLabel::Offensive => IdmParams {
                v0: 3.0,
                time_headway: 0.6,
                s0: 0.8,
                a_max: 2.0,
                b: 2.5,
                delta: 4.0,
                lateral_gain: 0.25,
                offset_bias: -0.2,
                yield_to_merging: false,
            },
            StyleLabel::Friendly => IdmParams {
                v0: 3.0,
                time_headway: 1.2,
                s0: 1.5,
                a_max: 1.2,
                b: 2.0,
                delta: 4.0,
                lateral_gain: 0.10,
                offset_bias: -0.1,
                yield_to_merging: true,
            },
            StyleLabel::Long => IdmParams {
                v0: 2.2,
                time_headway: 1.5,
                s0: 2.0,
                a_max: 0.8,
                b: 1.5,
                delta: 4.0,
                lateral_gain: 0.03,
                offset_bias: 0.0,
                yield_to_merging: false,
            },
        }
    }

    /// Plain car following: the friendly longitudinal law with no lateral
    /// behaviour and no yielding.
    pub fn baseline() -> Self {
        IdmParams {
            lateral_gain: 0.0,
            offset_bias: 0.0,
            yield_to_merging: false,
            ..IdmParams::for_style(StyleLabel::Friendly)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.v0, self.time_headway, self.s0, self.a_max, self.b, self.delta];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || !(self.lateral_gain >= 0.0) {
            return Err(Error::validation("IDM parameters must be positive"));
        }
        if !self.offset_bias.is_finite() {
            return Err(Error::validation("offset_bias must be finite"));
        }
        Ok(())
    }
}

/// IDM acceleration. `gap` is the bumper gap to the leader; pass
/// `f64::INFINITY` when there is none. The result is clipped to
/// `[-8, a_max]`, and a non-positive gap yields the emergency value.
pub fn idm_accel(v: f64, v_lead: f64, gap: f64, p: &IdmParams) -> f64 {
    if gap <= 0.0 {
        return -MAX_ACCEL;
    }
    let free = 1.0 - (v / p.v0).powf(p.delta);
    let interaction = if gap.is_infinite() {
        0.0
    } else {
        let dv = v - v_lead;
        let s_star = (p.s0 + v * p.time_headway + v * dv / (2.0 * (p.a_max * p.b).sqrt())).max(0.0);
        (s_star / gap).powi(2)
    };
    (p.a_max * (free - interaction)).clamp(-MAX_ACCEL, p.a_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(s0: f64, t: f64, a_max: f64, v0: f64) -> IdmParams {
        IdmParams {
            v0,
            time_headway: t,
            s0,
            a_max,
            b: 2.0,
            delta: 4.0,
            lateral_gain: 0.0,
            offset_bias: 0.0,
            yield_to_merging: false,
        }
    }

    #[test]
    fn free_flow_at_desired_speed() {
        let p = params(1.0, 1.0, 1.5, 5.0);
        assert_eq!(idm_accel(5.0, 0.0, f64::INFINITY, &p), 0.0);
    }

    #[test]
    fn launch_from_rest() {
        let p = params(1.0, 1.0, 1.5, 5.0);
        assert_eq!(idm_accel(0.0, 0.0, f64::INFINITY, &p), 1.5);
    }

    #[test]
    fn equilibrium_gap() {
        let p = params(1.0, 1.0, 1.5, 5.0);
        // s* / sqrt(1 - (v/v0)^4) with s* = 3.5
        let s_eq = 3.5 / (1.0f64 - 0.5f64.powi(4)).sqrt();
        assert!((s_eq - 3.614_784).abs() < 1e-6);
        assert!(idm_accel(2.5, 2.5, s_eq, &p).abs() < 1e-12);
        assert!(idm_accel(2.5, 2.5, 3.615, &p).abs() < 1e-3);
    }

    #[test]
    fn emergency_and_clip() {
        let p = params(1.0, 1.0, 1.5, 5.0);
        assert_eq!(idm_accel(3.0, 3.0, 0.0, &p), -8.0);
        assert_eq!(idm_accel(3.0, 0.0, 0.05, &p), -8.0);
    }

    #[test]
    fn style_defaults_valid() {
        for l in StyleLabel::ALL {
            IdmParams::for_style(l).validate().unwrap();
        }
        IdmParams::baseline().validate().unwrap();
    }
}
