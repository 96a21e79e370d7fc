//! Value types shared across the benchmark.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Simulation step, seconds. Every finite difference in the crate uses it.
pub const DT: f64 = 0.1;

/// Vehicles longer than this are labelled [`StyleLabel::Long`].
pub const LONG_VEHICLE_THRESHOLD: f64 = 6.0;

/// Sanity bound on vehicle speed, m/s.
pub const MAX_SPEED: f64 = 40.0;

pub const SHORT_LENGTH: f64 = 4.7;
pub const SHORT_WIDTH: f64 = 1.9;
pub const LONG_LENGTH: f64 = 11.5;
pub const LONG_WIDTH: f64 = 2.5;

pub const MAX_ACCEL: f64 = 8.0;
pub const MAX_STEER: f64 = 0.6;

pub type VehicleId = u32;

/// Behavioural style of a main-lane vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StyleLabel {
    Offensive,
    Friendly,
    Long,
}

impl StyleLabel {
    pub const ALL: [StyleLabel; 3] = [StyleLabel::Offensive, StyleLabel::Friendly, StyleLabel::Long];

    /// Scalar code used in the model's feature vector. Zero is reserved for
    /// vehicles whose style is not exposed (the ego).
    pub fn code(self) -> f64 {
        match self {
            StyleLabel::Offensive => 1.0,
            StyleLabel::Friendly => 2.0,
            StyleLabel::Long => 3.0,
        }
    }

    pub fn default_dimensions(self) -> (f64, f64) {
        match self {
            StyleLabel::Long => (LONG_LENGTH, LONG_WIDTH),
            _ => (SHORT_LENGTH, SHORT_WIDTH),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StyleLabel::Offensive => "offensive",
            StyleLabel::Friendly => "friendly",
            StyleLabel::Long => "long",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lane {
    Main,
    Merge,
}

impl Lane {
    pub fn as_str(self) -> &'static str {
        match self {
            Lane::Main => "main",
            Lane::Merge => "merge",
        }
    }
}

/// Pose and motion of one vehicle at one tick. Field order matches the
/// scenario file's vehicle object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub vx: f64,
    pub vy: f64,
    pub ax: f64,
    pub ay: f64,
    pub length: f64,
    pub width: f64,
    pub label: StyleLabel,
    pub lane: Lane,
}

impl VehicleState {
    /// A vehicle moving along its heading at `speed` with zero acceleration and
    /// the default dimensions of its style.
    pub fn new(x: f64, y: f64, theta: f64, speed: f64, label: StyleLabel, lane: Lane) -> Self {
        let (length, width) = label.default_dimensions();
        VehicleState {
            x,
            y,
            theta,
            vx: speed * theta.cos(),
            vy: speed * theta.sin(),
            ax: 0.0,
            ay: 0.0,
            length,
            width,
            label,
            lane,
        }
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn accel_magnitude(&self) -> f64 {
        self.ax.hypot(self.ay)
    }

    pub fn is_finite(&self) -> bool {
        [
            self.x, self.y, self.theta, self.vx, self.vy, self.ax, self.ay, self.length, self.width,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::validation("vehicle state has non-finite fields"));
        }
        if self.length <= 0.0 || self.width <= 0.0 {
            return Err(Error::validation(format!(
                "vehicle dimensions must be positive, got {}x{}",
                self.length, self.width
            )));
        }
        let long = self.length > LONG_VEHICLE_THRESHOLD;
        if long != (self.label == StyleLabel::Long) {
            return Err(Error::validation(format!(
                "label {} inconsistent with length {} m",
                self.label.as_str(),
                self.length
            )));
        }
        if self.speed() > MAX_SPEED {
            return Err(Error::validation(format!("speed {} m/s above {MAX_SPEED}", self.speed())));
        }
        Ok(())
    }
}

/// Ego actuation: longitudinal acceleration and front-wheel angle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    pub accel: f64,
    pub steer: f64,
}

impl Control {
    pub fn new(accel: f64, steer: f64) -> Self {
        Control { accel, steer }
    }

    pub fn clipped(self) -> Self {
        Control {
            accel: self.accel.clamp(-MAX_ACCEL, MAX_ACCEL),
            steer: self.steer.clamp(-MAX_STEER, MAX_STEER),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.accel.is_finite() && self.steer.is_finite()
    }
}

/// One future frame of a planned trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlannedFrame {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub speed: f64,
}

impl PlannedFrame {
    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.theta, self.speed]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        PlannedFrame {
            x: a[0],
            y: a[1],
            theta: a[2],
            speed: a[3],
        }
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.sin().atan2(a.cos());
    if w <= -std::f64::consts::PI {
        w + 2.0 * std::f64::consts::PI
    } else {
        w
    }
}
