//! Rigid 2-D reference frames used to express a scene relative to one vehicle.

use serde::{Deserialize, Serialize};

use crate::road::Point;
use crate::types::{PlannedFrame, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Frame {
    pub origin_x: f64,
    pub origin_y: f64,
    pub origin_theta: f64,
}

impl Frame {
    pub fn new(origin_x: f64, origin_y: f64, origin_theta: f64) -> Self {
        Frame {
            origin_x,
            origin_y,
            origin_theta,
        }
    }

    /// Frame centred on a vehicle and aligned with its heading.
    pub fn of_vehicle(v: &VehicleState) -> Self {
        Frame::new(v.x, v.y, v.theta)
    }

    fn rotate(&self, x: f64, y: f64, angle: f64) -> (f64, f64) {
        let (s, c) = angle.sin_cos();
        (c * x - s * y, s * x + c * y)
    }

    pub fn point_to(&self, p: Point) -> Point {
        let (x, y) = self.rotate(p[0] - self.origin_x, p[1] - self.origin_y, -self.origin_theta);
        [x, y]
    }

    pub fn point_from(&self, p: Point) -> Point {
        let (x, y) = self.rotate(p[0], p[1], self.origin_theta);
        [x + self.origin_x, y + self.origin_y]
    }

    pub fn vector_to(&self, v: [f64; 2]) -> [f64; 2] {
        let (x, y) = self.rotate(v[0], v[1], -self.origin_theta);
        [x, y]
    }

    pub fn vector_from(&self, v: [f64; 2]) -> [f64; 2] {
        let (x, y) = self.rotate(v[0], v[1], self.origin_theta);
        [x, y]
    }
}

/// Anything that can be re-expressed in another frame. Positions are
/// translated and rotated, velocities and accelerations only rotated, and
/// headings shifted.
pub trait FrameTransform: Sized {
    fn to_frame(&self, f: &Frame) -> Self;
    fn from_frame(&self, f: &Frame) -> Self;
}

impl FrameTransform for Point {
    fn to_frame(&self, f: &Frame) -> Self {
        f.point_to(*self)
    }
    fn from_frame(&self, f: &Frame) -> Self {
        f.point_from(*self)
    }
}

impl FrameTransform for VehicleState {
    fn to_frame(&self, f: &Frame) -> Self {
        let [x, y] = f.point_to([self.x, self.y]);
        let [vx, vy] = f.vector_to([self.vx, self.vy]);
        let [ax, ay] = f.vector_to([self.ax, self.ay]);
        VehicleState {
            x,
            y,
            theta: self.theta - f.origin_theta,
            vx,
            vy,
            ax,
            ay,
            ..*self
        }
    }

    fn from_frame(&self, f: &Frame) -> Self {
        let [x, y] = f.point_from([self.x, self.y]);
        let [vx, vy] = f.vector_from([self.vx, self.vy]);
        let [ax, ay] = f.vector_from([self.ax, self.ay]);
        VehicleState {
            x,
            y,
            theta: self.theta + f.origin_theta,
            vx,
            vy,
            ax,
            ay,
            ..*self
        }
    }
}

impl FrameTransform for PlannedFrame {
    fn to_frame(&self, f: &Frame) -> Self {
        let [x, y] = f.point_to([self.x, self.y]);
        PlannedFrame {
            x,
            y,
            theta: self.theta - f.origin_theta,
            speed: self.speed,
        }
    }

    fn from_frame(&self, f: &Frame) -> Self {
        let [x, y] = f.point_from([self.x, self.y]);
        PlannedFrame {
            x,
            y,
            theta: self.theta + f.origin_theta,
            speed: self.speed,
        }
    }
}

impl<T: FrameTransform> FrameTransform for Vec<T> {
    fn to_frame(&self, f: &Frame) -> Self {
        self.iter().map(|t| t.to_frame(f)).collect()
    }
    fn from_frame(&self, f: &Frame) -> Self {
        self.iter().map(|t| t.from_frame(f)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Lane, StyleLabel};
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_frame_is_noop() {
        let v = VehicleState::new(3.0, -1.0, 4.0, 2.0, StyleLabel::Friendly, Lane::Main);
        assert_eq!(v.to_frame(&Frame::default()), v);
        assert_eq!([1.5, 2.5].to_frame(&Frame::default()), [1.5, 2.5]);
    }

    #[test]
    fn translation_only() {
        assert_eq!([1.0, 0.0].to_frame(&Frame::new(1.0, 0.0, 0.0)), [0.0, 0.0]);
    }

    #[test]
    fn rotated_frame() {
        let p = [2.0, 1.0].to_frame(&Frame::new(1.0, 1.0, FRAC_PI_2));
        assert!((p[0] - 0.0).abs() < 1e-12 && (p[1] + 1.0).abs() < 1e-12, "{p:?}");
    }

    #[test]
    fn velocities_rotate_without_translation() {
        let mut v = VehicleState::new(5.0, 5.0, 0.0, 2.0, StyleLabel::Friendly, Lane::Main);
        v.ax = 1.0;
        let f = Frame::new(100.0, -40.0, FRAC_PI_2);
        let l = v.to_frame(&f);
        assert!((l.vx - 0.0).abs() < 1e-12 && (l.vy + 2.0).abs() < 1e-12);
        assert!((l.ay + 1.0).abs() < 1e-12);
        assert!((l.theta + FRAC_PI_2).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn round_trip_within_tolerance(
            x in -500.0..500.0f64, y in -500.0..500.0f64, th in -7.0..7.0f64,
            ox in -500.0..500.0f64, oy in -500.0..500.0f64, oth in -7.0..7.0f64,
            sp in 0.0..30.0f64,
        ) {
            let f = Frame::new(ox, oy, oth);
            let v = VehicleState::new(x, y, th, sp, StyleLabel::Offensive, Lane::Main);
            let back = v.to_frame(&f).from_frame(&f);
            prop_assert!((back.x - v.x).abs() < 1e-9);
            prop_assert!((back.y - v.y).abs() < 1e-9);
            prop_assert!((back.theta - v.theta).abs() < 1e-9);
            prop_assert!((back.vx - v.vx).abs() < 1e-9);
            prop_assert!((back.vy - v.vy).abs() < 1e-9);
        }
    }
}
