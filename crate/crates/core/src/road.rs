//! Two-lane merge road: a straight main lane and a parallel on-ramp that
//! tapers into it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Lane;

pub type Point = [f64; 2];

pub const DEFAULT_LANE_WIDTH: f64 = 3.5;
pub const DEFAULT_MAIN_LENGTH: f64 = 200.0;
pub const DEFAULT_MERGE_END_X: f64 = 150.0;
pub const DEFAULT_TAPER_LENGTH: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadGeometry {
    pub lane_width: f64,
    pub merge_end_x: f64,
    #[serde(rename = "main")]
    pub main_centerline: Vec<Point>,
    #[serde(rename = "merge")]
    pub merge_centerline: Vec<Point>,
}

impl Default for RoadGeometry {
    fn default() -> Self {
        RoadGeometry::standard_merge(DEFAULT_MERGE_END_X, DEFAULT_TAPER_LENGTH)
    }
}

impl RoadGeometry {
    /// Main lane along y=0 over [0, 200] m, ramp at y=-lane_width up to
    /// `merge_end_x`, then a linear taper of `taper` metres onto the main lane.
    pub fn standard_merge(merge_end_x: f64, taper: f64) -> Self {
        let main = (0..=20).map(|i| [i as f64 * 10.0, 0.0]).collect();
        let mut merge: Vec<Point> = Vec::new();
        let mut x = 0.0;
        while x < merge_end_x {
            merge.push([x, -DEFAULT_LANE_WIDTH]);
            x += 10.0;
        }
        merge.push([merge_end_x, -DEFAULT_LANE_WIDTH]);
        merge.push([merge_end_x + taper, 0.0]);
        RoadGeometry {
            lane_width: DEFAULT_LANE_WIDTH,
            merge_end_x,
            main_centerline: main,
            merge_centerline: merge,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, line) in [("main", &self.main_centerline), ("merge", &self.merge_centerline)] {
            if line.is_empty() {
                return Err(Error::validation(format!("{name} centerline is empty")));
            }
            if line.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("{name} centerline has non-finite points")));
            }
            if line.windows(2).any(|w| w[1][0] <= w[0][0]) {
                return Err(Error::validation(format!(
                    "{name} centerline must be strictly increasing in x"
                )));
            }
        }
        if !(self.lane_width > 0.0) {
            return Err(Error::validation("lane_width must be positive"));
        }
        let first = self.merge_centerline[0][0];
        let last = self.merge_centerline[self.merge_centerline.len() - 1][0];
        if !(self.merge_end_x >= first && self.merge_end_x <= last) {
            return Err(Error::validation(format!(
                "merge_end_x {} outside merge centerline range [{first}, {last}]",
                self.merge_end_x
            )));
        }
        Ok(())
    }

    pub fn centerline(&self, lane: Lane) -> &[Point] {
        match lane {
            Lane::Main => &self.main_centerline,
            Lane::Merge => &self.merge_centerline,
        }
    }

    /// Lane whose centerline is laterally closest to the point.
    pub fn lane_of(&self, x: f64, y: f64) -> Lane {
        let main = project(&self.main_centerline, [x, y]).lateral.abs();
        let merge = project(&self.merge_centerline, [x, y]).lateral.abs();
        if merge < main {
            Lane::Merge
        } else {
            Lane::Main
        }
    }

    /// Signed offset from the main-lane centerline, positive to the left.
    pub fn main_offset(&self, x: f64, y: f64) -> f64 {
        project(&self.main_centerline, [x, y]).lateral
    }
}

/// Closest-point query result against a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the foot point; may fall outside [0, length] because the
    /// end segments are treated as rays.
    pub s: f64,
    /// Signed perpendicular distance, positive on the left of travel.
    pub lateral: f64,
    /// Direction of the segment the foot lies on.
    pub heading: f64,
}

pub fn polyline_length(line: &[Point]) -> f64 {
    line.windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
        .sum()
}

pub fn project(line: &[Point], p: Point) -> Projection {
    if line.len() < 2 {
        let q = line.first().copied().unwrap_or([0.0, 0.0]);
        return Projection {
            s: 0.0,
            lateral: (p[0] - q[0]).hypot(p[1] - q[1]),
            heading: 0.0,
        };
    }
    let live: Vec<usize> = line
        .windows(2)
        .enumerate()
        .filter(|(_, w)| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]) > 0.0)
        .map(|(i, _)| i)
        .collect();
    let (first, last) = match (live.first(), live.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => {
            let q = line[0];
            return Projection {
                s: 0.0,
                lateral: (p[0] - q[0]).hypot(p[1] - q[1]),
                heading: 0.0,
            };
        }
    };
    let mut best: Option<(f64, Projection)> = None;
    let mut s0 = 0.0;
    for (i, w) in line.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len = dx.hypot(dy);
        if len <= 0.0 {
            continue;
        }
        let (ux, uy) = (dx / len, dy / len);
        let (rx, ry) = (p[0] - a[0], p[1] - a[1]);
        let mut t = rx * ux + ry * uy;
        let lo = if i == first { f64::NEG_INFINITY } else { 0.0 };
        let hi = if i == last { f64::INFINITY } else { len };
        t = t.clamp(lo, hi);
        let (fx, fy) = (a[0] + ux * t, a[1] + uy * t);
        let dist = (p[0] - fx).hypot(p[1] - fy);
        let cross = ux * ry - uy * rx;
        let proj = Projection {
            s: s0 + t,
            lateral: if cross < 0.0 { -dist } else { dist },
            heading: uy.atan2(ux),
        };
        if best.map_or(true, |(d, _)| dist < d) {
            best = Some((dist, proj));
        }
        s0 += len;
    }
    best.map(|(_, p)| p).unwrap_or(Projection {
        s: 0.0,
        lateral: 0.0,
        heading: 0.0,
    })
}

/// Point and segment heading at arc length `s`, with the end segments
/// extended as rays so that `project` and this function are inverses off the
/// ends too.
pub fn point_at_extended(line: &[Point], s: f64) -> (Point, f64) {
    let segs: Vec<(Point, Point, f64)> = line
        .windows(2)
        .filter_map(|w| {
            let len = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            (len > 0.0).then_some((w[0], w[1], len))
        })
        .collect();
    if segs.is_empty() {
        let p = line.first().copied().unwrap_or([0.0, 0.0]);
        return ([p[0] + s, p[1]], 0.0);
    }
    let mut acc = 0.0;
    for (i, (a, b, len)) in segs.iter().enumerate() {
        if s <= acc + len || i == segs.len() - 1 {
            let t = if i == 0 { s - acc } else { (s - acc).max(0.0) };
            let (ux, uy) = ((b[0] - a[0]) / len, (b[1] - a[1]) / len);
            return ([a[0] + ux * t, a[1] + uy * t], uy.atan2(ux));
        }
        acc += len;
    }
    unreachable!("loop returns on the last segment")
}

/// Point at arc length `s`, clamped to the polyline's ends.
pub fn point_at(line: &[Point], s: f64) -> Point {
    if line.len() < 2 {
        return line.first().copied().unwrap_or([0.0, 0.0]);
    }
    if s <= 0.0 {
        return line[0];
    }
    let mut acc = 0.0;
    for w in line.windows(2) {
        let len = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
        if acc + len >= s && len > 0.0 {
            let t = (s - acc) / len;
            return [w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])];
        }
        acc += len;
    }
    line[line.len() - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout() {
        let r = RoadGeometry::default();
        r.validate().unwrap();
        assert_eq!(r.main_centerline.first(), Some(&[0.0, 0.0]));
        assert_eq!(r.main_centerline.last(), Some(&[200.0, 0.0]));
        assert_eq!(r.merge_centerline.last(), Some(&[160.0, 0.0]));
        assert_eq!(r.merge_end_x, 150.0);
        assert_eq!(r.lane_of(30.0, -3.5), Lane::Merge);
        assert_eq!(r.lane_of(30.0, -0.5), Lane::Main);
        assert_eq!(r.lane_of(250.0, 0.0), Lane::Main);
    }

    #[test]
    fn validation_errors() {
        let mut r = RoadGeometry::default();
        r.main_centerline.swap(0, 1);
        assert!(r.validate().is_err());
        let mut r = RoadGeometry::default();
        r.merge_end_x = 500.0;
        assert!(r.validate().is_err());
        let mut r = RoadGeometry::default();
        r.lane_width = 0.0;
        assert!(r.validate().is_err());
        let mut r = RoadGeometry::default();
        r.merge_centerline.clear();
        assert!(r.validate().is_err());
    }

    #[test]
    fn projection_signs_and_extrapolation() {
        let line = vec![[0.0, 0.0], [10.0, 0.0]];
        let p = project(&line, [5.0, 1.0]);
        assert_eq!((p.s, p.lateral), (5.0, 1.0));
        let p = project(&line, [-5.0, -2.0]);
        assert_eq!((p.s, p.lateral), (-5.0, -2.0));
        let p = project(&line, [15.0, 0.5]);
        assert_eq!((p.s, p.lateral), (15.0, 0.5));
    }

    #[test]
    fn point_at_clamps() {
        let line = vec![[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]];
        assert_eq!(point_at(&line, 15.0), [10.0, 5.0]);
        assert_eq!(point_at(&line, -1.0), [0.0, 0.0]);
        assert_eq!(point_at(&line, 99.0), [10.0, 10.0]);
        assert_eq!(polyline_length(&line), 20.0);
    }

    #[test]
    fn extended_points_continue_end_segments() {
        let line = vec![[0.0, 0.0], [0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [10.0, 10.0]];
        assert_eq!(point_at_extended(&line, -4.0).0, [-4.0, 0.0]);
        assert_eq!(point_at_extended(&line, 25.0), ([10.0, 15.0], std::f64::consts::FRAC_PI_2));
        // repeated points do not break the end rays of the projection
        let p = project(&line, [-3.0, 1.0]);
        assert_eq!((p.s, p.lateral), (-3.0, 1.0));
        let p = project(&line, [9.0, 14.0]);
        assert!((p.s - 24.0).abs() < 1e-12 && (p.lateral - 1.0).abs() < 1e-12);
    }
}
