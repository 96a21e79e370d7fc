//! Oriented-rectangle overlap via the separating axis theorem.

use crate::road::Point;
use crate::types::VehicleState;

/// Vehicle footprint: a rectangle centred on the state's position and rotated
/// by its heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Point,
    pub half_length: f64,
    pub half_width: f64,
    pub theta: f64,
}

impl OrientedBox {
    pub fn new(center: Point, length: f64, width: f64, theta: f64) -> Self {
        OrientedBox {
            center,
            half_length: 0.5 * length,
            half_width: 0.5 * width,
            theta,
        }
    }

    pub fn of_vehicle(v: &VehicleState) -> Self {
        OrientedBox::new([v.x, v.y], v.length, v.width, v.theta)
    }

    /// Unit vectors along the body's length and width.
    pub fn axes(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.theta.sin_cos();
        [[c, s], [-s, c]]
    }

    pub fn corners(&self) -> [Point; 4] {
        let [u, w] = self.axes();
        let (hl, hw) = (self.half_length, self.half_width);
        let [cx, cy] = self.center;
        let at = |a: f64, b: f64| [cx + a * u[0] + b * w[0], cy + a * u[1] + b * w[1]];
        [at(hl, hw), at(-hl, hw), at(-hl, -hw), at(hl, -hw)]
    }

    /// Half the box's extent when projected onto unit direction `d`.
    pub fn projected_radius(&self, d: [f64; 2]) -> f64 {
        let [u, w] = self.axes();
        self.half_length * dot(u, d).abs() + self.half_width * dot(w, d).abs()
    }

    pub fn contains(&self, p: Point) -> bool {
        let [u, w] = self.axes();
        let r = [p[0] - self.center[0], p[1] - self.center[1]];
        dot(r, u).abs() <= self.half_length && dot(r, w).abs() <= self.half_width
    }
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Overlap along each of the four candidate axes; a negative entry means the
/// axis separates the boxes.
fn axis_overlaps(a: &OrientedBox, b: &OrientedBox) -> [f64; 4] {
    let d = [b.center[0] - a.center[0], b.center[1] - a.center[1]];
    let [a0, a1] = a.axes();
    let [b0, b1] = b.axes();
    [a0, a1, b0, b1].map(|axis| a.projected_radius(axis) + b.projected_radius(axis) - dot(d, axis).abs())
}

pub fn boxes_overlap(a: &OrientedBox, b: &OrientedBox) -> bool {
    axis_overlaps(a, b).iter().all(|&o| o >= 0.0)
}

/// True iff the two vehicle footprints overlap (touching counts).
pub fn check_collision(a: &VehicleState, b: &VehicleState) -> bool {
    boxes_overlap(&OrientedBox::of_vehicle(a), &OrientedBox::of_vehicle(b))
}

/// Euclidean distance between disjoint boxes, or minus the smallest axis
/// penetration when they overlap.
pub fn signed_separation(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let overlaps = axis_overlaps(a, b);
    if overlaps.iter().all(|&o| o >= 0.0) {
        return -overlaps.iter().cloned().fold(f64::INFINITY, f64::min);
    }
    let ca = a.corners();
    let cb = b.corners();
    let mut best = f64::INFINITY;
    for (pts, poly) in [(&ca, &cb), (&cb, &ca)] {
        for p in pts.iter() {
            for i in 0..4 {
                best = best.min(point_segment_distance(*p, poly[i], poly[(i + 1) % 4]));
            }
        }
    }
    best
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 { (dot(ap, ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    (p[0] - q[0]).hypot(p[1] - q[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Lane, StyleLabel};
    use proptest::prelude::*;

    fn rect(x: f64, y: f64, th: f64) -> VehicleState {
        let mut v = VehicleState::new(x, y, th, 0.0, StyleLabel::Friendly, Lane::Main);
        v.length = 4.0;
        v.width = 2.0;
        v
    }

    // Dense-grid point sampling of both rectangles.
    fn sampled_overlap(a: &OrientedBox, b: &OrientedBox, n: usize) -> bool {
        let hit = |p: &OrientedBox, q: &OrientedBox| {
            let [u, w] = p.axes();
            for i in 0..n {
                let s = -p.half_length + 2.0 * p.half_length * i as f64 / (n - 1) as f64;
                for j in 0..n {
                    let t = -p.half_width + 2.0 * p.half_width * j as f64 / (n - 1) as f64;
                    let pt = [p.center[0] + s * u[0] + t * w[0], p.center[1] + s * u[1] + t * w[1]];
                    if q.contains(pt) {
                        return true;
                    }
                }
            }
            false
        };
        hit(a, b) || hit(b, a)
    }

    #[test]
    fn identical_overlap() {
        assert!(check_collision(&rect(1.0, 1.0, 0.3), &rect(1.0, 1.0, 0.3)));
    }

    #[test]
    fn far_apart() {
        assert!(!check_collision(&rect(0.0, 0.0, 0.0), &rect(100.0, 0.0, 0.0)));
    }

    #[test]
    fn near_touching_along_x() {
        let a = rect(0.0, 0.0, 0.0);
        let b = rect(3.9, 0.0, 0.0);
        assert!(check_collision(&a, &b));
        assert!(sampled_overlap(&OrientedBox::of_vehicle(&a), &OrientedBox::of_vehicle(&b), 200));
        assert!(!check_collision(&a, &rect(4.1, 0.0, 0.0)));
    }

    #[test]
    fn diagonal_gap_not_caught_by_aabb() {
        // Rotated boxes whose axis-aligned bounds overlap but which are apart.
        let a = rect(0.0, 0.0, std::f64::consts::FRAC_PI_4);
        let b = rect(2.6, -2.6, std::f64::consts::FRAC_PI_4);
        assert!(!check_collision(&a, &b));
    }

    #[test]
    fn separation_signs() {
        let a = OrientedBox::new([0.0, 0.0], 4.0, 2.0, 0.0);
        let b = OrientedBox::new([5.0, 0.0], 4.0, 2.0, 0.0);
        assert!((signed_separation(&a, &b) - 1.0).abs() < 1e-12);
        let c = OrientedBox::new([3.5, 0.0], 4.0, 2.0, 0.0);
        assert!((signed_separation(&a, &c) + 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn symmetric(x in -10.0..10.0f64, y in -5.0..5.0f64, t1 in -3.2..3.2f64, t2 in -3.2..3.2f64) {
            let a = rect(0.0, 0.0, t1);
            let b = rect(x, y, t2);
            prop_assert_eq!(check_collision(&a, &b), check_collision(&b, &a));
        }

        #[test]
        fn agrees_with_sampling(x in -6.0..6.0f64, y in -4.0..4.0f64, t1 in -3.2..3.2f64, t2 in -3.2..3.2f64) {
            let a = OrientedBox::new([0.0, 0.0], 4.7, 1.9, t1);
            let b = OrientedBox::new([x, y], 4.0, 2.0, t2);
            prop_assume!(signed_separation(&a, &b).abs() >= 0.01);
            prop_assert_eq!(boxes_overlap(&a, &b), sampled_overlap(&a, &b, 60));
        }
    }
}
