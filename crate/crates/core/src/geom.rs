//! Planar poses, waypoints, trajectories and polygon helpers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle<T: Scalar>(a: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut r = a % two_pi;
    if r > T::PI() {
        r -= two_pi;
    } else if r <= -T::PI() {
        r += two_pi;
    }
    r
}

/// Absolute angular difference wrapped to `[0, pi]`.
pub fn angle_dist<T: Scalar>(a: T, b: T) -> T {
    normalize_angle(a - b).abs()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose2D<T> {
    pub x: T,
    pub y: T,
    pub theta: T,
}

impl<T: Scalar> Pose2D<T> {
    pub fn new(x: T, y: T, theta: T) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn origin() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    pub fn position(&self) -> [T; 2] {
        [self.x, self.y]
    }

    pub fn distance(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Bearing from `self` towards `other`.
    pub fn bearing_to(&self, other: &Self) -> T {
        (other.y - self.y).atan2(other.x - self.x)
    }

    /// Expresses `self` in the frame of `human` (human at the origin facing +x).
    pub fn to_human_frame(&self, human: &Self) -> Self {
        to_human_frame(self, human)
    }
}

/// Robot pose relative to the human: translate by the human position, then
/// rotate by the negative human heading.
pub fn to_human_frame<T: Scalar>(robot: &Pose2D<T>, human: &Pose2D<T>) -> Pose2D<T> {
    let (s, c) = human.theta.sin_cos();
    let dx = robot.x - human.x;
    let dy = robot.y - human.y;
    Pose2D::new(c * dx + s * dy, -s * dx + c * dy, robot.theta - human.theta)
}

/// Inverse of [`to_human_frame`].
pub fn from_human_frame<T: Scalar>(rel: &Pose2D<T>, human: &Pose2D<T>) -> Pose2D<T> {
    let (s, c) = human.theta.sin_cos();
    Pose2D::new(
        human.x + c * rel.x - s * rel.y,
        human.y + s * rel.x + c * rel.y,
        rel.theta + human.theta,
    )
}

/// A search goal: planar position, floor level and heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint<T> {
    pub x: T,
    pub y: T,
    #[serde(default)]
    pub z: u32,
    pub theta: T,
}

impl<T: Scalar> Waypoint<T> {
    pub fn new(x: T, y: T, z: u32, theta: T) -> Self {
        Self {
            x,
            y,
            z,
            theta: normalize_angle(theta),
        }
    }

    pub fn from_pose(p: &Pose2D<T>, z: u32) -> Self {
        Self::new(p.x, p.y, z, p.theta)
    }

    pub fn pose(&self) -> Pose2D<T> {
        Pose2D::new(self.x, self.y, self.theta)
    }

    /// Planar distance; floors are ignored.
    pub fn planar_distance(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    World,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample<T> {
    pub t: T,
    pub pose: Pose2D<T>,
    pub v: T,
}

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("trajectory must contain at least one sample")]
    Empty,
    #[error("timestamps must be strictly increasing (sample {0})")]
    NonMonotonic(usize),
}

/// Timed pose sequence. Timestamps are strictly increasing and the list is non-empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    samples: Vec<TrajectorySample<T>>,
    pub frame: Frame,
}

impl<T: Scalar> Trajectory<T> {
    pub fn new(samples: Vec<TrajectorySample<T>>, frame: Frame) -> Result<Self, TrajectoryError> {
        if samples.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        for (i, w) in samples.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(TrajectoryError::NonMonotonic(i + 1));
            }
        }
        Ok(Self { samples, frame })
    }

    pub fn samples(&self) -> &[TrajectorySample<T>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> &TrajectorySample<T> {
        self.samples.last().expect("non-empty by construction")
    }

    pub fn path_length(&self) -> T {
        self.samples
            .windows(2)
            .map(|w| w[0].pose.distance(&w[1].pose))
            .fold(T::zero(), |a, b| a + b)
    }

    /// Sum of absolute heading changes between consecutive samples.
    pub fn heading_variation(&self) -> T {
        self.samples
            .windows(2)
            .map(|w| angle_dist(w[1].pose.theta, w[0].pose.theta))
            .fold(T::zero(), |a, b| a + b)
    }
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon<T: Scalar>(p: [T; 2], poly: &[[T; 2]]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (poly[i][0], poly[i][1]);
        let (xj, yj) = (poly[j][0], poly[j][1]);
        if (yi > p[1]) != (yj > p[1]) && p[0] < (xj - xi) * (p[1] - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn orient<T: Scalar>(a: [T; 2], b: [T; 2], c: [T; 2]) -> T {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment<T: Scalar>(a: [T; 2], b: [T; 2], p: [T; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

pub fn segments_intersect<T: Scalar>(p1: [T; 2], p2: [T; 2], q1: [T; 2], q2: [T; 2]) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    let z = T::zero();
    if ((d1 > z && d2 < z) || (d1 < z && d2 > z)) && ((d3 > z && d4 < z) || (d3 < z && d4 > z)) {
        return true;
    }
    (d1 == z && on_segment(q1, q2, p1))
        || (d2 == z && on_segment(q1, q2, p2))
        || (d3 == z && on_segment(p1, p2, q1))
        || (d4 == z && on_segment(p1, p2, q2))
}

/// True when the closed polyline has at least three vertices and no two
/// non-adjacent edges touch.
pub fn polygon_is_simple<T: Scalar>(poly: &[[T; 2]]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let a1 = poly[i];
        let a2 = poly[(i + 1) % n];
        if a1 == a2 {
            return false;
        }
        for j in (i + 1)..n {
            // adjacent edges share a vertex by construction
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let b1 = poly[j];
            let b2 = poly[(j + 1) % n];
            if segments_intersect(a1, a2, b1, b2) {
                return false;
            }
        }
    }
    true
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn frame_round_trip(rx in -50.0..50.0f64, ry in -50.0..50.0f64, rt in -7.0..7.0f64,
                            hx in -50.0..50.0f64, hy in -50.0..50.0f64, ht in -7.0..7.0f64) {
            let robot = Pose2D::new(rx, ry, rt);
            let human = Pose2D::new(hx, hy, ht);
            let back = from_human_frame(&to_human_frame(&robot, &human), &human);
            prop_assert!((back.x - robot.x).abs() < 1e-9);
            prop_assert!((back.y - robot.y).abs() < 1e-9);
            prop_assert!(angle_dist(back.theta, robot.theta) < 1e-9);
        }

        #[test]
        fn frame_is_isometry(ax in -20.0..20.0f64, ay in -20.0..20.0f64, bx in -20.0..20.0f64, by in -20.0..20.0f64,
                             hx in -20.0..20.0f64, hy in -20.0..20.0f64, ht in -4.0..4.0f64) {
            let human = Pose2D::new(hx, hy, ht);
            let a = Pose2D::new(ax, ay, 0.0);
            let b = Pose2D::new(bx, by, 1.0);
            let d0 = a.distance(&b);
            let d1 = to_human_frame(&a, &human).distance(&to_human_frame(&b, &human));
            prop_assert!((d0 - d1).abs() < 1e-9);
        }

        #[test]
        fn normalized_angle_in_range(a in -100.0..100.0f64) {
            let n = normalize_angle(a);
            prop_assert!(n > -std::f64::consts::PI && n <= std::f64::consts::PI);
            prop_assert!(((a - n) / (2.0 * std::f64::consts::PI)).fract().abs() < 1e-9
                || (1.0 - ((a - n) / (2.0 * std::f64::consts::PI)).fract().abs()) < 1e-9);
        }
    }
}
