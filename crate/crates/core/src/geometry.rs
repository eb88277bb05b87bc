//! Planar poses, oriented boxes and separating-axis collision tests.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(2.0 * PI);
    if wrapped > PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// World-frame pose of an agent. Serialized as `[x, y, yaw]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2D {
    /// Builds a pose, normalizing `yaw` into `(-π, π]`.
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn origin() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn distance(&self, other: &Pose2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Expresses a world-frame point in this pose's frame.
    pub fn to_local(&self, point: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.yaw.sin_cos();
        let dx = point[0] - self.x;
        let dy = point[1] - self.y;
        [c * dx + s * dy, -s * dx + c * dy]
    }
}

impl From<[f64; 3]> for Pose2D {
    fn from(v: [f64; 3]) -> Self {
        // Raw construction: loaded files must round-trip bit-exactly, and
        // yaw range is checked by scenario validation instead.
        Self {
            x: v[0],
            y: v[1],
            yaw: v[2],
        }
    }
}

impl From<Pose2D> for [f64; 3] {
    fn from(p: Pose2D) -> Self {
        [p.x, p.y, p.yaw]
    }
}

/// Agent-frame motion increment: `dx` longitudinal, `dy` lateral, `dyaw` heading change.
/// Serialized as `[dx, dy, dyaw]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct MotionDelta {
    pub dx: f64,
    pub dy: f64,
    pub dyaw: f64,
}

impl MotionDelta {
    pub const ZERO: MotionDelta = MotionDelta {
        dx: 0.0,
        dy: 0.0,
        dyaw: 0.0,
    };

    pub fn new(dx: f64, dy: f64, dyaw: f64) -> Self {
        Self { dx, dy, dyaw }
    }

    /// Delta that carries `from` onto `to`, expressed in the frame of `from`.
    pub fn between(from: &Pose2D, to: &Pose2D) -> Self {
        let [dx, dy] = from.to_local([to.x, to.y]);
        Self {
            dx,
            dy,
            dyaw: normalize_angle(to.yaw - from.yaw),
        }
    }

    pub fn translation_norm(&self) -> f64 {
        self.dx.hypot(self.dy)
    }

    /// Squared distance in `(dx, dy, w·dyaw)` space.
    pub fn weighted_sq_dist(&self, other: &MotionDelta, yaw_weight: f64) -> f64 {
        let ex = self.dx - other.dx;
        let ey = self.dy - other.dy;
        let ew = yaw_weight * (self.dyaw - other.dyaw);
        ex * ex + ey * ey + ew * ew
    }
}

impl std::ops::Neg for MotionDelta {
    type Output = MotionDelta;
    fn neg(self) -> MotionDelta {
        MotionDelta::new(-self.dx, -self.dy, -self.dyaw)
    }
}

impl From<[f64; 3]> for MotionDelta {
    fn from(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<MotionDelta> for [f64; 3] {
    fn from(d: MotionDelta) -> Self {
        [d.dx, d.dy, d.dyaw]
    }
}

/// Applies an agent-frame delta to a pose.
pub fn apply_delta(pose: &Pose2D, delta: &MotionDelta) -> Pose2D {
    let (s, c) = pose.yaw.sin_cos();
    Pose2D::new(
        pose.x + c * delta.dx - s * delta.dy,
        pose.y + s * delta.dx + c * delta.dy,
        pose.yaw + delta.dyaw,
    )
}

/// Rectangle footprint centred on a pose, `length` along the heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    center: Pose2D,
    length: f64,
    width: f64,
}

impl OrientedBox {
    pub fn new(center: Pose2D, length: f64, width: f64) -> Result<Self> {
        if !(length > 0.0 && width > 0.0 && length.is_finite() && width.is_finite()) {
            return Err(Error::InvalidBox { length, width });
        }
        Ok(Self {
            center,
            length,
            width,
        })
    }

    pub fn center(&self) -> &Pose2D {
        &self.center
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// Unit heading and unit left-normal of the box.
    pub fn axes(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.center.yaw.sin_cos();
        [[c, s], [-s, c]]
    }

    /// Corners in counter-clockwise order starting at front-right.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let hl = 0.5 * self.length;
        let hw = 0.5 * self.width;
        let (s, c) = self.center.yaw.sin_cos();
        [(hl, -hw), (hl, hw), (-hl, hw), (-hl, -hw)].map(|(lx, ly)| {
            [
                self.center.x + c * lx - s * ly,
                self.center.y + s * lx + c * ly,
            ]
        })
    }

    /// Closed containment test in the box frame.
    pub fn contains(&self, point: [f64; 2]) -> bool {
        let [lx, ly] = self.center.to_local(point);
        lx.abs() <= 0.5 * self.length && ly.abs() <= 0.5 * self.width
    }
}

pub fn box_corners(b: &OrientedBox) -> [[f64; 2]; 4] {
    b.corners()
}

fn project(corners: &[[f64; 2]; 4], axis: [f64; 2]) -> (f64, f64) {
    corners.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let d = p[0] * axis[0] + p[1] * axis[1];
        (lo.min(d), hi.max(d))
    })
}

/// Largest projected gap over the four candidate axes.
///
/// Positive means a separating axis exists; zero means touching; negative
/// values are the smallest interval overlap (a penetration measure).
pub fn axis_separation(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let ca = a.corners();
    let cb = b.corners();
    let [a0, a1] = a.axes();
    let [b0, b1] = b.axes();
    [a0, a1, b0, b1]
        .iter()
        .map(|&axis| {
            let (amin, amax) = project(&ca, axis);
            let (bmin, bmax) = project(&cb, axis);
            (bmin - amax).max(amin - bmax)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Separating-axis overlap test. Touching boundaries count as overlap.
pub fn sat_overlap(a: &OrientedBox, b: &OrientedBox) -> bool {
    let ca = a.corners();
    let cb = b.corners();
    let [a0, a1] = a.axes();
    let [b0, b1] = b.axes();
    for axis in [a0, a1, b0, b1] {
        let (amin, amax) = project(&ca, axis);
        let (bmin, bmax) = project(&cb, axis);
        if amax < bmin || bmax < amin {
            return false;
        }
    }
    true
}
