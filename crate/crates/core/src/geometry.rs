//! Minimal workspace geometry: centers, half-extents and table-plane rectangles.

use serde::{Deserialize, Serialize};

/// A point or vector in workspace meters.
///
/// Axes: `x` grows left to right, `y` grows away from the robot (near/front to
/// far/behind), `z` grows upward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn axis(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn add(&self, other: Vec3) -> Vec3 {
        Vec3::new(self.x + other.x, self.y + other.y, self.z + other.z)
    }

    pub fn scale(&self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];
}

/// Axis-aligned rectangle on the table plane (x, y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self {
            x: [x0.min(x1), x0.max(x1)],
            y: [y0.min(y1), y0.max(y1)],
        }
    }

    /// Footprint of a box centered at `center` with the given half-extents.
    pub fn footprint(center: Vec3, half: Vec3) -> Self {
        Self::new(center.x - half.x, center.x + half.x, center.y - half.y, center.y + half.y)
    }

    /// Open-interval overlap: touching edges do not count.
    pub fn overlaps(&self, other: &Rect) -> bool {
        self.x[0] < other.x[1] && other.x[0] < self.x[1] && self.y[0] < other.y[1] && other.y[0] < self.y[1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn touching_rects_do_not_overlap() {
        let a = Rect::new(0.0, 1.0, 0.0, 1.0);
        let b = Rect::new(1.0, 2.0, 0.0, 1.0);
        assert!(!a.overlaps(&b));
        let c = Rect::new(0.5, 2.0, 0.5, 0.6);
        assert!(a.overlaps(&c));
        assert!(c.overlaps(&a));
    }

    #[test]
    fn new_normalizes_bounds() {
        let r = Rect::new(1.0, 0.0, 3.0, 2.0);
        assert_eq!(r.x, [0.0, 1.0]);
        assert_eq!(r.y, [2.0, 3.0]);
    }
}
