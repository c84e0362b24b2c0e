//! Planar vectors and covectors.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// A point or tangent vector (index up) in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

/// A cotangent vector (index down).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Covec2 {
    pub x: f64,
    pub y: f64,
}

pub type Point = Vec2;

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Vec2 { x: c, y: s }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }
}

impl Covec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Covec2 { x, y }
    }

    /// Pairing with a vector.
    pub fn apply(self, v: Vec2) -> f64 {
        self.x * v.x + self.y * v.y
    }

    pub fn scale(self, s: f64) -> Covec2 {
        Covec2::new(self.x * s, self.y * s)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Neg for Covec2 {
    type Output = Covec2;
    fn neg(self) -> Covec2 {
        Covec2::new(-self.x, -self.y)
    }
}

impl Sub for Covec2 {
    type Output = Covec2;
    fn sub(self, o: Covec2) -> Covec2 {
        Covec2::new(self.x - o.x, self.y - o.y)
    }
}

/// Wrap an angle to `[0, 2π)`.
pub fn wrap_2pi(a: f64) -> f64 {
    let t = a.rem_euclid(std::f64::consts::TAU);
    if t >= std::f64::consts::TAU {
        0.0
    } else {
        t
    }
}

/// Wrap an angle to `(-π, π]`.
pub fn wrap_pi(a: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let t = wrap_2pi(a + pi) - pi;
    if t <= -pi {
        t + std::f64::consts::TAU
    } else {
        t
    }
}
