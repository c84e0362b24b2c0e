//! Node-sampled functions on a rectangular grid and fan-beam sinograms.

use std::f64::consts::{FRAC_PI_2, TAU};

use crate::error::{Error, Result};
use crate::geodesic::{Disk, Orientation};
use crate::vec2::{wrap_2pi, Point};

/// Values at the nodes `origin + (i·dx, j·dy)`, stored with index `i·ny + j`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub nx: usize,
    pub ny: usize,
    pub origin: Point,
    pub dx: f64,
    pub dy: f64,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(nx: usize, ny: usize, origin: Point, dx: f64, dy: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidArgument(format!("grid needs at least 2x2 nodes, got {nx}x{ny}")));
        }
        if !(dx > 0.0 && dy > 0.0) {
            return Err(Error::InvalidArgument("grid spacing must be positive".into()));
        }
        Ok(GridFunction { nx, ny, origin, dx, dy, values: vec![0.0; nx * ny] })
    }

    /// `n × n` nodes covering the bounding square of `disk`.
    pub fn covering(disk: &Disk, n: usize) -> Result<Self> {
        let s = 2.0 * disk.radius / (n.max(2) - 1) as f64;
        let o = disk.center - crate::vec2::Vec2::new(disk.radius, disk.radius);
        Self::zeros(n, n, o, s, s)
    }

    pub fn same_shape(&self) -> Self {
        GridFunction { values: vec![0.0; self.values.len()], ..self.clone() }
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        GridFunction { values, ..self.clone() }
    }

    pub fn from_fn<F: Fn(Point) -> f64>(mut self, f: F) -> Self {
        for i in 0..self.nx {
            for j in 0..self.ny {
                self.values[i * self.ny + j] = f(self.node(i, j));
            }
        }
        self
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Point {
        Point::new(self.origin.x + i as f64 * self.dx, self.origin.y + j as f64 * self.dy)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ny + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.ny + j] = v;
    }

    pub fn nodes(&self) -> impl Iterator<Item = (usize, Point)> + '_ {
        (0..self.nx * self.ny).map(move |k| (k, self.node(k / self.ny, k % self.ny)))
    }

    /// Bilinear interpolation; zero outside the grid.
    #[inline]
    pub fn eval(&self, p: Point) -> f64 {
        let u = (p.x - self.origin.x) / self.dx;
        let v = (p.y - self.origin.y) / self.dy;
        if !(u >= 0.0 && v >= 0.0) {
            return 0.0;
        }
        let (mut i, mut j) = (u as usize, v as usize);
        let (mut fu, mut fv) = (u - i as f64, v - j as f64);
        if i >= self.nx - 1 {
            if i == self.nx - 1 && fu == 0.0 {
                i -= 1;
                fu = 1.0;
            } else {
                return 0.0;
            }
        }
        if j >= self.ny - 1 {
            if j == self.ny - 1 && fv == 0.0 {
                j -= 1;
                fv = 1.0;
            } else {
                return 0.0;
            }
        }
        let k = i * self.ny + j;
        let v00 = self.values[k];
        let v01 = self.values[k + 1];
        let v10 = self.values[k + self.ny];
        let v11 = self.values[k + self.ny + 1];
        (1.0 - fu) * ((1.0 - fv) * v00 + fv * v01) + fu * ((1.0 - fv) * v10 + fv * v11)
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Riemann sum `Σ f · dx dy` (Euclidean area).
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_area()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.cell_area()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn axpy(&mut self, s: f64, other: &GridFunction) {
        self.check_shape(other);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn add(&self, other: &GridFunction) -> GridFunction {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    /// Zero every node outside `disk`.
    pub fn restrict_to(&mut self, disk: &Disk) {
        for k in 0..self.values.len() {
            let p = self.node(k / self.ny, k % self.ny);
            if !disk.contains(p) {
                self.values[k] = 0.0;
            }
        }
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.origin == other.origin && self.dx == other.dx && self.dy == other.dy
    }

    fn check_shape(&self, other: &GridFunction) {
        assert!(self.same_grid(other), "grid functions live on different grids");
    }
}

/// Fan-beam sampling: `n_beta` periodic angles on `[0, 2π)` and `n_alpha`
/// endpoint-inclusive angles on `[−(π/2 − δ), π/2 − δ]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinogramDims {
    pub n_beta: usize,
    pub n_alpha: usize,
    pub delta: f64,
}

impl Default for SinogramDims {
    fn default() -> Self {
        SinogramDims { n_beta: 360, n_alpha: 180, delta: 0.01 }
    }
}

impl SinogramDims {
    pub fn new(n_beta: usize, n_alpha: usize) -> Self {
        SinogramDims { n_beta, n_alpha, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_beta < 4 || self.n_alpha < 3 {
            return Err(Error::InvalidArgument(format!("sinogram {}x{} is too small", self.n_beta, self.n_alpha)));
        }
        if !(self.delta > 0.0 && self.delta < FRAC_PI_2) {
            return Err(Error::InvalidArgument(format!("alpha guard {} out of range", self.delta)));
        }
        Ok(())
    }

    pub fn d_beta(&self) -> f64 {
        TAU / self.n_beta as f64
    }

    pub fn alpha_max(&self) -> f64 {
        FRAC_PI_2 - self.delta
    }

    pub fn d_alpha(&self) -> f64 {
        2.0 * self.alpha_max() / (self.n_alpha - 1) as f64
    }

    pub fn beta(&self, i: usize) -> f64 {
        i as f64 * self.d_beta()
    }

    pub fn alpha(&self, j: usize) -> f64 {
        -self.alpha_max() + j as f64 * self.d_alpha()
    }

    pub fn len(&self) -> usize {
        self.n_beta * self.n_alpha
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Samples of a function on the space of directed geodesics of one disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    pub dims: SinogramDims,
    pub orientation: Orientation,
    /// Index `i·n_alpha + j` for `(β_i, α_j)`.
    pub values: Vec<f64>,
    /// Cells without data (`false`) hold zero.
    pub mask: Option<Vec<bool>>,
}

impl Sinogram {
    pub fn zeros(dims: SinogramDims, orientation: Orientation) -> Self {
        Sinogram { dims, orientation, values: vec![0.0; dims.len()], mask: None }
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        let mut out = Sinogram { values, ..self.clone() };
        out.apply_mask();
        out
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dims.n_alpha + j]
    }

    pub fn is_observed(&self, k: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[k])
    }

    pub fn coverage(&self) -> f64 {
        match &self.mask {
            None => 1.0,
            Some(m) => m.iter().filter(|&&b| b).count() as f64 / m.len() as f64,
        }
    }

    pub fn apply_mask(&mut self) {
        if let Some(m) = &self.mask {
            for (v, &keep) in self.values.iter_mut().zip(m) {
                if !keep {
                    *v = 0.0;
                }
            }
        }
    }

    /// Bilinear interpolation, periodic in `β`; zero outside the `α` range.
    pub fn eval(&self, beta: f64, alpha: f64) -> f64 {
        let d = &self.dims;
        let v = (alpha + d.alpha_max()) / d.d_alpha();
        if !(v >= 0.0 && v <= (d.n_alpha - 1) as f64) {
            return 0.0;
        }
        let u = wrap_2pi(beta) / d.d_beta();
        let i0 = (u.floor() as usize) % d.n_beta;
        let fu = u - u.floor();
        let i1 = (i0 + 1) % d.n_beta;
        let mut j0 = v.floor() as usize;
        if j0 >= d.n_alpha - 1 {
            j0 = d.n_alpha - 2;
        }
        let fv = v - j0 as f64;
        let g = |i: usize, j: usize| self.values[i * d.n_alpha + j];
        (1.0 - fu) * ((1.0 - fv) * g(i0, j0) + fv * g(i0, j0 + 1)) + fu * ((1.0 - fv) * g(i1, j0) + fv * g(i1, j0 + 1))
    }

    /// Catmull–Rom bicubic interpolation, periodic in `β`, clamped at the
    /// ends of the `α` range; zero outside it.
    pub fn eval_cubic(&self, beta: f64, alpha: f64) -> f64 {
        let d = &self.dims;
        let v = (alpha + d.alpha_max()) / d.d_alpha();
        if !(v >= 0.0 && v <= (d.n_alpha - 1) as f64) {
            return 0.0;
        }
        let u = wrap_2pi(beta) / d.d_beta();
        let (iu, fu) = (u.floor() as i64, u - u.floor());
        let jv = (v.floor() as i64).min(d.n_alpha as i64 - 2);
        let fv = v - jv as f64;
        let wu = catmull_rom(fu);
        let wv = catmull_rom(fv);
        let nb = d.n_beta as i64;
        let na = d.n_alpha as i64 - 1;
        let mut s = 0.0;
        for (a, wa) in wu.iter().enumerate() {
            let i = (iu + a as i64 - 1).rem_euclid(nb) as usize;
            for (b, wb) in wv.iter().enumerate() {
                let j = (jv + b as i64 - 1).clamp(0, na) as usize;
                s += wa * wb * self.values[i * d.n_alpha + j];
            }
        }
        s
    }

    /// `Σ g · cos α · Δα Δβ`, the discrete `∫ g dγ` up to the boundary factor.
    pub fn cos_weighted_sum(&self) -> f64 {
        let d = &self.dims;
        let mut s = 0.0;
        for i in 0..d.n_beta {
            for j in 0..d.n_alpha {
                let w = if j == 0 || j == d.n_alpha - 1 { 0.5 } else { 1.0 };
                s += w * self.get(i, j) * d.alpha(j).cos();
            }
        }
        s * d.d_alpha() * d.d_beta()
    }

    pub fn l2_norm(&self) -> f64 {
        let d = &self.dims;
        (self.values.iter().map(|v| v * v).sum::<f64>() * d.d_alpha() * d.d_beta()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, other: &Sinogram) -> Sinogram {
        assert_eq!(self.dims, other.dims);
        self.with_values(self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect())
    }

    pub fn scaled(&self, s: f64) -> Sinogram {
        self.with_values(self.values.iter().map(|v| v * s).collect())
    }
}

/// Catmull–Rom weights for the nodes at `-1, 0, 1, 2` and offset `t ∈ [0, 1]`.
fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}
