//! Conformal Riemannian metrics `g_ij = c(x) δ_ij` on the plane.
//!
//! Everything the geodesic and Jacobi integrators need is evaluated in closed
//! form from the conformal factor `c` and its first two derivatives. With
//! `φ = ½ log c` the Christoffel symbols are first derivatives of `φ` and the
//! Gauss curvature is `K = -Δφ / c`.

use std::fmt;
use std::sync::Arc;

use crate::vec2::{Covec2, Point, Vec2};

/// Symmetric 2×2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }
}

/// A user supplied conformal factor with closed-form derivatives.
pub trait ConformalFactor: Send + Sync {
    fn value(&self, p: Point) -> f64;
    fn gradient(&self, p: Point) -> Vec2;
    fn hessian(&self, p: Point) -> Sym2;

    /// `∇φ` with `φ = ½ log c`.
    fn grad_phi(&self, p: Point) -> Vec2 {
        self.gradient(p) * (0.5 / self.value(p))
    }

    /// `Δφ` with `φ = ½ log c`.
    fn laplacian_phi(&self, p: Point) -> f64 {
        let c = self.value(p);
        let g = self.gradient(p);
        0.5 * (self.hessian(p).trace() / c - g.dot(g) / (c * c))
    }

    fn name(&self) -> String {
        "custom".to_string()
    }
}

/// Sum of Gaussian lenses, `c = exp(Σ k_i exp(-|x - x_i|² / 2σ_i²))`.
///
/// With a single term this is the same factor as [`MetricKind::Lens`]; several
/// terms along a line produce geodesics carrying more than one conjugate pair.
#[derive(Clone, Debug, PartialEq)]
pub struct LensSum {
    pub lenses: Vec<(f64, f64, Point)>,
}

impl LensSum {
    fn exponent(&self, p: Point) -> (f64, Vec2, Sym2) {
        let mut s = 0.0;
        let mut g = Vec2::ZERO;
        let mut h = Sym2 { xx: 0.0, xy: 0.0, yy: 0.0 };
        for &(k, sigma, center) in &self.lenses {
            let (e, eg, eh) = gaussian_derivs(p - center, sigma);
            s += k * e;
            g += eg * k;
            h.xx += k * eh.xx;
            h.xy += k * eh.xy;
            h.yy += k * eh.yy;
        }
        (s, g, h)
    }
}

impl ConformalFactor for LensSum {
    fn value(&self, p: Point) -> f64 {
        self.exponent(p).0.exp()
    }

    fn gradient(&self, p: Point) -> Vec2 {
        let (s, g, _) = self.exponent(p);
        g * s.exp()
    }

    fn hessian(&self, p: Point) -> Sym2 {
        let (s, g, h) = self.exponent(p);
        let c = s.exp();
        Sym2 {
            xx: c * (g.x * g.x + h.xx),
            xy: c * (g.x * g.y + h.xy),
            yy: c * (g.y * g.y + h.yy),
        }
    }

    fn grad_phi(&self, p: Point) -> Vec2 {
        self.exponent(p).1 * 0.5
    }

    fn laplacian_phi(&self, p: Point) -> f64 {
        0.5 * self.exponent(p).2.trace()
    }

    fn name(&self) -> String {
        format!("lens_sum({})", self.lenses.len())
    }
}

/// `E = exp(-|d|²/2σ²)` with gradient and Hessian.
fn gaussian_derivs(d: Vec2, sigma: f64) -> (f64, Vec2, Sym2) {
    let s2 = sigma * sigma;
    let e = (-(d.dot(d)) / (2.0 * s2)).exp();
    let g = d * (-e / s2);
    let s4 = s2 * s2;
    let h = Sym2 {
        xx: e * (d.x * d.x / s4 - 1.0 / s2),
        xy: e * (d.x * d.y / s4),
        yy: e * (d.y * d.y / s4 - 1.0 / s2),
    };
    (e, g, h)
}

#[derive(Clone)]
pub enum MetricKind {
    Euclidean,
    /// `c = exp(k exp(-|x - center|² / 2σ²))`.
    Lens { k: f64, sigma: f64, center: Point },
    /// Stereographic chart of the unit sphere, `c = 4 / (1 + r²)²`, `K ≡ 1`.
    SphereCap,
    Custom(Arc<dyn ConformalFactor>),
}

impl fmt::Debug for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricKind::Euclidean => write!(f, "Euclidean"),
            MetricKind::Lens { k, sigma, center } => f
                .debug_struct("Lens")
                .field("k", k)
                .field("sigma", sigma)
                .field("center", center)
                .finish(),
            MetricKind::SphereCap => write!(f, "SphereCap"),
            MetricKind::Custom(c) => write!(f, "Custom({})", c.name()),
        }
    }
}

/// Conformal metric `g_ij = c(x) δ_ij`.
#[derive(Clone, Debug)]
pub struct ConformalMetric {
    pub kind: MetricKind,
}

/// The four independent Christoffel symbols of a conformal metric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Christoffel {
    /// Γ¹₁₁ = ∂ₓφ
    pub g1_11: f64,
    /// Γ¹₁₂ = ∂_yφ
    pub g1_12: f64,
    /// Γ²₁₁ = -∂_yφ
    pub g2_11: f64,
    /// Γ²₁₂ = ∂ₓφ
    pub g2_12: f64,
}

impl Christoffel {
    /// Γ¹₂₂ = -Γ¹₁₁
    pub fn g1_22(&self) -> f64 {
        -self.g1_11
    }

    /// Γ²₂₂ = Γ¹₁₂
    pub fn g2_22(&self) -> f64 {
        self.g1_12
    }
}

impl ConformalMetric {
    pub fn euclidean() -> Self {
        ConformalMetric { kind: MetricKind::Euclidean }
    }

    pub fn lens(k: f64, sigma: f64, center: Point) -> Self {
        ConformalMetric { kind: MetricKind::Lens { k, sigma, center } }
    }

    /// The lens with `k = 1.2`, `σ = 0.25` centered at the origin.
    pub fn reference_lens() -> Self {
        Self::lens(1.2, 0.25, Point::ZERO)
    }

    pub fn sphere_cap() -> Self {
        ConformalMetric { kind: MetricKind::SphereCap }
    }

    pub fn custom(f: Arc<dyn ConformalFactor>) -> Self {
        ConformalMetric { kind: MetricKind::Custom(f) }
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.kind, MetricKind::Euclidean)
    }

    /// Conformal factor `c(x)`.
    pub fn factor(&self, p: Point) -> f64 {
        match &self.kind {
            MetricKind::Euclidean => 1.0,
            MetricKind::Lens { k, sigma, center } => {
                let d = p - *center;
                (k * (-d.dot(d) / (2.0 * sigma * sigma)).exp()).exp()
            }
            MetricKind::SphereCap => {
                let u = 1.0 + p.dot(p);
                4.0 / (u * u)
            }
            MetricKind::Custom(f) => f.value(p),
        }
    }

    pub fn factor_gradient(&self, p: Point) -> Vec2 {
        match &self.kind {
            MetricKind::Euclidean => Vec2::ZERO,
            MetricKind::Lens { k, sigma, center } => {
                let (e, g, _) = gaussian_derivs(p - *center, *sigma);
                g * (k * (k * e).exp())
            }
            MetricKind::SphereCap => {
                let u = 1.0 + p.dot(p);
                p * (-16.0 / (u * u * u))
            }
            MetricKind::Custom(f) => f.gradient(p),
        }
    }

    pub fn factor_hessian(&self, p: Point) -> Sym2 {
        match &self.kind {
            MetricKind::Euclidean => Sym2 { xx: 0.0, xy: 0.0, yy: 0.0 },
            MetricKind::Lens { k, sigma, center } => {
                let (e, g, h) = gaussian_derivs(p - *center, *sigma);
                let c = (k * e).exp();
                Sym2 {
                    xx: c * (k * k * g.x * g.x + k * h.xx),
                    xy: c * (k * k * g.x * g.y + k * h.xy),
                    yy: c * (k * k * g.y * g.y + k * h.yy),
                }
            }
            MetricKind::SphereCap => {
                let u = 1.0 + p.dot(p);
                let u3 = u * u * u;
                let u4 = u3 * u;
                Sym2 {
                    xx: -16.0 / u3 + 96.0 * p.x * p.x / u4,
                    xy: 96.0 * p.x * p.y / u4,
                    yy: -16.0 / u3 + 96.0 * p.y * p.y / u4,
                }
            }
            MetricKind::Custom(f) => f.hessian(p),
        }
    }

    /// `∇φ`, `φ = ½ log c`. This is all the geodesic equation needs.
    #[inline]
    pub fn grad_phi(&self, p: Point) -> Vec2 {
        match &self.kind {
            MetricKind::Euclidean => Vec2::ZERO,
            MetricKind::Lens { k, sigma, center } => {
                let d = p - *center;
                let s2 = sigma * sigma;
                let e = (-d.dot(d) / (2.0 * s2)).exp();
                d * (-0.5 * k * e / s2)
            }
            MetricKind::SphereCap => p * (-2.0 / (1.0 + p.dot(p))),
            MetricKind::Custom(f) => f.grad_phi(p),
        }
    }

    /// `Δφ` (flat Laplacian of `½ log c`).
    pub fn laplacian_phi(&self, p: Point) -> f64 {
        match &self.kind {
            MetricKind::Euclidean => 0.0,
            MetricKind::Lens { k, sigma, center } => {
                let d = p - *center;
                let s2 = sigma * sigma;
                let r2 = d.dot(d);
                let e = (-r2 / (2.0 * s2)).exp();
                0.5 * k * e * (r2 / (s2 * s2) - 2.0 / s2)
            }
            MetricKind::SphereCap => {
                let u = 1.0 + p.dot(p);
                -4.0 / (u * u)
            }
            MetricKind::Custom(f) => f.laplacian_phi(p),
        }
    }

    pub fn christoffel(&self, p: Point) -> Christoffel {
        let g = self.grad_phi(p);
        Christoffel { g1_11: g.x, g1_12: g.y, g2_11: -g.y, g2_12: g.x }
    }

    /// Gauss curvature `K = -e^{-2φ} Δφ`.
    #[inline]
    pub fn gauss_curvature(&self, p: Point) -> f64 {
        match &self.kind {
            MetricKind::Euclidean => 0.0,
            MetricKind::SphereCap => 1.0,
            _ => -self.laplacian_phi(p) / self.factor(p),
        }
    }

    /// Geodesic acceleration `-Γ^k_ij v^i v^j`.
    #[inline]
    pub fn geodesic_accel(&self, p: Point, v: Vec2) -> Vec2 {
        let g = self.grad_phi(p);
        let (u, w) = (v.x, v.y);
        Vec2::new(
            -(g.x * (u * u - w * w) + 2.0 * g.y * u * w),
            -(g.y * (w * w - u * u) + 2.0 * g.x * u * w),
        )
    }

    /// `|v|_g`.
    pub fn norm(&self, p: Point, v: Vec2) -> f64 {
        (self.factor(p) * v.dot(v)).sqrt()
    }

    /// `|ξ|_{g*}`.
    pub fn conorm(&self, p: Point, xi: Covec2) -> f64 {
        ((xi.x * xi.x + xi.y * xi.y) / self.factor(p)).sqrt()
    }

    /// Rescale `v` to unit `g`-length.
    pub fn normalize(&self, p: Point, v: Vec2) -> Vec2 {
        v * (1.0 / self.norm(p, v))
    }

    /// Unit vector in the Euclidean direction `theta`.
    pub fn unit_in_direction(&self, p: Point, theta: f64) -> Vec2 {
        Vec2::from_angle(theta) * (1.0 / self.factor(p).sqrt())
    }

    /// `v⊥_i = R_ij v^j` with `R = √det g [[0, 1], [-1, 0]]`: the conormal
    /// obtained by rotating `v` by -90°.
    pub fn perp(&self, p: Point, v: Vec2) -> Covec2 {
        let s = self.factor(p);
        Covec2::new(s * v.y, -s * v.x)
    }

    /// Index raising `ξ ↦ g^{ij} ξ_j`.
    pub fn raise(&self, p: Point, xi: Covec2) -> Vec2 {
        let s = self.factor(p);
        Vec2::new(xi.x / s, xi.y / s)
    }

    /// Index lowering `v ↦ g_ij v^j`.
    pub fn lower(&self, p: Point, v: Vec2) -> Covec2 {
        let s = self.factor(p);
        Covec2::new(v.x * s, v.y * s)
    }

    /// Inverse of [`perp`](Self::perp): rotation of a covector by +90°.
    pub fn perp_inv(&self, p: Point, xi: Covec2) -> Vec2 {
        let s = self.factor(p);
        Vec2::new(-xi.y / s, xi.x / s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lens_sum_single() -> ConformalMetric {
        ConformalMetric::custom(Arc::new(LensSum { lenses: vec![(1.2, 0.25, Point::new(0.1, -0.2))] }))
    }

    fn all_metrics() -> Vec<ConformalMetric> {
        vec![
            ConformalMetric::euclidean(),
            ConformalMetric::reference_lens(),
            ConformalMetric::lens(1.2, 0.25, Point::new(0.2, 0.0)),
            ConformalMetric::sphere_cap(),
            lens_sum_single(),
        ]
    }

    #[test]
    fn christoffel_flat_and_at_lens_center() {
        let c = ConformalMetric::euclidean().christoffel(Point::new(0.3, 0.7));
        assert_eq!(c, Christoffel { g1_11: 0.0, g1_12: 0.0, g2_11: 0.0, g2_12: 0.0 });
        let c = ConformalMetric::reference_lens().christoffel(Point::ZERO);
        assert_eq!(c.g1_11.abs() + c.g1_12.abs() + c.g2_11.abs() + c.g2_12.abs(), 0.0);
    }

    #[test]
    fn christoffel_off_center() {
        let c = ConformalMetric::reference_lens().christoffel(Point::new(0.25, 0.0));
        assert_relative_eq!(c.g1_11, -2.4 * (-0.5f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(c.g1_11, -1.455674, epsilon = 1e-6);
        assert_eq!(c.g1_22(), -c.g1_11);
        assert_eq!(c.g2_12, c.g1_11);
        assert!(c.g1_12.abs() < 1e-15);
    }

    #[test]
    fn christoffel_matches_finite_difference_of_log_factor() {
        let m = ConformalMetric::reference_lens();
        let p = Point::new(0.25, 0.0);
        let h = 1e-5;
        let phi = |q: Point| 0.5 * m.factor(q).ln();
        let dx = (phi(p + Vec2::new(h, 0.0)) - phi(p - Vec2::new(h, 0.0))) / (2.0 * h);
        assert_relative_eq!(m.christoffel(p).g1_11, dx, max_relative = 1e-8);
    }

    #[test]
    fn curvature_values() {
        assert_eq!(ConformalMetric::euclidean().gauss_curvature(Point::new(0.2, 0.1)), 0.0);
        let k = ConformalMetric::reference_lens().gauss_curvature(Point::ZERO);
        assert_relative_eq!(k, 1.2 * (-1.2f64).exp() / 0.0625, max_relative = 1e-13);
        assert_relative_eq!(k, 5.78293, epsilon = 1e-5);
        // generic formula path for the sphere
        let sphere = ConformalMetric::sphere_cap();
        let p = Point::new(0.3, -0.4);
        let generic = -sphere.laplacian_phi(p) / sphere.factor(p);
        assert!((generic - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sphere_cap_curvature_is_one() {
        let m = ConformalMetric::sphere_cap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let p = Point::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
            let k = -m.laplacian_phi(p) / m.factor(p);
            worst = worst.max((k - 1.0).abs());
        }
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-4;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in all_metrics() {
            for _ in 0..100 {
                let p = Point::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
                assert!(m.factor(p) > 0.0);
                let ex = Vec2::new(h, 0.0);
                let ey = Vec2::new(0.0, h);
                let fd = Vec2::new(
                    (m.factor(p + ex) - m.factor(p - ex)) / (2.0 * h),
                    (m.factor(p + ey) - m.factor(p - ey)) / (2.0 * h),
                );
                let g = m.factor_gradient(p);
                let scale = g.norm().max(1e-3 * m.factor(p));
                assert!((g - fd).norm() / scale < 1e-6, "{:?} grad at {:?}", m.kind, p);

                let gxp = m.factor_gradient(p + ex);
                let gxm = m.factor_gradient(p - ex);
                let gyp = m.factor_gradient(p + ey);
                let gym = m.factor_gradient(p - ey);
                let hs = m.factor_hessian(p);
                let fd_xx = (gxp.x - gxm.x) / (2.0 * h);
                let fd_xy = (gyp.x - gym.x) / (2.0 * h);
                let fd_yy = (gyp.y - gym.y) / (2.0 * h);
                let hscale = hs.xx.abs().max(hs.yy.abs()).max(hs.xy.abs()).max(1e-3 * m.factor(p));
                for (a, b) in [(hs.xx, fd_xx), (hs.xy, fd_xy), (hs.yy, fd_yy)] {
                    assert!((a - b).abs() / hscale < 1e-6, "{:?} hessian at {:?}: {a} vs {b}", m.kind, p);
                }
            }
        }
    }

    #[test]
    fn lens_sum_agrees_with_builtin_lens() {
        let a = ConformalMetric::lens(1.2, 0.25, Point::new(0.1, -0.2));
        let b = lens_sum_single();
        let p = Point::new(0.05, 0.13);
        assert_relative_eq!(a.factor(p), b.factor(p), max_relative = 1e-14);
        assert_relative_eq!(a.gauss_curvature(p), b.gauss_curvature(p), max_relative = 1e-12);
        assert_relative_eq!(a.grad_phi(p).x, b.grad_phi(p).x, max_relative = 1e-12);
    }

    #[test]
    fn lens_center_value() {
        let m = ConformalMetric::lens(1.2, 0.25, Point::new(0.2, 0.0));
        assert_relative_eq!(m.factor(Point::new(0.2, 0.0)), 1.2f64.exp(), max_relative = 1e-15);
    }

    #[test]
    fn perp_examples() {
        let e = ConformalMetric::euclidean();
        let o = Point::ZERO;
        assert_eq!(e.perp(o, Vec2::new(1.0, 0.0)), Covec2::new(0.0, -1.0));
        assert_eq!(e.perp(o, Vec2::new(0.0, 1.0)), Covec2::new(1.0, 0.0));
        let l = ConformalMetric::reference_lens();
        let xi = l.perp(o, Vec2::new(1.0, 0.0));
        assert_relative_eq!(xi.y, -(1.2f64).exp(), max_relative = 1e-15);
        assert_eq!(xi.x, 0.0);
    }

    #[test]
    fn perp_isometry_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in all_metrics() {
            for _ in 0..200 {
                let p = Point::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let v = Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                let xi = m.perp(p, v);
                assert!(xi.apply(v).abs() < 1e-12);
                assert!((m.conorm(p, xi) - m.norm(p, v)).abs() < 1e-12);
                let back = m.perp_inv(p, xi);
                assert!((back - v).norm() < 1e-12);
                // perp applied twice (raising the index in between) is -id
                let w = m.raise(p, m.perp(p, m.raise(p, xi)));
                assert!((w + v).norm() < 1e-12);
            }
        }
    }
}
