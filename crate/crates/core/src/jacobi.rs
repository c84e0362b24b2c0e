//! Scalar Jacobi fields along geodesics, conjugate points and conjugate loci.
//!
//! Along a unit-speed geodesic every normal Jacobi field is `J = y(t) γ̇⊥`
//! with `ÿ + K y = 0`. We carry the two solutions `a`, `b` with
//! `(a, a', b, b')(0) = (1, 0, 0, 1)`, so the Wronskian `a b' − a' b` is 1.
//! The field vanishing at `t1` is `c(t) = a(t1) b(t) − b(t1) a(t)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geodesic::{
    chord_through, hermite_scalar, integrate, rk4_step, Disk, GeodesicPath, Orientation, Phase, TraceOptions,
};
use crate::metric::ConformalMetric;
use crate::vec2::{Covec2, Point, Vec2};

/// Relative tangent magnitude below which a locus vertex is a cusp candidate.
pub const CUSP_TOL: f64 = 0.05;

/// `a`, `b` and their derivatives sampled at the nodes of a geodesic.
#[derive(Clone, Debug)]
pub struct ScalarJacobiPair {
    pub t: Vec<f64>,
    pub a: Vec<f64>,
    pub da: Vec<f64>,
    pub b: Vec<f64>,
    pub db: Vec<f64>,
    /// Gauss curvature at the nodes (second derivatives for interpolation).
    pub curvature: Vec<f64>,
}

impl ScalarJacobiPair {
    /// Build a pair from externally computed samples. All vectors must have
    /// the same length (at least 2) and `t` must be increasing.
    pub fn from_samples(
        t: Vec<f64>,
        a: Vec<f64>,
        da: Vec<f64>,
        b: Vec<f64>,
        db: Vec<f64>,
        curvature: Vec<f64>,
    ) -> Result<Self> {
        let n = t.len();
        if n < 2 || [a.len(), da.len(), b.len(), db.len(), curvature.len()].iter().any(|&l| l != n) {
            return Err(Error::InvalidArgument("Jacobi samples must share a length of at least 2".into()));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("Jacobi sample times must increase".into()));
        }
        Ok(ScalarJacobiPair { t, a, da, b, db, curvature })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn end_time(&self) -> f64 {
        *self.t.last().unwrap()
    }

    pub fn wronskian(&self, i: usize) -> f64 {
        self.a[i] * self.db[i] - self.da[i] * self.b[i]
    }

    pub fn max_wronskian_drift(&self) -> f64 {
        let w0 = self.wronskian(0);
        (0..self.len()).map(|i| (self.wronskian(i) - w0).abs()).fold(0.0, f64::max)
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.t.len();
        match self.t.binary_search_by(|s| s.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        }
    }

    /// `(a, a', b, b')` at an arbitrary time, by cubic Hermite interpolation.
    pub fn eval(&self, t: f64) -> [f64; 4] {
        let i = self.segment(t);
        let dt = self.t[i + 1] - self.t[i];
        let u = ((t - self.t[i]) / dt).clamp(0.0, 1.0);
        let (k0, k1) = (self.curvature[i], self.curvature[i + 1]);
        let j = i + 1;
        [
            hermite_scalar(self.a[i], self.da[i], self.a[j], self.da[j], dt, u),
            hermite_scalar(self.da[i], -k0 * self.a[i], self.da[j], -k1 * self.a[j], dt, u),
            hermite_scalar(self.b[i], self.db[i], self.b[j], self.db[j], dt, u),
            hermite_scalar(self.db[i], -k0 * self.b[i], self.db[j], -k1 * self.b[j], dt, u),
        ]
    }

    /// `c(t)` and `c'(t)` for the field vanishing at `t1`.
    pub fn c_at(&self, t1: f64, t: f64) -> (f64, f64) {
        let [a1, _, b1, _] = self.eval(t1);
        let [a, da, b, db] = self.eval(t);
        (a1 * b - b1 * a, a1 * db - b1 * da)
    }
}

/// Integrate `ä = −K a` jointly with the geodesic, sampling at the path nodes.
pub fn integrate_jacobi(metric: &ConformalMetric, path: &GeodesicPath) -> ScalarJacobiPair {
    let s0 = path.start();
    let opts = TraceOptions { h: path.h, max_length: path.exit_time + 4.0 * path.h };
    let n = path.len();
    let mut pair = ScalarJacobiPair {
        t: Vec::with_capacity(n),
        a: Vec::with_capacity(n),
        da: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
        db: Vec::with_capacity(n),
        curvature: Vec::with_capacity(n),
    };
    // Same start, same step, same exit test: the node sequence reproduces the path exactly.
    integrate(metric, &path.domain, Phase::new(s0.x, s0.v), opts, true, |t, p| {
        pair.t.push(t);
        pair.a.push(p.jac[0]);
        pair.da.push(p.jac[1]);
        pair.b.push(p.jac[2]);
        pair.db.push(p.jac[3]);
        pair.curvature.push(metric.gauss_curvature(p.x));
    })
    .expect("re-integrating an existing path cannot fail to exit");
    debug_assert_eq!(pair.len(), n);
    pair
}

/// All zeros of `c` other than `t1` itself, in increasing order.
pub fn conjugate_times(pair: &ScalarJacobiPair, t1: f64) -> Vec<f64> {
    let n = pair.len();
    let h = pair.t[1] - pair.t[0];
    let guard = 2.0 * h;
    let [a1, _, b1, _] = pair.eval(t1);
    let c = |i: usize| a1 * pair.b[i] - b1 * pair.a[i];
    let mut out = Vec::new();
    for i in 0..n - 1 {
        let (ta, tb) = (pair.t[i], pair.t[i + 1]);
        if tb >= t1 - guard && ta <= t1 + guard {
            continue;
        }
        let (ca, cb) = (c(i), c(i + 1));
        if ca == 0.0 {
            out.push(ta);
        } else if ca * cb < 0.0 {
            let (mut lo, mut hi) = (ta, tb);
            let sign_lo = ca.signum();
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let (cm, _) = pair.c_at(t1, mid);
                if cm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if cm.signum() == sign_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-14 {
                    break;
                }
            }
            out.push(0.5 * (lo + hi));
        }
    }
    if let Some(&last) = pair.t.last() {
        if c(n - 1) == 0.0 && (last - t1).abs() > guard {
            out.push(last);
        }
    }
    out
}

/// A pair of mutually conjugate points on one geodesic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConjugateEvent {
    pub t1: f64,
    pub t2: f64,
    pub p1: Point,
    pub p2: Point,
    pub v1: Vec2,
    pub v2: Vec2,
    pub cprime1: f64,
    pub cprime2: f64,
    /// Number of conjugate times strictly between `t1` and `t2`.
    pub m: usize,
    /// `(−1)^m`
    pub epsilon: i8,
}

impl ConjugateEvent {
    /// `λ₂ / λ₁ = c'(t2) / c'(t1)`.
    pub fn lambda_ratio(&self) -> f64 {
        self.cprime2 / self.cprime1
    }
}

/// `(c'(t1), c'(t2), m)` for a conjugate pair, without positions.
pub fn event_scalars(pair: &ScalarJacobiPair, t1: f64, t2: f64) -> Result<(f64, f64, usize)> {
    let (_, cp1) = pair.c_at(t1, t1);
    let (_, cp2) = pair.c_at(t1, t2);
    if cp2.abs() < 1e-10 {
        return Err(Error::DegenerateZero { t: t2, derivative: cp2.abs() });
    }
    let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
    let tol = 1e-9;
    let m = conjugate_times(pair, t1).into_iter().filter(|&t| t > lo + tol && t < hi - tol).count();
    Ok((cp1, cp2, m))
}

pub fn conjugate_event(
    metric: &ConformalMetric,
    path: &GeodesicPath,
    pair: &ScalarJacobiPair,
    t1: f64,
    t2: f64,
) -> Result<ConjugateEvent> {
    let (cprime1, cprime2, m) = event_scalars(pair, t1, t2)?;
    let (p1, v1) = path.state_at(metric, t1);
    let (p2, v2) = path.state_at(metric, t2);
    Ok(ConjugateEvent {
        t1,
        t2,
        p1,
        p2,
        v1,
        v2,
        cprime1,
        cprime2,
        m,
        epsilon: if m % 2 == 0 { 1 } else { -1 },
    })
}

/// Image of `(γ(t), λ γ̇⊥(t))` under the canonical relation: the boundary
/// chart point of the geodesic together with `(λ a(t), λ b(t))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CanonicalPoint {
    pub beta: f64,
    pub alpha: f64,
    pub y_hat: f64,
    pub eta_hat: f64,
    /// Component of the covector: `Plus` for `λ > 0`.
    pub orientation: Orientation,
}

pub fn canonical_map(path: &GeodesicPath, pair: &ScalarJacobiPair, t: f64, lambda: f64) -> CanonicalPoint {
    let origin = path.origin.unwrap_or_else(|| {
        let s = path.start();
        path.domain.coord_of(s.x, s.v, Orientation::Plus)
    });
    let [a, _, b, _] = pair.eval(t);
    CanonicalPoint {
        beta: origin.beta,
        alpha: origin.alpha,
        y_hat: lambda * a,
        eta_hat: lambda * b,
        orientation: if lambda > 0.0 { Orientation::Plus } else { Orientation::Minus },
    }
}

/// Restricts which conjugate points `c21_map` reports, by signed arclength
/// from `p1` (negative = behind `p1`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchWindow {
    pub s_min: f64,
    pub s_max: f64,
}

impl Default for SearchWindow {
    fn default() -> Self {
        SearchWindow { s_min: f64::NEG_INFINITY, s_max: f64::INFINITY }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConjugatePartner {
    pub p2: Point,
    pub xi2: Covec2,
    pub event: ConjugateEvent,
}

/// All `(p2, ξ2)` whose canonical image coincides with that of `(p1, ξ1)`:
/// points conjugate to `p1` along the geodesic conormal to `ξ1`.
pub fn c21_map(
    metric: &ConformalMetric,
    disk: &Disk,
    p1: Point,
    xi1: Covec2,
    window: SearchWindow,
    opts: TraceOptions,
) -> Result<Vec<ConjugatePartner>> {
    let norm = metric.conorm(p1, xi1);
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument("c21_map needs a nonzero covector".into()));
    }
    let v1 = metric.perp_inv(p1, xi1.scale(1.0 / norm));
    let (path, t1) = chord_through(metric, disk, p1, v1, opts)?;
    let pair = integrate_jacobi(metric, &path);
    let mut out = Vec::new();
    for t2 in conjugate_times(&pair, t1) {
        let s = t2 - t1;
        if s < window.s_min || s > window.s_max {
            continue;
        }
        let event = conjugate_event(metric, &path, &pair, t1, t2)?;
        let lambda2 = norm * event.lambda_ratio();
        let xi2 = metric.perp(event.p2, event.v2).scale(lambda2);
        out.push(ConjugatePartner { p2: event.p2, xi2, event });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VertexClass {
    Fold,
    Cusp,
}

impl VertexClass {
    pub fn as_str(self) -> &'static str {
        match self {
            VertexClass::Fold => "fold",
            VertexClass::Cusp => "cusp",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocusVertex {
    pub theta: f64,
    pub t_c: f64,
    pub point: Point,
    pub class: VertexClass,
}

/// First conjugate locus of `p`: one entry per sampled direction, `None`
/// where the geodesic leaves the domain before its first conjugate point.
#[derive(Clone, Debug)]
pub struct ConjugateLocus {
    pub base: Point,
    pub vertices: Vec<Option<LocusVertex>>,
}

impl ConjugateLocus {
    pub fn defined(&self) -> impl Iterator<Item = &LocusVertex> {
        self.vertices.iter().flatten()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.iter().all(Option::is_none)
    }

    pub fn cusp_count(&self) -> usize {
        self.defined().filter(|v| v.class == VertexClass::Cusp).count()
    }

    /// Maximal runs of consecutive defined vertices (wrapping around when
    /// every direction is defined).
    pub fn branches(&self) -> Vec<Vec<LocusVertex>> {
        let n = self.vertices.len();
        let mut runs: Vec<Vec<LocusVertex>> = Vec::new();
        let mut cur = Vec::new();
        for v in &self.vertices {
            match v {
                Some(v) => cur.push(*v),
                None if !cur.is_empty() => runs.push(std::mem::take(&mut cur)),
                None => {}
            }
        }
        if !cur.is_empty() {
            if self.vertices[0].is_some() && runs.first().is_some_and(|r| r.len() < n) && cur.len() < n {
                let mut head = runs.remove(0);
                cur.append(&mut head);
            }
            runs.push(cur);
        }
        runs
    }

    /// Number of reversals of the polyline's direction of travel.
    pub fn tangent_reversals(&self) -> usize {
        let mut count = 0;
        for run in self.branches() {
            let seg: Vec<Vec2> = run.windows(2).map(|w| w[1].point - w[0].point).collect();
            let scale = seg.iter().map(|s| s.norm()).fold(0.0, f64::max);
            let mut prev: Option<Vec2> = None;
            for s in seg {
                if s.norm() <= 1e-9 * scale.max(1e-300) {
                    continue;
                }
                if let Some(p) = prev {
                    if p.dot(s) < 0.0 {
                        count += 1;
                    }
                }
                prev = Some(s);
            }
        }
        count
    }
}

/// First zero of `b` on the geodesic from `x` with unit velocity `v`.
fn first_conjugate(metric: &ConformalMetric, disk: &Disk, x: Point, v: Vec2, h: f64) -> Option<(f64, Point)> {
    let max_length = 50.0;
    let mut cur = Phase::new(x, v);
    let mut t = 0.0;
    let mut n = 0u64;
    let guard = 2.0 * h;
    while t < max_length {
        let next = rk4_step(metric, &cur, h, true);
        if disk.excess(next.x) > 0.0 {
            return None;
        }
        if t + h > guard && cur.jac[2] * next.jac[2] < 0.0 {
            let sign = cur.jac[2].signum();
            let (mut lo, mut hi) = (0.0, h);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let b = rk4_step(metric, &cur, mid, true).jac[2];
                if b.signum() == sign {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-15 {
                    break;
                }
            }
            let s = 0.5 * (lo + hi);
            let p = rk4_step(metric, &cur, s, true);
            if !disk.contains(p.x) {
                return None;
            }
            return Some((t + s, p.x));
        }
        n += 1;
        t = n as f64 * h;
        cur = next;
    }
    None
}

/// Conjugate locus of `p` over `n_dirs` equally spaced Euclidean directions.
pub fn conjugate_locus(metric: &ConformalMetric, disk: &Disk, p: Point, n_dirs: usize, h: f64) -> Result<ConjugateLocus> {
    if n_dirs < 16 {
        return Err(Error::InvalidArgument(format!("conjugate locus needs at least 16 directions, got {n_dirs}")));
    }
    if !disk.contains(p) {
        return Err(Error::InvalidArgument("locus base point lies outside the domain".into()));
    }
    let dtheta = std::f64::consts::TAU / n_dirs as f64;
    let raw: Vec<Option<(f64, f64, Point)>> = (0..n_dirs)
        .into_par_iter()
        .map(|i| {
            let theta = i as f64 * dtheta;
            let v = metric.unit_in_direction(p, theta);
            first_conjugate(metric, disk, p, v, h).map(|(t, x)| (theta, t, x))
        })
        .collect();

    // numerical tangent of θ ↦ exp_p(t_c(θ) θ)
    let all_defined = raw.iter().all(Option::is_some);
    let at = |j: isize| -> Option<Point> {
        let n = n_dirs as isize;
        if !(0..n).contains(&j) && !all_defined {
            return None;
        }
        raw[j.rem_euclid(n) as usize].map(|r| r.2)
    };
    let tangent: Vec<Option<f64>> = (0..n_dirs as isize)
        .map(|i| {
            let here = at(i)?;
            match (at(i - 1), at(i + 1)) {
                (Some(a), Some(b)) => Some((b - a).norm() / (2.0 * dtheta)),
                (None, Some(b)) => Some((b - here).norm() / dtheta),
                (Some(a), None) => Some((here - a).norm() / dtheta),
                (None, None) => None,
            }
        })
        .collect();
    let tmax = tangent.iter().flatten().fold(0.0, |m: f64, &t| m.max(t));

    let mut class = vec![VertexClass::Fold; n_dirs];
    if tmax > 1e-9 {
        // one cusp per contiguous run of small tangents, at its minimum
        let small: Vec<bool> = tangent.iter().map(|t| t.is_some_and(|t| t < CUSP_TOL * tmax)).collect();
        let mut i = 0;
        while i < n_dirs {
            if !small[i] {
                i += 1;
                continue;
            }
            let start = i;
            while i < n_dirs && small[i] {
                i += 1;
            }
            let best = (start..i).min_by(|&a, &b| tangent[a].partial_cmp(&tangent[b]).unwrap()).unwrap();
            class[best] = VertexClass::Cusp;
        }
        if all_defined && small[0] && small[n_dirs - 1] {
            // a run wrapping through θ = 0 was split in two: keep the smaller minimum
            let head_end = small.iter().position(|s| !s).unwrap_or(n_dirs);
            let tail_start = small.iter().rposition(|s| !s).map_or(0, |j| j + 1);
            if head_end < tail_start {
                let head = (0..head_end).find(|&j| class[j] == VertexClass::Cusp).unwrap();
                let tail = (tail_start..n_dirs).find(|&j| class[j] == VertexClass::Cusp).unwrap();
                let drop = if tangent[head] <= tangent[tail] { tail } else { head };
                class[drop] = VertexClass::Fold;
            }
        }
    }

    let vertices = raw
        .into_iter()
        .zip(class)
        .map(|(r, class)| r.map(|(theta, t_c, point)| LocusVertex { theta, t_c, point, class }))
        .collect();
    Ok(ConjugateLocus { base: p, vertices })
}
