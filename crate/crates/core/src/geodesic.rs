//! Unit-speed geodesics of a conformal metric between boundary points of a disk.
//!
//! Rays are parameterized in fan-beam coordinates `(β, α)`: the ray enters at
//! `center + R (cos β, sin β)` and its velocity makes the angle `α` with the
//! inner normal, `γ̇(0) = c^{-1/2} (cos(β + π + α), sin(β + π + α))`.
//!
//! Integration is classical fourth order with a fixed step. The last step is
//! shortened so that the terminal point lands on the boundary circle.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::metric::ConformalMetric;
use crate::vec2::{wrap_2pi, wrap_pi, Point, Vec2};

/// Tangent entries closer than this to `±π/2` are rejected.
pub const ALPHA_GUARD: f64 = 1e-6;
pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_MAX_LENGTH: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Disk {
    pub center: Point,
    pub radius: f64,
}

impl Disk {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!("disk radius must be positive, got {radius}")));
        }
        Ok(Disk { center, radius })
    }

    pub fn unit() -> Self {
        Disk { center: Point::ZERO, radius: 1.0 }
    }

    /// The simple subdomain used for the cancellation experiment.
    pub fn upper_half_disk() -> Self {
        Disk { center: Point::new(0.0, 0.5), radius: 0.5 }
    }

    pub fn boundary_point(&self, beta: f64) -> Point {
        self.center + Vec2::from_angle(beta) * self.radius
    }

    pub fn contains(&self, p: Point) -> bool {
        p.dist(self.center) <= self.radius
    }

    /// Signed distance to the boundary circle, positive outside.
    pub fn excess(&self, p: Point) -> f64 {
        p.dist(self.center) - self.radius
    }

    pub fn beta_of(&self, p: Point) -> f64 {
        wrap_2pi((p - self.center).angle())
    }

    /// Fan-beam coordinate of a point on the boundary moving inward with
    /// direction `v`.
    pub fn coord_of(&self, p: Point, v: Vec2, orientation: Orientation) -> FanBeamCoord {
        let beta = self.beta_of(p);
        FanBeamCoord { beta, alpha: wrap_pi(v.angle() - beta - PI), orientation }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Orientation {
    Plus,
    Minus,
}

impl Orientation {
    pub fn flip(self) -> Self {
        match self {
            Orientation::Plus => Orientation::Minus,
            Orientation::Minus => Orientation::Plus,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Orientation::Plus => 1.0,
            Orientation::Minus => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::Plus => "plus",
            Orientation::Minus => "minus",
        }
    }
}

/// Fan-beam coordinate of a directed ray.
///
/// A `Minus` coordinate names the same geodesic as the `Plus` coordinate with
/// equal `(β, α)`, traversed in the opposite direction: it starts at the exit
/// point of the plus ray and ends at `β`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FanBeamCoord {
    pub beta: f64,
    pub alpha: f64,
    pub orientation: Orientation,
}

impl FanBeamCoord {
    pub fn plus(beta: f64, alpha: f64) -> Self {
        FanBeamCoord { beta: wrap_2pi(beta), alpha, orientation: Orientation::Plus }
    }

    pub fn minus(beta: f64, alpha: f64) -> Self {
        FanBeamCoord { beta: wrap_2pi(beta), alpha, orientation: Orientation::Minus }
    }
}

/// Position, velocity and (optionally) the two scalar Jacobi solutions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Phase {
    pub x: Point,
    pub v: Vec2,
    /// `(a, a', b, b')`
    pub jac: [f64; 4],
}

impl Phase {
    pub fn new(x: Point, v: Vec2) -> Self {
        Phase { x, v, jac: [1.0, 0.0, 0.0, 1.0] }
    }
}

#[inline]
fn deriv(metric: &ConformalMetric, p: &Phase, jacobi: bool) -> Phase {
    let acc = metric.geodesic_accel(p.x, p.v);
    let jac = if jacobi {
        let k = metric.gauss_curvature(p.x);
        [p.jac[1], -k * p.jac[0], p.jac[3], -k * p.jac[2]]
    } else {
        [0.0; 4]
    };
    Phase { x: p.v, v: acc, jac }
}

#[inline]
fn axpy(p: &Phase, d: &Phase, s: f64) -> Phase {
    Phase {
        x: p.x + d.x * s,
        v: p.v + d.v * s,
        jac: [
            p.jac[0] + s * d.jac[0],
            p.jac[1] + s * d.jac[1],
            p.jac[2] + s * d.jac[2],
            p.jac[3] + s * d.jac[3],
        ],
    }
}

/// One classical fourth-order step.
#[inline]
pub fn rk4_step(metric: &ConformalMetric, p: &Phase, dt: f64, jacobi: bool) -> Phase {
    let k1 = deriv(metric, p, jacobi);
    let k2 = deriv(metric, &axpy(p, &k1, 0.5 * dt), jacobi);
    let k3 = deriv(metric, &axpy(p, &k2, 0.5 * dt), jacobi);
    let k4 = deriv(metric, &axpy(p, &k3, dt), jacobi);
    let w = dt / 6.0;
    let mut out = axpy(p, &k1, w);
    out = axpy(&out, &k2, 2.0 * w);
    out = axpy(&out, &k3, 2.0 * w);
    axpy(&out, &k4, w)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceOptions {
    pub h: f64,
    pub max_length: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions { h: DEFAULT_STEP, max_length: DEFAULT_MAX_LENGTH }
    }
}

impl TraceOptions {
    pub fn with_step(h: f64) -> Self {
        TraceOptions { h, ..Default::default() }
    }
}

/// Integrate from `start` until the geodesic leaves `disk`, calling `visit`
/// at every node (including `t = 0` and the refined exit node).
///
/// Returns the exit phase and exit time.
pub fn integrate<F>(
    metric: &ConformalMetric,
    disk: &Disk,
    start: Phase,
    opts: TraceOptions,
    jacobi: bool,
    mut visit: F,
) -> Result<(Phase, f64)>
where
    F: FnMut(f64, &Phase),
{
    let h = opts.h;
    let mut cur = start;
    let mut t = 0.0;
    let mut n: u64 = 0;
    visit(t, &cur);
    loop {
        let next = rk4_step(metric, &cur, h, jacobi);
        if disk.excess(next.x) > 0.0 {
            let s = refine_crossing(metric, &cur, h, jacobi, |p| disk.excess(p));
            let last = rk4_step(metric, &cur, s, jacobi);
            t += s;
            visit(t, &last);
            return Ok((last, t));
        }
        n += 1;
        t = n as f64 * h;
        cur = next;
        visit(t, &cur);
        if t > opts.max_length {
            return Err(Error::NoExit { cap: opts.max_length });
        }
    }
}

/// Bisection for the sub-step `s ∈ (0, h]` at which `level` changes sign
/// (negative at `s = 0`, positive at `s = h`).
pub(crate) fn refine_crossing<L>(metric: &ConformalMetric, from: &Phase, h: f64, jacobi: bool, level: L) -> f64
where
    L: Fn(Point) -> f64,
{
    let (mut lo, mut hi) = (0.0, h);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let d = level(rk4_step(metric, from, mid, jacobi).x);
        if d.abs() < 1e-13 {
            return mid;
        }
        if d > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Point,
    pub v: Vec2,
}

/// A geodesic sampled at a uniform arclength step, ending on the boundary.
#[derive(Clone, Debug)]
pub struct GeodesicPath {
    pub samples: Vec<Sample>,
    pub h: f64,
    pub exit_time: f64,
    /// Fan-beam coordinate the path was shot from, `None` for interior starts.
    pub origin: Option<FanBeamCoord>,
    pub domain: Disk,
}

impl GeodesicPath {
    pub fn start(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn end(&self) -> &Sample {
        self.samples.last().expect("path has at least two samples")
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Index `i` with `t_i <= t <= t_{i+1}` (clamped).
    pub fn segment_index(&self, t: f64) -> usize {
        let n = self.samples.len();
        let i = (t / self.h).floor();
        let i = if i < 0.0 { 0 } else { i as usize };
        i.min(n - 2)
    }

    /// Cubic Hermite interpolation of position and velocity at time `t`.
    pub fn state_at(&self, metric: &ConformalMetric, t: f64) -> (Point, Vec2) {
        let i = self.segment_index(t);
        let (s0, s1) = (&self.samples[i], &self.samples[i + 1]);
        let dt = s1.t - s0.t;
        let u = ((t - s0.t) / dt).clamp(0.0, 1.0);
        let a0 = metric.geodesic_accel(s0.x, s0.v);
        let a1 = metric.geodesic_accel(s1.x, s1.v);
        let x = hermite_vec(s0.x, s0.v, s1.x, s1.v, dt, u);
        let v = hermite_vec(s0.v, a0, s1.v, a1, dt, u);
        (x, v)
    }

    fn from_run(
        metric: &ConformalMetric,
        disk: &Disk,
        start: Phase,
        opts: TraceOptions,
        origin: Option<FanBeamCoord>,
    ) -> Result<Self> {
        let mut samples = Vec::with_capacity(((2.0 * disk.radius / opts.h) as usize).min(1 << 20) + 4);
        let (_, exit_time) = integrate(metric, disk, start, opts, false, |t, p| {
            samples.push(Sample { t, x: p.x, v: p.v });
        })?;
        Ok(GeodesicPath { samples, h: opts.h, exit_time, origin, domain: *disk })
    }
}

pub(crate) fn hermite_vec(p0: Vec2, m0: Vec2, p1: Vec2, m1: Vec2, dt: f64, u: f64) -> Vec2 {
    let u2 = u * u;
    let u3 = u2 * u;
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    p0 * h00 + m0 * (h10 * dt) + p1 * h01 + m1 * (h11 * dt)
}

pub(crate) fn hermite_scalar(p0: f64, m0: f64, p1: f64, m1: f64, dt: f64, u: f64) -> f64 {
    let u2 = u * u;
    let u3 = u2 * u;
    (2.0 * u3 - 3.0 * u2 + 1.0) * p0 + (u3 - 2.0 * u2 + u) * dt * m0 + (-2.0 * u3 + 3.0 * u2) * p1 + (u3 - u2) * dt * m1
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.abs() < FRAC_PI_2 - ALPHA_GUARD) {
        return Err(Error::InvalidAlpha { alpha });
    }
    Ok(())
}

/// Initial phase of the plus ray with fan-beam coordinate `(β, α)`.
pub fn entry_phase(metric: &ConformalMetric, disk: &Disk, beta: f64, alpha: f64) -> Phase {
    let x = disk.boundary_point(beta);
    Phase::new(x, metric.unit_in_direction(x, beta + PI + alpha))
}

/// Phase at the far end of a ray, reversed and projected exactly onto the
/// boundary circle so that it can seed the reversed integration.
fn reversed_exit(metric: &ConformalMetric, disk: &Disk, exit: &Phase) -> Phase {
    let d = exit.x - disk.center;
    let x = disk.center + d * (disk.radius / d.norm());
    Phase::new(x, metric.normalize(x, -exit.v))
}

/// Initial phase of a ray in either orientation.
pub fn ray_start(metric: &ConformalMetric, disk: &Disk, coord: FanBeamCoord, opts: TraceOptions) -> Result<Phase> {
    check_alpha(coord.alpha)?;
    let plus = entry_phase(metric, disk, coord.beta, coord.alpha);
    match coord.orientation {
        Orientation::Plus => Ok(plus),
        Orientation::Minus => {
            let (exit, _) = integrate(metric, disk, plus, opts, false, |_, _| {})?;
            Ok(reversed_exit(metric, disk, &exit))
        }
    }
}

/// Integrate the ray with fan-beam coordinate `coord` across `disk`.
pub fn shoot(metric: &ConformalMetric, disk: &Disk, coord: FanBeamCoord, h: f64) -> Result<GeodesicPath> {
    shoot_with(metric, disk, coord, TraceOptions::with_step(h))
}

pub fn shoot_with(metric: &ConformalMetric, disk: &Disk, coord: FanBeamCoord, opts: TraceOptions) -> Result<GeodesicPath> {
    if !(opts.h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {}", opts.h)));
    }
    let start = ray_start(metric, disk, coord, opts)?;
    GeodesicPath::from_run(metric, disk, start, opts, Some(coord))
}

/// Integrate from an arbitrary point and velocity (rescaled to unit speed)
/// until the geodesic leaves `disk`.
pub fn trace_from(metric: &ConformalMetric, disk: &Disk, x: Point, v: Vec2, opts: TraceOptions) -> Result<GeodesicPath> {
    GeodesicPath::from_run(metric, disk, Phase::new(x, metric.normalize(x, v)), opts, None)
}

/// The full chord of `disk` through `x` with direction `v`: the geodesic is
/// extended backwards to the boundary and re-integrated forwards.
///
/// Returns the path (starting on the boundary) and the time at which it
/// passes through `x`.
pub fn chord_through(
    metric: &ConformalMetric,
    disk: &Disk,
    x: Point,
    v: Vec2,
    opts: TraceOptions,
) -> Result<(GeodesicPath, f64)> {
    let v = metric.normalize(x, v);
    let (back, t_back) = integrate(metric, disk, Phase::new(x, -v), opts, false, |_, _| {})?;
    let start = reversed_exit(metric, disk, &back);
    let coord = disk.coord_of(start.x, start.v, Orientation::Plus);
    let path = GeodesicPath::from_run(metric, disk, start, opts, Some(coord))?;
    Ok((path, t_back))
}

/// Fan-beam coordinate of the reversed ray starting at the terminal point of
/// `path`, i.e. the plus coordinate of the same geodesic traversed backwards.
pub fn exit_coord(disk: &Disk, path: &GeodesicPath) -> Result<FanBeamCoord> {
    let end = path.end();
    let distance = disk.excess(end.x).abs();
    if distance > 1e-6 {
        return Err(Error::NotOnBoundary { distance });
    }
    Ok(disk.coord_of(end.x, -end.v, Orientation::Plus))
}

/// First crossing of `sub`'s boundary by `path`, expressed in `sub`'s
/// fan-beam chart, together with the arclength at which it happens.
///
/// `None` when the path misses `sub` or meets it nearly tangentially.
pub fn transport_to_subdomain(metric: &ConformalMetric, path: &GeodesicPath, sub: &Disk) -> Option<(FanBeamCoord, f64)> {
    let samples = &path.samples;
    let first_inside = samples.iter().position(|s| sub.excess(s.x) <= 0.0)?;
    let (x, v, t) = if first_inside == 0 {
        let s = &samples[0];
        if sub.excess(s.x) < -1e-12 {
            // starts strictly inside: no boundary entry
            return None;
        }
        (s.x, s.v, s.t)
    } else {
        let prev = &samples[first_inside - 1];
        let next = &samples[first_inside];
        let dt = next.t - prev.t;
        let from = Phase::new(prev.x, prev.v);
        // level negative at s = 0 (outside), flipped to match refine_crossing
        let s = refine_crossing(metric, &from, dt, false, |p| -sub.excess(p));
        let p = rk4_step(metric, &from, s, false);
        (p.x, p.v, prev.t + s)
    };
    let coord = sub.coord_of(x, v, Orientation::Plus);
    if coord.alpha.abs() >= FRAC_PI_2 - 1e-4 {
        return None;
    }
    Some((coord, t))
}
