//! Weighted geodesic X-ray transform, attenuation weights and phantoms.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geodesic::{shoot_with, trace_from, Disk, FanBeamCoord, GeodesicPath, Orientation, TraceOptions};
use crate::grid::{GridFunction, Sinogram, SinogramDims};
use crate::jacobi::ConjugateEvent;
use crate::metric::ConformalMetric;
use crate::vec2::{Point, Vec2};

/// Attenuation coefficient, a function of position only.
#[derive(Clone, Debug)]
pub enum Sigma {
    Constant(f64),
    Field(Arc<GridFunction>),
}

impl Sigma {
    #[inline]
    pub fn at(&self, p: Point) -> f64 {
        match self {
            Sigma::Constant(s) => *s,
            Sigma::Field(g) => g.eval(p),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Sigma::Constant(s) => *s >= 0.0,
            Sigma::Field(g) => g.values.iter().all(|&v| v >= 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("attenuation must be nonnegative".into()))
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Sigma::Constant(s) => *s == 0.0,
            Sigma::Field(g) => g.values.iter().all(|&v| v == 0.0),
        }
    }
}

pub type WeightFn = Arc<dyn Fn(Point, Vec2) -> f64 + Send + Sync>;

/// The weight `κ(x, v)` multiplying the integrand.
#[derive(Clone)]
pub enum WeightSpec {
    Unit,
    /// `κ(x, v) = exp(−∫₀^τ σ(γ_{x,v}(s)) ds)`, integrated up to the exit time.
    Attenuation(Sigma),
    Custom(WeightFn),
}

impl fmt::Debug for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightSpec::Unit => f.write_str("Unit"),
            WeightSpec::Attenuation(s) => f.debug_tuple("Attenuation").field(s).finish(),
            WeightSpec::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl WeightSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            WeightSpec::Attenuation(s) => s.validate(),
            _ => Ok(()),
        }
    }

    pub fn is_unit(&self) -> bool {
        match self {
            WeightSpec::Unit => true,
            WeightSpec::Attenuation(s) => s.is_zero(),
            WeightSpec::Custom(_) => false,
        }
    }
}

/// `κ` at every node of `path`, for the direction the path is traversed in.
pub fn path_kappa(path: &GeodesicPath, weight: &WeightSpec) -> Vec<f64> {
    let s = &path.samples;
    match weight {
        WeightSpec::Unit => vec![1.0; s.len()],
        WeightSpec::Custom(k) => s.iter().map(|p| k(p.x, p.v)).collect(),
        WeightSpec::Attenuation(sigma) => {
            let n = s.len();
            let sig: Vec<f64> = s.iter().map(|p| sigma.at(p.x)).collect();
            let mut out = vec![1.0; n];
            let mut tail = 0.0;
            for i in (0..n - 1).rev() {
                tail += 0.5 * (sig[i] + sig[i + 1]) * (s[i + 1].t - s[i].t);
                out[i] = (-tail).exp();
            }
            out
        }
    }
}

/// Trapezoid weights times `κ`: `Σ wᵢ f(xᵢ) ≈ ∫ κ f ds` along `path`.
pub fn ray_quadrature(path: &GeodesicPath, weight: &WeightSpec) -> Vec<(Point, f64)> {
    let s = &path.samples;
    let kappa = path_kappa(path, weight);
    let n = s.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 { s[i].t - s[i - 1].t } else { 0.0 };
            let right = if i + 1 < n { s[i + 1].t - s[i].t } else { 0.0 };
            (s[i].x, 0.5 * (left + right) * kappa[i])
        })
        .collect()
}

fn coord_of_cell(dims: &SinogramDims, orientation: Orientation, k: usize) -> FanBeamCoord {
    let (i, j) = (k / dims.n_alpha, k % dims.n_alpha);
    FanBeamCoord { beta: dims.beta(i), alpha: dims.alpha(j), orientation }
}

/// `Xf(β, α) = ∫ κ(γ, γ̇) f(γ) ds` on every cell of `dims`.
pub fn forward(
    metric: &ConformalMetric,
    disk: &Disk,
    weight: &WeightSpec,
    f: &GridFunction,
    dims: SinogramDims,
    orientation: Orientation,
    h: f64,
) -> Result<Sinogram> {
    dims.validate()?;
    weight.validate()?;
    let opts = TraceOptions::with_step(h);
    let values = (0..dims.len())
        .into_par_iter()
        .map(|k| {
            let path = shoot_with(metric, disk, coord_of_cell(&dims, orientation, k), opts)?;
            Ok(ray_quadrature(&path, weight).iter().map(|&(x, w)| w * f.eval(x)).sum())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Sinogram { dims, orientation, values, mask: None })
}

/// Precomputed quadrature nodes for repeated forward projections with the
/// same geometry.
#[derive(Clone, Debug)]
pub struct ForwardPlan {
    pub dims: SinogramDims,
    pub orientation: Orientation,
    /// Cells that were traced; others evaluate to zero and are masked.
    pub active: Option<Vec<bool>>,
    offsets: Vec<usize>,
    nodes: Vec<[f32; 3]>,
}

#[derive(Clone, Debug, Default)]
pub struct PlanOptions {
    pub trace: TraceOptions,
    /// Keep only nodes inside this disk.
    pub clip: Option<Disk>,
    /// Trace only these cells.
    pub cells: Option<Vec<bool>>,
}

impl ForwardPlan {
    pub fn build(
        metric: &ConformalMetric,
        disk: &Disk,
        weight: &WeightSpec,
        dims: SinogramDims,
        orientation: Orientation,
        opts: &PlanOptions,
    ) -> Result<Self> {
        dims.validate()?;
        weight.validate()?;
        let per_ray = (0..dims.len())
            .into_par_iter()
            .map(|k| {
                if opts.cells.as_ref().is_some_and(|c| !c[k]) {
                    return Ok(Vec::new());
                }
                let path = shoot_with(metric, disk, coord_of_cell(&dims, orientation, k), opts.trace)?;
                Ok(ray_quadrature(&path, weight)
                    .into_iter()
                    .filter(|(x, w)| *w != 0.0 && opts.clip.is_none_or(|c| c.contains(*x)))
                    .map(|(x, w)| [x.x as f32, x.y as f32, w as f32])
                    .collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut offsets = Vec::with_capacity(per_ray.len() + 1);
        offsets.push(0);
        let total = per_ray.iter().map(Vec::len).sum();
        let mut nodes = Vec::with_capacity(total);
        for r in per_ray {
            nodes.extend_from_slice(&r);
            offsets.push(nodes.len());
        }
        Ok(ForwardPlan { dims, orientation, active: opts.cells.clone(), offsets, nodes })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Quadrature nodes `(x, y, weight)` of cell `k`.
    pub fn ray(&self, k: usize) -> &[[f32; 3]] {
        &self.nodes[self.offsets[k]..self.offsets[k + 1]]
    }

    pub fn apply(&self, f: &GridFunction) -> Sinogram {
        let values = (0..self.dims.len())
            .into_par_iter()
            .map(|k| {
                self.ray(k)
                    .iter()
                    .map(|n| n[2] as f64 * f.eval(Point::new(n[0] as f64, n[1] as f64)))
                    .sum()
            })
            .collect();
        Sinogram { dims: self.dims, orientation: self.orientation, values, mask: self.active.clone() }
    }
}

/// `κ(x, v)` for a position-dependent attenuation, by tracing to the exit.
pub fn attenuation_kappa(
    metric: &ConformalMetric,
    disk: &Disk,
    sigma: &Sigma,
    x: Point,
    v: Vec2,
    opts: TraceOptions,
) -> Result<f64> {
    if let Sigma::Constant(s) = sigma {
        if *s == 0.0 {
            return Ok(1.0);
        }
    }
    let path = trace_from(metric, disk, x, v, opts)?;
    Ok(path_kappa(&path, &WeightSpec::Attenuation(sigma.clone()))[0])
}

/// `det [[κ(p₁,v₁), κ(p₂,v₂)], [κ(p₁,−v₁), κ(p₂,−v₂)]]` with the tangents
/// oriented so that the geodesic runs from `p₂` to `p₁`.
///
/// For an attenuation this equals `κ(p₁,v₁) κ(p₂,−v₂) (1 − e^{−2∫σ})`, the
/// integral taken over the segment between the points.
pub fn r1_determinant(
    metric: &ConformalMetric,
    disk: &Disk,
    weight: &WeightSpec,
    event: &ConjugateEvent,
    opts: TraceOptions,
) -> Result<f64> {
    let s = if event.t2 > event.t1 { -1.0 } else { 1.0 };
    let (v1, v2) = (event.v1 * s, event.v2 * s);
    let k = |x: Point, v: Vec2| -> Result<f64> {
        match weight {
            WeightSpec::Unit => Ok(1.0),
            WeightSpec::Custom(f) => Ok(f(x, v)),
            WeightSpec::Attenuation(sigma) => attenuation_kappa(metric, disk, sigma, x, v, opts),
        }
    };
    let (a, b) = (k(event.p1, v1)?, k(event.p2, v2)?);
    let (c, d) = (k(event.p1, -v1)?, k(event.p2, -v2)?);
    Ok(a * d - b * c)
}

/// `amplitude · exp(−|x − center|² / (2 width²))`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Blob {
    pub center: Point,
    pub width: f64,
    pub amplitude: f64,
}

impl Blob {
    pub fn new(x: f64, y: f64, width: f64, amplitude: f64) -> Self {
        Blob { center: Point::new(x, y), width, amplitude }
    }

    #[inline]
    pub fn value(&self, p: Point) -> f64 {
        let d = p - self.center;
        self.amplitude * (-d.dot(d) / (2.0 * self.width * self.width)).exp()
    }
}

/// Radius that blobs (center plus four widths) must stay within.
pub const BLOB_RADIUS_LIMIT: f64 = 0.95;

pub fn gaussian_blob(template: &GridFunction, blob: Blob) -> Result<GridFunction> {
    blob_collection(template, &[blob])
}

/// Sum of Gaussian blobs sampled at the nodes of `template`'s grid.
pub fn blob_collection(template: &GridFunction, blobs: &[Blob]) -> Result<GridFunction> {
    let spacing = template.dx.max(template.dy);
    for b in blobs {
        if b.center.norm() + 4.0 * b.width > BLOB_RADIUS_LIMIT {
            return Err(Error::BlobOutsideDomain { x: b.center.x, y: b.center.y, width: b.width });
        }
        if !(b.width > 2.0 * spacing) {
            return Err(Error::InvalidArgument(format!(
                "blob width {} is not resolved by grid spacing {spacing}",
                b.width
            )));
        }
    }
    Ok(template.same_shape().from_fn(|p| blobs.iter().map(|b| b.value(p)).sum()))
}

/// A blob modulated by `cos(k · (x − center))`: its singular content sits
/// on covectors near `±k`.
pub fn wave_packet(template: &GridFunction, blob: Blob, k: Vec2) -> Result<GridFunction> {
    let spacing = template.dx.max(template.dy);
    let wavelength = std::f64::consts::TAU / k.norm();
    if !(wavelength > 6.0 * spacing) {
        return Err(Error::InvalidArgument(format!("wavelength {wavelength} is not resolved by grid spacing {spacing}")));
    }
    gaussian_blob(template, blob).map(|g| g.from_fn(|p| blob.value(p) * k.dot(p - blob.center).cos()))
}

/// Eight blobs alternating in sign on a circle of radius 0.55 around `(0.2, 0)`.
pub fn ring_of_blobs(width: f64) -> Vec<Blob> {
    (0..8)
        .map(|k| {
            let th = k as f64 * std::f64::consts::TAU / 8.0;
            let amp = if k % 2 == 0 { 1.0 } else { -1.0 };
            Blob::new(0.2 + 0.55 * th.cos(), 0.55 * th.sin(), width, amp)
        })
        .collect()
}
