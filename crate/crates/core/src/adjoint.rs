//! Backprojection `X*`, the normal operator `N = X*X`, the Laplace–Beltrami
//! operator and the artifact experiment `−C Δ_g N² f`.
//!
//! The adjoint is taken with respect to `dVol_g` on the domain and the
//! Santaló measure `cos α dℓ dα` on the ray space:
//! `X*g(x) = ∫_{S¹} κ(x, θ) g(γ_{x,θ}) dθ`.

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geodesic::{integrate, Disk, Orientation, Phase, TraceOptions};
use crate::grid::{GridFunction, Sinogram, SinogramDims};
use crate::jacobi::{conjugate_locus, ConjugateLocus};
use crate::metric::ConformalMetric;
use crate::vec2::Point;
use crate::xray::{Blob, ForwardPlan, PlanOptions, WeightSpec};

/// `C` in `−C Δ_g N²`: the symbol of `N` is `4π/|ξ|` for unit weight.
pub const ARTIFACT_C: f64 = 1.0 / (16.0 * std::f64::consts::PI * std::f64::consts::PI);
/// Artifact energy within this distance of a predicted locus counts as localized.
pub const LOCUS_DISTANCE: f64 = 0.05;
/// Dilation of a blob's support, in blob widths, excluded from artifact energy.
pub const SUPPORT_DILATION: f64 = 3.0;
pub const DEFAULT_DIRECTIONS: usize = 256;
/// The artifact reconstruction is evaluated inside this fraction of the radius.
pub const RIM_FRACTION: f64 = 0.95;

/// Equally spaced directions on `[0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DirectionGrid {
    pub n: usize,
}

impl DirectionGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 64 || n % 2 != 0 {
            return Err(Error::InvalidArgument(format!("direction count must be even and at least 64, got {n}")));
        }
        Ok(DirectionGrid { n })
    }

    pub fn step(&self) -> f64 {
        TAU / self.n as f64
    }

    pub fn angle(&self, k: usize) -> f64 {
        k as f64 * self.step()
    }
}

impl Default for DirectionGrid {
    fn default() -> Self {
        DirectionGrid { n: DEFAULT_DIRECTIONS }
    }
}

/// What is known about the geodesic leaving node `x` in direction `θ_k`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TraceEnd {
    /// Plus-chart coordinate of the reversed ray, i.e. of the ray that
    /// enters at this exit point and passes through `x` in direction `−θ_k`.
    pub beta: f32,
    pub alpha: f32,
    /// `κ(x, θ_k)`.
    pub kappa: f32,
    /// `|b|` at the exit point for the Jacobi field with `(b, b')(0) = (0, 1)` at `x`.
    pub spread: f32,
}

/// Ray ends for every interior grid node and every direction of a
/// [`DirectionGrid`]; reused by all backprojections on the same geometry.
#[derive(Clone, Debug)]
pub struct RayTable {
    pub grid: GridFunction,
    pub disk: Disk,
    pub dirs: DirectionGrid,
    /// Grid indices of the nodes that were traced.
    pub nodes: Vec<usize>,
    ends: Vec<TraceEnd>,
}

impl RayTable {
    pub fn build(
        metric: &ConformalMetric,
        disk: &Disk,
        weight: &WeightSpec,
        grid: &GridFunction,
        dirs: DirectionGrid,
        opts: TraceOptions,
    ) -> Result<Self> {
        weight.validate()?;
        let nodes: Vec<usize> = grid.nodes().filter(|(_, p)| disk.excess(*p) < -1e-9).map(|(k, _)| k).collect();
        let ends = nodes
            .par_iter()
            .map(|&k| {
                let x = grid.node(k / grid.ny, k % grid.ny);
                (0..dirs.n).map(|d| trace_end(metric, disk, weight, x, dirs.angle(d), opts)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        Ok(RayTable { grid: grid.same_shape(), disk: *disk, dirs, nodes, ends })
    }

    #[inline]
    pub fn end(&self, node: usize, dir: usize) -> &TraceEnd {
        &self.ends[node * self.dirs.n + dir]
    }

    /// Chart coordinate and source-end spread of the directed ray through
    /// node `node` with direction `θ_dir`, in the given orientation.
    #[inline]
    pub fn ray(&self, node: usize, dir: usize, orientation: Orientation) -> (f64, f64, f64) {
        let half = self.dirs.n / 2;
        let e = match orientation {
            Orientation::Plus => self.end(node, (dir + half) % self.dirs.n),
            Orientation::Minus => self.end(node, dir),
        };
        (e.beta as f64, e.alpha as f64, e.spread as f64)
    }

    #[inline]
    pub fn kappa(&self, node: usize, dir: usize) -> f64 {
        self.end(node, dir).kappa as f64
    }

    /// `X*g` at every traced node.
    pub fn backproject(&self, g: &Sinogram) -> GridFunction {
        let dth = self.dirs.step();
        let vals: Vec<f64> = (0..self.nodes.len())
            .into_par_iter()
            .map(|i| {
                (0..self.dirs.n)
                    .map(|d| {
                        let (b, a, _) = self.ray(i, d, g.orientation);
                        self.kappa(i, d) * g.eval(b, a)
                    })
                    .sum::<f64>()
                    * dth
            })
            .collect();
        let mut out = self.grid.same_shape();
        for (i, &k) in self.nodes.iter().enumerate() {
            out.values[k] = vals[i];
        }
        out
    }
}

fn trace_end(
    metric: &ConformalMetric,
    disk: &Disk,
    weight: &WeightSpec,
    x: Point,
    theta: f64,
    opts: TraceOptions,
) -> Result<TraceEnd> {
    let v = metric.unit_in_direction(x, theta);
    if metric.is_euclidean() {
        return Ok(straight_trace_end(disk, weight, x, v, opts.h));
    }
    let mut sigma_int = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    let sigma = match weight {
        WeightSpec::Attenuation(s) if !s.is_zero() => Some(s),
        _ => None,
    };
    let (exit, _) = integrate(metric, disk, Phase::new(x, v), opts, true, |t, p| {
        if let Some(s) = sigma {
            let here = s.at(p.x);
            if let Some((t0, s0)) = prev {
                sigma_int += 0.5 * (s0 + here) * (t - t0);
            }
            prev = Some((t, here));
        }
    })?;
    let kappa = match weight {
        WeightSpec::Unit => 1.0,
        WeightSpec::Attenuation(_) => (-sigma_int).exp(),
        WeightSpec::Custom(f) => f(x, v),
    };
    let d = exit.x - disk.center;
    let y = disk.center + d * (disk.radius / d.norm());
    let c = disk.coord_of(y, -exit.v, Orientation::Plus);
    Ok(TraceEnd { beta: c.beta as f32, alpha: c.alpha as f32, kappa: kappa as f32, spread: exit.jac[2].abs() as f32 })
}

/// Closed-form exit of a straight line from `x` with unit direction `v`.
fn straight_trace_end(disk: &Disk, weight: &WeightSpec, x: Point, v: crate::vec2::Vec2, h: f64) -> TraceEnd {
    let d = x - disk.center;
    let bq = d.dot(v);
    let t = -bq + (bq * bq - d.dot(d) + disk.radius * disk.radius).max(0.0).sqrt();
    let exit = x + v * t;
    let c = disk.coord_of(exit, -v, Orientation::Plus);
    let kappa = match weight {
        WeightSpec::Unit => 1.0,
        WeightSpec::Attenuation(crate::xray::Sigma::Constant(s)) => (-s * t).exp(),
        WeightSpec::Attenuation(s) => {
            let n = ((t / h).ceil() as usize).max(1);
            let dt = t / n as f64;
            let sum: f64 = (0..=n)
                .map(|i| {
                    let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                    w * s.at(x + v * (i as f64 * dt))
                })
                .sum();
            (-sum * dt).exp()
        }
        WeightSpec::Custom(f) => f(x, v),
    };
    TraceEnd { beta: c.beta as f32, alpha: c.alpha as f32, kappa: kappa as f32, spread: t as f32 }
}

/// `X*g` on the nodes of `out_grid` inside `disk`.
pub fn backproject(
    metric: &ConformalMetric,
    disk: &Disk,
    weight: &WeightSpec,
    g: &Sinogram,
    out_grid: &GridFunction,
    dirs: DirectionGrid,
    opts: TraceOptions,
) -> Result<GridFunction> {
    Ok(RayTable::build(metric, disk, weight, out_grid, dirs, opts)?.backproject(g))
}

/// `N = X*X` with the forward plan and ray table precomputed.
#[derive(Clone, Debug)]
pub struct NormalOperator {
    pub plan: ForwardPlan,
    pub table: RayTable,
}

impl NormalOperator {
    pub fn build(
        metric: &ConformalMetric,
        disk: &Disk,
        weight: &WeightSpec,
        grid: &GridFunction,
        dims: SinogramDims,
        dirs: DirectionGrid,
        opts: TraceOptions,
    ) -> Result<Self> {
        let plan = ForwardPlan::build(metric, disk, weight, dims, Orientation::Plus, &PlanOptions {
            trace: opts,
            ..Default::default()
        })?;
        let table = RayTable::build(metric, disk, weight, grid, dirs, opts)?;
        Ok(NormalOperator { plan, table })
    }

    pub fn apply(&self, f: &GridFunction) -> GridFunction {
        self.table.backproject(&self.plan.apply(f))
    }
}

pub fn normal_op(
    metric: &ConformalMetric,
    disk: &Disk,
    weight: &WeightSpec,
    f: &GridFunction,
    dims: SinogramDims,
    dirs: DirectionGrid,
    opts: TraceOptions,
) -> Result<GridFunction> {
    Ok(NormalOperator::build(metric, disk, weight, f, dims, dirs, opts)?.apply(f))
}

/// `⟨g₁, g₂⟩` in the Santaló measure `cos α · √c(y) R dβ dα` of `disk`.
pub fn sinogram_inner(metric: &ConformalMetric, disk: &Disk, a: &Sinogram, b: &Sinogram) -> f64 {
    let d = &a.dims;
    assert_eq!(d, &b.dims);
    let mut s = 0.0;
    for i in 0..d.n_beta {
        let y = disk.boundary_point(d.beta(i));
        let dl = metric.factor(y).sqrt() * disk.radius;
        for j in 0..d.n_alpha {
            let w = if j == 0 || j == d.n_alpha - 1 { 0.5 } else { 1.0 };
            s += w * dl * d.alpha(j).cos() * a.get(i, j) * b.get(i, j);
        }
    }
    s * d.d_alpha() * d.d_beta()
}

/// `⟨f₁, f₂⟩` in `dVol_g = c dx dy`.
pub fn grid_inner(metric: &ConformalMetric, a: &GridFunction, b: &GridFunction) -> f64 {
    assert!(a.same_grid(b));
    a.nodes().map(|(k, p)| metric.factor(p) * a.values[k] * b.values[k]).sum::<f64>() * a.cell_area()
}

/// `Δ_g f = c⁻¹ (∂²ₓ + ∂²ᵧ) f` by the five-point stencil; the outer ring of
/// nodes is set to zero.
pub fn laplace_beltrami(metric: &ConformalMetric, f: &GridFunction) -> Result<GridFunction> {
    if f.nx < 16 || f.ny < 16 {
        return Err(Error::GridTooCoarse { n: f.nx.min(f.ny), min: 16 });
    }
    let mut out = f.same_shape();
    let (ix2, iy2) = (1.0 / (f.dx * f.dx), 1.0 / (f.dy * f.dy));
    for i in 1..f.nx - 1 {
        for j in 1..f.ny - 1 {
            let c = f.get(i, j);
            let lap = (f.get(i + 1, j) + f.get(i - 1, j) - 2.0 * c) * ix2 + (f.get(i, j + 1) + f.get(i, j - 1) - 2.0 * c) * iy2;
            out.set(i, j, lap / metric.factor(f.node(i, j)));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct ArtifactReport {
    pub recon: GridFunction,
    /// `|recon − f₁|`
    pub error: GridFunction,
    pub loci: Vec<ConjugateLocus>,
    pub localization_score: f64,
    /// Artifact energy of each blob reconstructed on its own.
    pub blob_energies: Vec<f64>,
    /// Whether each blob's conjugate locus meets the domain.
    pub blob_has_locus: Vec<bool>,
}

#[derive(Clone, Copy, Debug)]
pub struct ArtifactOptions {
    pub dims: SinogramDims,
    pub dirs: DirectionGrid,
    pub trace: TraceOptions,
    pub locus_dirs: usize,
}

impl Default for ArtifactOptions {
    fn default() -> Self {
        ArtifactOptions {
            dims: SinogramDims::default(),
            dirs: DirectionGrid::default(),
            trace: TraceOptions::with_step(1e-2),
            locus_dirs: 720,
        }
    }
}

/// Distance from `p` to the nearest vertex or segment of any locus branch.
fn distance_to_loci(p: Point, loci: &[Vec<Vec<Point>>]) -> f64 {
    let mut best = f64::INFINITY;
    for branches in loci {
        for run in branches {
            if run.len() == 1 {
                best = best.min(p.dist(run[0]));
            }
            for w in run.windows(2) {
                let (a, b) = (w[0], w[1]);
                let ab = b - a;
                let len2 = ab.dot(ab);
                let s = if len2 > 0.0 { ((p - a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
                best = best.min(p.dist(a + ab * s));
            }
        }
    }
    best
}

/// Energy `Σ |recon − f|² dA` outside the dilated supports of `blobs`.
fn artifact_energy(metric: &ConformalMetric, disk: &Disk, err: &GridFunction, blobs: &[Blob]) -> (f64, Vec<(Point, f64)>) {
    let mut total = 0.0;
    let mut cells = Vec::new();
    for (k, p) in err.nodes() {
        if !disk.contains(p) || blobs.iter().any(|b| p.dist(b.center) <= (2.0 + SUPPORT_DILATION) * b.width) {
            continue;
        }
        let e = err.values[k] * err.values[k] * metric.factor(p) * err.cell_area();
        total += e;
        cells.push((p, e));
    }
    (total, cells)
}

/// `−C Δ_g N² f₁` for a blob collection, with the conjugate loci of the blob
/// centers and the fraction of artifact energy lying near them.
pub fn artifact_pipeline(
    metric: &ConformalMetric,
    disk: &Disk,
    grid: &GridFunction,
    blobs: &[Blob],
    opts: &ArtifactOptions,
) -> Result<ArtifactReport> {
    let f1 = crate::xray::blob_collection(grid, blobs)?;
    let normal = NormalOperator::build(metric, disk, &WeightSpec::Unit, grid, opts.dims, opts.dirs, opts.trace)?;
    // N f is only computed inside the disk; keep the stencil off the rim
    let inner = Disk { center: disk.center, radius: disk.radius * RIM_FRACTION };
    let recon_of = |f: &GridFunction| -> Result<GridFunction> {
        let mut r = laplace_beltrami(metric, &normal.apply(&normal.apply(f)))?;
        r.scale(-ARTIFACT_C);
        r.restrict_to(&inner);
        Ok(r)
    };
    let recon = recon_of(&f1)?;
    let error = GridFunction { values: recon.values.iter().zip(&f1.values).map(|(r, f)| (r - f).abs()).collect(), ..recon.clone() };

    let loci = blobs
        .iter()
        .map(|b| conjugate_locus(metric, disk, b.center, opts.locus_dirs, opts.trace.h))
        .collect::<Result<Vec<_>>>()?;
    let polylines: Vec<Vec<Vec<Point>>> =
        loci.iter().map(|l| l.branches().into_iter().map(|r| r.iter().map(|v| v.point).collect()).collect()).collect();

    let (total, cells) = artifact_energy(metric, &inner, &error, blobs);
    let near: f64 = cells.iter().filter(|(p, _)| distance_to_loci(*p, &polylines) <= LOCUS_DISTANCE).map(|c| c.1).sum();
    let localization_score = if total > 0.0 { near / total } else { 0.0 };

    let mut blob_energies = Vec::with_capacity(blobs.len());
    for b in blobs {
        let fb = crate::xray::gaussian_blob(grid, *b)?;
        let rb = recon_of(&fb)?;
        let eb = GridFunction { values: rb.values.iter().zip(&fb.values).map(|(r, f)| (r - f).abs()).collect(), ..rb };
        blob_energies.push(artifact_energy(metric, &inner, &eb, std::slice::from_ref(b)).0);
    }
    let blob_has_locus = loci.iter().map(|l| !l.is_empty()).collect();
    Ok(ArtifactReport { recon, error, loci, localization_score, blob_energies, blob_has_locus })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xray::{gaussian_blob, Sigma};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn grid(n: usize) -> GridFunction {
        GridFunction::covering(&Disk::unit(), n).unwrap()
    }

    fn coarse() -> TraceOptions {
        TraceOptions::with_step(2e-2)
    }

    #[test]
    fn direction_grid_validation() {
        assert!(DirectionGrid::new(63).is_err());
        assert!(DirectionGrid::new(32).is_err());
        assert!(DirectionGrid::new(64).is_ok());
    }

    #[test]
    fn backprojection_of_constants() {
        let e = ConformalMetric::euclidean();
        let d = Disk::unit();
        let dims = SinogramDims::new(36, 19);
        let dirs = DirectionGrid::new(64).unwrap();
        let table = RayTable::build(&e, &d, &WeightSpec::Unit, &grid(21), dirs, coarse()).unwrap();
        let zero = table.backproject(&Sinogram::zeros(dims, Orientation::Plus));
        assert!(zero.values.iter().all(|&v| v == 0.0));
        let mut one = Sinogram::zeros(dims, Orientation::Plus);
        one.values.iter_mut().for_each(|v| *v = 1.0);
        for o in [Orientation::Plus, Orientation::Minus] {
            one.orientation = o;
            let b = table.backproject(&one);
            for &k in &table.nodes {
                let p = b.node(k / b.ny, k % b.ny);
                // rays through nodes near the rim leave the guarded α range
                if p.norm() < 0.95 {
                    assert!((b.values[k] - TAU).abs() < 1e-6, "{} at {p:?}", b.values[k]);
                }
            }
        }
    }

    #[test]
    fn table_coordinates_match_the_traced_ray() {
        let m = ConformalMetric::reference_lens();
        let d = Disk::unit();
        let g = grid(9);
        let dirs = DirectionGrid::new(64).unwrap();
        let t = RayTable::build(&m, &d, &WeightSpec::Unit, &g, dirs, TraceOptions::with_step(1e-3)).unwrap();
        let i = t.nodes.iter().position(|&k| k == 3 * 9 + 5).unwrap();
        let x = g.node(3, 5);
        for dir in [0, 7, 40] {
            let (b, a, _) = t.ray(i, dir, Orientation::Plus);
            let path = crate::geodesic::shoot(&m, &d, crate::geodesic::FanBeamCoord::plus(b, a), 1e-3).unwrap();
            let closest = path.samples.iter().map(|s| s.x.dist(x)).fold(f64::INFINITY, f64::min);
            assert!(closest < 1e-3, "{closest}");
            let (bm, am, _) = t.ray(i, dir, Orientation::Minus);
            let path = crate::geodesic::shoot(&m, &d, crate::geodesic::FanBeamCoord::minus(bm, am), 1e-3).unwrap();
            let hit = path.samples.iter().min_by(|p, q| p.x.dist(x).partial_cmp(&q.x.dist(x)).unwrap()).unwrap();
            assert!(hit.x.dist(x) < 1e-3);
            let dir_here = m.unit_in_direction(x, dirs.angle(dir));
            assert!((hit.v - dir_here).norm() < 1e-2);
        }
    }

    #[test]
    fn euclidean_spread_is_distance() {
        let e = ConformalMetric::euclidean();
        let d = Disk::unit();
        let end = trace_end(&e, &d, &WeightSpec::Unit, Point::new(0.3, 0.0), 0.0, TraceOptions::default()).unwrap();
        assert!((end.spread - 0.7).abs() < 1e-6);
        let end = trace_end(&e, &d, &WeightSpec::Attenuation(Sigma::Constant(1.0)), Point::ZERO, 1.0, TraceOptions::default())
            .unwrap();
        assert!((end.kappa as f64 - (-1.0f64).exp()).abs() < 1e-6);
    }

    fn smooth_random(g: &GridFunction, rng: &mut ChaCha8Rng) -> GridFunction {
        let blobs: Vec<Blob> = (0..3)
            .map(|_| Blob::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(0.1..0.12), rng.gen_range(-1.0..1.0)))
            .collect();
        crate::xray::blob_collection(g, &blobs).unwrap()
    }

    fn smooth_sinogram(dims: SinogramDims, rng: &mut ChaCha8Rng) -> Sinogram {
        let (p, q, r) = (rng.gen_range(0.0..TAU), rng.gen_range(0.5..1.5), rng.gen_range(-1.0..1.0));
        let mut s = Sinogram::zeros(dims, Orientation::Plus);
        for i in 0..dims.n_beta {
            for j in 0..dims.n_alpha {
                let (b, a) = (dims.beta(i), dims.alpha(j));
                s.values[i * dims.n_alpha + j] = (1.0 + 0.5 * (b + p).sin() + r * (q * a).cos()) * a.cos();
            }
        }
        s
    }

    #[test]
    fn adjoint_identity_lens() {
        let m = ConformalMetric::reference_lens();
        let d = Disk::unit();
        let g0 = grid(51);
        let dims = SinogramDims::new(180, 90);
        let dirs = DirectionGrid::new(128).unwrap();
        let opts = coarse();
        let plan = ForwardPlan::build(&m, &d, &WeightSpec::Unit, dims, Orientation::Plus, &PlanOptions { trace: opts, ..Default::default() })
            .unwrap();
        let table = RayTable::build(&m, &d, &WeightSpec::Unit, &g0, dirs, opts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..3 {
            let f = smooth_random(&g0, &mut rng);
            let g = smooth_sinogram(dims, &mut rng);
            let xf = plan.apply(&f);
            let lhs = sinogram_inner(&m, &d, &xf, &g);
            let rhs = grid_inner(&m, &f, &table.backproject(&g));
            let scale = sinogram_inner(&m, &d, &xf, &xf).sqrt() * sinogram_inner(&m, &d, &g, &g).sqrt();
            assert!(((lhs - rhs) / scale).abs() < 1e-2, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn normal_operator_symmetric_and_positive() {
        let m = ConformalMetric::reference_lens();
        let d = Disk::unit();
        let g0 = grid(51);
        let n = NormalOperator::build(&m, &d, &WeightSpec::Unit, &g0, SinogramDims::new(180, 90), DirectionGrid::new(128).unwrap(), coarse())
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (f1, f2) = (smooth_random(&g0, &mut rng), smooth_random(&g0, &mut rng));
        let a = grid_inner(&m, &n.apply(&f1), &f2);
        let b = grid_inner(&m, &f1, &n.apply(&f2));
        let s = grid_inner(&m, &f1, &f1).sqrt() * grid_inner(&m, &f2, &f2).sqrt();
        assert!(((a - b) / s).abs() < 1e-2);
        for _ in 0..5 {
            let f = smooth_random(&g0, &mut rng);
            assert!(grid_inner(&m, &n.apply(&f), &f) > 0.0);
        }
    }

    #[test]
    fn normal_operator_is_radial_for_centered_blob() {
        let e = ConformalMetric::euclidean();
        let d = Disk::unit();
        let g0 = grid(41);
        let f = gaussian_blob(&g0, Blob::new(0.0, 0.0, 0.12, 1.0)).unwrap();
        let nf = normal_op(&e, &d, &WeightSpec::Unit, &f, SinogramDims::new(360, 181), DirectionGrid::new(128).unwrap(), coarse()).unwrap();
        let peak = nf.max_abs();
        let mut worst: f64 = 0.0;
        for i in 0..41 {
            for j in 0..41 {
                // compare with the node rotated by 90 degrees
                worst = worst.max((nf.get(i, j) - nf.get(40 - j, i)).abs());
            }
        }
        assert!(worst < 1e-3 * peak, "{worst} vs {peak}");
    }

    #[test]
    fn doubling_directions_barely_moves_n() {
        let m = ConformalMetric::reference_lens();
        let d = Disk::unit();
        let g0 = grid(51);
        let f = gaussian_blob(&g0, Blob::new(0.1, -0.2, 0.15, 1.0)).unwrap();
        let n = NormalOperator::build(&m, &d, &WeightSpec::Unit, &g0, SinogramDims::new(360, 181), DirectionGrid::default(), coarse()).unwrap();
        let sino = n.plan.apply(&f);
        let base = n.table.backproject(&sino);
        let fine = RayTable::build(&m, &d, &WeightSpec::Unit, &g0, DirectionGrid::new(512).unwrap(), coarse()).unwrap().backproject(&sino);
        let change = fine.sub(&base).l2_norm() / base.l2_norm();
        assert!(change < 5e-3, "{change}");
    }

    /// `‖Nf‖/‖f‖` over `|x| < 0.3` for `f = χ(x) cos(ω x₁)`, `χ` a bump of radius 0.6.
    pub(crate) fn plane_wave_ratio(omega: f64, weight: &WeightSpec) -> f64 {
        let e = ConformalMetric::euclidean();
        let d = Disk::unit();
        let chi = |r: f64| if r < 0.6 { (std::f64::consts::FRAC_PI_2 * r / 0.6).cos().powi(2) } else { 0.0 };
        let f = grid(301).from_fn(|p| chi(p.norm()) * (omega * p.x).cos());
        let dims = SinogramDims::new(720, 721);
        let sino = crate::xray::forward(&e, &d, weight, &f, dims, Orientation::Plus, 1e-2).unwrap();
        let out = GridFunction::zeros(61, 61, Point::new(-0.3, -0.3), 0.01, 0.01).unwrap();
        let nf = backproject(&e, &d, weight, &sino, &out, DirectionGrid::new(1024).unwrap(), coarse()).unwrap();
        let fo = out.from_fn(|p| chi(p.norm()) * (omega * p.x).cos());
        let inside = |k: usize| nf.node(k / nf.ny, k % nf.ny).norm() < 0.3;
        let num: f64 = (0..nf.values.len()).filter(|&k| inside(k)).map(|k| nf.values[k].powi(2)).sum();
        let den: f64 = (0..fo.values.len()).filter(|&k| inside(k)).map(|k| fo.values[k].powi(2)).sum();
        (num / den).sqrt()
    }

    #[test]
    fn plane_wave_symbol() {
        // N = X*X has symbol 4π/|ξ| for unit weight with X*1 = 2π
        let r40 = plane_wave_ratio(40.0, &WeightSpec::Unit);
        let r80 = plane_wave_ratio(80.0, &WeightSpec::Unit);
        let sym = |w: f64| 2.0 * TAU / w;
        eprintln!("plane-wave ratios: {r40} (4π/40 = {}), {r80} (4π/80 = {})", sym(40.0), sym(80.0));
        assert!((r40 / sym(40.0) - 1.0).abs() < 0.1, "{r40} vs {}", sym(40.0));
        assert!((r80 / sym(80.0) - 1.0).abs() < 0.1, "{r80} vs {}", sym(80.0));
        assert!((r40 / r80 / 2.0 - 1.0).abs() < 0.15);
    }

    #[test]
    fn plane_wave_symbol_attenuated() {
        let omega = 40.0;
        let w = WeightSpec::Attenuation(Sigma::Constant(1.0));
        let ratio = plane_wave_ratio(omega, &w);
        // symbol (2π/|ξ|)(κ(x, ξ⊥)² + κ(x, −ξ⊥)²); ξ⊥ is vertical for waves along x
        let chi = |r: f64| if r < 0.6 { (std::f64::consts::FRAC_PI_2 * r / 0.6).cos().powi(2) } else { 0.0 };
        let (mut num, mut den) = (0.0, 0.0);
        for (_, p) in GridFunction::zeros(61, 61, Point::new(-0.3, -0.3), 0.01, 0.01).unwrap().nodes() {
            if p.norm() >= 0.3 {
                continue;
            }
            let reach = (1.0 - p.x * p.x).sqrt();
            let s = TAU / omega * ((-2.0 * (reach - p.y)).exp() + (-2.0 * (reach + p.y)).exp());
            let f2 = (chi(p.norm()) * (omega * p.x).cos()).powi(2);
            num += s * s * f2;
            den += f2;
        }
        let expect = (num / den).sqrt();
        assert!((ratio / expect - 1.0).abs() < 0.15, "{ratio} vs {expect}");
    }

    #[test]
    fn laplacian_examples() {
        let e = ConformalMetric::euclidean();
        let l = ConformalMetric::reference_lens();
        let g = grid(41);
        let r2 = g.clone().from_fn(|p| p.x * p.x + p.y * p.y);
        let lap = laplace_beltrami(&e, &r2).unwrap();
        for i in 1..40 {
            for j in 1..40 {
                assert!((lap.get(i, j) - 4.0).abs() < 1e-9);
            }
        }
        assert_eq!(lap.get(0, 7), 0.0);
        let lap = laplace_beltrami(&l, &r2).unwrap();
        assert!((lap.get(20, 20) - 4.0 * (-1.2f64).exp()).abs() < 1e-9);
        assert!((lap.get(20, 20) - 1.20478).abs() < 1e-5);
        let harmonic = g.clone().from_fn(|p| p.x * p.x - p.y * p.y);
        assert!(laplace_beltrami(&l, &harmonic).unwrap().max_abs() < 1e-9);
        assert!(matches!(laplace_beltrami(&e, &grid(15)), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn custom_weight_enters_backprojection() {
        let e = ConformalMetric::euclidean();
        let d = Disk::unit();
        let w = WeightSpec::Custom(Arc::new(|_, v: crate::vec2::Vec2| 2.0 + v.x));
        let table = RayTable::build(&e, &d, &w, &grid(17), DirectionGrid::new(64).unwrap(), coarse()).unwrap();
        let mut one = Sinogram::zeros(SinogramDims::new(36, 19), Orientation::Plus);
        one.values.iter_mut().for_each(|v| *v = 1.0);
        let b = table.backproject(&one);
        // ∫ (2 + cos θ) dθ = 4π
        assert!((b.get(8, 8) - 2.0 * TAU).abs() < 1e-5);
    }

    #[test]
    fn euclidean_parametrix_is_clean() {
        let e = ConformalMetric::euclidean();
        let d = Disk::unit();
        let g = grid(101);
        let blobs = [Blob::new(0.2, -0.3, 0.06, 1.0), Blob::new(-0.35, 0.25, 0.06, -1.0)];
        let opts = ArtifactOptions { dims: SinogramDims::new(360, 180), ..ArtifactOptions::default() };
        let r = artifact_pipeline(&e, &d, &g, &blobs, &opts).unwrap();
        assert!(r.loci.iter().all(|l| l.is_empty()));
        let f = crate::xray::blob_collection(&g, &blobs).unwrap();
        let mut inner = f.clone();
        inner.restrict_to(&Disk { center: d.center, radius: RIM_FRACTION });
        let rel = r.recon.sub(&inner).l2_norm() / inner.l2_norm();
        assert!(rel < 0.15, "{rel}");
        let out: f64 = r.blob_energies.iter().sum();
        let total = r.recon.l2_norm().powi(2);
        assert!(out < 0.05 * total, "{out} vs {total}");
    }
}
