//! Inversion on simple subdomains: a fan-beam filtered backprojection `A`,
//! the Neumann series for `f + W²f = AXf`, data remapping from the big disk,
//! the cancellation experiment and the attenuated two-orientation recovery.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, Fft, FftPlanner};

use crate::adjoint::{DirectionGrid, RayTable};
use crate::error::{Error, Result};
use crate::geodesic::{entry_phase, shoot_with, trace_from, Disk, FanBeamCoord, Orientation, TraceOptions};
use crate::grid::{GridFunction, Sinogram, SinogramDims};
use crate::jacobi::{conjugate_locus, conjugate_times, integrate_jacobi};
use crate::metric::{ConformalMetric, LensSum};
use crate::vec2::{Point, Vec2};
use crate::xray::{gaussian_blob, wave_packet, Blob, ForwardPlan, PlanOptions, Sigma, WeightSpec};

/// Minimum observed fraction of the chart for [`ApproxInverse::apply`].
pub const MIN_COVERAGE: f64 = 0.5;
/// Fraction of the `α` range on each side that is tapered before filtering.
pub const TAPER_FRACTION: f64 = 0.05;
/// Consecutive update-norm increases that end the iteration at its best iterate.
pub const SEMI_CONVERGENCE_RISES: usize = 3;
/// `A` writes zero this close to the rim (relative to the radius).
pub const RIM_MARGIN: f64 = 0.025;
const SIMPLICITY_BETAS: usize = 200;
const SIMPLICITY_ALPHAS: usize = 60;

/// A disk on which no geodesic chord carries a conjugate pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimpleSubdomain {
    pub disk: Disk,
    pub dims: SinogramDims,
}

impl SimpleSubdomain {
    /// Checks simplicity on a 200×60 grid of chords.
    ///
    /// By Sturm separation a chord carries a conjugate pair only if the
    /// Jacobi field vanishing at its entry point vanishes again inside.
    pub fn new(metric: &ConformalMetric, disk: Disk, dims: SinogramDims, h: f64) -> Result<Self> {
        dims.validate()?;
        let probe = SinogramDims { n_beta: SIMPLICITY_BETAS, n_alpha: SIMPLICITY_ALPHAS, delta: dims.delta };
        let opts = TraceOptions::with_step(h);
        let count: usize = (0..probe.len())
            .into_par_iter()
            .map(|k| {
                let coord = FanBeamCoord::plus(probe.beta(k / probe.n_alpha), probe.alpha(k % probe.n_alpha));
                let path = shoot_with(metric, &disk, coord, opts)?;
                let pair = integrate_jacobi(metric, &path);
                Ok(usize::from(!conjugate_times(&pair, 0.0).is_empty()))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum();
        if count > 0 {
            return Err(Error::NotSimple { count });
        }
        Ok(SimpleSubdomain { disk, dims })
    }
}

/// The fan-beam ramp kernel sampled at `m Δα`, times `Δα`.
///
/// Ram–Lak in the chord offset, rewritten in the fan angle:
/// `k(γ) = 2π (γ / sin γ)² h(γ)`.
fn fan_kernel(m: i64, d_alpha: f64) -> f64 {
    let k = if m == 0 {
        2.0 * PI / (4.0 * d_alpha * d_alpha)
    } else if m % 2 == 0 {
        0.0
    } else {
        let s = (m as f64 * d_alpha).sin();
        -2.0 / (PI * s * s)
    };
    k * d_alpha
}

/// Raised-cosine taper on the outer [`TAPER_FRACTION`] of `[−α_max, α_max]`.
fn taper(alpha: f64, alpha_max: f64) -> f64 {
    let edge = TAPER_FRACTION * 2.0 * alpha_max;
    let d = alpha_max - alpha.abs();
    if d >= edge {
        1.0
    } else {
        0.5 - 0.5 * (PI * d.max(0.0) / edge).cos()
    }
}

/// Fiberwise convolution of each `β` row with [`fan_kernel`], via FFT with
/// ×4 zero padding.
struct RampFilter {
    len: usize,
    kernel: Vec<Complex<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl RampFilter {
    fn new(dims: &SinogramDims) -> Self {
        let n = dims.n_alpha;
        let len = 4 * n;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let mut kernel = vec![Complex::new(0.0, 0.0); len];
        for m in -(n as i64 - 1)..n as i64 {
            kernel[m.rem_euclid(len as i64) as usize] = Complex::new(fan_kernel(m, dims.d_alpha()), 0.0);
        }
        fwd.process(&mut kernel);
        RampFilter { len, kernel, fwd, inv }
    }

    /// `q(β, α') = Σ_i g(β, α_i) cos α_i k(α' − α_i)`.
    fn apply(&self, g: &Sinogram) -> Sinogram {
        let d = g.dims;
        let weights: Vec<f64> = (0..d.n_alpha).map(|j| d.alpha(j).cos() * taper(d.alpha(j), d.alpha_max())).collect();
        let scale = 1.0 / self.len as f64;
        let values: Vec<f64> = g
            .values
            .par_chunks(d.n_alpha)
            .flat_map_iter(|row| {
                let mut buf = vec![Complex::new(0.0, 0.0); self.len];
                for (j, (&v, &w)) in row.iter().zip(&weights).enumerate() {
                    buf[j] = Complex::new(v * w, 0.0);
                }
                self.fwd.process(&mut buf);
                for (b, k) in buf.iter_mut().zip(&self.kernel) {
                    *b *= k;
                }
                self.inv.process(&mut buf);
                buf.into_iter().take(d.n_alpha).map(move |c| c.re * scale)
            })
            .collect();
        Sinogram { dims: d, orientation: g.orientation, values, mask: None }
    }
}

/// Filtered backprojection on a simple subdomain.
///
/// The filtered data is read along the ray through each node and divided by
/// the geodesic spread `b` times `cos α` at the source, which turns the
/// fan-beam `dβ` into the node's own direction measure `dθ`.
pub struct ApproxInverse {
    pub sub: SimpleSubdomain,
    pub table: RayTable,
    filter: RampFilter,
}

impl ApproxInverse {
    pub fn build(
        metric: &ConformalMetric,
        sub: SimpleSubdomain,
        weight: &WeightSpec,
        grid: &GridFunction,
        dirs: DirectionGrid,
        opts: TraceOptions,
    ) -> Result<Self> {
        let table = RayTable::build(metric, &sub.disk, weight, grid, dirs, opts)?;
        Ok(ApproxInverse { sub, table, filter: RampFilter::new(&sub.dims) })
    }

    pub fn apply(&self, g: &Sinogram) -> Result<GridFunction> {
        self.apply_selected(g, None)
    }

    /// `A` with direction-selection weights `w ∈ [0, 2]` on the chart, with
    /// `w(γ) + w(γ̄) = 2` for every ray and its reversal: only the selected
    /// direction of each line contributes, renormalized.
    pub fn apply_selected(&self, g: &Sinogram, select: Option<&Sinogram>) -> Result<GridFunction> {
        if g.dims != self.sub.dims || select.is_some_and(|s| s.dims != g.dims) {
            return Err(Error::InvalidArgument("sinogram does not use the subdomain chart".into()));
        }
        let coverage = g.coverage();
        if coverage < MIN_COVERAGE {
            return Err(Error::CoverageTooSparse { coverage });
        }
        let q = match select {
            None => self.filter.apply(g),
            Some(w) => self.filter.apply(&g.with_values(g.values.iter().zip(&w.values).map(|(a, b)| a * b).collect())),
        };
        let t = &self.table;
        let n = t.dirs.n;
        let half = n / 2;
        let scale = t.dirs.step() / (4.0 * PI);
        let vals: Vec<f64> = (0..t.nodes.len())
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .map(|d| {
                        let (b, a, spread) = t.ray(i, d, g.orientation);
                        let denom = spread * a.cos();
                        if denom <= 0.0 {
                            return 0.0;
                        }
                        // the two orientations of the line share the correction
                        let back = (d + half) % n;
                        let total = match select {
                            None => t.kappa(i, d) + t.kappa(i, back),
                            Some(w) => {
                                let (bb, ab, _) = t.ray(i, back, g.orientation);
                                w.eval(b, a) * t.kappa(i, d) + w.eval(bb, ab) * t.kappa(i, back)
                            }
                        };
                        if total <= 0.0 {
                            return 0.0;
                        }
                        2.0 * q.eval(b, a) / (total * denom)
                    })
                    .sum::<f64>()
                    * scale
            })
            .collect();
        let mut out = t.grid.same_shape();
        // nodes hugging the rim see only near-tangent rays with vanishing spread
        let margin = out.dx.max(out.dy).max(RIM_MARGIN * t.disk.radius);
        for (i, &k) in t.nodes.iter().enumerate() {
            if t.disk.excess(out.node(k / out.ny, k % out.ny)) < -margin {
                out.values[k] = vals[i];
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeumannOptions {
    pub max_iterations: usize,
    /// Stop once `‖update‖ / ‖f‖` falls below this.
    pub tolerance: f64,
}

impl Default for NeumannOptions {
    fn default() -> Self {
        NeumannOptions { max_iterations: 30, tolerance: 1e-4 }
    }
}

#[derive(Clone, Debug)]
pub struct NeumannReport {
    pub f: GridFunction,
    /// `‖g − X f_k‖` on observed cells, starting with `f_0 = A g`.
    pub residuals: Vec<f64>,
    /// `‖f_{k+1} − f_k‖ / ‖f_{k+1}‖`.
    pub updates: Vec<f64>,
    /// The update norm grew steadily, so `f` is the iterate with the
    /// smallest update rather than the last one.
    pub semi_converged: bool,
}

impl NeumannReport {
    pub fn iterations(&self) -> usize {
        self.updates.len()
    }
}

/// `A` and the forward transforms on a simple subdomain.
pub struct SubdomainInverter {
    pub inverse: ApproxInverse,
    /// One forward plan per supported orientation.
    pub plans: Vec<ForwardPlan>,
}

impl SubdomainInverter {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        metric: &ConformalMetric,
        sub: SimpleSubdomain,
        weight: &WeightSpec,
        grid: &GridFunction,
        dirs: DirectionGrid,
        orientations: &[Orientation],
        opts: TraceOptions,
    ) -> Result<Self> {
        let inverse = ApproxInverse::build(metric, sub, weight, grid, dirs, opts)?;
        let plan_opts = PlanOptions { trace: opts, ..Default::default() };
        let plans = orientations
            .iter()
            .map(|&o| ForwardPlan::build(metric, &sub.disk, weight, sub.dims, o, &plan_opts))
            .collect::<Result<Vec<_>>>()?;
        Ok(SubdomainInverter { inverse, plans })
    }

    pub fn grid(&self) -> &GridFunction {
        &self.inverse.table.grid
    }

    fn plan(&self, orientation: Orientation) -> Result<&ForwardPlan> {
        self.plans
            .iter()
            .find(|p| p.orientation == orientation)
            .ok_or_else(|| Error::InvalidArgument(format!("no {} plan on this subdomain", orientation.as_str())))
    }

    /// `X f` on the subdomain chart.
    pub fn forward(&self, f: &GridFunction, orientation: Orientation) -> Result<Sinogram> {
        Ok(self.plan(orientation)?.apply(f))
    }

    /// Solves `f + W²f = A g` by `f ← f + A(g − X f)`.
    pub fn solve(&self, g: &Sinogram, opts: NeumannOptions) -> Result<NeumannReport> {
        self.solve_selected(g, None, opts)
    }

    /// [`Self::solve`] with `A` replaced by [`ApproxInverse::apply_selected`].
    pub fn solve_selected(&self, g: &Sinogram, select: Option<&Sinogram>, opts: NeumannOptions) -> Result<NeumannReport> {
        let plan = self.plan(g.orientation)?;
        let mut f = self.inverse.apply_selected(g, select)?;
        let mut residuals = Vec::new();
        let mut updates = Vec::new();
        let mut norms: Vec<f64> = Vec::new();
        let mut best: Option<(f64, GridFunction)> = None;
        for iteration in 0..opts.max_iterations {
            let xf = plan.apply(&f);
            let r = g.with_values(g.values.iter().zip(&xf.values).map(|(a, b)| a - b).collect());
            residuals.push(r.l2_norm());
            let du = self.inverse.apply_selected(&r, select)?;
            f.axpy(1.0, &du);
            let un = du.l2_norm();
            let fnorm = f.l2_norm();
            let rel = if fnorm > 0.0 { un / fnorm } else { 0.0 };
            updates.push(rel);
            norms.push(un);
            let k = norms.len();
            if k > 3 && norms[k - 1] > 2.0 * norms[k - 4] && norms[k - 1] > norms[k - 2] {
                return Err(Error::Diverged { iteration, update: un });
            }
            if rel < opts.tolerance {
                return Ok(NeumannReport { f, residuals, updates, semi_converged: false });
            }
            if best.as_ref().map_or(true, |b| un < b.0) {
                best = Some((un, f.clone()));
            }
            // a slowly growing mode: grid scales finer than the data can resolve
            if k > SEMI_CONVERGENCE_RISES && norms[k - 1 - SEMI_CONVERGENCE_RISES..].windows(2).all(|w| w[1] > w[0]) {
                let (_, f) = best.take().expect("a best iterate exists after the first step");
                return Ok(NeumannReport { f, residuals, updates, semi_converged: true });
            }
        }
        Ok(NeumannReport { f, residuals, updates, semi_converged: false })
    }
}

/// For every subdomain chart cell, the big-disk coordinate of the same line,
/// found by extending the chord backwards to `∂M` ("free transport").
///
/// With an attenuation, also the `σ`-integrals over the parts of the line
/// before and after the subdomain, so that the big-disk weight can be
/// reduced to the subdomain's own.
#[derive(Clone, Debug)]
pub struct Remap {
    pub sub: SimpleSubdomain,
    pub m_dims: SinogramDims,
    /// `None` where the extended ray leaves the big chart's `α` range.
    coords: Vec<Option<(f64, f64)>>,
    /// `(∫σ before entering, ∫σ after leaving)` along the plus direction.
    tails: Option<Vec<(f64, f64)>>,
}

impl Remap {
    pub fn build(metric: &ConformalMetric, m_disk: &Disk, m_dims: SinogramDims, sub: &SimpleSubdomain, h: f64) -> Result<Self> {
        Self::build_with(metric, m_disk, m_dims, sub, None, h)
    }

    pub fn build_attenuated(
        metric: &ConformalMetric,
        m_disk: &Disk,
        m_dims: SinogramDims,
        sub: &SimpleSubdomain,
        sigma: &Sigma,
        h: f64,
    ) -> Result<Self> {
        sigma.validate()?;
        Self::build_with(metric, m_disk, m_dims, sub, Some(sigma), h)
    }

    fn build_with(
        metric: &ConformalMetric,
        m_disk: &Disk,
        m_dims: SinogramDims,
        sub: &SimpleSubdomain,
        sigma: Option<&Sigma>,
        h: f64,
    ) -> Result<Self> {
        m_dims.validate()?;
        let opts = TraceOptions::with_step(h);
        let amax = m_dims.alpha_max();
        let cells = (0..sub.dims.len())
            .into_par_iter()
            .map(|k| {
                let (c, tails) = transport_cell(metric, m_disk, sub, k, sigma, opts)?;
                Ok(((c.alpha.abs() <= amax).then_some((c.beta, c.alpha)), tails))
            })
            .collect::<Result<Vec<_>>>()?;
        let coords = cells.iter().map(|c| c.0).collect();
        let tails = sigma.map(|_| cells.iter().map(|c| c.1).collect());
        Ok(Remap { sub: *sub, m_dims, coords, tails })
    }

    pub fn mask(&self) -> Vec<bool> {
        self.coords.iter().map(Option::is_some).collect()
    }

    pub fn coverage(&self) -> f64 {
        self.coords.iter().filter(|c| c.is_some()).count() as f64 / self.coords.len() as f64
    }

    /// Bicubic read-off of `g_m`; masked cells hold zero. With tails, each
    /// value is divided by the attenuation accumulated after the subdomain
    /// (in the data's orientation).
    pub fn apply(&self, g_m: &Sinogram) -> Result<Sinogram> {
        if g_m.dims != self.m_dims {
            return Err(Error::InvalidArgument("big-disk sinogram does not match the remap chart".into()));
        }
        let values = self
            .coords
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let v = c.map_or(0.0, |(b, a)| g_m.eval_cubic(b, a));
                match &self.tails {
                    None => v,
                    Some(t) => {
                        let (before, after) = t[k];
                        v * match g_m.orientation {
                            Orientation::Plus => after.exp(),
                            Orientation::Minus => before.exp(),
                        }
                    }
                }
            })
            .collect();
        Ok(Sinogram { dims: self.sub.dims, orientation: g_m.orientation, values, mask: Some(self.mask()) })
    }
}

/// Data on the subdomain chart read off big-disk data by free geodesic
/// transport. Cells whose extended ray leaves the big chart are masked.
pub fn remap_data(metric: &ConformalMetric, m_disk: &Disk, g_m: &Sinogram, sub: &SimpleSubdomain, h: f64) -> Result<Sinogram> {
    Remap::build(metric, m_disk, g_m.dims, sub, h)?.apply(g_m)
}

/// Big-disk plus coordinate of the line carrying subdomain cell `k`, and the
/// `σ`-integrals over its parts before and after the subdomain.
fn transport_cell(
    metric: &ConformalMetric,
    m_disk: &Disk,
    sub: &SimpleSubdomain,
    k: usize,
    sigma: Option<&Sigma>,
    opts: TraceOptions,
) -> Result<(FanBeamCoord, (f64, f64))> {
    let d = &sub.dims;
    let start = entry_phase(metric, &sub.disk, d.beta(k / d.n_alpha), d.alpha(k % d.n_alpha));
    let on_rim = |x: Point| m_disk.center + (x - m_disk.center) * (m_disk.radius / (x - m_disk.center).norm());
    let outside_sub = |x: Point| sub.disk.excess(x) > 0.0;
    let (coord, before) = if m_disk.excess(start.x) >= -1e-12 {
        // the entry point sits on ∂M: the chord already starts there
        (m_disk.coord_of(on_rim(start.x), start.v, Orientation::Plus), 0.0)
    } else {
        let back = trace_from(metric, m_disk, start.x, -start.v, opts)?;
        let end = *back.end();
        let before = sigma.map_or(0.0, |s| sigma_integral(&back, s, |_| true));
        (m_disk.coord_of(on_rim(end.x), -end.v, Orientation::Plus), before)
    };
    let after = match sigma {
        None => 0.0,
        Some(s) => {
            let fwd = trace_from(metric, m_disk, start.x, start.v, opts)?;
            // the chord is a single segment of a simple disk; skip it
            let inside = fwd.samples.iter().position(|p| sub.disk.excess(p.x) < 0.0).unwrap_or(0);
            let leave = fwd.samples[inside..].iter().position(|p| outside_sub(p.x)).map_or(fwd.len(), |i| i + inside);
            sigma_integral(&fwd, s, |i| i >= leave)
        }
    };
    Ok((coord, (before, after)))
}

/// Trapezoid integral of `σ` over the path segments whose nodes satisfy `keep`.
fn sigma_integral(path: &crate::geodesic::GeodesicPath, sigma: &Sigma, keep: impl Fn(usize) -> bool) -> f64 {
    path.samples
        .windows(2)
        .enumerate()
        .filter(|(i, _)| keep(*i) && keep(i + 1))
        .map(|(_, w)| 0.5 * (sigma.at(w[0].x) + sigma.at(w[1].x)) * (w[1].t - w[0].t))
        .sum()
}

/// Settings of the cancellation experiment.
#[derive(Clone, Debug)]
pub struct CancellationOptions {
    /// Chart of the big disk; fine enough for the remap read-off.
    pub m_dims: SinogramDims,
    pub sub_dims: SinogramDims,
    /// Nodes per side of the grid covering the subdomain.
    pub sub_grid: usize,
    pub dirs: DirectionGrid,
    pub trace: TraceOptions,
    pub neumann: NeumannOptions,
    /// Directions used to test whether the locus of the blob center meets the subdomain.
    pub locus_dirs: usize,
    /// Rays passing within this many blob widths of the center can enter the window.
    pub support_widths: f64,
}

impl Default for CancellationOptions {
    fn default() -> Self {
        CancellationOptions {
            m_dims: SinogramDims::new(720, 361),
            sub_dims: SinogramDims::new(360, 181),
            sub_grid: 101,
            dirs: DirectionGrid::default(),
            trace: TraceOptions::with_step(1e-2),
            neumann: NeumannOptions::default(),
            locus_dirs: 360,
            support_widths: 2.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CancellationReport {
    pub g: Sinogram,
    pub g_sub: Sinogram,
    /// `F₂₁ f₁ = X₂⁻¹ X₁ f₁` on the subdomain grid.
    pub f2: GridFunction,
    /// `f₁ − f₂` on the big grid.
    pub fdiff: GridFunction,
    pub x_fdiff: Sinogram,
    /// Big-chart cells whose chord carries a conjugate pair between the
    /// support of `f₁` and the subdomain.
    pub window: Vec<bool>,
    /// `‖X(f₁ − f₂)‖ / ‖X f₁‖` on the window.
    pub cancellation_ratio: f64,
    /// `‖X(f₁ + f₂)‖ / ‖X f₁‖` on the window.
    pub sum_ratio: f64,
    /// `|‖X(f₁ − f₂)‖ − ‖X f₁‖| / ‖X f₁‖` off the window.
    pub outside_change: f64,
    pub coverage: f64,
    pub neumann: NeumannReport,
}

fn window_norm(g: &[f64], window: &[bool], inside: bool) -> f64 {
    g.iter().zip(window).filter(|(_, &w)| w == inside).map(|(v, _)| v * v).sum::<f64>().sqrt()
}

/// Realizes `F₂₁ = X₂⁻¹ X₁` for a blob `f₁` outside the subdomain and
/// measures how much of `X f₁` the difference `f₁ − F₂₁ f₁` cancels.
pub fn cancellation_pipeline(
    metric: &ConformalMetric,
    m_disk: &Disk,
    m_grid: &GridFunction,
    blob: Blob,
    sub: &SimpleSubdomain,
    opts: &CancellationOptions,
) -> Result<CancellationReport> {
    let locus = conjugate_locus(metric, m_disk, blob.center, opts.locus_dirs, opts.trace.h)?;
    if !locus.defined().any(|v| sub.disk.contains(v.point)) {
        return Err(Error::NoConjugateOverlap);
    }
    let f1 = gaussian_blob(m_grid, blob)?;
    let plan_m = ForwardPlan::build(metric, m_disk, &WeightSpec::Unit, opts.m_dims, Orientation::Plus, &PlanOptions { trace: opts.trace, ..Default::default() })?;
    let window = conjugate_window(metric, m_disk, &plan_m, blob.center, opts.support_widths * blob.width, &sub.disk, opts.trace)?;
    if !window.iter().any(|&w| w) {
        return Err(Error::NoConjugateOverlap);
    }

    let g = plan_m.apply(&f1);
    let remap = Remap::build(metric, m_disk, opts.m_dims, sub, opts.trace.h)?;
    let g_sub = remap.apply(&g)?;
    let sub_grid = GridFunction::covering(&sub.disk, opts.sub_grid)?;
    let inverter = SubdomainInverter::build(metric, *sub, &WeightSpec::Unit, &sub_grid, opts.dirs, &[Orientation::Plus], TraceOptions { h: 2.0 * opts.trace.h, ..opts.trace })?;
    let neumann = inverter.solve(&g_sub, opts.neumann)?;
    let f2 = neumann.f.clone();

    let x_f2 = plan_m.apply(&f2);
    let x_fdiff = g.with_values(g.values.iter().zip(&x_f2.values).map(|(a, b)| a - b).collect());
    let x_fsum: Vec<f64> = g.values.iter().zip(&x_f2.values).map(|(a, b)| a + b).collect();
    let base_in = window_norm(&g.values, &window, true);
    let base_out = window_norm(&g.values, &window, false);
    let cancellation_ratio = window_norm(&x_fdiff.values, &window, true) / base_in;
    let sum_ratio = window_norm(&x_fsum, &window, true) / base_in;
    let outside_change = (window_norm(&x_fdiff.values, &window, false) - base_out).abs() / base_out;
    let fdiff = m_grid.same_shape().from_fn(|p| f1.eval(p) - f2.eval(p));
    Ok(CancellationReport {
        g,
        g_sub,
        f2,
        fdiff,
        x_fdiff,
        window,
        cancellation_ratio,
        sum_ratio,
        outside_change,
        coverage: remap.coverage(),
        neumann,
    })
}

/// Cells of `plan`'s chart whose chord passes within `radius` of `center`
/// and has a point conjugate to the closest approach inside `target`.
fn conjugate_window(
    metric: &ConformalMetric,
    disk: &Disk,
    plan: &ForwardPlan,
    center: Point,
    radius: f64,
    target: &Disk,
    opts: TraceOptions,
) -> Result<Vec<bool>> {
    let dims = plan.dims;
    (0..dims.len())
        .into_par_iter()
        .map(|k| {
            let near = plan.ray(k).iter().any(|n| Point::new(n[0] as f64, n[1] as f64).dist(center) <= radius);
            if !near {
                return Ok(false);
            }
            let coord = FanBeamCoord { beta: dims.beta(k / dims.n_alpha), alpha: dims.alpha(k % dims.n_alpha), orientation: plan.orientation };
            let path = shoot_with(metric, disk, coord, opts)?;
            let closest = path
                .samples
                .iter()
                .min_by(|a, b| a.x.dist(center).total_cmp(&b.x.dist(center)))
                .expect("paths have samples");
            let pair = integrate_jacobi(metric, &path);
            Ok(conjugate_times(&pair, closest.t).into_iter().any(|t2| {
                let i = ((t2 / path.h).round() as usize).min(path.len() - 1);
                target.contains(path.samples[i].x)
            }))
        })
        .collect()
}

/// Settings of the attenuated two-orientation recovery.
#[derive(Clone, Debug)]
pub struct AttenuatedOptions {
    pub m_dims: SinogramDims,
    pub sub_dims: SinogramDims,
    pub sub_grid: usize,
    pub dirs: DirectionGrid,
    pub trace: TraceOptions,
    /// Neumann settings of each `X⁻¹` inside `Q`.
    pub neumann: NeumannOptions,
    pub max_terms: usize,
    /// The series has converged once the last term is this small relative to the sum.
    pub term_tolerance: f64,
    /// Above this relative last-term size the series is declared stalled.
    pub stall_threshold: f64,
    /// Starting radius of the subdomain around each blob center.
    pub region_radius: f64,
}

impl Default for AttenuatedOptions {
    fn default() -> Self {
        AttenuatedOptions {
            m_dims: SinogramDims::new(720, 361),
            sub_dims: SinogramDims::new(360, 181),
            sub_grid: 61,
            dirs: DirectionGrid::default(),
            trace: TraceOptions::with_step(1e-2),
            neumann: NeumannOptions { max_iterations: 10, tolerance: 1e-3 },
            max_terms: 20,
            term_tolerance: 1e-3,
            stall_threshold: 1e-2,
            region_radius: 0.35,
        }
    }
}

/// A simple subdomain around one blob, with its inverter for the big-disk
/// weight.
pub struct Region {
    pub inverter: SubdomainInverter,
    pub remap: Remap,
}

impl Region {
    pub fn sub(&self) -> &SimpleSubdomain {
        &self.inverter.inverse.sub
    }

    pub fn grid(&self) -> &GridFunction {
        self.inverter.grid()
    }
}

/// Largest disk around `center` up to `radius` that stays inside `m_disk`,
/// clear of the other centers, and simple.
pub fn simple_region(
    metric: &ConformalMetric,
    m_disk: &Disk,
    center: Point,
    others: &[Point],
    radius: f64,
    dims: SinogramDims,
    h: f64,
) -> Result<SimpleSubdomain> {
    let room = m_disk.radius - center.dist(m_disk.center) - 2.0 * h;
    let apart = others.iter().map(|o| 0.5 * o.dist(center)).fold(f64::INFINITY, f64::min);
    let mut r = radius.min(room).min(apart - h);
    let mut last = Error::InvalidArgument(format!("no room for a region around ({}, {})", center.x, center.y));
    while r > 0.05 {
        match SimpleSubdomain::new(metric, Disk::new(center, r)?, dims, h) {
            Ok(sub) => return Ok(sub),
            Err(e @ Error::NotSimple { .. }) => last = e,
            Err(e) => return Err(e),
        }
        r *= 0.85;
    }
    Err(last)
}

/// Depth over which a line passing through another region goes from
/// unselected to fully selected.
pub const SELECTION_RAMP: f64 = 0.05;

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Direction-selection weights on `sub`'s chart favouring rays that reach
/// `sub` after passing through `other`: `1 + s_before − s_after`, with `s`
/// a smooth indicator of how deep the line runs through `other` before or
/// after crossing `sub`. A ray and its reversal always sum to 2.
pub fn arrival_weights(metric: &ConformalMetric, m_disk: &Disk, sub: &SimpleSubdomain, other: &Disk, h: f64) -> Result<Sinogram> {
    let d = sub.dims;
    let opts = TraceOptions::with_step(h);
    let depth = |path: &crate::geodesic::GeodesicPath| path.samples.iter().map(|p| -other.excess(p.x)).fold(0.0, f64::max);
    let values = (0..d.len())
        .into_par_iter()
        .map(|k| {
            let start = entry_phase(metric, &sub.disk, d.beta(k / d.n_alpha), d.alpha(k % d.n_alpha));
            let before = if m_disk.excess(start.x) >= -1e-12 { 0.0 } else { depth(&trace_from(metric, m_disk, start.x, -start.v, opts)?) };
            let after = depth(&trace_from(metric, m_disk, start.x, start.v, opts)?);
            Ok(1.0 + smoothstep(before / SELECTION_RAMP) - smoothstep(after / SELECTION_RAMP))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sinogram { dims: d, orientation: Orientation::Plus, values, mask: None })
}

/// The weighted transform on the big disk, a simple region around each blob,
/// and for every ordered pair of regions the weights selecting rays that
/// travel from one to the other.
///
/// The two "orientations" of the recovery are the two directions of travel
/// along the lines joining two regions; the data is the full directed-ray
/// transform on the big disk's chart.
pub struct AttenuatedSystem {
    pub weight: WeightSpec,
    pub plan: ForwardPlan,
    pub regions: Vec<Region>,
    /// `select[k][j]`: weights on region `k`'s chart for rays arriving from region `j`.
    select: Vec<Vec<Option<Sinogram>>>,
    pub opts: AttenuatedOptions,
}

/// Successive-term ratio above which the `Q` series counts as stalled.
pub const STALL_RATIO: f64 = 0.9;

/// Truncation error of a series relative to its partial sum, estimated from
/// the last two terms as a geometric tail `tₙ ρ / (1 − ρ)`.
fn series_residual(term_norms: &[f64], sum_norm: f64) -> f64 {
    let n = term_norms.len();
    let last = term_norms[n - 1];
    if last == 0.0 {
        return 0.0;
    }
    let rho = last / term_norms[n - 2];
    if rho >= 1.0 || sum_norm == 0.0 {
        return f64::INFINITY;
    }
    last * rho / ((1.0 - rho) * sum_norm)
}

/// Outcome of the `Q` series.
#[derive(Clone, Debug)]
pub struct SeriesReport {
    /// `‖Q^n h‖` for each term.
    pub term_norms: Vec<f64>,
    /// Estimated truncation error relative to the partial sum.
    pub residual: f64,
}

impl AttenuatedSystem {
    /// `weight` must be `Unit` or an attenuation.
    pub fn build(metric: &ConformalMetric, m_disk: &Disk, weight: WeightSpec, centers: &[Point], opts: AttenuatedOptions) -> Result<Self> {
        let sigma = match &weight {
            WeightSpec::Unit => None,
            WeightSpec::Attenuation(s) => Some(s.clone()),
            WeightSpec::Custom(_) => return Err(Error::InvalidArgument("attenuated recovery needs a unit or attenuation weight".into())),
        };
        let plan_opts = PlanOptions { trace: opts.trace, ..Default::default() };
        let plan = ForwardPlan::build(metric, m_disk, &weight, opts.m_dims, Orientation::Plus, &plan_opts)?;
        let mut regions = Vec::with_capacity(centers.len());
        for (k, &c) in centers.iter().enumerate() {
            let others: Vec<Point> = centers.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, &p)| p).collect();
            let sub = simple_region(metric, m_disk, c, &others, opts.region_radius, opts.sub_dims, opts.trace.h)?;
            let grid = GridFunction::covering(&sub.disk, opts.sub_grid)?;
            let inverter = SubdomainInverter::build(metric, sub, &weight, &grid, opts.dirs, &[Orientation::Plus], opts.trace)?;
            let remap = match &sigma {
                Some(s) => Remap::build_attenuated(metric, m_disk, opts.m_dims, &sub, s, opts.trace.h)?,
                None => Remap::build(metric, m_disk, opts.m_dims, &sub, opts.trace.h)?,
            };
            regions.push(Region { inverter, remap });
        }
        let select = (0..regions.len())
            .map(|k| {
                (0..regions.len())
                    .map(|j| {
                        (j != k)
                            .then(|| arrival_weights(metric, m_disk, regions[k].sub(), &regions[j].sub().disk, opts.trace.h))
                            .transpose()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AttenuatedSystem { weight, plan, regions, select, opts })
    }

    /// Big-disk data of `f` (on any grid).
    pub fn forward(&self, f: &GridFunction) -> Sinogram {
        self.plan.apply(f)
    }

    /// `X_{k←j}⁻¹`: recovers a function on region `k` from the rays that
    /// reach it from region `j`.
    pub fn invert_from(&self, k: usize, j: usize, g: &Sinogram) -> Result<GridFunction> {
        let r = &self.regions[k];
        let local = r.remap.apply(g)?;
        Ok(r.inverter.solve_selected(&local, self.select[k][j].as_ref(), self.opts.neumann)?.f)
    }

    /// `Q = X_{i←j}⁻¹ X X_{j←i}⁻¹ X` on functions of region `i`.
    pub fn q(&self, i: usize, j: usize, f: &GridFunction) -> Result<GridFunction> {
        let fj = self.invert_from(j, i, &self.forward(f))?;
        self.invert_from(i, j, &self.forward(&fj))
    }

    /// Solves `X(fᵢ + fⱼ) = g` for blobs in regions `i` and `j`:
    /// `(Id − Q) fᵢ = X_{i←j}⁻¹(g − X X_{j←i}⁻¹ g)` by the Neumann series in
    /// `Q`, then `fⱼ = X_{j←i}⁻¹(g − X fᵢ)`.
    pub fn recover(&self, i: usize, j: usize, g: &Sinogram) -> Result<(GridFunction, GridFunction, SeriesReport)> {
        let fj0 = self.invert_from(j, i, g)?;
        let xj = self.forward(&fj0);
        let rhs = g.with_values(g.values.iter().zip(&xj.values).map(|(a, b)| a - b).collect());
        let mut term = self.invert_from(i, j, &rhs)?;
        let mut sum = term.clone();
        let mut term_norms = vec![term.l2_norm()];
        let mut residual = f64::INFINITY;
        for _ in 1..self.opts.max_terms {
            term = self.q(i, j, &term)?;
            sum.axpy(1.0, &term);
            term_norms.push(term.l2_norm());
            residual = series_residual(&term_norms, sum.l2_norm());
            if residual < self.opts.term_tolerance {
                break;
            }
            let n = term_norms.len();
            // terms no longer shrinking geometrically: the symbol of Q is not below one
            if n >= 4 && residual > self.opts.stall_threshold && term_norms[n - 4..].windows(2).all(|w| w[1] > STALL_RATIO * w[0]) {
                return Err(Error::QNotContractive { residual, terms: n });
            }
        }
        if residual > self.opts.stall_threshold {
            return Err(Error::QNotContractive { residual, terms: term_norms.len() });
        }
        let xi = self.forward(&sum);
        let rest = g.with_values(g.values.iter().zip(&xi.values).map(|(a, b)| a - b).collect());
        let fj = self.invert_from(j, i, &rest)?;
        Ok((sum, fj, SeriesReport { term_norms, residual }))
    }
}

/// `p` followed by its conjugate points along the geodesic leaving in direction `v`.
pub fn conjugate_chain(metric: &ConformalMetric, disk: &Disk, p: Point, v: Vec2, h: f64) -> Result<Vec<Point>> {
    let path = trace_from(metric, disk, p, v, TraceOptions::with_step(h))?;
    let pair = integrate_jacobi(metric, &path);
    let mut out = vec![p];
    out.extend(conjugate_times(&pair, 0.0).into_iter().map(|t| path.state_at(metric, t).0));
    Ok(out)
}

/// Two conjugate lenses along the vertical axis: the vertical geodesic from
/// `(0, −0.75)` carries that point's first and second conjugate points.
pub fn double_lens() -> ConformalMetric {
    ConformalMetric::custom(Arc::new(LensSum { lenses: vec![(1.5, 0.2, Point::new(0.0, -0.4)), (1.5, 0.2, Point::new(0.0, 0.4))] }))
}

/// A nonzero triple of blobs, one per region, whose attenuated data
/// nearly vanishes on the rays through all three, in both directions.
#[derive(Clone, Debug)]
pub struct NullTriple {
    pub f: [GridFunction; 3],
    /// Cells of the big chart whose ray passes near all three centers, in
    /// order (`+`) and in reverse order (`−`).
    pub plus: Vec<bool>,
    pub minus: Vec<bool>,
    /// `‖X(f₁ + f₂ + f₃)‖` on each window.
    pub residual_plus: f64,
    pub residual_minus: f64,
    /// `Σₖ ‖X fₖ‖` on each window: the size of the data being cancelled.
    pub scale_plus: f64,
    pub scale_minus: f64,
    pub series: SeriesReport,
}

/// Builds a null direction for three mutually conjugate regions: `f₁` is a
/// wave packet with wave vector `k` (conormal to the geodesic through the
/// three centers), and `(f₂, f₃)` recover `−X f₁` from regions 1 and 2.
pub fn null_triple(system: &AttenuatedSystem, blob: Blob, k: Vec2, radius: f64) -> Result<NullTriple> {
    if system.regions.len() != 3 {
        return Err(Error::InvalidArgument("a null triple needs exactly three regions".into()));
    }
    let f1 = wave_packet(system.regions[0].grid(), blob, k)?;
    let x1 = system.forward(&f1);
    let g = x1.with_values(x1.values.iter().map(|v| -v).collect());
    let (f2, f3, series) = system.recover(1, 2, &g)?;
    let (x2, x3) = (system.forward(&f2), system.forward(&f3));
    let total: Vec<f64> = x1.values.iter().zip(&x2.values).zip(&x3.values).map(|((a, b), c)| a + b + c).collect();
    let centers: Vec<Point> = system.regions.iter().map(|r| r.sub().disk.center).collect();
    let (plus, minus) = ordered_windows(&system.plan, &centers, radius);
    let norm = |v: &[f64], w: &[bool]| window_norm(v, w, true);
    let scale = |w: &[bool]| norm(&x1.values, w) + norm(&x2.values, w) + norm(&x3.values, w);
    Ok(NullTriple {
        residual_plus: norm(&total, &plus),
        residual_minus: norm(&total, &minus),
        scale_plus: scale(&plus),
        scale_minus: scale(&minus),
        f: [f1, f2, f3],
        plus,
        minus,
        series,
    })
}

/// Cells whose ray passes within `radius` of every center, visiting them in
/// the given order (first) or in reverse (second).
fn ordered_windows(plan: &ForwardPlan, centers: &[Point], radius: f64) -> (Vec<bool>, Vec<bool>) {
    (0..plan.dims.len())
        .into_par_iter()
        .map(|k| {
            let nodes = plan.ray(k);
            let first_visit: Option<Vec<usize>> = centers
                .iter()
                .map(|c| nodes.iter().position(|n| Point::new(n[0] as f64, n[1] as f64).dist(*c) <= radius))
                .collect();
            match first_visit {
                Some(v) if v.windows(2).all(|w| w[0] < w[1]) => (true, false),
                Some(v) if v.windows(2).all(|w| w[0] > w[1]) => (false, true),
                _ => (false, false),
            }
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xray::{forward, gaussian_blob, Blob};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, TAU};

    fn euclid_setup(n: usize) -> (ConformalMetric, ApproxInverse, GridFunction) {
        let e = ConformalMetric::euclidean();
        let sub = SimpleSubdomain::new(&e, Disk::unit(), SinogramDims::new(360, 181), 1e-2).unwrap();
        let grid = GridFunction::covering(&sub.disk, n).unwrap();
        let a = ApproxInverse::build(&e, sub, &WeightSpec::Unit, &grid, DirectionGrid::new(256).unwrap(), TraceOptions::with_step(1e-2)).unwrap();
        (e, a, grid)
    }

    #[test]
    fn fbp_inverts_euclidean_blob() {
        let (e, a, grid) = euclid_setup(101);
        let f = gaussian_blob(&grid, Blob::new(0.0, 0.0, 0.08, 1.0)).unwrap();
        let g = forward(&e, &a.sub.disk, &WeightSpec::Unit, &f, a.sub.dims, Orientation::Plus, 1e-2).unwrap();
        let r = a.apply(&g).unwrap();
        let rel = r.sub(&f).l2_norm() / f.l2_norm();
        assert!(rel < 0.10, "{rel}");
    }

    #[test]
    fn zero_and_linearity() {
        let (_, a, grid) = euclid_setup(41);
        let dims = a.sub.dims;
        let zero = a.apply(&Sinogram::zeros(dims, Orientation::Plus)).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
        let g1 = Sinogram { values: (0..dims.len()).map(|k| (k as f64 * 0.37).sin()).collect(), ..Sinogram::zeros(dims, Orientation::Plus) };
        let g2 = Sinogram { values: (0..dims.len()).map(|k| (k as f64 * 0.11).cos()).collect(), ..g1.clone() };
        let sum = g1.with_values(g1.values.iter().zip(&g2.values).map(|(x, y)| 2.0 * x - 3.0 * y).collect());
        let lhs = a.apply(&sum).unwrap();
        let mut rhs = a.apply(&g1).unwrap();
        rhs.scale(2.0);
        rhs.axpy(-3.0, &a.apply(&g2).unwrap());
        let scale = rhs.max_abs();
        assert!(lhs.sub(&rhs).max_abs() <= 1e-12 * scale.max(1.0));
        assert_eq!(grid.values.len(), lhs.values.len());
    }

    #[test]
    fn sparse_coverage_is_rejected() {
        let (_, a, _) = euclid_setup(21);
        let dims = a.sub.dims;
        let mut g = Sinogram::zeros(dims, Orientation::Plus);
        g.mask = Some((0..dims.len()).map(|k| k % 3 == 0).collect());
        assert!(matches!(a.apply(&g), Err(Error::CoverageTooSparse { .. })));
        g.mask = Some((0..dims.len()).map(|k| k % 3 != 0).collect());
        assert!(a.apply(&g).is_ok());
    }

    #[test]
    fn the_lens_disk_is_not_simple() {
        let m = ConformalMetric::reference_lens();
        let err = SimpleSubdomain::new(&m, Disk::unit(), SinogramDims::default(), 2e-2).unwrap_err();
        assert!(matches!(err, Error::NotSimple { count } if count > 0));
        assert!(SimpleSubdomain::new(&m, Disk::upper_half_disk(), SinogramDims::default(), 2e-2).is_ok());
    }

    /// Returns the report for independent data, its relative error, and the
    /// report for data in the range of the discrete `X`.
    fn neumann_case(metric: &ConformalMetric, disk: Disk, n: usize, blob: Blob) -> (NeumannReport, f64, NeumannReport) {
        let dims = SinogramDims::new(360, 181);
        let sub = SimpleSubdomain::new(metric, disk, dims, 2e-2).unwrap();
        let grid = GridFunction::covering(&disk, n).unwrap();
        let dirs = DirectionGrid::new(256).unwrap();
        let inv = SubdomainInverter::build(metric, sub, &WeightSpec::Unit, &grid, dirs, &[Orientation::Plus], TraceOptions::with_step(2e-2)).unwrap();
        let f = gaussian_blob(&grid, blob).unwrap();
        // data from an independent, finer forward solve
        let g = forward(metric, &disk, &WeightSpec::Unit, &f, dims, Orientation::Plus, 2e-3).unwrap();
        let rep = inv.solve(&g, NeumannOptions::default()).unwrap();
        let rel = rep.f.sub(&f).l2_norm() / f.l2_norm();
        let consistent = inv.solve(&inv.forward(&f, Orientation::Plus).unwrap(), NeumannOptions::default()).unwrap();
        (rep, rel, consistent)
    }

    fn assert_monotone(res: &[f64]) {
        for w in res.iter().take(10).collect::<Vec<_>>().windows(2) {
            assert!(w[1] <= w[0], "{res:?}");
        }
    }

    #[test]
    fn neumann_recovers_euclidean_blob() {
        let (rep, rel, consistent) = neumann_case(&ConformalMetric::euclidean(), Disk::unit(), 81, Blob::new(0.1, -0.2, 0.08, 1.0));
        assert!(rel < 0.03, "{rel}");
        assert!(rep.iterations() <= 10);
        assert_monotone(&consistent.residuals);
    }

    #[test]
    fn neumann_recovers_lens_blob_on_the_upper_disk() {
        let (rep, rel, consistent) = neumann_case(&ConformalMetric::reference_lens(), Disk::upper_half_disk(), 81, Blob::new(0.0, 0.5, 0.06, 1.0));
        assert!(rel < 0.05, "{rel}");
        assert!(rep.iterations() <= 30);
        assert_monotone(&consistent.residuals);
    }

    #[test]
    fn fine_grids_stop_at_the_smallest_update() {
        // grid spacing well below the data resolution excites a slowly growing mode
        let (rep, rel, _) = neumann_case(&ConformalMetric::reference_lens(), Disk::upper_half_disk(), 121, Blob::new(0.0, 0.5, 0.06, 1.0));
        assert!(rep.semi_converged);
        assert!(rep.iterations() < 30);
        assert!(rel < 0.01, "{rel}");
    }

    #[test]
    fn neumann_of_zero_is_zero() {
        let (_, a, grid) = euclid_setup(21);
        let e = ConformalMetric::euclidean();
        let plan = ForwardPlan::build(&e, &a.sub.disk, &WeightSpec::Unit, a.sub.dims, Orientation::Plus, &PlanOptions::default()).unwrap();
        let inv = SubdomainInverter { inverse: a, plans: vec![plan] };
        let rep = inv.solve(&Sinogram::zeros(inv.inverse.sub.dims, Orientation::Plus), NeumannOptions::default()).unwrap();
        assert_eq!(rep.iterations(), 1);
        assert!(rep.f.values.iter().all(|&v| v == 0.0));
        assert_eq!(rep.f.values.len(), grid.values.len());
    }

    fn lens_upper() -> (ConformalMetric, SimpleSubdomain) {
        let m = ConformalMetric::reference_lens();
        let sub = SimpleSubdomain { disk: Disk::upper_half_disk(), dims: SinogramDims::new(360, 181) };
        (m, sub)
    }

    #[test]
    fn remap_of_constants_and_the_vertical_diameter() {
        let (m, sub) = lens_upper();
        let m_dims = SinogramDims::new(360, 181);
        let remap = Remap::build(&m, &Disk::unit(), m_dims, &sub, 5e-3).unwrap();
        assert!(remap.coverage() > 0.5, "{}", remap.coverage());
        let ones = Sinogram { values: vec![1.0; m_dims.len()], ..Sinogram::zeros(m_dims, Orientation::Plus) };
        let r = remap.apply(&ones).unwrap();
        // bicubic weights sum to one only up to rounding
        for (k, &v) in r.values.iter().enumerate() {
            if r.is_observed(k) {
                assert!((v - 1.0).abs() < 1e-12, "{v}");
            } else {
                assert_eq!(v, 0.0);
            }
        }
        let smooth = Sinogram {
            values: (0..m_dims.len()).map(|k| (m_dims.beta(k / 181)).sin() + 2.0 * m_dims.alpha(k % 181).cos()).collect(),
            ..ones.clone()
        };
        let r = remap.apply(&smooth).unwrap();
        // (π/2, 0) on either disk: the vertical diameter, heading down from (0, 1)
        let k = 90 * 181 + 90;
        assert!(r.is_observed(k));
        assert!((r.values[k] - smooth.eval(FRAC_PI_2, 0.0)).abs() < 1e-3);
    }

    #[test]
    fn remapped_data_matches_subdomain_forward() {
        let (m, sub) = lens_upper();
        let big = Disk::unit();
        let m_dims = SinogramDims::new(720, 361);
        let opts = PlanOptions { trace: TraceOptions::with_step(5e-3), ..Default::default() };
        let plan_m = ForwardPlan::build(&m, &big, &WeightSpec::Unit, m_dims, Orientation::Plus, &opts).unwrap();
        let plan_u = ForwardPlan::build(&m, &sub.disk, &WeightSpec::Unit, sub.dims, Orientation::Plus, &opts).unwrap();
        let remap = Remap::build(&m, &big, m_dims, &sub, 5e-3).unwrap();
        let grid = GridFunction::covering(&sub.disk, 101).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let r = rng.gen_range(0.0..0.2);
            let th = rng.gen_range(0.0..TAU);
            let blob = Blob::new(r * th.cos(), 0.5 + r * th.sin(), rng.gen_range(0.06..0.08), rng.gen_range(0.5..1.5));
            let f = gaussian_blob(&grid, blob).unwrap();
            let via_m = remap.apply(&plan_m.apply(&f)).unwrap();
            let direct = plan_u.apply(&f);
            let worst = (0..via_m.values.len())
                .filter(|&k| via_m.is_observed(k))
                .map(|k| (via_m.values[k] - direct.values[k]).abs())
                .fold(0.0, f64::max);
            assert!(worst < 2e-3, "{blob:?}: {worst}");
        }
    }

    #[test]
    fn lens_cancellation_erases_the_conjugate_singularities() {
        let m = ConformalMetric::reference_lens();
        let big = Disk::unit();
        let grid = GridFunction::covering(&big, 141).unwrap();
        let sub = SimpleSubdomain::new(&m, Disk::upper_half_disk(), SinogramDims::new(360, 181), 2e-2).unwrap();
        let r = cancellation_pipeline(&m, &big, &grid, Blob::new(0.0, -0.5, 0.03, 1.0), &sub, &CancellationOptions::default()).unwrap();
        assert!(r.cancellation_ratio <= 0.3, "{}", r.cancellation_ratio);
        assert!(r.sum_ratio >= 1.2, "{}", r.sum_ratio);
        assert!(r.outside_change < 0.1, "{}", r.outside_change);
        assert!(r.window.iter().any(|&w| w));
    }

    #[test]
    fn euclidean_cancellation_has_no_overlap() {
        let e = ConformalMetric::euclidean();
        let big = Disk::unit();
        let grid = GridFunction::covering(&big, 141).unwrap();
        let sub = SimpleSubdomain { disk: Disk::upper_half_disk(), dims: SinogramDims::new(360, 181) };
        let err = cancellation_pipeline(&e, &big, &grid, Blob::new(0.0, -0.5, 0.03, 1.0), &sub, &CancellationOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NoConjugateOverlap));
    }

    fn conjugate_pair(m: &ConformalMetric, p: Point) -> Vec<Point> {
        conjugate_chain(m, &Disk::unit(), p, Vec2::new(0.0, 1.0), 1e-3).unwrap()
    }

    fn two_blobs(weight: WeightSpec) -> Result<(f64, f64, SeriesReport)> {
        let m = ConformalMetric::reference_lens();
        let centers = conjugate_pair(&m, Point::new(0.0, -0.5));
        let sys = AttenuatedSystem::build(&m, &Disk::unit(), weight, &centers[..2], AttenuatedOptions::default())?;
        let blobs = [Blob::new(centers[0].x, centers[0].y, 0.05, 1.0), Blob::new(centers[1].x, centers[1].y, 0.05, 0.7)];
        let truth: Vec<GridFunction> = (0..2).map(|k| gaussian_blob(sys.regions[k].grid(), blobs[k]).unwrap()).collect();
        let mut g = sys.forward(&truth[0]);
        let g1 = sys.forward(&truth[1]);
        g.values.iter_mut().zip(&g1.values).for_each(|(a, b)| *a += b);
        let (f0, f1, series) = sys.recover(0, 1, &g)?;
        let rel = |f: &GridFunction, t: &GridFunction| f.sub(t).l2_norm() / t.l2_norm();
        Ok((rel(&f0, &truth[0]), rel(&f1, &truth[1]), series))
    }

    #[test]
    fn attenuated_pair_is_recovered() {
        let (e0, e1, series) = two_blobs(WeightSpec::Attenuation(Sigma::Constant(1.0))).unwrap();
        assert!(e0 <= 0.3 && e1 <= 0.3, "{e0} {e1}");
        assert!(series.residual < 1e-3);
        assert!(series.term_norms.windows(2).all(|w| w[1] < 0.5 * w[0]), "{:?}", series.term_norms);
    }

    #[test]
    fn unit_weight_pair_is_not_contractive() {
        let err = two_blobs(WeightSpec::Unit).unwrap_err();
        assert!(matches!(err, Error::QNotContractive { .. }), "{err}");
    }

    #[test]
    fn null_triple_cancels_better_at_higher_frequency() {
        let m = double_lens();
        let centers = conjugate_pair(&m, Point::new(0.0, -0.75));
        assert_eq!(centers.len(), 3);
        let opts = AttenuatedOptions { sub_grid: 81, ..AttenuatedOptions::default() };
        let sys = AttenuatedSystem::build(&m, &Disk::unit(), WeightSpec::Attenuation(Sigma::Constant(1.0)), &centers, opts).unwrap();
        let blob = Blob::new(centers[0].x, centers[0].y, 0.045, 1.0);
        let ratios: Vec<(f64, f64)> = [60.0, 90.0]
            .iter()
            .map(|&om| {
                let n = null_triple(&sys, blob, Vec2::new(om, 0.0), 0.09).unwrap();
                assert!(n.f.iter().all(|f| f.l2_norm() > 0.01));
                (n.residual_plus / n.scale_plus, n.residual_minus / n.scale_minus)
            })
            .collect();
        assert!(ratios[1].0 < ratios[0].0 && ratios[1].1 < ratios[0].1, "{ratios:?}");
        assert!(ratios[1].0 < 0.2 && ratios[1].1 < 0.05, "{ratios:?}");
    }
}
