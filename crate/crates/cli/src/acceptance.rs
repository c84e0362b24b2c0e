//! The acceptance suite: eleven numbered criteria, each reduced to one
//! pass/fail verdict with the measured numbers alongside.
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use conjray_core::adjoint::{backproject, grid_inner, sinogram_inner, DirectionGrid, RayTable};
use conjray_core::geodesic::{shoot, Disk, FanBeamCoord, Orientation, TraceOptions};
use conjray_core::inversion::{
    cancellation_pipeline, conjugate_chain, double_lens, null_triple, AttenuatedOptions, AttenuatedSystem, CancellationOptions, NeumannOptions,
    SimpleSubdomain, SubdomainInverter,
};
use conjray_core::jacobi::{c21_map, canonical_map, conjugate_event, conjugate_locus, conjugate_times, integrate_jacobi, SearchWindow, VertexClass};
use conjray_core::xray::{forward, gaussian_blob, r1_determinant, ring_of_blobs, ForwardPlan, PlanOptions};
use conjray_core::{
    artifact_pipeline, ArtifactOptions, Blob, ConformalMetric, ConjugateEvent, Error, GridFunction, Point, Sigma, SinogramDims, Vec2, WeightSpec,
};

pub type Check = fn() -> conjray_core::Result<Verdict>;

/// Outcome of one criterion before timing is attached.
#[derive(Clone, Debug)]
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict { pass, detail: detail.into() }
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "criterion {:>2} {tag} {}: {} ({:.1} s)", self.id, self.name, self.detail, self.seconds)
    }
}

pub const CRITERIA: &[(u8, &str, Check)] = &[
    (1, "euclidean chord", euclidean_chord),
    (2, "constant curvature", constant_curvature),
    (3, "conservation", conservation),
    (4, "canonical relation", canonical_relation),
    (5, "adjointness", adjointness),
    (6, "normal-operator symbol", symbol_check),
    (7, "simple-domain inversion", simple_inversion),
    (8, "cancellation", cancellation),
    (9, "artifact localization", artifact_localization),
    (10, "attenuated dichotomy", attenuated_dichotomy),
    (11, "locus shape", locus_shape),
];

pub fn run_one(id: u8, name: &'static str, check: Check) -> Outcome {
    let t = Instant::now();
    let v = check().unwrap_or_else(|e| Verdict::new(false, format!("error: {e}")));
    Outcome { id, name, pass: v.pass, detail: v.detail, seconds: t.elapsed().as_secs_f64() }
}

/// Runs the selected criteria (all when `only` is empty), reporting each as it finishes.
pub fn run(only: &[u8], mut report: impl FnMut(&Outcome)) -> Vec<Outcome> {
    CRITERIA
        .iter()
        .filter(|(id, _, _)| only.is_empty() || only.contains(id))
        .map(|&(id, name, check)| {
            let o = run_one(id, name, check);
            report(&o);
            o
        })
        .collect()
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("thread pool").install(f)
}

fn euclidean_chord() -> conjray_core::Result<Verdict> {
    let t = Instant::now();
    let e = ConformalMetric::euclidean();
    let d = Disk::unit();
    let ones = GridFunction::covering(&d, 201)?.from_fn(|_| 1.0);
    let dims = SinogramDims::new(360, 90);
    let s = single_threaded(|| forward(&e, &d, &WeightSpec::Unit, &ones, dims, Orientation::Plus, 1e-3))?;
    let secs = t.elapsed().as_secs_f64();
    let mut worst: f64 = 0.0;
    for i in 0..dims.n_beta {
        for j in 0..dims.n_alpha {
            worst = worst.max((s.get(i, j) - 2.0 * dims.alpha(j).cos()).abs());
        }
    }
    Ok(Verdict::new(worst < 5e-3 && secs < 30.0, format!("max |Xf − 2cos α| = {worst:.2e} (< 5e-3), {secs:.1} s single-threaded (< 30 s)")))
}

fn constant_curvature() -> conjray_core::Result<Verdict> {
    let m = ConformalMetric::sphere_cap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut k_err: f64 = 0.0;
    for _ in 0..1000 {
        let p = Point::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
        k_err = k_err.max((m.gauss_curvature(p) - 1.0).abs());
    }
    // a cap larger than a hemisphere, so every tested chord is longer than π
    let d = Disk::new(Point::ZERO, 3.0)?;
    let mut t_err: f64 = 0.0;
    for _ in 0..50 {
        let c = FanBeamCoord::plus(rng.gen_range(0.0..TAU), rng.gen_range(-0.6..0.6));
        let path = shoot(&m, &d, c, 1e-3)?;
        let pair = integrate_jacobi(&m, &path);
        match conjugate_times(&pair, 0.0).first() {
            Some(&t) => t_err = t_err.max((t - PI).abs()),
            None => return Ok(Verdict::new(false, format!("no conjugate point on chord {c:?}"))),
        }
    }
    Ok(Verdict::new(k_err < 1e-9 && t_err < 1e-3, format!("max |K − 1| = {k_err:.1e} (< 1e-9), max |t_c − π| = {t_err:.1e} over 50 rays (< 1e-3)")))
}

fn conservation() -> conjray_core::Result<Verdict> {
    let m = ConformalMetric::reference_lens();
    let d = Disk::unit();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut speed, mut wronskian): (f64, f64) = (0.0, 0.0);
    for _ in 0..500 {
        let c = FanBeamCoord::plus(rng.gen_range(0.0..TAU), rng.gen_range(-1.5..1.5));
        let path = shoot(&m, &d, c, 1e-3)?;
        speed = path.samples.iter().fold(speed, |w, s| w.max((m.norm(s.x, s.v) - 1.0).abs()));
        wronskian = wronskian.max(integrate_jacobi(&m, &path).max_wronskian_drift());
    }
    Ok(Verdict::new(speed < 1e-8 && wronskian < 1e-8, format!("unit-speed drift {speed:.1e}, Wronskian drift {wronskian:.1e} on 500 rays (< 1e-8)")))
}

/// Conjugate events on random lens chords: `(path, pair, event)`.
fn lens_events(n: usize, seed: u64) -> conjray_core::Result<Vec<(conjray_core::GeodesicPath, conjray_core::ScalarJacobiPair, ConjugateEvent)>> {
    let m = ConformalMetric::reference_lens();
    let d = Disk::unit();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let c = FanBeamCoord::plus(rng.gen_range(0.0..TAU), rng.gen_range(-0.5..0.5));
        let path = shoot(&m, &d, c, 1e-3)?;
        let pair = integrate_jacobi(&m, &path);
        let t1 = rng.gen_range(0.0..0.4);
        if let Some(&t2) = conjugate_times(&pair, t1).first() {
            let ev = conjugate_event(&m, &path, &pair, t1, t2)?;
            out.push((path, pair, ev));
        }
    }
    Ok(out)
}

fn canonical_relation() -> conjray_core::Result<Verdict> {
    let m = ConformalMetric::reference_lens();
    let d = Disk::unit();
    let opts = TraceOptions::with_step(1e-3);
    let (mut consistency, mut swap): (f64, f64) = (0.0, 0.0);
    for (path, pair, ev) in lens_events(50, 4)? {
        let c1 = canonical_map(&path, &pair, ev.t1, ev.cprime1);
        let c2 = canonical_map(&path, &pair, ev.t2, ev.cprime2);
        let diffs = [c1.beta - c2.beta, c1.alpha - c2.alpha, c1.y_hat - c2.y_hat, c1.eta_hat - c2.eta_hat];
        consistency = diffs.iter().fold(consistency, |w, x| w.max(x.abs()));

        let xi1 = m.perp(ev.p1, ev.v1);
        let fwd = c21_map(&m, &d, ev.p1, xi1, SearchWindow::default(), opts)?;
        let Some(hit) = fwd.iter().min_by(|a, b| (a.p2 - ev.p2).norm().total_cmp(&(b.p2 - ev.p2).norm())) else {
            return Ok(Verdict::new(false, format!("c21_map lost the partner of {:?}", ev.p1)));
        };
        let back = c21_map(&m, &d, hit.p2, hit.xi2, SearchWindow::default(), opts)?;
        let Some(ret) = back.iter().min_by(|a, b| (a.p2 - ev.p1).norm().total_cmp(&(b.p2 - ev.p1).norm())) else {
            return Ok(Verdict::new(false, format!("c21_map has no way back from {:?}", hit.p2)));
        };
        swap = swap.max((ret.p2 - ev.p1).norm()).max((ret.xi2.x - xi1.x).abs()).max((ret.xi2.y - xi1.y).abs());
    }
    Ok(Verdict::new(
        consistency < 1e-6 && swap < 1e-5,
        format!("canonical images agree to {consistency:.1e} (< 1e-6), C21 swap returns to {swap:.1e} (< 1e-5) on 50 events"),
    ))
}

fn adjointness() -> conjray_core::Result<Verdict> {
    let m = ConformalMetric::reference_lens();
    let d = Disk::unit();
    let grid = GridFunction::covering(&d, 81)?;
    let dims = SinogramDims::new(360, 181);
    let opts = TraceOptions::with_step(1e-2);
    let plan = ForwardPlan::build(&m, &d, &WeightSpec::Unit, dims, Orientation::Plus, &PlanOptions { trace: opts, ..Default::default() })?;
    let table = RayTable::build(&m, &d, &WeightSpec::Unit, &grid, DirectionGrid::new(256)?, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let blob = |rng: &mut ChaCha8Rng| {
        let r = rng.gen_range(0.0..0.5);
        let th = rng.gen_range(0.0..TAU);
        Blob::new(r * th.cos(), r * th.sin(), rng.gen_range(0.08..0.15), rng.gen_range(0.5..1.5))
    };
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let f = gaussian_blob(&grid, blob(&mut rng))?;
        let g = plan.apply(&gaussian_blob(&grid, blob(&mut rng))?);
        let lhs = sinogram_inner(&m, &d, &plan.apply(&f), &g);
        let rhs = grid_inner(&m, &f, &table.backproject(&g));
        worst = worst.max(((lhs - rhs) / lhs).abs());
    }
    Ok(Verdict::new(worst < 1e-2, format!("max |⟨Xf,g⟩ − ⟨f,X*g⟩| / |⟨Xf,g⟩| = {worst:.1e} on 5 pairs (< 1e-2)")))
}

/// `‖Nf‖/‖f‖` over `|x| < 0.3` for `f = χ(x) cos(ω x₁)`, `χ` a bump of radius 0.6.
fn plane_wave_ratio(omega: f64) -> conjray_core::Result<f64> {
    let e = ConformalMetric::euclidean();
    let d = Disk::unit();
    let chi = |r: f64| if r < 0.6 { (FRAC_PI_2 * r / 0.6).cos().powi(2) } else { 0.0 };
    let f = GridFunction::covering(&d, 301)?.from_fn(|p| chi(p.norm()) * (omega * p.x).cos());
    let sino = forward(&e, &d, &WeightSpec::Unit, &f, SinogramDims::new(720, 721), Orientation::Plus, 1e-2)?;
    let out = GridFunction::zeros(61, 61, Point::new(-0.3, -0.3), 0.01, 0.01)?;
    let nf = backproject(&e, &d, &WeightSpec::Unit, &sino, &out, DirectionGrid::new(1024)?, TraceOptions::with_step(2e-2))?;
    let (mut num, mut den) = (0.0, 0.0);
    for (k, p) in nf.nodes() {
        if p.norm() < 0.3 {
            num += nf.values[k].powi(2);
            den += (chi(p.norm()) * (omega * p.x).cos()).powi(2);
        }
    }
    Ok((num / den).sqrt())
}

fn symbol_check() -> conjray_core::Result<Verdict> {
    let (r40, r80) = (plane_wave_ratio(40.0)?, plane_wave_ratio(80.0)?);
    let (e40, e80) = ((r40 / (TAU / 40.0) - 1.0).abs(), (r80 / (TAU / 80.0) - 1.0).abs());
    let halving = (r40 / r80 / 2.0 - 1.0).abs();
    Ok(Verdict::new(
        e40 < 0.1 && e80 < 0.1 && halving < 0.15,
        format!(
            "‖Nf‖/‖f‖ = {r40:.4} at ω=40 ({:.0}% off 2π/ω), {r80:.4} at ω=80 ({:.0}% off); halving ratio {:.3} ({:.1}% off 2)",
            100.0 * e40,
            100.0 * e80,
            r40 / r80,
            100.0 * halving
        ),
    ))
}

fn neumann_case(metric: &ConformalMetric, disk: Disk, blob: Blob) -> conjray_core::Result<(f64, usize)> {
    let dims = SinogramDims::new(360, 181);
    let sub = SimpleSubdomain::new(metric, disk, dims, 2e-2)?;
    let grid = GridFunction::zeros(200, 200, Point::new(disk.center.x - disk.radius, disk.center.y - disk.radius), 2.0 * disk.radius / 199.0, 2.0 * disk.radius / 199.0)?;
    let inv = SubdomainInverter::build(metric, sub, &WeightSpec::Unit, &grid, DirectionGrid::new(256)?, &[Orientation::Plus], TraceOptions::with_step(2e-2))?;
    let f = gaussian_blob(&grid, blob)?;
    let g = forward(metric, &disk, &WeightSpec::Unit, &f, dims, Orientation::Plus, 2e-3)?;
    let rep = inv.solve(&g, NeumannOptions::default())?;
    Ok((rep.f.sub(&f).l2_norm() / f.l2_norm(), rep.iterations()))
}

fn simple_inversion() -> conjray_core::Result<Verdict> {
    let t = Instant::now();
    let (e_rel, e_it) = neumann_case(&ConformalMetric::euclidean(), Disk::unit(), Blob::new(0.1, -0.2, 0.08, 1.0))?;
    let (l_rel, l_it) = neumann_case(&ConformalMetric::reference_lens(), Disk::upper_half_disk(), Blob::new(0.0, 0.5, 0.06, 1.0))?;
    let secs = t.elapsed().as_secs_f64();
    Ok(Verdict::new(
        e_rel < 0.03 && l_rel < 0.05 && e_it <= 30 && l_it <= 30 && secs < 300.0,
        format!("euclidean {:.2}% in {e_it} it (< 3%), lens U₂ {:.2}% in {l_it} it (< 5%), 200×200 grids, {secs:.0} s (< 300 s)", 100.0 * e_rel, 100.0 * l_rel),
    ))
}

fn cancellation() -> conjray_core::Result<Verdict> {
    let m = ConformalMetric::reference_lens();
    let big = Disk::unit();
    let grid = GridFunction::covering(&big, 141)?;
    let sub = SimpleSubdomain::new(&m, Disk::upper_half_disk(), SinogramDims::new(360, 181), 2e-2)?;
    let r = cancellation_pipeline(&m, &big, &grid, Blob::new(0.0, -0.5, 0.03, 1.0), &sub, &CancellationOptions::default())?;
    Ok(Verdict::new(
        r.cancellation_ratio <= 0.3 && r.outside_change < 0.1,
        format!(
            "cancellation ratio {:.3} (≤ 0.3), change outside the window {:.1}% (< 10%); sign check f₁+f₂ gives {:.2}",
            r.cancellation_ratio,
            100.0 * r.outside_change,
            r.sum_ratio
        ),
    ))
}

fn artifact_localization() -> conjray_core::Result<Verdict> {
    // the ring sits around the lens, off the disk's center
    let m = ConformalMetric::lens(1.2, 0.25, Point::new(0.2, 0.0));
    let d = Disk::unit();
    let grid = GridFunction::covering(&d, 161)?;
    let opts = ArtifactOptions { dims: SinogramDims::new(360, 270), ..ArtifactOptions::default() };
    let r = artifact_pipeline(&m, &d, &grid, &ring_of_blobs(0.03), &opts)?;
    let conj: Vec<f64> = r.blob_energies.iter().zip(&r.blob_has_locus).filter(|(_, &l)| l).map(|(e, _)| *e).collect();
    let free: Vec<f64> = r.blob_energies.iter().zip(&r.blob_has_locus).filter(|(_, &l)| !l).map(|(e, _)| *e).collect();
    let ratio = match (free.iter().cloned().reduce(f64::max), conj.iter().cloned().reduce(f64::min)) {
        (Some(f), Some(c)) if c > 0.0 => f / c,
        _ => {
            return Ok(Verdict::new(
                false,
                format!("localization score {:.3}; need blobs with and without loci, got {} / {}", r.localization_score, conj.len(), free.len()),
            ))
        }
    };
    Ok(Verdict::new(
        r.localization_score >= 0.6 && ratio < 0.1,
        format!("localization score {:.3} (≥ 0.6); locus-free / conjugate artifact energy {:.3} (< 0.1)", r.localization_score, ratio),
    ))
}

fn attenuated_dichotomy() -> conjray_core::Result<Verdict> {
    let m = ConformalMetric::reference_lens();
    let d = Disk::unit();
    let opts = TraceOptions::with_step(1e-3);
    let atten = WeightSpec::Attenuation(Sigma::Constant(1.0));
    let (mut min_det, mut max_even) = (f64::INFINITY, 0.0f64);
    for (_, _, ev) in lens_events(20, 10)? {
        min_det = min_det.min(r1_determinant(&m, &d, &atten, &ev, opts)?);
        max_even = max_even.max(r1_determinant(&m, &d, &WeightSpec::Unit, &ev, opts)?.abs());
    }
    let r1_ok = min_det > 0.0 && max_even <= 1e-12;

    let centers = conjugate_chain(&m, &d, Point::new(0.0, -0.5), Vec2::new(0.0, 1.0), 1e-3)?;
    let pair = &centers[..2];
    let sys = AttenuatedSystem::build(&m, &d, atten.clone(), pair, AttenuatedOptions::default())?;
    let blobs = [Blob::new(pair[0].x, pair[0].y, 0.05, 1.0), Blob::new(pair[1].x, pair[1].y, 0.05, 0.7)];
    let truth = [gaussian_blob(sys.regions[0].grid(), blobs[0])?, gaussian_blob(sys.regions[1].grid(), blobs[1])?];
    let mut g = sys.forward(&truth[0]);
    g.values.iter_mut().zip(&sys.forward(&truth[1]).values).for_each(|(a, b)| *a += b);
    let (f0, f1, _) = sys.recover(0, 1, &g)?;
    let err = (f0.sub(&truth[0]).l2_norm() / truth[0].l2_norm()).max(f1.sub(&truth[1]).l2_norm() / truth[1].l2_norm());
    drop(sys);

    let unit = AttenuatedSystem::build(&m, &d, WeightSpec::Unit, pair, AttenuatedOptions::default())?;
    let stalled = match unit.recover(0, 1, &unit.forward(&truth[0])) {
        Err(Error::QNotContractive { .. }) => true,
        Err(e) => return Err(e),
        Ok(_) => false,
    };
    drop(unit);

    let dl = double_lens();
    let triple = conjugate_chain(&dl, &d, Point::new(0.0, -0.75), Vec2::new(0.0, 1.0), 1e-3)?;
    if triple.len() < 3 {
        return Ok(Verdict::new(false, "double lens lost its second conjugate point"));
    }
    let sys = AttenuatedSystem::build(&dl, &d, atten, &triple[..3], AttenuatedOptions { sub_grid: 81, ..AttenuatedOptions::default() })?;
    let n = null_triple(&sys, Blob::new(triple[0].x, triple[0].y, 0.045, 1.0), Vec2::new(90.0, 0.0), 0.09)?;
    let nonzero = n.f.iter().all(|f| f.l2_norm() > 0.0);
    let (rp, rm) = (n.residual_plus / n.scale_plus, n.residual_minus / n.scale_minus);

    Ok(Verdict::new(
        r1_ok && err <= 0.3 && stalled && nonzero && rp < 1e-2 && rm < 1e-2,
        format!(
            "R1 det min {min_det:.2e} (> 0, σ≡1) / max {max_even:.0e} (κ≡1); pair error {:.1}% (≤ 30%); κ≡1 {}; null triple data {:.1}% / {:.1}% of component scale (< 1%)",
            100.0 * err,
            if stalled { "QNotContractive" } else { "converged" },
            100.0 * rp,
            100.0 * rm
        ),
    ))
}

fn locus_shape() -> conjray_core::Result<Verdict> {
    let m = ConformalMetric::reference_lens();
    let l = conjugate_locus(&m, &Disk::unit(), Point::new(0.0, -0.8), 720, 2e-3)?;
    let branches = l.branches();
    let cusps = l.cusp_count();
    // the cusp vertex must sit inside a branch, with fold vertices on both sides
    let flanked = branches.iter().any(|b| {
        b.iter().enumerate().any(|(i, v)| {
            v.class == VertexClass::Cusp
                && b[..i].iter().any(|w| w.class == VertexClass::Fold)
                && b[i + 1..].iter().any(|w| w.class == VertexClass::Fold)
        })
    });
    Ok(Verdict::new(
        cusps == 1 && flanked,
        format!("{cusps} cusp vertex (= 1), flanked by fold branches: {flanked}; {} tangent reversals", l.tangent_reversals()),
    ))
}
