//! One function per subcommand. Each writes its artifacts under the output
//! directory and returns the scalar metrics as a JSON object.
use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::{json, Map, Value};

use conjray_core::io::{save_grid, save_sinogram};
use conjray_core::jacobi::VertexClass;
use conjray_core::xray::{blob_collection, gaussian_blob, ring_of_blobs};
use conjray_core::{
    artifact_pipeline, cancellation_pipeline, conjugate_chain, conjugate_locus, double_lens, forward, null_triple, ArtifactOptions,
    AttenuatedOptions, AttenuatedSystem, Blob, CancellationOptions, ConjugateLocus, DirectionGrid, GridFunction, Point, SimpleSubdomain,
    Sinogram, TraceOptions, Vec2,
};

use crate::config::{AttenuatedMode, Phantom, RunConfig};
use crate::output::{save_grid_csv, save_grid_pgm, save_polylines_csv, save_sinogram_pgm};
use crate::CliError;

fn grid_out(dir: &Path, name: &str, f: &GridFunction) -> Result<(), CliError> {
    save_grid(dir.join(format!("{name}.crgrid")), f)?;
    save_grid_pgm(&dir.join(format!("{name}.pgm")), f, None)?;
    Ok(())
}

fn sino_out(dir: &Path, name: &str, g: &Sinogram) -> Result<(), CliError> {
    save_sinogram(dir.join(format!("{name}.crgrid")), g)?;
    save_sinogram_pgm(&dir.join(format!("{name}.pgm")), g, None)?;
    Ok(())
}

/// `summary.txt`: one `key = value` line per scalar metric.
fn write_summary(dir: &Path, summary: &Map<String, Value>) -> Result<(), CliError> {
    let mut f = fs::File::create(dir.join("summary.txt"))?;
    for (k, v) in summary {
        writeln!(f, "{k} = {v}")?;
    }
    Ok(())
}

fn finish(dir: &Path, summary: Value) -> Result<Value, CliError> {
    if let Value::Object(m) = &summary {
        write_summary(dir, m)?;
    }
    Ok(summary)
}

fn phantom(cfg: &RunConfig, grid: &GridFunction) -> Result<GridFunction, CliError> {
    Ok(match cfg.phantom {
        Phantom::Ones => grid.clone().from_fn(|_| 1.0),
        Phantom::Blob => gaussian_blob(grid, cfg.blob)?,
        Phantom::Ring => blob_collection(grid, &ring_of_blobs(cfg.ring_width))?,
    })
}

fn sino_stats(g: &Sinogram) -> (f64, f64) {
    let max = g.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (max, g.l2_norm())
}

pub fn forward_cmd(cfg: &RunConfig) -> Result<Value, CliError> {
    let dir = &cfg.output;
    let metric = cfg.metric.build();
    let disk = cfg.disk();
    let grid = GridFunction::covering(&disk, cfg.grid)?;
    let f = phantom(cfg, &grid)?;
    let g = forward(&metric, &disk, &cfg.weight(), &f, cfg.sino, cfg.orientation, cfg.h)?;
    grid_out(dir, "phantom", &f)?;
    sino_out(dir, "sinogram", &g)?;
    let (max, l2) = sino_stats(&g);
    finish(dir, json!({ "command": "forward", "max": max, "l2": l2 }))
}

fn locus_rows(l: &ConjugateLocus) -> Vec<(usize, Vec<(Point, &'static str)>)> {
    l.branches().into_iter().enumerate().map(|(k, b)| (k, b.iter().map(|v| (v.point, v.class.as_str())).collect())).collect()
}

pub fn locus_cmd(cfg: &RunConfig) -> Result<Value, CliError> {
    let dir = &cfg.output;
    let l = conjugate_locus(&cfg.metric.build(), &cfg.disk(), cfg.point, cfg.locus_dirs, cfg.h)?;
    save_polylines_csv(&dir.join("locus.csv"), &locus_rows(&l))?;
    let defined = l.defined().count();
    let folds = l.defined().filter(|v| v.class == VertexClass::Fold).count();
    finish(
        dir,
        json!({
            "command": "locus",
            "vertices": defined,
            "branches": l.branches().len(),
            "cusps": l.cusp_count(),
            "folds": folds,
            "tangent_reversals": l.tangent_reversals(),
        }),
    )
}

pub fn cancel_cmd(cfg: &RunConfig) -> Result<Value, CliError> {
    let dir = &cfg.output;
    let metric = cfg.metric.build();
    let disk = cfg.disk();
    let grid = GridFunction::covering(&disk, cfg.grid)?;
    let opts = CancellationOptions { trace: TraceOptions::with_step(cfg.h), dirs: DirectionGrid::new(cfg.dirs)?, ..Default::default() };
    let sub = SimpleSubdomain::new(&metric, cfg.u2(), opts.sub_dims, 2.0 * cfg.h)?;
    let r = cancellation_pipeline(&metric, &disk, &grid, cfg.blob, &sub, &opts)?;
    grid_out(dir, "f1", &gaussian_blob(&grid, cfg.blob)?)?;
    sino_out(dir, "g", &r.g)?;
    sino_out(dir, "g_remapped", &r.g_sub)?;
    grid_out(dir, "f2", &r.f2)?;
    grid_out(dir, "fdiff", &r.fdiff)?;
    sino_out(dir, "x_fdiff", &r.x_fdiff)?;
    let window = Sinogram { values: r.window.iter().map(|&w| if w { 1.0 } else { 0.0 }).collect(), mask: None, ..r.g.clone() };
    sino_out(dir, "window", &window)?;
    finish(
        dir,
        json!({
            "command": "cancel",
            "cancellation_ratio": r.cancellation_ratio,
            "sum_ratio": r.sum_ratio,
            "outside_change": r.outside_change,
            "coverage": r.coverage,
            "neumann_iterations": r.neumann.iterations(),
        }),
    )
}

pub fn artifact_cmd(cfg: &RunConfig) -> Result<Value, CliError> {
    let dir = &cfg.output;
    let metric = cfg.metric.build();
    let disk = cfg.disk();
    let grid = GridFunction::covering(&disk, cfg.grid)?;
    let opts = ArtifactOptions { dims: cfg.sino, dirs: DirectionGrid::new(cfg.dirs)?, trace: TraceOptions::with_step(cfg.h), locus_dirs: cfg.locus_dirs };
    let blobs = ring_of_blobs(cfg.ring_width);
    let r = artifact_pipeline(&metric, &disk, &grid, &blobs, &opts)?;
    grid_out(dir, "recon", &r.recon)?;
    grid_out(dir, "error", &r.error)?;
    save_grid_csv(&dir.join("recon.csv"), &r.recon)?;
    let mut rows = Vec::new();
    for l in &r.loci {
        for (_, run) in locus_rows(l) {
            rows.push((rows.len(), run));
        }
    }
    save_polylines_csv(&dir.join("loci.csv"), &rows)?;
    finish(
        dir,
        json!({
            "command": "artifact",
            "localization_score": r.localization_score,
            "blob_energies": r.blob_energies,
            "blob_has_locus": r.blob_has_locus,
        }),
    )
}

fn rel_err(f: &GridFunction, truth: &GridFunction) -> f64 {
    f.sub(truth).l2_norm() / truth.l2_norm()
}

pub fn attenuated_cmd(cfg: &RunConfig) -> Result<Value, CliError> {
    let dir = &cfg.output;
    let disk = cfg.disk();
    let weight = cfg.weight();
    let up = Vec2::new(0.0, 1.0);
    let opts = AttenuatedOptions {
        trace: TraceOptions::with_step(cfg.h),
        dirs: DirectionGrid::new(cfg.dirs)?,
        sub_grid: cfg.region_grid,
        ..Default::default()
    };
    match cfg.attenuated_mode {
        AttenuatedMode::Pair => {
            let metric = cfg.metric.build();
            let chain = conjugate_chain(&metric, &disk, cfg.blob.center, up, 1e-3)?;
            if chain.len() < 2 {
                return Err(CliError::Failed(format!("no point conjugate to {:?} along the vertical geodesic", cfg.blob.center)));
            }
            let sys = AttenuatedSystem::build(&metric, &disk, weight, &chain[..2], opts)?;
            let blobs = [cfg.blob, Blob { center: chain[1], amplitude: 0.7 * cfg.blob.amplitude, ..cfg.blob }];
            let truth = [gaussian_blob(sys.regions[0].grid(), blobs[0])?, gaussian_blob(sys.regions[1].grid(), blobs[1])?];
            let mut g = sys.forward(&truth[0]);
            g.values.iter_mut().zip(&sys.forward(&truth[1]).values).for_each(|(a, b)| *a += b);
            let (f1, f2, series) = sys.recover(0, 1, &g)?;
            sino_out(dir, "g", &g)?;
            grid_out(dir, "f1_true", &truth[0])?;
            grid_out(dir, "f2_true", &truth[1])?;
            grid_out(dir, "f1_rec", &f1)?;
            grid_out(dir, "f2_rec", &f2)?;
            finish(
                dir,
                json!({
                    "command": "attenuated",
                    "mode": "pair",
                    "p2": [chain[1].x, chain[1].y],
                    "f1_error": rel_err(&f1, &truth[0]),
                    "f2_error": rel_err(&f2, &truth[1]),
                    "series_terms": series.term_norms.len(),
                    "series_residual": series.residual,
                }),
            )
        }
        AttenuatedMode::Null => {
            let metric = double_lens();
            let start = cfg.blob.center;
            let chain = conjugate_chain(&metric, &disk, start, up, 1e-3)?;
            if chain.len() < 3 {
                return Err(CliError::Failed(format!("{start:?} has fewer than two conjugate points on the double lens")));
            }
            let sys = AttenuatedSystem::build(&metric, &disk, weight, &chain[..3], opts)?;
            let k = Vec2::new(cfg.omega, 0.0);
            // rays count as "through" a center when they pass within two blob widths
            let n = null_triple(&sys, cfg.blob, k, 2.0 * cfg.blob.width)?;
            for (i, f) in n.f.iter().enumerate() {
                grid_out(dir, &format!("f{}", i + 1), f)?;
            }
            finish(
                dir,
                json!({
                    "command": "attenuated",
                    "mode": "null",
                    "norms": n.f.iter().map(|f| f.l2_norm()).collect::<Vec<_>>(),
                    "ratio_plus": n.residual_plus / n.scale_plus,
                    "ratio_minus": n.residual_minus / n.scale_minus,
                    "series_terms": n.series.term_norms.len(),
                }),
            )
        }
    }
}
