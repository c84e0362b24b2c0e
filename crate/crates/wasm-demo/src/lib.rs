//! Browser bindings for three interactive views of a Gaussian lens metric:
//! the geodesic fan from a point, its conjugate locus, and a blob's sinogram.
//!
//! Curves come back flattened as `x, y` pairs with a `NaN, NaN` pair
//! between polylines, which a canvas loop can draw without further parsing.
use wasm_bindgen::prelude::*;

use conjray_core::xray::gaussian_blob;
use conjray_core::{conjugate_locus, forward, ConformalMetric, Disk, GridFunction, Orientation, Point, SinogramDims, TraceOptions, Vec2, WeightSpec};

type Res<T> = Result<T, String>;

fn lens(k: f64, sigma: f64) -> Res<ConformalMetric> {
    if !(k.is_finite() && sigma > 0.0) {
        return Err("lens needs a finite strength and a positive width".into());
    }
    Ok(ConformalMetric::lens(k, sigma, Point::ZERO))
}

fn inside(x: f64, y: f64) -> Res<Point> {
    let p = Point::new(x, y);
    if !(p.norm() < 0.98) {
        return Err("point must lie inside the unit disk".into());
    }
    Ok(p)
}

fn push_break(out: &mut Vec<f64>) {
    out.extend([f64::NAN, f64::NAN]);
}

/// `n_rays` geodesics leaving `(x, y)` in equally spaced directions, each
/// traced to the unit circle.
pub fn fan_polylines(k: f64, sigma: f64, x: f64, y: f64, n_rays: usize, h: f64) -> Res<Vec<f64>> {
    let m = lens(k, sigma)?;
    let p = inside(x, y)?;
    if n_rays == 0 || !(h > 0.0) {
        return Err("need at least one ray and a positive step".into());
    }
    let opts = TraceOptions::with_step(h);
    let mut out = Vec::new();
    for r in 0..n_rays {
        let th = r as f64 * std::f64::consts::TAU / n_rays as f64;
        let path = conjray_core::geodesic::trace_from(&m, &Disk::unit(), p, Vec2::new(th.cos(), th.sin()), opts).map_err(|e| e.to_string())?;
        for s in &path.samples {
            out.extend([s.x.x, s.x.y]);
        }
        push_break(&mut out);
    }
    Ok(out)
}

/// First conjugate locus of `(x, y)` as polylines, followed by the cusp
/// points as a final group (possibly empty).
pub fn locus_polylines(k: f64, sigma: f64, x: f64, y: f64, n_dirs: usize) -> Res<Vec<f64>> {
    let m = lens(k, sigma)?;
    let p = inside(x, y)?;
    let l = conjugate_locus(&m, &Disk::unit(), p, n_dirs.max(8), 5e-3).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for branch in l.branches() {
        for v in &branch {
            out.extend([v.point.x, v.point.y]);
        }
        push_break(&mut out);
    }
    for v in l.defined().filter(|v| v.class == conjray_core::jacobi::VertexClass::Cusp) {
        out.extend([v.point.x, v.point.y]);
    }
    Ok(out)
}

/// Sinogram of a Gaussian blob, row-major with `n_beta` rows of `n_alpha`
/// samples.
pub fn blob_sinogram(k: f64, sigma: f64, bx: f64, by: f64, width: f64, n_beta: usize, n_alpha: usize) -> Res<Vec<f64>> {
    let m = lens(k, sigma)?;
    let err = |e: conjray_core::Error| e.to_string();
    let n = ((2.0 / width) * 3.0).ceil().clamp(41.0, 161.0) as usize;
    let grid = GridFunction::covering(&Disk::unit(), n).map_err(err)?;
    let f = gaussian_blob(&grid, conjray_core::Blob::new(bx, by, width, 1.0)).map_err(err)?;
    let dims = SinogramDims::new(n_beta, n_alpha);
    dims.validate().map_err(err)?;
    Ok(forward(&m, &Disk::unit(), &WeightSpec::Unit, &f, dims, Orientation::Plus, 1e-2).map_err(err)?.values)
}

fn js<T>(r: Res<T>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn geodesic_fan(k: f64, sigma: f64, x: f64, y: f64, n_rays: usize, h: f64) -> Result<Vec<f64>, JsError> {
    js(fan_polylines(k, sigma, x, y, n_rays, h))
}

#[wasm_bindgen]
pub fn locus(k: f64, sigma: f64, x: f64, y: f64, n_dirs: usize) -> Result<Vec<f64>, JsError> {
    js(locus_polylines(k, sigma, x, y, n_dirs))
}

#[wasm_bindgen]
pub fn sinogram(k: f64, sigma: f64, bx: f64, by: f64, width: f64, n_beta: usize, n_alpha: usize) -> Result<Vec<f64>, JsError> {
    js(blob_sinogram(k, sigma, bx, by, width, n_beta, n_alpha))
}
