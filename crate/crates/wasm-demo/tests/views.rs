use conjray_wasm::{blob_sinogram, fan_polylines, locus_polylines};

/// Splits a flattened NaN-separated buffer into polylines of `(x, y)`.
fn polylines(buf: &[f64]) -> Vec<Vec<(f64, f64)>> {
    let mut out = vec![Vec::new()];
    for xy in buf.chunks(2) {
        if xy[0].is_nan() {
            out.push(Vec::new());
        } else {
            out.last_mut().unwrap().push((xy[0], xy[1]));
        }
    }
    out
}

#[test]
fn fan_rays_start_at_the_point_and_end_on_the_rim() {
    let buf = fan_polylines(1.2, 0.25, 0.1, -0.3, 12, 1e-2).unwrap();
    assert_eq!(buf.len() % 2, 0);
    let rays: Vec<_> = polylines(&buf).into_iter().filter(|r| !r.is_empty()).collect();
    assert_eq!(rays.len(), 12);
    for r in &rays {
        let (x0, y0) = r[0];
        assert!((x0 - 0.1).abs() < 1e-12 && (y0 + 0.3).abs() < 1e-12);
        let (x, y) = *r.last().unwrap();
        assert!(((x * x + y * y).sqrt() - 1.0).abs() < 1e-6, "ray ends at radius {}", (x * x + y * y).sqrt());
    }
}

#[test]
fn locus_near_the_rim_has_one_cusp() {
    let buf = locus_polylines(1.2, 0.25, 0.0, -0.8, 360).unwrap();
    let groups = polylines(&buf);
    let cusps = groups.last().unwrap();
    assert_eq!(cusps.len(), 1);
    assert!(groups[..groups.len() - 1].iter().any(|b| b.len() > 10));
}

#[test]
fn flat_metric_has_no_locus() {
    let buf = locus_polylines(0.0, 0.25, 0.0, -0.5, 64).unwrap();
    assert!(buf.iter().all(|v| v.is_nan()));
}

#[test]
fn sinogram_is_nonnegative_and_sized() {
    let s = blob_sinogram(1.2, 0.25, 0.2, 0.1, 0.1, 36, 31).unwrap();
    assert_eq!(s.len(), 36 * 31);
    assert!(s.iter().all(|&v| v >= 0.0));
    assert!(s.iter().cloned().fold(0.0, f64::max) > 0.0);
}

#[test]
fn bad_inputs_are_errors() {
    assert!(fan_polylines(1.2, 0.25, 1.5, 0.0, 8, 1e-2).is_err());
    assert!(fan_polylines(1.2, 0.0, 0.0, 0.0, 8, 1e-2).is_err());
    assert!(fan_polylines(1.2, 0.25, 0.0, 0.0, 0, 1e-2).is_err());
    assert!(blob_sinogram(1.2, 0.25, 0.0, 0.0, 0.1, 0, 31).is_err());
}
