//! End-to-end checks through the public API only.
use std::f64::consts::{PI, TAU};

use conjray_core::io::{load, save_sinogram};
use conjray_core::jacobi::conjugate_times;
use conjray_core::{
    conjugate_locus, forward, integrate_jacobi, shoot, Blob, ConformalMetric, Crgrid, Disk, FanBeamCoord, GridFunction, Orientation, Point,
    SinogramDims, WeightSpec,
};

#[test]
fn flat_disk_of_ones_projects_to_chord_lengths() {
    let d = Disk::unit();
    let ones = GridFunction::covering(&d, 101).unwrap().from_fn(|_| 1.0);
    let dims = SinogramDims::new(24, 31);
    let s = forward(&ConformalMetric::euclidean(), &d, &WeightSpec::Unit, &ones, dims, Orientation::Plus, 1e-2).unwrap();
    for i in 0..dims.n_beta {
        for j in 0..dims.n_alpha {
            assert!((s.get(i, j) - 2.0 * dims.alpha(j).cos()).abs() < 2e-2, "({i}, {j}): {}", s.get(i, j));
        }
    }
}

#[test]
fn unit_weight_data_do_not_depend_on_orientation() {
    let m = ConformalMetric::reference_lens();
    let d = Disk::unit();
    let grid = GridFunction::covering(&d, 61).unwrap();
    let f = conjray_core::xray::gaussian_blob(&grid, Blob::new(0.2, -0.1, 0.15, 1.0)).unwrap();
    let dims = SinogramDims::new(36, 21);
    // the minus chart is integrated backwards from the exit point, so the two
    // agree up to quadrature error, which must shrink at second order
    let gap = |h: f64| {
        let plus = forward(&m, &d, &WeightSpec::Unit, &f, dims, Orientation::Plus, h).unwrap();
        let minus = forward(&m, &d, &WeightSpec::Unit, &f, dims, Orientation::Minus, h).unwrap();
        let peak = plus.values.iter().cloned().fold(0.0, f64::max);
        plus.values.iter().zip(&minus.values).fold(0.0f64, |w, (a, b)| w.max((a - b).abs())) / peak
    };
    let (coarse, fine) = (gap(1e-2), gap(5e-3));
    assert!(coarse < 1e-4, "{coarse}");
    assert!(fine < coarse / 3.0, "{coarse} -> {fine}");
}

#[test]
fn sphere_cap_chords_focus_after_pi() {
    let m = ConformalMetric::sphere_cap();
    let d = Disk::new(Point::ZERO, 3.0).unwrap();
    for k in 0..6 {
        let path = shoot(&m, &d, FanBeamCoord::plus(k as f64 * TAU / 6.0, 0.1 * k as f64 - 0.25), 1e-3).unwrap();
        let t = conjugate_times(&integrate_jacobi(&m, &path), 0.0);
        assert!((t[0] - PI).abs() < 1e-3, "first conjugate time {}", t[0]);
    }
}

#[test]
fn lens_locus_from_below_has_a_single_cusp() {
    let l = conjugate_locus(&ConformalMetric::reference_lens(), &Disk::unit(), Point::new(0.0, -0.8), 360, 5e-3).unwrap();
    assert_eq!(l.cusp_count(), 1);
    assert_eq!(l.branches().len(), 1);
    assert!(l.defined().count() > 30);
}

#[test]
fn sinogram_files_round_trip() {
    let d = Disk::unit();
    let grid = GridFunction::covering(&d, 81).unwrap();
    let f = conjray_core::xray::gaussian_blob(&grid, Blob::new(0.0, 0.3, 0.1, 2.0)).unwrap();
    let g = forward(&ConformalMetric::reference_lens(), &d, &WeightSpec::Unit, &f, SinogramDims::new(12, 9), Orientation::Minus, 1e-2).unwrap();
    let path = std::env::temp_dir().join(format!("conjray-roundtrip-{}.crgrid", std::process::id()));
    save_sinogram(&path, &g).unwrap();
    let back = load(&path).unwrap();
    std::fs::remove_file(&path).unwrap();
    match back {
        Crgrid::Sinogram(h) => {
            // the header stores α's range, so sample coordinates (not δ itself) are exact
            assert_eq!((h.dims.n_beta, h.dims.n_alpha), (g.dims.n_beta, g.dims.n_alpha));
            assert!((0..g.dims.n_alpha).all(|j| h.dims.alpha(j) == g.dims.alpha(j)));
            assert!((0..g.dims.n_beta).all(|i| h.dims.beta(i) == g.dims.beta(i)));
            assert_eq!(h.orientation, g.orientation);
            assert!(h.values.iter().zip(&g.values).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        Crgrid::Grid(_) => panic!("sinogram came back as a grid"),
    }
}
