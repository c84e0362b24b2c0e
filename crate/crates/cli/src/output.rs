//! Plot and table exports: 16-bit PGM images, CSV tables, JSON summaries.
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use conjray_core::{GridFunction, Point, Sinogram};

pub const MID_GRAY: u16 = 32768;

/// Maps `[lo, hi]` linearly onto `[0, 65535]`, clamping outside.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValueWindow {
    pub lo: f64,
    pub hi: f64,
}

impl ValueWindow {
    /// `±max|v|`, so that zero is mid-gray and signed extremes hit the ends.
    pub fn symmetric(values: &[f64]) -> Self {
        let m = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        ValueWindow { lo: -m, hi: m }
    }

    pub fn level(&self, v: f64) -> u16 {
        if !(self.hi > self.lo) {
            return MID_GRAY;
        }
        let s = ((v - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0);
        (s * 65535.0).round() as u16
    }
}

/// A constant image carries no contrast and is written mid-gray.
fn default_window(values: &[f64]) -> ValueWindow {
    let first = values.first().copied().unwrap_or(0.0);
    if values.iter().all(|&v| v == first) {
        return ValueWindow { lo: 0.0, hi: 0.0 };
    }
    ValueWindow::symmetric(values)
}

/// Binary 16-bit PGM of a row-major `width × height` raster.
pub fn write_pgm<W: Write>(mut w: W, width: usize, height: usize, levels: &[u16]) -> std::io::Result<()> {
    assert_eq!(levels.len(), width * height);
    write!(w, "P5\n{width} {height}\n65535\n")?;
    let bytes: Vec<u8> = levels.iter().flat_map(|l| l.to_be_bytes()).collect();
    w.write_all(&bytes)?;
    w.flush()
}

/// Image of a grid function, `y` increasing upwards.
pub fn grid_levels(f: &GridFunction, window: Option<ValueWindow>) -> Vec<u16> {
    let win = window.unwrap_or_else(|| default_window(&f.values));
    let mut out = Vec::with_capacity(f.values.len());
    for j in (0..f.ny).rev() {
        for i in 0..f.nx {
            out.push(win.level(f.get(i, j)));
        }
    }
    out
}

/// Image of a sinogram: one row per `β`, one column per `α`.
pub fn sinogram_levels(g: &Sinogram, window: Option<ValueWindow>) -> Vec<u16> {
    let win = window.unwrap_or_else(|| default_window(&g.values));
    g.values.iter().map(|&v| win.level(v)).collect()
}

pub fn save_grid_pgm(path: &Path, f: &GridFunction, window: Option<ValueWindow>) -> std::io::Result<()> {
    write_pgm(BufWriter::new(File::create(path)?), f.nx, f.ny, &grid_levels(f, window))
}

pub fn save_sinogram_pgm(path: &Path, g: &Sinogram, window: Option<ValueWindow>) -> std::io::Result<()> {
    write_pgm(BufWriter::new(File::create(path)?), g.dims.n_alpha, g.dims.n_beta, &sinogram_levels(g, window))
}

/// `x,y,value` for every node.
pub fn save_grid_csv(path: &Path, f: &GridFunction) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "value"])?;
    for (k, p) in f.nodes() {
        w.serialize((p.x, p.y, f.values[k]))?;
    }
    w.flush()?;
    Ok(())
}

/// Polylines as `curve,x,y,label` rows.
pub fn save_polylines_csv(path: &Path, curves: &[(usize, Vec<(Point, &str)>)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["curve", "x", "y", "label"])?;
    for (id, pts) in curves {
        for (p, label) in pts {
            w.serialize((id, p.x, p.y, label))?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use conjray_core::{Disk, SinogramDims};

    #[test]
    fn constant_grid_is_mid_gray() {
        let f = GridFunction::covering(&Disk::unit(), 5).unwrap().from_fn(|_| 3.5);
        assert!(grid_levels(&f, None).iter().all(|&l| l == MID_GRAY));
        let z = GridFunction::covering(&Disk::unit(), 5).unwrap();
        assert!(grid_levels(&z, None).iter().all(|&l| l == MID_GRAY));
    }

    #[test]
    fn explicit_window_endpoints() {
        let w = ValueWindow { lo: 0.0, hi: 1.0 };
        assert_eq!(w.level(1.0), 65535);
        assert_eq!(w.level(0.0), 0);
        assert_eq!(w.level(7.0), 65535);
        assert_eq!(w.level(-1.0), 0);
    }

    #[test]
    fn signed_extremes_hit_both_ends() {
        let mut g = Sinogram::zeros(SinogramDims::new(4, 3), conjray_core::Orientation::Plus);
        g.values[2] = 0.8;
        g.values[7] = -0.8;
        g.values[5] = 0.2;
        let l = sinogram_levels(&g, None);
        assert_eq!((l[2], l[7], l[0]), (65535, 0, MID_GRAY));
    }

    #[test]
    fn pgm_header_and_byte_order() {
        let mut buf = Vec::new();
        write_pgm(&mut buf, 2, 1, &[1, 65535]).unwrap();
        assert_eq!(&buf[..], b"P5\n2 1\n65535\n\x00\x01\xff\xff");
    }

    #[test]
    fn grid_rows_run_top_down() {
        let f = GridFunction::zeros(2, 3, Point::ZERO, 1.0, 1.0).unwrap().from_fn(|p| p.y);
        let l = grid_levels(&f, Some(ValueWindow { lo: 0.0, hi: 2.0 }));
        assert_eq!(l, vec![65535, 65535, MID_GRAY, MID_GRAY, 0, 0]);
    }
}
