//! CRGRID files: one ASCII header line
//! `CRGRID v1 <kind> <n1> <n2> <o1> <o2> <s1> <s2> <orientation>`, then
//! `n1·n2` little-endian f64 values (row-major), then for `sinogram-masked`
//! one byte per cell (1 = observed).
use std::f64::consts::FRAC_PI_2;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geodesic::Orientation;
use crate::grid::{GridFunction, Sinogram, SinogramDims};
use crate::vec2::Point;

const MAGIC: &str = "CRGRID";
const VERSION: &str = "v1";

/// Either payload a CRGRID file can hold.
#[derive(Clone, Debug, PartialEq)]
pub enum Crgrid {
    Grid(GridFunction),
    Sinogram(Sinogram),
}

pub fn write_grid<W: Write>(mut w: W, f: &GridFunction) -> Result<()> {
    writeln!(w, "{MAGIC} {VERSION} grid {} {} {:?} {:?} {:?} {:?} none", f.nx, f.ny, f.origin.x, f.origin.y, f.dx, f.dy)?;
    write_values(&mut w, &f.values)
}

pub fn write_sinogram<W: Write>(mut w: W, g: &Sinogram) -> Result<()> {
    let d = g.dims;
    let kind = if g.mask.is_some() { "sinogram-masked" } else { "sinogram" };
    let orientation = match g.orientation {
        Orientation::Plus => "plus",
        Orientation::Minus => "minus",
    };
    writeln!(w, "{MAGIC} {VERSION} {kind} {} {} {:?} {:?} {:?} {:?} {orientation}", d.n_beta, d.n_alpha, 0.0, -d.alpha_max(), d.d_beta(), d.d_alpha())?;
    write_values(&mut w, &g.values)?;
    if let Some(mask) = &g.mask {
        let bytes: Vec<u8> = mask.iter().map(|&b| b as u8).collect();
        w.write_all(&bytes)?;
    }
    Ok(())
}

fn write_values<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(8 * values.len());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read<R: BufRead>(mut r: R) -> Result<Crgrid> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 10 || fields[0] != MAGIC {
        return Err(Error::Format("not a CRGRID header".into()));
    }
    if fields[1] != VERSION {
        return Err(Error::Format(format!("unsupported CRGRID version {}", fields[1])));
    }
    let int = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad size {s:?}")));
    let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Format(format!("bad number {s:?}")));
    let (n1, n2) = (int(fields[3])?, int(fields[4])?);
    let (o1, o2, s1, s2) = (num(fields[5])?, num(fields[6])?, num(fields[7])?, num(fields[8])?);
    let len = n1.checked_mul(n2).ok_or_else(|| Error::Format("size overflow".into()))?;
    let values = read_values(&mut r, len)?;
    match fields[2] {
        "grid" => {
            let mut f = GridFunction::zeros(n1, n2, Point::new(o1, o2), s1, s2)?;
            f.values = values;
            Ok(Crgrid::Grid(f))
        }
        kind @ ("sinogram" | "sinogram-masked") => {
            let orientation = match fields[9] {
                "plus" => Orientation::Plus,
                "minus" => Orientation::Minus,
                o => return Err(Error::Format(format!("bad orientation {o:?}"))),
            };
            let dims = SinogramDims { n_beta: n1, n_alpha: n2, delta: guard_from_start(o2) };
            dims.validate()?;
            let mask = if kind == "sinogram-masked" {
                let mut bytes = vec![0u8; len];
                r.read_exact(&mut bytes)?;
                Some(bytes.into_iter().map(|b| b != 0).collect())
            } else {
                None
            };
            Ok(Crgrid::Sinogram(Sinogram { dims, orientation, values, mask }))
        }
        k => Err(Error::Format(format!("unknown CRGRID kind {k:?}"))),
    }
}

/// The α-guard `δ` whose first α sample is exactly `alpha0`. Several `δ`
/// round to the same `π/2 − δ`; any of them gives identical samples.
fn guard_from_start(alpha0: f64) -> f64 {
    let target = -alpha0;
    let mut delta = FRAC_PI_2 - target;
    for _ in 0..8 {
        let got = FRAC_PI_2 - delta;
        if got == target {
            break;
        }
        let bits = delta.to_bits();
        delta = f64::from_bits(if (got > target) == (delta > 0.0) { bits + 1 } else { bits - 1 });
    }
    delta
}

fn read_values<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; 8 * len];
    r.read_exact(&mut bytes).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("expected {len} values")),
        _ => Error::Io(e),
    })?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn save_grid(path: impl AsRef<Path>, f: &GridFunction) -> Result<()> {
    write_grid(BufWriter::new(File::create(path)?), f)
}

pub fn save_sinogram(path: impl AsRef<Path>, g: &Sinogram) -> Result<()> {
    write_sinogram(BufWriter::new(File::create(path)?), g)
}

pub fn load(path: impl AsRef<Path>) -> Result<Crgrid> {
    read(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesic::Disk;
    use proptest::prelude::*;

    fn roundtrip(bytes: &[u8]) -> Crgrid {
        read(bytes).unwrap()
    }

    proptest! {
        #[test]
        fn grid_roundtrip_is_bit_exact(vals in prop::collection::vec(any::<f64>(), 12), ox in -2.0f64..2.0, dx in 1e-4f64..1.0) {
            let mut f = GridFunction::zeros(3, 4, Point::new(ox, -ox / 3.0), dx, dx * 1.1).unwrap();
            f.values = vals;
            let mut buf = Vec::new();
            write_grid(&mut buf, &f).unwrap();
            let Crgrid::Grid(back) = roundtrip(&buf) else { panic!("kind changed") };
            prop_assert_eq!(back.origin, f.origin);
            prop_assert_eq!((back.dx, back.dy, back.nx, back.ny), (f.dx, f.dy, f.nx, f.ny));
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back.values), bits(&f.values));
        }

        #[test]
        fn sinogram_roundtrip_is_bit_exact(seed in any::<u64>(), delta in 1e-4f64..0.3, masked in any::<bool>()) {
            let dims = SinogramDims { n_beta: 8, n_alpha: 5, delta };
            let mut g = Sinogram::zeros(dims, if seed % 2 == 0 { Orientation::Plus } else { Orientation::Minus });
            for (k, v) in g.values.iter_mut().enumerate() {
                *v = f64::from_bits(seed.rotate_left(k as u32) >> 2);
            }
            if masked {
                g.mask = Some((0..dims.len()).map(|k| (seed >> (k % 64)) & 1 == 1).collect());
            }
            let mut buf = Vec::new();
            write_sinogram(&mut buf, &g).unwrap();
            let Crgrid::Sinogram(back) = roundtrip(&buf) else { panic!("kind changed") };
            prop_assert_eq!(back.orientation, g.orientation);
            prop_assert_eq!(&back.mask, &g.mask);
            prop_assert_eq!((back.dims.n_beta, back.dims.n_alpha), (8, 5));
            for j in 0..5 {
                prop_assert_eq!(back.dims.alpha(j).to_bits(), dims.alpha(j).to_bits());
            }
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back.values), bits(&g.values));
        }
    }

    #[test]
    fn header_is_the_documented_line() {
        let f = GridFunction::covering(&Disk::unit(), 3).unwrap();
        let mut buf = Vec::new();
        write_grid(&mut buf, &f).unwrap();
        let header = buf.split(|&b| b == b'\n').next().unwrap();
        assert_eq!(std::str::from_utf8(header).unwrap(), format!("CRGRID v1 grid 3 3 {:?} {:?} {:?} {:?} none", f.origin.x, f.origin.y, f.dx, f.dy));
        assert_eq!(buf.len(), header.len() + 1 + 9 * 8);
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(matches!(read(&b"P5 3 3\n"[..]), Err(Error::Format(_))));
        assert!(matches!(read(&b"CRGRID v2 grid 2 2 0 0 1 1 none\n"[..]), Err(Error::Format(_))));
        assert!(matches!(read(&b"CRGRID v1 grid 2 2 0 0 1 1 none\n\0\0"[..]), Err(Error::Format(_))));
        assert!(matches!(read(&b"CRGRID v1 sinogram 8 5 0 -1.5 0.7 0.7 sideways\n"[..]), Err(Error::Format(_))));
    }
}
