//! Flat `key = value` run configuration.
use std::fmt;
use std::path::{Path, PathBuf};

use conjray_core::{Blob, ConformalMetric, Disk, Orientation, Point, Sigma, SinogramDims, WeightSpec};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("bad value {value:?} for {key}: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MetricChoice {
    Euclidean,
    Lens { k: f64, sigma: f64, center: Point },
    SphereCap,
    DoubleLens,
}

impl MetricChoice {
    pub fn build(&self) -> ConformalMetric {
        match *self {
            MetricChoice::Euclidean => ConformalMetric::euclidean(),
            MetricChoice::Lens { k, sigma, center } => ConformalMetric::lens(k, sigma, center),
            MetricChoice::SphereCap => ConformalMetric::sphere_cap(),
            MetricChoice::DoubleLens => conjray_core::double_lens(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phantom {
    Ones,
    Blob,
    Ring,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttenuatedMode {
    /// Two blobs at a conjugate pair, recovered from their joint data.
    Pair,
    /// A three-blob triple with (nearly) vanishing data.
    Null,
}

/// Everything a subcommand may read. Lengths are in disk coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub metric: MetricChoice,
    pub disk: (Point, f64),
    pub phantom: Phantom,
    pub blob: Blob,
    pub ring_width: f64,
    pub sino: SinogramDims,
    pub h: f64,
    pub grid: usize,
    pub dirs: usize,
    pub weight_attenuated: bool,
    pub sigma: f64,
    pub orientation: Orientation,
    pub u2: (Point, f64),
    pub point: Point,
    pub locus_dirs: usize,
    pub attenuated_mode: AttenuatedMode,
    pub omega: f64,
    pub region_grid: usize,
    pub output: PathBuf,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            metric: MetricChoice::Lens { k: 1.2, sigma: 0.25, center: Point::ZERO },
            disk: (Point::ZERO, 1.0),
            phantom: Phantom::Blob,
            blob: Blob::new(0.0, -0.5, 0.03, 1.0),
            ring_width: 0.03,
            sino: SinogramDims::new(360, 181),
            h: 1e-2,
            grid: 141,
            dirs: 256,
            weight_attenuated: false,
            sigma: 1.0,
            orientation: Orientation::Plus,
            u2: (Point::new(0.0, 0.5), 0.5),
            point: Point::new(0.0, -0.5),
            locus_dirs: 720,
            attenuated_mode: AttenuatedMode::Pair,
            omega: 90.0,
            region_grid: 81,
            output: PathBuf::from("out"),
            threads: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "metric", "lens.k", "lens.sigma", "lens.cx", "lens.cy", "disk.cx", "disk.cy", "disk.r", "phantom", "blob.x", "blob.y", "blob.w", "blob.a",
    "ring.width", "sino.beta", "sino.alpha", "sino.delta", "h", "grid", "dirs", "weight", "sigma", "orientation", "u2.cx", "u2.cy", "u2.r",
    "point.x", "point.y", "locus.dirs", "attenuated.mode", "attenuated.omega", "attenuated.grid", "output", "threads",
];

fn bad(key: &str, value: &str, reason: impl fmt::Display) -> ConfigError {
    ConfigError::Value { key: key.into(), value: value.into(), reason: reason.to_string() }
}

fn number(key: &str, value: &str) -> Result<f64, ConfigError> {
    match value.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(bad(key, value, "not finite")),
        Err(e) => Err(bad(key, value, e)),
    }
}

fn positive(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v = number(key, value)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(bad(key, value, "must be positive"))
    }
}

fn count(key: &str, value: &str, min: usize) -> Result<usize, ConfigError> {
    let n = value.parse::<usize>().map_err(|e| bad(key, value, e))?;
    if n < min {
        return Err(bad(key, value, format!("must be at least {min}")));
    }
    Ok(n)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let lens = |m: MetricChoice| -> (f64, f64, Point) {
            match m {
                MetricChoice::Lens { k, sigma, center } => (k, sigma, center),
                _ => (1.2, 0.25, Point::ZERO),
            }
        };
        match key {
            "metric" => {
                self.metric = match value {
                    "euclidean" => MetricChoice::Euclidean,
                    "lens" => {
                        let (k, sigma, center) = lens(self.metric);
                        MetricChoice::Lens { k, sigma, center }
                    }
                    "sphere_cap" => MetricChoice::SphereCap,
                    "double_lens" => MetricChoice::DoubleLens,
                    _ => return Err(bad(key, value, "expected euclidean, lens, sphere_cap or double_lens")),
                }
            }
            "lens.k" | "lens.sigma" | "lens.cx" | "lens.cy" => {
                let (mut k, mut sigma, mut c) = lens(self.metric);
                match key {
                    "lens.k" => k = number(key, value)?,
                    "lens.sigma" => sigma = positive(key, value)?,
                    "lens.cx" => c.x = number(key, value)?,
                    _ => c.y = number(key, value)?,
                }
                self.metric = MetricChoice::Lens { k, sigma, center: c };
            }
            "disk.cx" => self.disk.0.x = number(key, value)?,
            "disk.cy" => self.disk.0.y = number(key, value)?,
            "disk.r" => self.disk.1 = positive(key, value)?,
            "phantom" => {
                self.phantom = match value {
                    "ones" => Phantom::Ones,
                    "blob" => Phantom::Blob,
                    "ring" => Phantom::Ring,
                    _ => return Err(bad(key, value, "expected ones, blob or ring")),
                }
            }
            "blob.x" => self.blob.center.x = number(key, value)?,
            "blob.y" => self.blob.center.y = number(key, value)?,
            "blob.w" => self.blob.width = positive(key, value)?,
            "blob.a" => self.blob.amplitude = number(key, value)?,
            "ring.width" => self.ring_width = positive(key, value)?,
            "sino.beta" => self.sino.n_beta = count(key, value, 4)?,
            "sino.alpha" => self.sino.n_alpha = count(key, value, 3)?,
            "sino.delta" => {
                let d = positive(key, value)?;
                if d >= std::f64::consts::FRAC_PI_2 {
                    return Err(bad(key, value, "must be below π/2"));
                }
                self.sino.delta = d;
            }
            "h" => self.h = positive(key, value)?,
            "grid" => self.grid = count(key, value, 3)?,
            "dirs" => self.dirs = count(key, value, 4)?,
            "weight" => {
                self.weight_attenuated = match value {
                    "unit" => false,
                    "attenuation" => true,
                    _ => return Err(bad(key, value, "expected unit or attenuation")),
                }
            }
            "sigma" => self.sigma = positive(key, value)?,
            "orientation" => {
                self.orientation = match value {
                    "plus" => Orientation::Plus,
                    "minus" => Orientation::Minus,
                    _ => return Err(bad(key, value, "expected plus or minus")),
                }
            }
            "u2.cx" => self.u2.0.x = number(key, value)?,
            "u2.cy" => self.u2.0.y = number(key, value)?,
            "u2.r" => self.u2.1 = positive(key, value)?,
            "point.x" => self.point.x = number(key, value)?,
            "point.y" => self.point.y = number(key, value)?,
            "locus.dirs" => self.locus_dirs = count(key, value, 8)?,
            "attenuated.mode" => {
                self.attenuated_mode = match value {
                    "pair" => AttenuatedMode::Pair,
                    "null" => AttenuatedMode::Null,
                    _ => return Err(bad(key, value, "expected pair or null")),
                }
            }
            "attenuated.omega" => self.omega = positive(key, value)?,
            "attenuated.grid" => self.region_grid = count(key, value, 3)?,
            "output" => {
                if value.is_empty() {
                    return Err(bad(key, value, "empty path"));
                }
                self.output = PathBuf::from(value);
            }
            "threads" => self.threads = Some(count(key, value, 1)?),
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Applies every `key = value` line; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: n + 1, text: raw.into() })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        self.apply_text(&text)
    }

    /// `key=value` from the command line.
    pub fn apply_override(&mut self, arg: &str) -> Result<(), ConfigError> {
        let (k, v) = arg.split_once('=').ok_or_else(|| ConfigError::Syntax { line: 0, text: arg.into() })?;
        self.set(k.trim(), v)
    }

    /// Defaults, then the file, then each override in order.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        if let Some(p) = file {
            cfg.apply_file(p)?;
        }
        for o in overrides {
            cfg.apply_override(o)?;
        }
        Ok(cfg)
    }

    pub fn disk(&self) -> Disk {
        Disk { center: self.disk.0, radius: self.disk.1 }
    }

    pub fn u2(&self) -> Disk {
        Disk { center: self.u2.0, radius: self.u2.1 }
    }

    pub fn weight(&self) -> WeightSpec {
        if self.weight_attenuated {
            WeightSpec::Attenuation(Sigma::Constant(self.sigma))
        } else {
            WeightSpec::Unit
        }
    }

    /// `CONJRAY_THREADS` wins over the config's `threads`.
    pub fn thread_count(&self) -> Result<Option<usize>, ConfigError> {
        match std::env::var("CONJRAY_THREADS") {
            Ok(v) => Ok(Some(count("CONJRAY_THREADS", &v, 1)?)),
            Err(_) => Ok(self.threads),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let mut c = RunConfig::default();
        c.apply_text("metric = euclidean  # flat\n\n grid=51\nsino.beta = 90\n").unwrap();
        c.apply_override("grid = 61").unwrap();
        assert_eq!(c.metric, MetricChoice::Euclidean);
        assert_eq!((c.grid, c.sino.n_beta), (61, 90));
    }

    #[test]
    fn lens_parameters_switch_to_the_lens() {
        let mut c = RunConfig::default();
        c.set("metric", "euclidean").unwrap();
        c.set("lens.k", "0.8").unwrap();
        assert_eq!(c.metric, MetricChoice::Lens { k: 0.8, sigma: 0.25, center: Point::ZERO });
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut c = RunConfig::default();
        assert!(matches!(c.set("gird", "3"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(c.set("h", "-1e-3"), Err(ConfigError::Value { .. })));
        assert!(matches!(c.set("h", "nan"), Err(ConfigError::Value { .. })));
        assert!(matches!(c.set("sino.alpha", "2"), Err(ConfigError::Value { .. })));
        assert!(matches!(c.set("metric", "hyperbolic"), Err(ConfigError::Value { .. })));
        assert!(matches!(c.apply_text("grid 51"), Err(ConfigError::Syntax { line: 1, .. })));
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn every_key_is_accepted() {
        for k in KEYS {
            let v = match *k {
                "metric" => "lens",
                "phantom" => "ring",
                "weight" => "attenuation",
                "orientation" => "minus",
                "attenuated.mode" => "null",
                "output" => "o",
                "sino.delta" => "0.02",
                _ => "16",
            };
            RunConfig::default().set(k, v).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
    }
}
