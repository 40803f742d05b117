//! Flat `key = value` scenario configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use fluence_core::inverse::DescentOpts;
use fluence_core::{MhParams, OpticalParams, Scenario, SomeSizes, SourceSpec, VoxelGrid};

use crate::error::CliError;

/// Keys that must appear in every config.
pub const REQUIRED: [&str; 3] = ["mu_s", "mu_a", "g"];

/// Every accepted key with its default (`None` for required keys), in the
/// order the resolved config is written.
const KEYS: [(&str, Option<&str>); 24] = [
    ("mu_s", None),
    ("mu_a", None),
    ("g", None),
    ("alpha", Some("0.3141592653589793")),
    ("c", Some("1")),
    ("voxel_edge", Some("0.04")),
    ("grid_radius", Some("25")),
    ("M", Some("10000")),
    ("M_points", Some("20")),
    ("M_rot", Some("10")),
    ("T", Some("100000")),
    ("j", Some("10")),
    ("J", Some("21")),
    ("epsilon", Some("0.9")),
    ("burn_in_frac", Some("0.05")),
    ("batches", Some("50")),
    ("trace_stride", Some("1")),
    ("lambda", Some("0.01")),
    ("eps_score", Some("0.005")),
    ("tau0", Some("1")),
    ("iter_cap", Some("50")),
    ("init_mu_s", Some("90")),
    ("init_mu_a", Some("2")),
    ("measure_M", Some("100000")),
];

/// Parsed configuration with every key resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut given = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("config line {}: expected `key = value`, got `{line}`", no + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.iter().any(|(name, _)| *name == k) {
                return Err(CliError::Config(format!("config line {}: unknown key `{k}`", no + 1)));
            }
            if v.is_empty() {
                return Err(CliError::Config(format!("config line {}: key `{k}` has no value", no + 1)));
            }
            if given.insert(k.to_string(), v.to_string()).is_some() {
                return Err(CliError::Config(format!("config line {}: key `{k}` given twice", no + 1)));
            }
        }
        for key in REQUIRED {
            if !given.contains_key(key) {
                return Err(CliError::Config(format!("missing required config key `{key}`")));
            }
        }
        for (k, default) in KEYS {
            if let Some(d) = default {
                given.entry(k.to_string()).or_insert_with(|| d.to_string());
            }
        }
        let cfg = Self { values: given };
        // Surface malformed values now rather than halfway through a run.
        cfg.scenario()?;
        cfg.some_sizes()?;
        cfg.mh_params()?;
        cfg.descent_opts()?;
        cfg.init()?;
        cfg.get::<u64>("measure_M")?;
        cfg.get::<u64>("trace_stride")?;
        Ok(cfg)
    }

    fn get<V: std::str::FromStr>(&self, key: &str) -> Result<V, CliError>
    where
        V::Err: std::fmt::Display,
    {
        let raw = &self.values[key];
        raw.parse()
            .map_err(|e| CliError::Config(format!("config key `{key}`: cannot parse `{raw}`: {e}")))
    }

    pub fn f64(&self, key: &str) -> Result<f64, CliError> {
        self.get(key)
    }

    pub fn u64(&self, key: &str) -> Result<u64, CliError> {
        self.get(key)
    }

    pub fn scenario(&self) -> Result<Scenario<f64>, CliError> {
        let params = OpticalParams::new(self.f64("mu_s")?, self.f64("mu_a")?, self.f64("g")?)?;
        let source = SourceSpec::new(self.f64("alpha")?, self.f64("c")?)?;
        let grid = VoxelGrid::new(self.f64("voxel_edge")?, self.get::<u32>("grid_radius")?)?;
        Ok(Scenario::new(params, source, grid))
    }

    pub fn some_sizes(&self) -> Result<SomeSizes, CliError> {
        Ok(SomeSizes::new(self.u64("M")?, self.get("M_points")?, self.get("M_rot")?)?)
    }

    pub fn mh_params(&self) -> Result<MhParams, CliError> {
        Ok(MhParams::new(self.u64("j")?, self.u64("J")?, self.f64("epsilon")?, self.u64("T")?, self.get("M_rot")?)?
            .with_burn_in(self.f64("burn_in_frac")?)?
            .with_batches(self.get("batches")?)?)
    }

    pub fn descent_opts(&self) -> Result<DescentOpts, CliError> {
        let opts = DescentOpts {
            lambda: self.f64("lambda")?,
            eps_score: self.f64("eps_score")?,
            tau0: self.f64("tau0")?,
            iter_cap: self.get("iter_cap")?,
            sizes: self.some_sizes()?,
        };
        if !(opts.lambda >= 0.0 && opts.eps_score >= 0.0 && opts.tau0 > 0.0) {
            return Err(CliError::Config("need lambda >= 0, eps_score >= 0 and tau0 > 0".into()));
        }
        Ok(opts)
    }

    /// Starting point `(mu_s, mu_a)` of a fit.
    pub fn init(&self) -> Result<(f64, f64), CliError> {
        let init = (self.f64("init_mu_s")?, self.f64("init_mu_a")?);
        if !(init.0 > 0.0 && init.1 > 0.0) {
            return Err(CliError::Config("init_mu_s and init_mu_a must be > 0".into()));
        }
        Ok(init)
    }

    /// The fully resolved config in the input format.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, _) in KEYS {
            let _ = writeln!(out, "{k} = {}", self.values[k]);
        }
        out
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    const HEALTHY: &str = "mu_s = 280\nmu_a = 0.57\ng = 0.9\n";

    #[test]
    fn defaults_fill_in() {
        let c = Config::parse(HEALTHY).unwrap();
        let s = c.scenario().unwrap();
        assert_eq!(s.grid.voxel_edge(), 0.04);
        assert_eq!(s.grid.radius(), 25);
        assert_eq!(s.source.alpha(), std::f64::consts::PI / 10.0);
        assert_eq!(c.some_sizes().unwrap(), SomeSizes::new(10000, 20, 10).unwrap());
    }

    #[test]
    fn missing_key_is_named() {
        let err = Config::parse("mu_s = 280\ng = 0.9\n").unwrap_err();
        assert!(err.to_string().contains("mu_a"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = Config::parse("# healthy\n\nmu_s = 280 # cm^-1\nmu_a=0.57\n  g = 0.9\n").unwrap();
        assert_eq!(c.f64("mu_s").unwrap(), 280.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Config::parse("mu_s 280\nmu_a = 1\ng = 0.9").is_err());
        assert!(Config::parse(&format!("{HEALTHY}mu_x = 1\n")).is_err());
        assert!(Config::parse(&format!("{HEALTHY}mu_s = 3\n")).is_err());
        assert!(Config::parse("mu_s = abc\nmu_a = 1\ng = 0.9").is_err());
        assert!(Config::parse(&format!("{HEALTHY}J = 20\n")).is_err());
        assert!(Config::parse("mu_s = 1\nmu_a = 1\ng = 1.0").is_err());
    }

    #[test]
    fn render_round_trips() {
        let c = Config::parse(&format!("{HEALTHY}M = 123\nepsilon = 0.5\n")).unwrap();
        let again = Config::parse(&c.render()).unwrap();
        assert_eq!(c, again);
    }
}
