//! Run configuration: a line-oriented `key = value` text file.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::PathBuf;

use fiohardy_core::geometry::{DirectionSet, ScaleLadder};
use fiohardy_core::packets::{FamilyOptions, FamilyTag, PacketFamily};
use fiohardy_core::{Error, GridSpec, Result};

/// Default tolerances, overridable as `tol.<name> = value`.
pub const DEFAULT_TOLERANCES: [(&str, f64); 15] = [
    ("calderon", 1e-12),
    ("reproduction", 1e-10),
    ("isometry", 1e-2),
    ("angular_ratio", 10.0),
    ("radiality", 1e-3),
    ("decay_slope", -2.0),
    ("aperture_ratio", 5.0),
    ("aperture_exponent", 1.5),
    ("equivalence", 100.0),
    ("via_v", 10.0),
    ("drift", 0.25),
    ("p2_factor", 5.0),
    ("corollary_spread", 100.0),
    ("half_wave", 3.0),
    ("unitarity", 1e-10),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Samples per axis of the primary grid.
    pub n: usize,
    /// Samples per axis of the comparison grid used for refinement drift.
    pub coarse_n: usize,
    pub period: f64,
    pub directions: usize,
    pub per_octave: usize,
    /// `None` covers the whole lattice.
    pub sigma_min: Option<f64>,
    pub profile: FamilyTag,
    pub renormalize: bool,
    pub apertures: Vec<f64>,
    pub exponents: Vec<f64>,
    pub suite: String,
    pub mc_samples: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    pub report: PathBuf,
    pub csv_dir: PathBuf,
    pub tolerances: BTreeMap<String, f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 256,
            coarse_n: 128,
            period: TAU,
            directions: 256,
            per_octave: 4,
            sigma_min: None,
            profile: FamilyTag::Standard,
            renormalize: true,
            apertures: vec![1.0, 2.0, 4.0],
            exponents: vec![4.0 / 3.0, 2.0, 4.0],
            suite: "default".into(),
            mc_samples: 200_000,
            seed: 7,
            threads: None,
            report: PathBuf::from("report.json"),
            csv_dir: PathBuf::from("tables"),
            tolerances: DEFAULT_TOLERANCES.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

fn parse_number(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::InvalidConfig(format!("not a number: '{s}'"));
    if let Some((a, b)) = s.split_once('/') {
        let (a, b): (f64, f64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        return Ok(a / b);
    }
    match s {
        "2pi" => Ok(TAU),
        _ => s.parse().map_err(|_| bad()),
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_number).collect()
}

fn format_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn parse_int<T: std::str::FromStr>(key: &str, s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::InvalidConfig(format!("{key}: not an integer: '{s}'")))
}

impl RunConfig {
    /// Smaller profile for quick runs. The suite is not resolved at `N = 64`,
    /// so both grids are 128 and drift is not measured.
    pub fn fast() -> Self {
        Self { n: 128, coarse_n: 128, directions: 144, per_octave: 3, mc_samples: 50_000, ..Self::default() }
    }

    pub fn tolerance(&self, name: &str) -> f64 {
        self.tolerances
            .get(name)
            .copied()
            .unwrap_or_else(|| panic!("no tolerance named '{name}'"))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected 'key = value'", lineno + 1)))?;
            c.set(key.trim(), value.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "profile_preset" => {
                let keep = (self.report.clone(), self.csv_dir.clone(), self.threads);
                *self = match value {
                    "fast" => RunConfig::fast(),
                    "default" => RunConfig::default(),
                    _ => return Err(Error::InvalidConfig(format!("unknown preset '{value}'"))),
                };
                (self.report, self.csv_dir, self.threads) = keep;
            }
            "n" => self.n = parse_int(key, value)?,
            "coarse_n" => self.coarse_n = parse_int(key, value)?,
            "period" => self.period = parse_number(value)?,
            "directions" => self.directions = parse_int(key, value)?,
            "per_octave" => self.per_octave = parse_int(key, value)?,
            "sigma_min" => {
                self.sigma_min = if value == "auto" { None } else { Some(parse_number(value)?) };
            }
            "profile" => self.profile = FamilyTag::parse(value)?,
            "renormalize" => {
                self.renormalize =
                    value.parse().map_err(|_| Error::InvalidConfig(format!("renormalize: not a bool: '{value}'")))?
            }
            "apertures" => self.apertures = parse_list(value)?,
            "exponents" => self.exponents = parse_list(value)?,
            "suite" => self.suite = value.to_string(),
            "mc_samples" => self.mc_samples = parse_int(key, value)?,
            "seed" => self.seed = parse_int(key, value)?,
            "threads" => self.threads = if value == "auto" { None } else { Some(parse_int(key, value)?) },
            "report" => self.report = PathBuf::from(value),
            "csv_dir" => self.csv_dir = PathBuf::from(value),
            _ => match key.strip_prefix("tol.") {
                Some(name) if self.tolerances.contains_key(name) => {
                    self.tolerances.insert(name.to_string(), parse_number(value)?);
                }
                _ => return Err(Error::InvalidConfig(format!("unknown key '{key}'"))),
            },
        }
        Ok(())
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        put("n", self.n.to_string());
        put("coarse_n", self.coarse_n.to_string());
        put("period", format!("{:?}", self.period));
        put("directions", self.directions.to_string());
        put("per_octave", self.per_octave.to_string());
        put("sigma_min", self.sigma_min.map_or("auto".into(), |s| format!("{s:?}")));
        put("profile", self.profile.name().into());
        put("renormalize", self.renormalize.to_string());
        put("apertures", format_list(&self.apertures));
        put("exponents", format_list(&self.exponents));
        put("suite", self.suite.clone());
        put("mc_samples", self.mc_samples.to_string());
        put("seed", self.seed.to_string());
        put("threads", self.threads.map_or("auto".into(), |t| t.to_string()));
        put("report", self.report.display().to_string());
        put("csv_dir", self.csv_dir.display().to_string());
        for (k, v) in &self.tolerances {
            put(&format!("tol.{k}"), format!("{v:?}"));
        }
        out
    }

    pub fn grid(&self, n: usize) -> Result<GridSpec> {
        GridSpec::new(n, self.period)
    }

    pub fn ladder(&self, grid: &GridSpec) -> Result<ScaleLadder> {
        match self.sigma_min {
            Some(s) => ScaleLadder::from_sigma_min(self.per_octave, s),
            None => ScaleLadder::covering(self.per_octave, grid.max_modulus(), 0.8),
        }
    }

    pub fn family_options(&self) -> FamilyOptions {
        FamilyOptions { tag: self.profile, renormalize: self.renormalize }
    }

    pub fn build_family(&self, n: usize) -> Result<PacketFamily> {
        let grid = self.grid(n)?;
        let ladder = self.ladder(&grid)?;
        PacketFamily::build(grid, DirectionSet::new(self.directions)?, ladder, self.family_options())
    }

    /// Checks the grid, ladder and direction constraints for both grids.
    pub fn validate(&self) -> Result<()> {
        for n in [self.n, self.coarse_n] {
            let grid = self.grid(n)?;
            let ladder = self.ladder(&grid)?;
            if self.sigma_min.is_some() {
                let reach = 1.25 / ladder.sigma_min();
                if reach < grid.max_modulus() {
                    return Err(Error::InvalidConfig(format!(
                        "N = {n}: 1.25 / sigma_min = {reach:.3} must be >= the largest lattice modulus {:.3}",
                        grid.max_modulus()
                    )));
                }
            }
            DirectionSet::new(self.directions)?.check_resolves(&ladder)?;
            // Every angular window of the finest packets must contain a direction.
            let need = 2.0 * TAU / ladder.sigma_min().sqrt();
            if self.directions as f64 <= need {
                return Err(Error::InvalidConfig(format!(
                    "N = {n}: M = {} directions violates M > 4 pi / sqrt(sigma_min) = {need:.1}",
                    self.directions
                )));
            }
        }
        if self.coarse_n > self.n {
            return Err(Error::InvalidConfig(format!("coarse_n = {} must be <= n = {}", self.coarse_n, self.n)));
        }
        if self.apertures.is_empty() || self.apertures.iter().any(|&a| !(a >= 1.0)) {
            return Err(Error::InvalidConfig("apertures must be a non-empty list of values >= 1".into()));
        }
        if self.exponents.is_empty() {
            return Err(Error::InvalidConfig("exponents must be non-empty".into()));
        }
        for &p in &self.exponents {
            fiohardy_core::grid::check_exponent(p)?;
        }
        if self.mc_samples < 1000 {
            return Err(Error::InvalidConfig(format!("mc_samples = {} must be >= 1000", self.mc_samples)));
        }
        crate::suite::select(&self.suite)?;
        Ok(())
    }
}
