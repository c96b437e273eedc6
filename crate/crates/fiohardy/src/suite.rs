//! Deterministic test functions, defined spectrally on the integer lattice so
//! that the same function is sampled exactly on every grid that resolves it.

use std::f64::consts::{PI, TAU};

use fiohardy_core::geometry::chord;
use fiohardy_core::profiles::smooth_step;
use fiohardy_core::{Error, GridSpec, Result, SpatialField, SpectralField};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Generator {
    /// Gaussian spectrum of width 10, tapered to `|zeta| <= 48`.
    Gaussian,
    /// Bump of radius 7 around `modulus * (cos 20deg, sin 20deg)`.
    ModulatedPacket { modulus: f64 },
    /// Radial bump on `R - 6 <= |zeta| <= R` with phase `e^{-i |zeta|}`.
    FocusedAnnulus { radius: f64 },
    /// Uniform random coefficients on `|zeta| <= band`.
    RandomBandlimited { seed: u64, band: f64 },
    /// Bump on the dyadic-parabolic tile of direction `angle` and scale `sigma`.
    DirectionalPacket { angle: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub id: String,
    pub generator: Generator,
}

/// 1 on `|u| <= 1/2`, smoothly 0 at `|u| >= 1`.
fn bump(u: f64) -> f64 {
    smooth_step(2.0 * (1.0 - u.abs()))
}

impl Generator {
    /// Spectral coefficient at the lattice point `(kx, ky)` (unnormalized).
    fn coefficient(&self, kx: i64, ky: i64) -> Complex64 {
        let (x, y) = (kx as f64, ky as f64);
        let r = x.hypot(y);
        let real = |v: f64| Complex64::new(v, 0.0);
        match *self {
            Generator::Gaussian => real((-r * r / 200.0).exp() * bump(r / 48.0)),
            Generator::ModulatedPacket { modulus } => {
                let a = 20f64.to_radians();
                real(bump((x - modulus * a.cos()).hypot(y - modulus * a.sin()) / 7.0))
            }
            Generator::FocusedAnnulus { radius } => {
                Complex64::from_polar(bump((r - radius + 3.0) / 3.0), -r)
            }
            Generator::DirectionalPacket { angle, sigma } => {
                if r == 0.0 {
                    return real(0.0);
                }
                let radial = bump((r * sigma - 1.0) / 0.25);
                real(radial * bump(chord(y.atan2(x), angle) / sigma.sqrt()))
            }
            Generator::RandomBandlimited { .. } => unreachable!("drawn in lattice order"),
        }
    }

    /// Largest modulus of the spectral support.
    pub fn band(&self) -> f64 {
        match *self {
            Generator::Gaussian => 48.0,
            Generator::ModulatedPacket { modulus } => modulus + 7.0,
            Generator::FocusedAnnulus { radius } => radius,
            Generator::RandomBandlimited { band, .. } => band,
            Generator::DirectionalPacket { sigma, .. } => 1.25 / sigma,
        }
    }

    /// Unit-`L^2` spectrum on `grid`; requires `2 pi / L = 1`.
    pub fn spectrum(&self, grid: GridSpec) -> Result<SpectralField> {
        if (grid.period() - TAU).abs() > 1e-12 {
            return Err(Error::InvalidConfig("test functions are defined on the period 2 pi".into()));
        }
        let (_, hi) = grid.resolved_band();
        if self.band() > hi {
            return Err(Error::InvalidConfig(format!(
                "test function band {} exceeds the resolved band {hi} of N = {}",
                self.band(),
                grid.n()
            )));
        }
        let mut spec = SpectralField::zeros(grid);
        let b = self.band().ceil() as i64;
        {
            let d = spec.data_mut();
            match *self {
                Generator::RandomBandlimited { seed, band } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    for ky in -b..=b {
                        for kx in -b..=b {
                            let v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                            if (kx as f64).hypot(ky as f64) <= band {
                                d[grid.index_of(kx, ky).expect("inside the lattice")] = v;
                            }
                        }
                    }
                }
                _ => {
                    for ky in -b..=b {
                        for kx in -b..=b {
                            let v = self.coefficient(kx, ky);
                            if v != Complex64::new(0.0, 0.0) {
                                d[grid.index_of(kx, ky).expect("inside the lattice")] = v;
                            }
                        }
                    }
                }
            }
        }
        let norm = spec.l2_norm();
        if norm == 0.0 {
            return Err(Error::ZeroProfile);
        }
        spec.scale(Complex64::new(1.0 / norm, 0.0));
        Ok(spec)
    }

    pub fn field(&self, grid: GridSpec) -> Result<SpatialField> {
        Ok(self.spectrum(grid)?.to_spatial())
    }
}

impl TestFunction {
    pub fn new(id: &str, generator: Generator) -> Self {
        Self { id: id.to_string(), generator }
    }

    pub fn field(&self, grid: GridSpec) -> Result<SpatialField> {
        self.generator.field(grid)
    }
}

pub fn default_suite() -> Vec<TestFunction> {
    vec![
        TestFunction::new("gaussian", Generator::Gaussian),
        TestFunction::new("modulated_16", Generator::ModulatedPacket { modulus: 16.0 }),
        TestFunction::new("modulated_48", Generator::ModulatedPacket { modulus: 48.0 }),
        TestFunction::new("annulus_24", Generator::FocusedAnnulus { radius: 24.0 }),
        TestFunction::new("annulus_56", Generator::FocusedAnnulus { radius: 56.0 }),
        TestFunction::new("random_1", Generator::RandomBandlimited { seed: 1, band: 48.0 }),
        TestFunction::new("random_2", Generator::RandomBandlimited { seed: 2, band: 48.0 }),
        TestFunction::new("random_3", Generator::RandomBandlimited { seed: 3, band: 48.0 }),
        TestFunction::new("directional", Generator::DirectionalPacket { angle: PI / 6.0, sigma: 1.0 / 32.0 }),
    ]
}

/// `default`, `all`, or a comma-separated list of ids from the default suite.
pub fn select(selection: &str) -> Result<Vec<TestFunction>> {
    let all = default_suite();
    let sel = selection.trim();
    if sel == "default" || sel == "all" {
        return Ok(all);
    }
    let out: Vec<TestFunction> = sel
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|id| {
            all.iter()
                .find(|t| t.id == id)
                .cloned()
                .ok_or_else(|| Error::InvalidConfig(format!("unknown test function '{id}'")))
        })
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::InvalidConfig("empty test-function suite".into()));
    }
    Ok(out)
}
