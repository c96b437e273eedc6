//! Radial frequency profiles: smooth plateaus, log-symmetric bumps, the
//! Calderon-normalized scale profile and the angular constant `c_sigma`.

use std::collections::HashMap;
use std::f64::consts::{LN_2, PI, TAU};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::geometry::ScaleLadder;

fn smooth_edge(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        (-1.0 / u).exp()
    }
}

/// `C^inf` step: 0 for `u <= 0`, 1 for `u >= 1`, with `s(u) + s(1 - u) = 1`.
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let a = smooth_edge(u);
    let b = smooth_edge(1.0 - u);
    a / (a + b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutoffKind {
    /// 1 on `[0, inner]`, 0 beyond `outer`.
    Plateau,
    /// Bump symmetric in `ln t` with support `[inner, outer]` and peak 1.
    Bump,
}

/// A radial profile `t -> value`, evaluated at `t = |zeta| >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Radial {
    Plateau { inner: f64, outer: f64 },
    LogBump { inner: f64, outer: f64 },
    /// Square root of a log-domain plateau: 1 on `[inner, outer]`, ramps of
    /// log-width `ramp` on both sides.
    LogPlateau { inner: f64, outer: f64, ramp: f64 },
    /// Square root of `h(u + p/2) - h(u - p/2)` in `u = ln(t / center)`, where
    /// `h` is a smooth step of half-width `ramp` centred at 0. Its shifts by
    /// multiples of `p` in `ln t` sum to exactly 1.
    LadderWindow { center: f64, spacing: f64, ramp: f64 },
    Gaussian,
}

impl Radial {
    /// The [`Radial::LadderWindow`] filling `[inner, outer]` whose ladder sum
    /// with `J` nodes per octave is identically 1.
    pub fn ladder_window(inner: f64, outer: f64, per_octave: usize) -> Result<Self> {
        if !(inner > 0.0 && inner < outer && per_octave > 0) {
            return Err(Error::DegenerateCutoff { inner, outer });
        }
        let spacing = LN_2 / per_octave as f64;
        let ramp = 0.5 * (outer / inner).ln() - 0.5 * spacing;
        if ramp <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "window [{inner}, {outer}] is narrower than one ladder step ln2/{per_octave}"
            )));
        }
        Ok(Radial::LadderWindow { center: (inner * outer).sqrt(), spacing, ramp })
    }
}

pub fn build_radial_cutoff(inner: f64, outer: f64, kind: CutoffKind) -> Result<Radial> {
    let ok = inner.is_finite() && outer.is_finite() && inner >= 0.0 && inner < outer;
    if !ok || (kind == CutoffKind::Bump && inner == 0.0) {
        return Err(Error::DegenerateCutoff { inner, outer });
    }
    Ok(match kind {
        CutoffKind::Plateau => Radial::Plateau { inner, outer },
        CutoffKind::Bump => Radial::LogBump { inner, outer },
    })
}

impl Radial {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Radial::Plateau { inner, outer } => {
                if t <= inner {
                    1.0
                } else if t >= outer {
                    0.0
                } else {
                    smooth_step((outer - t) / (outer - inner))
                }
            }
            Radial::LogBump { inner, outer } => {
                if t <= inner || t >= outer {
                    return 0.0;
                }
                let half = 0.5 * (outer / inner).ln();
                let u = (t / (inner * outer).sqrt()).ln() / half;
                let d = 1.0 - u * u;
                if d <= 0.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / d).exp()
                }
            }
            Radial::LogPlateau { inner, outer, ramp } => {
                if t <= 0.0 {
                    return 0.0;
                }
                let u = t.ln();
                let lo = inner.ln();
                let hi = outer.ln();
                let v = if u < lo {
                    smooth_step(1.0 - (lo - u) / ramp)
                } else if u > hi {
                    smooth_step(1.0 - (u - hi) / ramp)
                } else {
                    1.0
                };
                v.sqrt()
            }
            Radial::LadderWindow { center, spacing, ramp } => {
                if t <= 0.0 {
                    return 0.0;
                }
                let u = (t / center).ln();
                let h = |v: f64| smooth_step((v + ramp) / (2.0 * ramp));
                (h(u + 0.5 * spacing) - h(u - 0.5 * spacing)).max(0.0).sqrt()
            }
            Radial::Gaussian => (-0.5 * t * t).exp(),
        }
    }

    /// Interval outside of which the profile vanishes; `None` if unbounded.
    pub fn support(&self) -> Option<(f64, f64)> {
        match *self {
            Radial::Plateau { outer, .. } => Some((0.0, outer)),
            Radial::LogBump { inner, outer } => Some((inner, outer)),
            Radial::LogPlateau { inner, outer, ramp } => Some((inner * (-ramp).exp(), outer * ramp.exp())),
            Radial::LadderWindow { center, spacing, ramp } => {
                let e = (0.5 * spacing + ramp).exp();
                Some((center / e, center * e))
            }
            Radial::Gaussian => None,
        }
    }
}

/// `int_0^inf g(t)^2 dt / t` for a profile supported in an annulus,
/// by the trapezoid rule in `ln t`.
pub fn log_l2_mass(g: impl Fn(f64) -> f64, lo: f64, hi: f64, nodes: usize) -> f64 {
    let (a, b) = (lo.ln(), hi.ln());
    let h = (b - a) / nodes as f64;
    let mut s = 0.0;
    for i in 0..=nodes {
        let w = if i == 0 || i == nodes { 0.5 } else { 1.0 };
        let v = g((a + h * i as f64).exp());
        s += w * v * v;
    }
    s * h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// `Psi / ||Psi||`, so that `int Psi(t)^2 dt/t = 1`.
    Continuum,
    /// `Psi / sqrt(D)` with `D(t) = (ln 2 / J) sum_k Psi(2^{-k/J} t)^2`; the
    /// ladder sum is then identically 1 and the integral is still 1.
    Discrete { per_octave: usize },
}

/// A scale profile satisfying the Calderon condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleProfile {
    raw: Radial,
    lo: f64,
    hi: f64,
    norm: Normalization,
    scale: f64,
}

pub fn calderon_normalize(raw: Radial, norm: Normalization) -> Result<ScaleProfile> {
    let (lo, hi) = match raw.support() {
        Some((lo, hi)) if lo > 0.0 => (lo, hi),
        _ => return Err(Error::InvalidConfig("scale profile must be supported in an annulus".into())),
    };
    let mass = log_l2_mass(|t| raw.eval(t), lo, hi, 20_000);
    if !(mass > 0.0) {
        return Err(Error::ZeroProfile);
    }
    if let Normalization::Discrete { per_octave } = norm {
        if per_octave == 0 {
            return Err(Error::InvalidConfig("J must be positive".into()));
        }
    }
    Ok(ScaleProfile { raw, lo, hi, norm, scale: mass.sqrt().recip() })
}

impl ScaleProfile {
    pub fn raw(&self) -> Radial {
        self.raw
    }

    pub fn normalization(&self) -> Normalization {
        self.norm
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.lo || t >= self.hi {
            return 0.0;
        }
        let v = self.raw.eval(t);
        if v == 0.0 {
            return 0.0;
        }
        match self.norm {
            Normalization::Continuum => v * self.scale,
            Normalization::Discrete { per_octave } => v / self.ladder_mass(t, per_octave).sqrt(),
        }
    }

    /// `(ln 2 / J) sum_{k in Z} raw(2^{-k/J} t)^2`.
    fn ladder_mass(&self, t: f64, per_octave: usize) -> f64 {
        let j = per_octave as f64;
        let l = t.log2() * j;
        let k_lo = (l - self.hi.log2() * j).floor() as i64;
        let k_hi = (l - self.lo.log2() * j).ceil() as i64;
        let mut s = 0.0;
        for k in k_lo..=k_hi {
            let v = self.raw.eval(t * (-(k as f64) / j).exp2());
            s += v * v;
        }
        s * LN_2 / j
    }

    /// `1 - (ln 2 / J) sum_{k in Z} Psi(2^{-k/J} t)^2`.
    pub fn ladder_residual(&self, t: f64, per_octave: usize) -> f64 {
        let j = per_octave as f64;
        let l = t.log2() * j;
        let k_lo = (l - self.hi.log2() * j).floor() as i64;
        let k_hi = (l - self.lo.log2() * j).ceil() as i64;
        let mut s = 0.0;
        for k in k_lo..=k_hi {
            let v = self.eval(t * (-(k as f64) / j).exp2());
            s += v * v;
        }
        1.0 - s * LN_2 / j
    }

    /// `r(t)^2 = 1 - sum_{k=1..K} w Psi(sigma_k t)^2`, clamped at 0; `r(0) = 1`.
    pub fn r_squared(&self, t: f64, ladder: &ScaleLadder) -> Result<f64> {
        if t == 0.0 {
            return Ok(1.0);
        }
        let mut s = 0.0;
        for k in ladder.nodes() {
            let v = self.eval(ladder.sigma(k as i64) * t);
            s += v * v;
        }
        let r2 = 1.0 - s * ladder.weight();
        if r2 < -1e-10 {
            return Err(Error::CalderonViolated { radicand: r2, modulus: t });
        }
        Ok(r2.max(0.0))
    }

    /// `int_0^inf Psi(t)^2 dt/t` by fine quadrature.
    pub fn continuum_mass(&self) -> f64 {
        log_l2_mass(|t| self.eval(t), self.lo, self.hi, 20_000)
    }
}

/// Profile set of one packet family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSet {
    pub phi: Radial,
    pub psi: ScaleProfile,
    pub q: Radial,
    pub h: Radial,
    pub phi_max: Radial,
}

impl ProfileSet {
    /// `phi` vanishing beyond 1/4 and `Psi` supported in `[4/5, 5/4]`.
    pub fn standard(norm: Normalization) -> Result<Self> {
        Ok(Self {
            phi: build_radial_cutoff(0.125, 0.25, CutoffKind::Plateau)?,
            psi: calderon_normalize(Radial::ladder_window(0.8, 1.25, 4)?, norm)?,
            q: build_radial_cutoff(2.0, 4.0, CutoffKind::Plateau)?,
            h: build_radial_cutoff(2.0, 3.0, CutoffKind::Plateau)?,
            phi_max: Radial::Gaussian,
        })
    }

    /// `phi ≡ 1` on `[0, 3/4]`, zero beyond 1; `Psi ≡ 1` on `[2/3, 3/2]`, zero
    /// off `[1/2, 2]`.
    pub fn tilde(norm: Normalization) -> Result<Self> {
        let ramp = 1.0 - (9.0f64 / 4.0).ln();
        let raw = Radial::LogPlateau { inner: 2.0 / 3.0, outer: 1.5, ramp };
        Ok(Self {
            phi: build_radial_cutoff(0.75, 1.0, CutoffKind::Plateau)?,
            psi: calderon_normalize(raw, norm)?,
            q: build_radial_cutoff(2.0, 4.0, CutoffKind::Plateau)?,
            h: build_radial_cutoff(2.0, 3.0, CutoffKind::Plateau)?,
            phi_max: Radial::Gaussian,
        })
    }

    /// Outer edge of `phi`: `phi(t) = 0` for `t >= phi_outer`.
    pub fn phi_outer(&self) -> f64 {
        self.phi.support().map_or(f64::INFINITY, |s| s.1)
    }
}

/// `(int_{S^1} phi(|e_1 - v| / sqrt sigma)^2 dv)^{-1/2}` by the periodic
/// trapezoid rule on `nodes` equispaced directions rotated by `offset`.
pub fn c_sigma_quadrature(phi: &Radial, sigma: f64, nodes: usize, offset: f64) -> Result<f64> {
    let root = sigma.sqrt();
    let h = TAU / nodes as f64;
    let mut s = 0.0;
    let mut inside = 0usize;
    for i in 0..nodes {
        let a = offset + h * i as f64;
        let chord = 2.0 * (0.5 * a).sin().abs();
        let v = phi.eval(chord / root);
        if v > 0.0 {
            inside += 1;
        }
        s += v * v;
    }
    if inside < 16 {
        return Err(Error::UnresolvedQuadrature(format!(
            "c_sigma at sigma = {sigma:e}: only {inside} of {nodes} directions meet the support"
        )));
    }
    Ok((s * h).sqrt().recip())
}

/// Node count used by [`c_sigma`]: about 512 nodes across the support.
pub fn c_sigma_nodes(phi: &Radial, sigma: f64) -> usize {
    let outer = phi.support().map_or(2.0, |s| s.1);
    let chord = (outer * sigma.sqrt()).min(2.0);
    let half = 2.0 * (0.5 * chord).asin();
    let n = (512.0 * PI / half).ceil() as usize;
    n.max(1024)
}

pub fn c_sigma(phi: &Radial, sigma: f64) -> Result<f64> {
    c_sigma_quadrature(phi, sigma, c_sigma_nodes(phi, sigma), 0.0)
}

/// Memo table for `c_sigma` at the nodes `2^{-j/64}`.
#[derive(Debug, Clone)]
pub struct CSigmaTable {
    phi: Radial,
    cache: Arc<Mutex<HashMap<i64, f64>>>,
}

pub const TAU_NODES_PER_OCTAVE: usize = 64;

impl CSigmaTable {
    pub fn new(phi: Radial) -> Self {
        Self { phi, cache: Arc::new(Mutex::new(HashMap::new())) }
    }

    /// `c_tau` at `tau = 2^{-j/64}`.
    pub fn at_node(&self, j: i64) -> Result<f64> {
        if let Some(v) = self.cache.lock().expect("c_sigma cache poisoned").get(&j) {
            return Ok(*v);
        }
        let v = c_sigma(&self.phi, (-(j as f64) / TAU_NODES_PER_OCTAVE as f64).exp2())?;
        self.cache.lock().expect("c_sigma cache poisoned").insert(j, v);
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_values_and_support() {
        let p = build_radial_cutoff(0.125, 0.25, CutoffKind::Plateau).unwrap();
        assert_eq!(p.eval(0.0), 1.0);
        assert_eq!(p.eval(0.1), 1.0);
        assert_eq!(p.eval(0.25), 0.0);
        assert_eq!(p.eval(3.0), 0.0);
        let mid = p.eval(0.1875);
        assert!((mid - 0.5).abs() < 1e-12);
        let b = build_radial_cutoff(0.8, 1.25, CutoffKind::Bump).unwrap();
        assert!((b.eval(1.0) - 1.0).abs() < 1e-15);
        assert_eq!(b.eval(0.8), 0.0);
        assert_eq!(b.eval(1.3), 0.0);
        assert!(build_radial_cutoff(1.0, 1.0, CutoffKind::Plateau).is_err());
        assert!(build_radial_cutoff(-1.0, 1.0, CutoffKind::Plateau).is_err());
        assert!(build_radial_cutoff(0.0, 1.0, CutoffKind::Bump).is_err());
    }

    #[test]
    fn transitions_are_monotone() {
        let p = build_radial_cutoff(2.0, 4.0, CutoffKind::Plateau).unwrap();
        let b = build_radial_cutoff(0.8, 1.25, CutoffKind::Bump).unwrap();
        let mut last_p = 2.0;
        let mut last_b = 0.0;
        for i in 0..=10_000 {
            let t = 2.0 + 2.0 * i as f64 / 10_000.0;
            let v = p.eval(t);
            assert!(v <= last_p && (0.0..=1.0).contains(&v));
            last_p = v;
            let t = 0.8 + 0.2 * i as f64 / 10_000.0;
            let v = b.eval(t);
            assert!(v >= last_b);
            last_b = v;
        }
    }

    #[test]
    fn continuum_calderon() {
        for set in [ProfileSet::standard(Normalization::Continuum), ProfileSet::tilde(Normalization::Continuum)] {
            let set = set.unwrap();
            assert!((set.psi.continuum_mass() - 1.0).abs() < 1e-10);
        }
        // The tilde plateau is already normalized before scaling.
        let ramp = 1.0 - (9.0f64 / 4.0).ln();
        let raw = Radial::LogPlateau { inner: 2.0 / 3.0, outer: 1.5, ramp };
        let (lo, hi) = raw.support().unwrap();
        assert!(lo >= 0.5 && hi <= 2.0);
        assert!((log_l2_mass(|t| raw.eval(t), lo, hi, 20_000) - 1.0).abs() < 1e-10);
    }

    fn worst_residual(p: &ScaleProfile, j: usize) -> f64 {
        (0..4000)
            .map(|i| p.ladder_residual((i as f64 / 4000.0 * 8.0).exp2(), j).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn discrete_calderon_residuals() {
        let raw = Radial::ladder_window(0.8, 1.25, 4).unwrap();
        let (lo, hi) = raw.support().unwrap();
        assert!((lo - 0.8).abs() < 1e-12 && (hi - 1.25).abs() < 1e-12);
        let cont = calderon_normalize(raw, Normalization::Continuum).unwrap();
        let disc = calderon_normalize(raw, Normalization::Discrete { per_octave: 4 }).unwrap();
        assert!(worst_residual(&cont, 4) <= 2e-2);
        assert!(worst_residual(&disc, 4) <= 1e-12);
        // Off the design spacing the continuum profile leaves a residual that
        // the discrete normalization removes.
        let disc3 = calderon_normalize(raw, Normalization::Discrete { per_octave: 3 }).unwrap();
        assert!(worst_residual(&cont, 3) > 1e-3);
        assert!(worst_residual(&disc3, 3) <= 1e-12);
        let bump = build_radial_cutoff(0.8, 1.25, CutoffKind::Bump).unwrap();
        let bump = calderon_normalize(bump, Normalization::Discrete { per_octave: 4 }).unwrap();
        assert!(worst_residual(&bump, 4) <= 1e-12);
        assert!((disc.continuum_mass() - 1.0).abs() < 1e-10);
        assert_eq!(disc.support(), cont.support());
        assert_eq!(disc.eval(0.79), 0.0);
        assert_eq!(disc.eval(1.26), 0.0);
    }

    #[test]
    fn r_is_one_at_origin_and_vanishes_high() {
        let set = ProfileSet::standard(Normalization::Discrete { per_octave: 4 }).unwrap();
        let ladder = ScaleLadder::new(4, 20).unwrap();
        assert_eq!(set.psi.r_squared(0.0, &ladder).unwrap(), 1.0);
        assert!((set.psi.r_squared(0.5, &ladder).unwrap() - 1.0).abs() < 1e-12);
        assert!(set.psi.r_squared(1.3, &ladder).unwrap().abs() < 1e-12);
    }

    #[test]
    fn c_sigma_slope_rotation_and_refinement() {
        let phi = build_radial_cutoff(0.125, 0.25, CutoffKind::Plateau).unwrap();
        let sig: Vec<f64> = (1..=24).map(|k| (-(k as f64) / 4.0).exp2()).collect();
        let pts: Vec<(f64, f64)> = sig.iter().map(|&s| (s, c_sigma(&phi, s).unwrap())).collect();
        let slope = crate::geometry::loglog_slope(&pts);
        assert!((slope + 0.25).abs() <= 0.05, "slope {slope}");
        for &s in &[0.5, 0.01] {
            let n = c_sigma_nodes(&phi, s);
            let a = c_sigma_quadrature(&phi, s, n, 0.0).unwrap();
            let b = c_sigma_quadrature(&phi, s, n, 1.234).unwrap();
            let c = c_sigma_quadrature(&phi, s, n / 2, 0.0).unwrap();
            assert!((a - b).abs() / a < 1e-10);
            assert!((a - c).abs() / a < 1e-6);
        }
        assert!(c_sigma_quadrature(&phi, 1e-4, 64, 0.0).is_err());
    }
}
