//! Wave packet multipliers on the frequency lattice.
//!
//! `PacketKit` evaluates the packet symbols at arbitrary frequencies and
//! directions; `PacketFamily` materializes the whole bank for one grid,
//! direction set and scale ladder.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{chord, loglog_slope, DirectionSet, ScaleLadder};
use crate::grid::{GridSpec, Multiplier};
use crate::profiles::{CSigmaTable, Normalization, ProfileSet, Radial, TAU_NODES_PER_OCTAVE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyTag {
    Standard,
    Tilde,
}

impl FamilyTag {
    pub fn name(&self) -> &'static str {
        match self {
            FamilyTag::Standard => "standard",
            FamilyTag::Tilde => "tilde",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(FamilyTag::Standard),
            "tilde" => Ok(FamilyTag::Tilde),
            _ => Err(Error::InvalidConfig(format!("unknown profile set '{s}'"))),
        }
    }
}

/// Symbol evaluator for one profile set.
#[derive(Debug, Clone)]
pub struct PacketKit {
    tag: FamilyTag,
    profiles: ProfileSet,
    c_table: CSigmaTable,
}

/// Largest `tau` in the `phi_omega` integral.
pub const PHI_OMEGA_TAU_MAX: f64 = 4.0;

impl PacketKit {
    pub fn new(tag: FamilyTag, norm: Normalization) -> Result<Self> {
        let profiles = match tag {
            FamilyTag::Standard => ProfileSet::standard(norm)?,
            FamilyTag::Tilde => ProfileSet::tilde(norm)?,
        };
        Ok(Self { tag, profiles, c_table: CSigmaTable::new(profiles.phi) })
    }

    pub fn tag(&self) -> FamilyTag {
        self.tag
    }

    pub fn profiles(&self) -> &ProfileSet {
        &self.profiles
    }

    pub fn c_sigma(&self, sigma: f64) -> Result<f64> {
        crate::profiles::c_sigma(&self.profiles.phi, sigma)
    }

    /// `Psi(sigma |zeta|)`.
    pub fn psi_radial(&self, sigma: f64, modulus: f64) -> f64 {
        self.profiles.psi.eval(sigma * modulus)
    }

    /// `phi(|zeta_hat - w| / sqrt sigma)` for a frequency at angle `angle`.
    pub fn angular_window(&self, direction: f64, sigma: f64, angle: f64) -> f64 {
        self.profiles.phi.eval(chord(direction, angle) / sigma.sqrt())
    }

    /// Half-angle beyond which `phi(chord / sqrt sigma)` vanishes.
    pub fn angular_halfwidth(&self, sigma: f64) -> f64 {
        let c = self.profiles.phi_outer() * sigma.sqrt();
        if c >= 2.0 {
            PI
        } else {
            2.0 * (0.5 * c).asin()
        }
    }

    /// `psi_{w,sigma}(zeta) = Psi(sigma |zeta|) c_sigma phi((zeta_hat - w)/sqrt sigma)`.
    pub fn psi(&self, direction: f64, sigma: f64, zeta: [f64; 2]) -> Result<f64> {
        let m = zeta[0].hypot(zeta[1]);
        if m == 0.0 {
            return Ok(0.0);
        }
        let radial = self.psi_radial(sigma, m);
        if radial == 0.0 {
            return Ok(0.0);
        }
        let ang = self.angular_window(direction, sigma, zeta[1].atan2(zeta[0]));
        if ang == 0.0 {
            return Ok(0.0);
        }
        Ok(radial * self.c_sigma(sigma)? * ang)
    }

    /// Node range `j` with `tau_j = 2^{-j/64}` meeting the support of
    /// `tau -> Psi(tau |zeta|)` inside `(0, 4]`.
    fn tau_nodes(&self, modulus: f64) -> Option<(i64, i64)> {
        let (lo, hi) = self.profiles.psi.support();
        let j_per = TAU_NODES_PER_OCTAVE as f64;
        let tau_hi = (hi / modulus).min(PHI_OMEGA_TAU_MAX);
        let tau_lo = lo / modulus;
        if tau_lo >= tau_hi {
            return None;
        }
        let j_lo = (-(tau_hi.log2()) * j_per).ceil() as i64;
        let j_hi = (-(tau_lo.log2()) * j_per).floor() as i64;
        (j_lo <= j_hi).then_some((j_lo, j_hi))
    }

    /// Largest `tau` contributing to `phi_omega` at `modulus`.
    fn tau_max(&self, modulus: f64) -> f64 {
        (self.profiles.psi.support().1 / modulus).min(PHI_OMEGA_TAU_MAX)
    }

    /// Half-angle of the support of `w -> phi_w(zeta)`.
    pub fn phi_omega_halfwidth(&self, modulus: f64) -> f64 {
        self.angular_halfwidth(self.tau_max(modulus))
    }

    /// Smallest `|zeta|` where `phi_omega` can be nonzero.
    pub fn phi_omega_min_modulus(&self) -> f64 {
        self.profiles.psi.support().0 / PHI_OMEGA_TAU_MAX
    }

    /// `phi_w(zeta) = int_0^4 psi_{w,tau}(zeta) dtau/tau` by the trapezoid rule
    /// in `ln tau` on the nodes `2^{-j/64}`.
    pub fn phi_omega(&self, direction: f64, zeta: [f64; 2]) -> Result<f64> {
        let m = zeta[0].hypot(zeta[1]);
        if m == 0.0 {
            return Ok(0.0);
        }
        let Some((j_lo, j_hi)) = self.tau_nodes(m) else {
            return Ok(0.0);
        };
        let angle = zeta[1].atan2(zeta[0]);
        let c = chord(direction, angle);
        let j_per = TAU_NODES_PER_OCTAVE as f64;
        let mut s = 0.0;
        for j in j_lo..=j_hi {
            let tau = (-(j as f64) / j_per).exp2();
            let a = self.profiles.phi.eval(c / tau.sqrt());
            if a == 0.0 {
                continue;
            }
            let r = self.psi_radial(tau, m);
            if r == 0.0 {
                continue;
            }
            let w = if tau == PHI_OMEGA_TAU_MAX { 0.5 } else { 1.0 };
            s += w * r * a * self.c_table.at_node(j)?;
        }
        Ok(s * std::f64::consts::LN_2 / j_per)
    }

    /// `theta_{w,sigma}(zeta) = Psi(sigma |zeta|) phi_w(zeta)`.
    pub fn theta(&self, direction: f64, sigma: f64, zeta: [f64; 2]) -> Result<f64> {
        let r = self.psi_radial(sigma, zeta[0].hypot(zeta[1]));
        if r == 0.0 {
            return Ok(0.0);
        }
        Ok(r * self.phi_omega(direction, zeta)?)
    }

    /// `int_{S^1} phi_v(zeta)^2 dv` on `nodes` equispaced directions.
    pub fn angular_energy(&self, zeta: [f64; 2], nodes: usize) -> Result<f64> {
        let m = zeta[0].hypot(zeta[1]);
        if m == 0.0 {
            return Ok(0.0);
        }
        let angle = zeta[1].atan2(zeta[0]);
        let half = self.phi_omega_halfwidth(m);
        let dv = TAU / nodes as f64;
        let mut s = 0.0;
        for i in window(angle, half, dv, nodes) {
            let v = self.phi_omega(dv * i as f64, zeta)?;
            s += v * v;
        }
        Ok(s * dv)
    }
}

/// Indices `i` of the grid `i * dv` (mod `count`) within `half` of `angle`.
fn window(angle: f64, half: f64, dv: f64, count: usize) -> Vec<usize> {
    let lo = ((angle - half) / dv).ceil() as i64;
    let hi = ((angle + half) / dv).floor() as i64;
    if hi - lo + 1 >= count as i64 {
        return (0..count).collect();
    }
    (lo..=hi).map(|i| i.rem_euclid(count as i64) as usize).collect()
}

/// Modulus and angle of every lattice frequency.
#[derive(Debug, Clone)]
pub struct LatticeGeometry {
    pub modulus: Vec<f64>,
    pub angle: Vec<f64>,
}

impl LatticeGeometry {
    pub fn new(grid: &GridSpec) -> Self {
        let (modulus, angle) = (0..grid.len())
            .map(|i| {
                let z = grid.frequency(i);
                (z[0].hypot(z[1]), z[1].atan2(z[0]))
            })
            .unzip();
        Self { modulus, angle }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FamilyOptions {
    pub tag: FamilyTag,
    /// Discrete Calderon and angular renormalization, making the reproducing
    /// formulas exact on the lattice.
    pub renormalize: bool,
}

impl Default for FamilyOptions {
    fn default() -> Self {
        Self { tag: FamilyTag::Standard, renormalize: true }
    }
}

/// Precomputed multiplier bank over (direction, scale).
#[derive(Debug, Clone)]
pub struct PacketFamily {
    grid: GridSpec,
    directions: DirectionSet,
    ladder: ScaleLadder,
    options: FamilyOptions,
    kit: PacketKit,
    psi: Vec<Vec<Multiplier>>,
    theta: Vec<Vec<Multiplier>>,
    chi: Vec<Vec<Multiplier>>,
    phi_omega: Vec<Multiplier>,
    energy: Vec<f64>,
    r: Multiplier,
    s: Multiplier,
    q: Multiplier,
    h: Multiplier,
    diagnostics: FamilyDiagnostics,
}

/// Residuals measured while building a family.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FamilyDiagnostics {
    /// `max |sum_k w Psi_k^2 + r^2 - 1|` over the lattice.
    pub calderon_residual: f64,
    /// `max |s|` over lattice points with `|zeta| > 2`, before zeroing.
    pub partition_residual: f64,
    /// `max |(2 pi / M) sum_m |psi_{m,k}|^2 - Psi_k^2|` over the lattice.
    pub angular_residual: f64,
    pub min_angular_energy: f64,
}

fn sparse(grid: GridSpec, entries: Vec<(u32, f64)>) -> Multiplier {
    Multiplier::from_sparse(grid, entries.into_iter().map(|(i, v)| (i, Complex64::new(v, 0.0))).collect())
        .expect("entries are generated in index order")
}

fn radial_multiplier(grid: GridSpec, geo: &LatticeGeometry, f: impl Fn(f64) -> f64) -> Multiplier {
    let entries = geo.modulus.iter().enumerate().map(|(i, &m)| (i as u32, f(m))).collect();
    sparse(grid, entries)
}

impl PacketFamily {
    pub fn build(grid: GridSpec, directions: DirectionSet, ladder: ScaleLadder, options: FamilyOptions) -> Result<Self> {
        directions.check_resolves(&ladder)?;
        let norm = if options.renormalize {
            Normalization::Discrete { per_octave: ladder.per_octave() }
        } else {
            Normalization::Continuum
        };
        let kit = PacketKit::new(options.tag, norm)?;
        let geo = LatticeGeometry::new(&grid);
        let mcount = directions.len();
        let dw = directions.weight();
        let (lo, hi) = kit.profiles.psi.support();

        // psi channels, one scale at a time.
        let per_scale: Vec<(Vec<Multiplier>, f64)> = ladder
            .nodes()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|k| -> Result<(Vec<Multiplier>, f64)> {
                let sigma = ladder.sigma(k as i64);
                let half = kit.angular_halfwidth(sigma);
                let c = kit.c_sigma(sigma)?;
                let mut buckets: Vec<Vec<(u32, f64)>> = vec![Vec::new(); mcount];
                let mut worst: f64 = 0.0;
                let mut vals: Vec<(usize, f64)> = Vec::new();
                for (i, (&m, &a)) in geo.modulus.iter().zip(&geo.angle).enumerate() {
                    if m * sigma <= lo || m * sigma >= hi {
                        continue;
                    }
                    let radial = kit.psi_radial(sigma, m);
                    if radial == 0.0 {
                        continue;
                    }
                    vals.clear();
                    let mut mass = 0.0;
                    for d in window(a, half, dw, mcount) {
                        let v = kit.angular_window(directions.angle(d), sigma, a);
                        if v > 0.0 {
                            vals.push((d, v));
                            mass += v * v;
                        }
                    }
                    mass *= dw;
                    let scale = if options.renormalize {
                        if mass <= 0.0 {
                            return Err(Error::UnresolvedQuadrature(format!(
                                "no direction meets the angular support at sigma = {sigma:e}, |zeta| = {m}"
                            )));
                        }
                        mass.sqrt().recip()
                    } else {
                        c
                    };
                    worst = worst.max((scale * scale * mass - 1.0).abs() * radial * radial);
                    for &(d, v) in &vals {
                        buckets[d].push((i as u32, radial * v * scale));
                    }
                }
                Ok((buckets.into_iter().map(|b| sparse(grid, b)).collect(), worst))
            })
            .collect::<Result<_>>()?;
        let mut angular_residual: f64 = 0.0;
        let psi: Vec<Vec<Multiplier>> = per_scale
            .into_iter()
            .map(|(v, w)| {
                angular_residual = angular_residual.max(w);
                v
            })
            .collect();

        // phi_omega for every direction; rows of the lattice in parallel.
        let min_mod = kit.phi_omega_min_modulus();
        let n = grid.n();
        let rows: Vec<Vec<(usize, u32, f64)>> = (0..n)
            .into_par_iter()
            .map(|row| -> Result<Vec<(usize, u32, f64)>> {
                let mut out = Vec::new();
                for i in row * n..(row + 1) * n {
                    let m = geo.modulus[i];
                    if m <= min_mod {
                        continue;
                    }
                    let z = grid.frequency(i);
                    for d in window(geo.angle[i], kit.phi_omega_halfwidth(m), dw, mcount) {
                        let v = kit.phi_omega(directions.angle(d), z)?;
                        if v != 0.0 {
                            out.push((d, i as u32, v));
                        }
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let mut phi_buckets: Vec<Vec<(u32, f64)>> = vec![Vec::new(); mcount];
        let mut energy = vec![0.0; grid.len()];
        for (d, i, v) in rows.into_iter().flatten() {
            phi_buckets[d].push((i, v));
            energy[i as usize] += v * v * dw;
        }
        let phi_omega: Vec<Multiplier> = phi_buckets.into_iter().map(|b| sparse(grid, b)).collect();

        // theta, chi and the partition sum.
        let kk = ladder.depth();
        let mut theta_b: Vec<Vec<Vec<(u32, f64)>>> = vec![vec![Vec::new(); mcount]; kk];
        let mut chi_b: Vec<Vec<Vec<(u32, f64)>>> = vec![vec![Vec::new(); mcount]; kk];
        let mut partition = vec![0.0; grid.len()];
        let mut min_energy = f64::INFINITY;
        let j = ladder.per_octave() as f64;
        for (d, phi) in phi_omega.iter().enumerate() {
            for (i, v) in phi.iter() {
                let m = geo.modulus[i];
                let k_lo = ((j * (m / hi).log2()).floor() as i64).max(1);
                let k_hi = ((j * (m / lo).log2()).ceil() as i64).min(kk as i64);
                for k in k_lo..=k_hi {
                    let radial = kit.psi_radial(ladder.sigma(k), m);
                    if radial == 0.0 {
                        continue;
                    }
                    let e = energy[i];
                    if e < 1e-8 {
                        let (kx, ky) = grid.wavenumbers(i);
                        return Err(Error::AngularEnergyTooSmall { value: e, kx, ky });
                    }
                    min_energy = min_energy.min(e);
                    let t = radial * v.re;
                    let ki = k as usize - 1;
                    theta_b[ki][d].push((i as u32, t));
                    chi_b[ki][d].push((i as u32, t / e));
                    partition[i] += t * t / e * ladder.weight() * dw;
                }
            }
        }
        let theta: Vec<Vec<Multiplier>> =
            theta_b.into_iter().map(|v| v.into_iter().map(|b| sparse(grid, b)).collect()).collect();
        let chi: Vec<Vec<Multiplier>> =
            chi_b.into_iter().map(|v| v.into_iter().map(|b| sparse(grid, b)).collect()).collect();

        // r, s, q, h.
        let mut r_entries = Vec::new();
        let mut calderon_residual: f64 = 0.0;
        for (i, &m) in geo.modulus.iter().enumerate() {
            let r2 = kit.profiles.psi.r_squared(m, &ladder)?;
            if m > 0.0 {
                let mut s = 0.0;
                for k in ladder.nodes() {
                    let v = kit.psi_radial(ladder.sigma(k as i64), m);
                    s += v * v;
                }
                calderon_residual = calderon_residual.max((s * ladder.weight() + r2 - 1.0).abs());
            }
            r_entries.push((i as u32, r2.sqrt()));
        }
        let r = sparse(grid, r_entries);
        let mut s_entries = Vec::new();
        let mut partition_residual: f64 = 0.0;
        for (i, &m) in geo.modulus.iter().enumerate() {
            let s = 1.0 - partition[i];
            if m > 2.0 {
                partition_residual = partition_residual.max(s.abs());
                if s.abs() > 1e-10 {
                    return Err(Error::PartitionViolated { value: s, modulus: m });
                }
                continue;
            }
            s_entries.push((i as u32, s));
        }
        let s = sparse(grid, s_entries);
        let q = radial_multiplier(grid, &geo, |m| kit.profiles.q.eval(m));
        let h = radial_multiplier(grid, &geo, |m| kit.profiles.h.eval(m));

        Ok(Self {
            grid,
            directions,
            ladder,
            options,
            kit,
            psi,
            theta,
            chi,
            phi_omega,
            energy,
            r,
            s,
            q,
            h,
            diagnostics: FamilyDiagnostics {
                calderon_residual,
                partition_residual,
                angular_residual,
                min_angular_energy: if min_energy.is_finite() { min_energy } else { 0.0 },
            },
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn directions(&self) -> &DirectionSet {
        &self.directions
    }

    pub fn ladder(&self) -> &ScaleLadder {
        &self.ladder
    }

    pub fn options(&self) -> FamilyOptions {
        self.options
    }

    pub fn kit(&self) -> &PacketKit {
        &self.kit
    }

    pub fn diagnostics(&self) -> FamilyDiagnostics {
        self.diagnostics
    }

    /// `psi_{w_m, sigma_k}` for `k = 1..=K`.
    pub fn psi(&self, m: usize, k: usize) -> &Multiplier {
        &self.psi[k - 1][m]
    }

    pub fn theta(&self, m: usize, k: usize) -> &Multiplier {
        &self.theta[k - 1][m]
    }

    pub fn chi(&self, m: usize, k: usize) -> &Multiplier {
        &self.chi[k - 1][m]
    }

    pub fn phi_omega(&self, m: usize) -> &Multiplier {
        &self.phi_omega[m]
    }

    /// `(2 pi / M) sum_m phi_{w_m}(zeta)^2` per lattice index.
    pub fn angular_energy(&self) -> &[f64] {
        &self.energy
    }

    pub fn r(&self) -> &Multiplier {
        &self.r
    }

    pub fn s(&self) -> &Multiplier {
        &self.s
    }

    pub fn q(&self) -> &Multiplier {
        &self.q
    }

    pub fn h(&self) -> &Multiplier {
        &self.h
    }

    /// The multiplier used by channel `(m, k)` of a transform.
    pub fn channel(&self, which: Which, m: usize, k: usize) -> &Multiplier {
        match which {
            Which::W => self.psi(m, k),
            Which::V => self.theta(m, k),
            Which::U => self.chi(m, k),
        }
    }

    /// The multiplier of the coarse channel of a transform.
    pub fn coarse(&self, which: Which) -> &Multiplier {
        match which {
            Which::W => &self.r,
            Which::V => &self.s,
            Which::U => &self.h,
        }
    }

    /// Reassembles a family from stored multipliers; the tables are checked
    /// for shape only.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        grid: GridSpec,
        directions: DirectionSet,
        ladder: ScaleLadder,
        options: FamilyOptions,
        psi: Vec<Vec<Multiplier>>,
        theta: Vec<Vec<Multiplier>>,
        chi: Vec<Vec<Multiplier>>,
        phi_omega: Vec<Multiplier>,
        rsqh: [Multiplier; 4],
    ) -> Result<Self> {
        let norm = if options.renormalize {
            Normalization::Discrete { per_octave: ladder.per_octave() }
        } else {
            Normalization::Continuum
        };
        let kit = PacketKit::new(options.tag, norm)?;
        let shape_ok = |t: &Vec<Vec<Multiplier>>| {
            t.len() == ladder.depth() && t.iter().all(|row| row.len() == directions.len())
        };
        if !shape_ok(&psi) || !shape_ok(&theta) || !shape_ok(&chi) || phi_omega.len() != directions.len() {
            return Err(Error::FamilyMismatch("channel tables do not match M and K".into()));
        }
        let all = psi.iter().chain(&theta).chain(&chi).flatten().chain(&phi_omega).chain(rsqh.iter());
        for mult in all {
            grid.check_same(mult.grid())?;
        }
        let dw = directions.weight();
        let mut energy = vec![0.0; grid.len()];
        for phi in &phi_omega {
            for (i, v) in phi.iter() {
                energy[i] += v.norm_sqr() * dw;
            }
        }
        let [r, s, q, h] = rsqh;
        Ok(Self {
            grid,
            directions,
            ladder,
            options,
            kit,
            psi,
            theta,
            chi,
            phi_omega,
            energy,
            r,
            s,
            q,
            h,
            diagnostics: FamilyDiagnostics::default(),
        })
    }

    /// Checks that `other` lives on the same grid, directions and ladder.
    pub fn check_compatible(&self, grid: &GridSpec) -> Result<()> {
        if self.grid.n() != grid.n() || self.grid.period() != grid.period() {
            return Err(Error::FamilyMismatch(format!(
                "family built for N = {}, L = {} but field has N = {}, L = {}",
                self.grid.n(),
                self.grid.period(),
                grid.n(),
                grid.period()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Which {
    W,
    V,
    U,
}

impl Which {
    pub fn name(&self) -> &'static str {
        match self {
            Which::W => "W",
            Which::V => "V",
            Which::U => "U",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "W" | "w" => Ok(Which::W),
            "V" | "v" => Ok(Which::V),
            "U" | "u" => Ok(Which::U),
            _ => Err(Error::InvalidConfig(format!("unknown transform '{s}'"))),
        }
    }
}

/// `eta_{w,v,sigma} = theta_{w,sigma} / theta~_{v,sigma}` on the support of
/// `theta_{w,sigma}`, together with the smallest denominator met there.
pub fn packet_change_ratio(
    standard: &PacketKit,
    tilde: &PacketKit,
    grid: GridSpec,
    omega: f64,
    nu: f64,
    sigma: f64,
) -> Result<(Multiplier, f64)> {
    if chord(omega, nu) > sigma.sqrt() / 16.0 * (1.0 + 1e-12) {
        return Err(Error::InvalidConfig(format!(
            "|w - v| = {} exceeds sqrt(sigma)/16 = {}",
            chord(omega, nu),
            sigma.sqrt() / 16.0
        )));
    }
    let mut entries = Vec::new();
    let mut floor = f64::INFINITY;
    for i in 0..grid.len() {
        let z = grid.frequency(i);
        let num = standard.theta(omega, sigma, z)?;
        if num == 0.0 {
            continue;
        }
        let den = tilde.theta(nu, sigma, z)?;
        if den < 1e-8 {
            return Err(Error::DenominatorTooSmall { value: den });
        }
        floor = floor.min(den);
        entries.push((i as u32, Complex64::new(num / den, 0.0)));
    }
    Ok((Multiplier::from_sparse(grid, entries)?, floor))
}

/// Spatial decay of an inverse-transformed packet.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub peak: f64,
    /// `(rho_lo, rho_hi, sup)` per nonempty bin.
    pub bins: Vec<(f64, f64, f64)>,
    /// Edge of the body: every bin above it has `sup < DECAY_BODY_LEVEL * peak`.
    pub body_rho: f64,
    /// Least-squares slope of `ln sup` against `ln rho` over the two decades
    /// past `max(body_rho, 10)`, using bins above the noise floor.
    pub tail_slope: Option<f64>,
    pub fitted_bins: usize,
}

pub const DECAY_NOISE_FLOOR: f64 = 1e-13;
pub const DECAY_BODY_LEVEL: f64 = 1e-2;

/// Bins `|F^{-1} eta(x)|` by `rho = |x|^2 / sigma + <w, x>^2 / sigma^2`.
pub fn packet_decay_profile(eta: &Multiplier, direction: f64, sigma: f64) -> DecayReport {
    let grid = *eta.grid();
    let kernel = crate::grid::sparse_to_spatial(grid, &eta.iter().collect::<Vec<_>>());
    let w = [direction.cos(), direction.sin()];
    let bins_per_decade = 8.0;
    let rho_min: f64 = 1e-2;
    let mut sup: Vec<f64> = Vec::new();
    let mut peak: f64 = 0.0;
    for (i, v) in kernel.data().iter().enumerate() {
        let x = grid.displacement([0.0, 0.0], grid.position(i));
        let along = w[0] * x[0] + w[1] * x[1];
        let rho = (x[0] * x[0] + x[1] * x[1]) / sigma + along * along / (sigma * sigma);
        let a = v.norm();
        peak = peak.max(a);
        let b = decay_bin(rho, rho_min, bins_per_decade);
        if sup.len() <= b {
            sup.resize(b + 1, -1.0);
        }
        sup[b] = sup[b].max(a);
    }
    decay_report(peak, &sup, rho_min, bins_per_decade)
}

/// Bin index of `rho` with `bins_per_decade` logarithmic bins above `rho_min`.
pub(crate) fn decay_bin(rho: f64, rho_min: f64, bins_per_decade: f64) -> usize {
    if rho <= rho_min {
        0
    } else {
        ((rho / rho_min).log10() * bins_per_decade).floor() as usize + 1
    }
}

/// Builds the report from per-bin suprema (`-1` marks an empty bin).
pub(crate) fn decay_report(peak: f64, sup: &[f64], rho_min: f64, bins_per_decade: f64) -> DecayReport {
    let edge = |b: usize| if b == 0 { 0.0 } else { rho_min * 10f64.powf((b - 1) as f64 / bins_per_decade) };
    let bins: Vec<(f64, f64, f64)> =
        sup.iter().enumerate().filter(|(_, &s)| s >= 0.0).map(|(b, &s)| (edge(b), edge(b + 1), s)).collect();
    let body_rho = bins.iter().rev().find(|b| b.2 >= DECAY_BODY_LEVEL * peak).map_or(0.0, |b| b.1);
    let start = body_rho.max(10.0);
    let fit: Vec<(f64, f64)> = bins
        .iter()
        .filter(|(lo, hi, s)| *lo >= start * 0.9999 && *hi <= 100.0 * start * 1.0001 && *s > DECAY_NOISE_FLOOR * peak)
        .map(|(lo, hi, s)| ((lo * hi).sqrt(), *s))
        .collect();
    let tail_slope = (fit.len() >= 3).then(|| loglog_slope(&fit));
    DecayReport { peak, bins, body_rho, tail_slope, fitted_bins: fit.len() }
}

/// Gaussian `Phi(sigma zeta)` as a lattice multiplier.
pub fn phi_max_multiplier(grid: GridSpec, sigma: f64) -> Multiplier {
    let g = Radial::Gaussian;
    Multiplier::from_real_symbol(grid, |z| g.eval(sigma * z[0].hypot(z[1])))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_family(renormalize: bool) -> PacketFamily {
        let grid = GridSpec::new(64, TAU).unwrap();
        let ladder = ScaleLadder::covering(4, grid.max_modulus(), 0.8).unwrap();
        let dirs = DirectionSet::new(128).unwrap();
        PacketFamily::build(grid, dirs, ladder, FamilyOptions { tag: FamilyTag::Standard, renormalize }).unwrap()
    }

    #[test]
    fn on_axis_value_and_supports() {
        let fam = small_family(false);
        let kit = fam.kit();
        let sigma = fam.ladder().sigma(12);
        // zeta = w / sigma for w = e_1 is not a lattice point in general; use the kit.
        let v = kit.psi(0.0, sigma, [1.0 / sigma, 0.0]).unwrap();
        let expect = kit.c_sigma(sigma).unwrap() * kit.psi_radial(sigma, 1.0 / sigma);
        assert!((v - expect).abs() < 1e-12 * expect);
        assert_eq!(kit.psi(0.0, sigma, [0.0, 0.0]).unwrap(), 0.0);
        let grid = *fam.grid();
        let geo = LatticeGeometry::new(&grid);
        for k in fam.ladder().nodes() {
            let sigma = fam.ladder().sigma(k as i64);
            for m in 0..fam.directions().len() {
                let w = fam.directions().angle(m);
                for mult in [fam.psi(m, k), fam.theta(m, k), fam.chi(m, k)] {
                    for (i, _) in mult.iter() {
                        let t = geo.modulus[i] * sigma;
                        assert!((0.5..=2.0).contains(&t));
                        assert!(chord(w, geo.angle[i]) <= 2.0 * sigma.sqrt());
                    }
                }
            }
        }
        for m in 0..fam.directions().len() {
            let w = fam.directions().angle(m);
            for (i, _) in fam.phi_omega(m).iter() {
                assert!(geo.modulus[i] >= 0.125);
                assert!(chord(w, geo.angle[i]) <= 2.0 / geo.modulus[i].sqrt());
            }
        }
        for (i, _) in fam.s().iter() {
            assert!(geo.modulus[i] <= 2.0);
        }
    }

    #[test]
    fn r_s_q_h_values() {
        let fam = small_family(true);
        let grid = *fam.grid();
        let zero = grid.index_of(0, 0).unwrap();
        assert_eq!(fam.r().value(zero).re, 1.0);
        assert_eq!(fam.s().value(zero).re, 1.0);
        assert_eq!(fam.kit().profiles().q.eval(1.9), 1.0);
        for (i, v) in fam.s().iter() {
            assert!(fam.h().value(i).re == 1.0, "h must be 1 on supp s ({v})");
        }
        let d = fam.diagnostics();
        assert!(d.calderon_residual <= 1e-12, "{d:?}");
        assert!(d.partition_residual <= 1e-12, "{d:?}");
        assert!(d.angular_residual <= 1e-12, "{d:?}");
    }

    #[test]
    fn discrete_partition_of_unity() {
        let fam = small_family(true);
        let grid = *fam.grid();
        let dw = fam.directions().weight();
        let w = fam.ladder().weight();
        let mut total = vec![0.0; grid.len()];
        for k in fam.ladder().nodes() {
            for m in 0..fam.directions().len() {
                let chi = fam.chi(m, k);
                for (i, t) in fam.theta(m, k).iter() {
                    total[i] += (t * chi.value(i)).re * w * dw;
                }
            }
        }
        for (i, t) in total.iter().enumerate() {
            let s = fam.s().value(i).re;
            assert!((t + s - 1.0).abs() < 1e-12, "index {i}: {}", t + s);
        }
    }

    #[test]
    fn chi_times_energy_is_theta() {
        let fam = small_family(true);
        let e = fam.angular_energy();
        for k in [3, 10] {
            for m in [0, 17] {
                let chi = fam.chi(m, k);
                for (i, t) in fam.theta(m, k).iter() {
                    assert!((chi.value(i).re * e[i] - t.re).abs() <= 1e-14 * t.re.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn insufficient_directions_are_rejected() {
        let grid = GridSpec::new(64, TAU).unwrap();
        let ladder = ScaleLadder::covering(4, grid.max_modulus(), 0.8).unwrap();
        let dirs = DirectionSet::new(16).unwrap();
        assert!(PacketFamily::build(grid, dirs, ladder, FamilyOptions::default()).is_err());
    }

    #[test]
    fn short_ladder_violates_partition() {
        let grid = GridSpec::new(64, TAU).unwrap();
        let ladder = ScaleLadder::new(4, 12).unwrap();
        let dirs = DirectionSet::new(128).unwrap();
        let err = PacketFamily::build(grid, dirs, ladder, FamilyOptions::default()).unwrap_err();
        assert!(matches!(err, Error::PartitionViolated { .. }), "{err}");
    }

    #[test]
    fn phi_omega_matches_direct_quadrature() {
        let kit = PacketKit::new(FamilyTag::Standard, Normalization::Discrete { per_octave: 4 }).unwrap();
        let z = [13.0f64, 5.0];
        let a = 5f64.atan2(13.0) + 0.02;
        // Dense trapezoid in ln tau with an independently computed c_tau.
        let m = z[0].hypot(z[1]);
        let (lo, hi) = (0.8 / m, 1.25 / m);
        let nodes = 4000;
        let mut s = 0.0;
        for i in 0..=nodes {
            let tau = (lo.ln() + (hi / lo).ln() * i as f64 / nodes as f64).exp();
            let wt = if i == 0 || i == nodes { 0.5 } else { 1.0 };
            s += wt * kit.psi(a, tau, z).unwrap();
        }
        s *= (hi / lo).ln() / nodes as f64;
        let v = kit.phi_omega(a, z).unwrap();
        assert!((v - s).abs() <= 1e-6 * s, "{v} vs {s}");
    }
}
