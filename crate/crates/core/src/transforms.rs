//! Wave packet transforms `W`, `V`, `U`, their adjoints and the half-wave
//! propagator.
//!
//! Coefficients live on `S*(R^2) x (0, inf)` discretized as one spatial field
//! per (direction, scale) channel plus a coarse field for `sigma in [1, e]`.
//! The discrete `L^2(S*_+)` inner product is
//! `sum_{m,k} (2 pi / M) w_k <F_{m,k}, G_{m,k}> + 2 pi <F_c, G_c>`,
//! where the coarse field carries the factor `(2 pi)^{-1/2}` so that the
//! coarse weight `|S^1| * int_1^e dsigma/sigma` appears explicitly.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{DirectionSet, ScaleLadder};
use crate::grid::{sparse_to_spatial, spectral_samples, GridSpec, Multiplier, SpatialField, SpectralField};
use crate::packets::{PacketFamily, Which};

/// Weight of the coarse channel in the discrete inner product.
pub const COARSE_WEIGHT: f64 = TAU;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Materialized transform output.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketCoefficients {
    grid: GridSpec,
    which: Which,
    directions: DirectionSet,
    ladder: ScaleLadder,
    channels: Vec<Option<SpatialField>>,
    coarse: SpatialField,
}

impl PacketCoefficients {
    pub fn zeros(family: &PacketFamily, which: Which) -> Self {
        Self::empty(*family.grid(), which, *family.directions(), *family.ladder())
    }

    /// All-zero coefficients on an explicit layout.
    pub fn empty(grid: GridSpec, which: Which, directions: DirectionSet, ladder: ScaleLadder) -> Self {
        Self {
            grid,
            which,
            directions,
            ladder,
            channels: vec![None; directions.len() * ladder.depth()],
            coarse: SpatialField::zeros(grid),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn which(&self) -> Which {
        self.which
    }

    pub fn directions(&self) -> usize {
        self.directions.len()
    }

    pub fn depth(&self) -> usize {
        self.ladder.depth()
    }

    pub fn direction_set(&self) -> &DirectionSet {
        &self.directions
    }

    pub fn ladder(&self) -> &ScaleLadder {
        &self.ladder
    }

    fn slot(&self, m: usize, k: usize) -> usize {
        assert!(m < self.directions() && (1..=self.depth()).contains(&k), "channel ({m}, {k}) out of range");
        (k - 1) * self.directions() + m
    }

    /// Channel `(m, k)`, `None` when identically zero.
    pub fn channel(&self, m: usize, k: usize) -> Option<&SpatialField> {
        self.channels[self.slot(m, k)].as_ref()
    }

    pub fn set_channel(&mut self, m: usize, k: usize, field: Option<SpatialField>) -> Result<()> {
        if let Some(f) = &field {
            self.grid.check_same(f.grid())?;
        }
        let s = self.slot(m, k);
        self.channels[s] = field;
        Ok(())
    }

    pub fn coarse(&self) -> &SpatialField {
        &self.coarse
    }

    pub fn set_coarse(&mut self, field: SpatialField) -> Result<()> {
        self.grid.check_same(field.grid())?;
        self.coarse = field;
        Ok(())
    }

    pub fn nonzero_channels(&self) -> impl Iterator<Item = (usize, usize, &SpatialField)> + '_ {
        self.channels.iter().enumerate().filter_map(move |(s, c)| {
            c.as_ref().map(|f| (s % self.directions(), s / self.directions() + 1, f))
        })
    }

    pub fn scale(&mut self, alpha: Complex64) {
        for c in self.channels.iter_mut().flatten() {
            c.scale(alpha);
        }
        self.coarse.scale(alpha);
    }

    fn check_shape(&self, other: &PacketCoefficients) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        if self.directions != other.directions || self.ladder != other.ladder {
            return Err(Error::FamilyMismatch("coefficient layouts differ".into()));
        }
        Ok(())
    }

    /// Discrete `L^2(S*_+)` inner product `<self, other>`.
    pub fn inner(&self, other: &PacketCoefficients) -> Result<Complex64> {
        self.check_shape(other)?;
        let w = self.directions.weight() * self.ladder.weight();
        let mut s = ZERO;
        for (a, b) in self.channels.iter().zip(&other.channels) {
            if let (Some(a), Some(b)) = (a, b) {
                s += a.inner(b)? * w;
            }
        }
        Ok(s + self.coarse.inner(&other.coarse)? * COARSE_WEIGHT)
    }

    pub fn norm_sq(&self) -> f64 {
        let w = self.directions.weight() * self.ladder.weight() * self.grid.cell_area();
        let ch: f64 = self.channels.iter().flatten().map(|c| c.sum_sq()).sum();
        ch * w + self.coarse.sum_sq() * self.grid.cell_area() * COARSE_WEIGHT
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }
}

/// All channels of one scale `sigma_k`, as sparse spectra.
#[derive(Debug, Clone)]
pub struct ScaleSlice {
    pub k: usize,
    pub sigma: f64,
    pub weight: f64,
    grid: GridSpec,
    spectra: Vec<Vec<(usize, Complex64)>>,
}

impl ScaleSlice {
    pub fn directions(&self) -> usize {
        self.spectra.len()
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Sparse spectrum of channel `m` (indices sorted).
    pub fn spectrum(&self, m: usize) -> &[(usize, Complex64)] {
        &self.spectra[m]
    }

    pub fn is_zero(&self, m: usize) -> bool {
        self.spectra[m].is_empty()
    }

    pub fn spatial(&self, m: usize) -> SpatialField {
        sparse_to_spatial(self.grid, &self.spectra[m])
    }
}

fn check_family(family: &PacketFamily, grid: &GridSpec) -> Result<()> {
    family.check_compatible(grid)
}

/// Scale slice `k` of `which` applied to the spectrum.
pub fn scale_slice(family: &PacketFamily, which: Which, spectrum: &SpectralField, k: usize) -> ScaleSlice {
    let m_count = family.directions().len();
    let spectra = (0..m_count)
        .into_par_iter()
        .map(|m| family.channel(which, m, k).act_sparse(spectrum))
        .collect();
    ScaleSlice {
        k,
        sigma: family.ladder().sigma(k as i64),
        weight: family.ladder().weight(),
        grid: *family.grid(),
        spectra,
    }
}

/// Visits every scale of the transform of `spectrum` in ladder order without
/// materializing more than one scale at a time.
pub fn stream_scales(
    family: &PacketFamily,
    which: Which,
    spectrum: &SpectralField,
    mut visit: impl FnMut(&ScaleSlice) -> Result<()>,
) -> Result<()> {
    check_family(family, spectrum.grid())?;
    for k in family.ladder().nodes() {
        let slice = scale_slice(family, which, spectrum, k);
        if slice.spectra.iter().all(|s| s.is_empty()) {
            continue;
        }
        visit(&slice)?;
    }
    Ok(())
}

/// `(2 pi)^{-1/2} m(D) f` for the coarse multiplier `m` of `which`.
pub fn coarse_channel(family: &PacketFamily, which: Which, spectrum: &SpectralField) -> Result<SpatialField> {
    check_family(family, spectrum.grid())?;
    let entries: Vec<(usize, Complex64)> = family
        .coarse(which)
        .act_sparse(spectrum)
        .into_iter()
        .map(|(i, v)| (i, v * TAU.sqrt().recip()))
        .collect();
    Ok(sparse_to_spatial(*family.grid(), &entries))
}

/// `W f`, `V f` or `U f` with every channel materialized.
pub fn transform(family: &PacketFamily, which: Which, f: &SpatialField) -> Result<PacketCoefficients> {
    check_family(family, f.grid())?;
    let spectrum = f.to_spectral();
    let mut out = PacketCoefficients::zeros(family, which);
    stream_scales(family, which, &spectrum, |slice| {
        let fields: Vec<Option<SpatialField>> = (0..slice.directions())
            .into_par_iter()
            .map(|m| (!slice.is_zero(m)).then(|| slice.spatial(m)))
            .collect();
        for (m, field) in fields.into_iter().enumerate() {
            out.set_channel(m, slice.k, field)?;
        }
        Ok(())
    })?;
    out.set_coarse(coarse_channel(family, which, &spectrum)?)?;
    Ok(out)
}

pub fn transform_w(family: &PacketFamily, f: &SpatialField) -> Result<PacketCoefficients> {
    transform(family, Which::W, f)
}

pub fn transform_v(family: &PacketFamily, f: &SpatialField) -> Result<PacketCoefficients> {
    transform(family, Which::V, f)
}

pub fn transform_u(family: &PacketFamily, f: &SpatialField) -> Result<PacketCoefficients> {
    transform(family, Which::U, f)
}

/// Adds `weight * conj(m) * F(field)` on the support of `m` into `acc`.
fn accumulate_adjoint(acc: &mut [Complex64], m: &Multiplier, field: &SpatialField, weight: f64) {
    let idx: Vec<usize> = m.iter().map(|(i, _)| i).collect();
    let samples = spectral_samples(field, &idx);
    for ((i, v), s) in m.iter().zip(samples) {
        acc[i] += v.conj() * s * weight;
    }
}

/// Adjoint of the transform `which`:
/// `sum_{m,k} (2 pi / M) w_k conj(m_{m,k})(D) F_{m,k} + (2 pi)^{1/2} conj(m_c)(D) F_c`.
pub fn adjoint(family: &PacketFamily, which: Which, coeffs: &PacketCoefficients) -> Result<SpatialField> {
    check_family(family, coeffs.grid())?;
    if coeffs.directions() != family.directions().len() || coeffs.depth() != family.ladder().depth() {
        return Err(Error::FamilyMismatch(format!(
            "coefficients have M = {}, K = {} but the family has M = {}, K = {}",
            coeffs.directions(),
            coeffs.depth(),
            family.directions().len(),
            family.ladder().depth()
        )));
    }
    let grid = *family.grid();
    let w = family.directions().weight() * family.ladder().weight();
    let mut acc = vec![ZERO; grid.len()];
    let list: Vec<(usize, usize, &SpatialField)> = coeffs.nonzero_channels().collect();
    let parts: Vec<Vec<(usize, Complex64)>> = list
        .par_iter()
        .map(|&(m, k, field)| {
            let mult = family.channel(which, m, k);
            let idx: Vec<usize> = mult.iter().map(|(i, _)| i).collect();
            let samples = spectral_samples(field, &idx);
            mult.iter().zip(samples).map(|((i, v), s)| (i, v.conj() * s * w)).collect()
        })
        .collect();
    for part in parts {
        for (i, v) in part {
            acc[i] += v;
        }
    }
    accumulate_adjoint(&mut acc, family.coarse(which), coeffs.coarse(), TAU.sqrt());
    Ok(SpectralField::from_vec(grid, acc)?.to_spatial())
}

pub fn adjoint_w(family: &PacketFamily, coeffs: &PacketCoefficients) -> Result<SpatialField> {
    adjoint(family, Which::W, coeffs)
}

pub fn adjoint_u(family: &PacketFamily, coeffs: &PacketCoefficients) -> Result<SpatialField> {
    adjoint(family, Which::U, coeffs)
}

/// Result of a streamed forward-then-adjoint pass.
#[derive(Debug, Clone)]
pub struct Reproduction {
    pub field: SpatialField,
    /// Discrete `L^2(S*_+)` norm squared of the forward coefficients.
    pub coefficient_norm_sq: f64,
    pub nonzero_channels: usize,
}

/// `adjoint(adj, transform(fwd, f))` computed scale by scale: each channel is
/// synthesized on the grid, measured, and transformed back.
pub fn reproduce(family: &PacketFamily, fwd: Which, adj: Which, f: &SpatialField) -> Result<Reproduction> {
    check_family(family, f.grid())?;
    let grid = *family.grid();
    let spectrum = f.to_spectral();
    let w = family.directions().weight() * family.ladder().weight();
    let mut acc = vec![ZERO; grid.len()];
    let mut norm_sq = 0.0;
    let mut count = 0usize;
    stream_scales(family, fwd, &spectrum, |slice| {
        let parts: Vec<Option<(f64, Vec<(usize, Complex64)>)>> = (0..slice.directions())
            .into_par_iter()
            .map(|m| {
                if slice.is_zero(m) {
                    return None;
                }
                let field = slice.spatial(m);
                let mult = family.channel(adj, m, slice.k);
                let idx: Vec<usize> = mult.iter().map(|(i, _)| i).collect();
                let samples = spectral_samples(&field, &idx);
                let back = mult.iter().zip(samples).map(|((i, v), s)| (i, v.conj() * s * w)).collect();
                Some((field.sum_sq() * grid.cell_area(), back))
            })
            .collect();
        for (e, back) in parts.into_iter().flatten() {
            norm_sq += e * w;
            count += 1;
            for (i, v) in back {
                acc[i] += v;
            }
        }
        Ok(())
    })?;
    let coarse = coarse_channel(family, fwd, &spectrum)?;
    norm_sq += coarse.sum_sq() * grid.cell_area() * COARSE_WEIGHT;
    accumulate_adjoint(&mut acc, family.coarse(adj), &coarse, TAU.sqrt());
    Ok(Reproduction {
        field: SpectralField::from_vec(grid, acc)?.to_spatial(),
        coefficient_norm_sq: norm_sq,
        nonzero_channels: count,
    })
}

/// `e^{i t |D|} f`.
pub fn half_wave(f: &SpatialField, t: f64) -> SpatialField {
    let grid = *f.grid();
    let mut spec = f.to_spectral();
    for (i, v) in spec.data_mut().iter_mut().enumerate() {
        let z = grid.frequency(i);
        *v *= Complex64::from_polar(1.0, t * z[0].hypot(z[1]));
    }
    spec.to_spatial()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{chord, DirectionSet, ScaleLadder};
    use crate::packets::FamilyOptions;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    fn family() -> &'static PacketFamily {
        static F: OnceLock<PacketFamily> = OnceLock::new();
        F.get_or_init(|| {
            let grid = GridSpec::new(64, TAU).unwrap();
            let ladder = ScaleLadder::covering(4, grid.max_modulus(), 0.8).unwrap();
            PacketFamily::build(grid, DirectionSet::new(96).unwrap(), ladder, FamilyOptions::default()).unwrap()
        })
    }

    fn random_bandlimited(grid: GridSpec, seed: u64, band: f64) -> SpatialField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..grid.len())
            .map(|i| {
                let (a, b): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let z = grid.frequency(i);
                if z[0].hypot(z[1]) <= band {
                    Complex64::new(a, b)
                } else {
                    ZERO
                }
            })
            .collect();
        let f = SpectralField::from_vec(grid, data).unwrap().to_spatial();
        let n = f.l2_norm();
        f.scaled(Complex64::new(1.0 / n, 0.0))
    }

    fn rel_err(a: &SpatialField, b: &SpatialField) -> f64 {
        let mut d = a.clone();
        d.add_scaled(Complex64::new(-1.0, 0.0), b).unwrap();
        d.l2_norm() / b.l2_norm()
    }

    #[test]
    fn zero_input_gives_zero_channels() {
        let fam = family();
        let c = transform_w(fam, &SpatialField::zeros(*fam.grid())).unwrap();
        assert_eq!(c.nonzero_channels().count(), 0);
        assert_eq!(c.norm_sq(), 0.0);
    }

    #[test]
    fn plane_wave_lights_only_supporting_channels() {
        let fam = family();
        let grid = *fam.grid();
        let (kx, ky) = (20i64, 9i64);
        let f = SpatialField::from_fn(grid, |x| Complex64::from_polar(1.0, kx as f64 * x[0] + ky as f64 * x[1]));
        let c = transform_w(fam, &f).unwrap();
        let m0 = (kx as f64).hypot(ky as f64);
        let a0 = (ky as f64).atan2(kx as f64);
        let kit = fam.kit();
        let mut expected = Vec::new();
        for k in fam.ladder().nodes() {
            let sigma = fam.ladder().sigma(k as i64);
            for m in 0..fam.directions().len() {
                if kit.psi_radial(sigma, m0) > 0.0 && kit.angular_window(fam.directions().angle(m), sigma, a0) > 0.0 {
                    expected.push((m, k));
                }
            }
        }
        // FFT roundoff leaves ~1e-17 on every bin; lit means above 1e-12 relative.
        let got: Vec<(usize, usize)> =
            c.nonzero_channels().filter(|(_, _, f)| f.l2_norm() > 1e-12 * TAU).map(|(m, k, _)| (m, k)).collect();
        let mut got_sorted = got.clone();
        got_sorted.sort_by_key(|&(m, k)| (k, m));
        expected.sort_by_key(|&(m, k)| (k, m));
        assert_eq!(got_sorted, expected);
        let bound: usize = fam
            .ladder()
            .nodes()
            .filter(|&k| kit.psi_radial(fam.ladder().sigma(k as i64), m0) > 0.0)
            .map(|k| {
                let s = fam.ladder().sigma(k as i64);
                (0..fam.directions().len())
                    .filter(|&m| chord(fam.directions().angle(m), a0) <= 2.0 * s.sqrt())
                    .count()
            })
            .sum();
        assert!(got.len() <= bound);
    }

    #[test]
    fn isometry_and_reproducing_formulas() {
        let fam = family();
        let f = random_bandlimited(*fam.grid(), 3, 25.0);
        let c = transform_w(fam, &f).unwrap();
        assert!((c.norm() / f.l2_norm() - 1.0).abs() < 1e-10);
        let back = adjoint_w(fam, &c).unwrap();
        assert!(rel_err(&back, &f) < 1e-10);
        let v = transform_v(fam, &f).unwrap();
        let back = adjoint_u(fam, &v).unwrap();
        assert!(rel_err(&back, &f) < 1e-10);
        let r = reproduce(fam, Which::W, Which::W, &f).unwrap();
        assert!(rel_err(&r.field, &f) < 1e-10);
        assert!((r.coefficient_norm_sq - c.norm_sq()).abs() < 1e-12);
        let r = reproduce(fam, Which::V, Which::U, &f).unwrap();
        assert!(rel_err(&r.field, &f) < 1e-10);
    }

    #[test]
    fn adjointness_on_random_pairs() {
        let fam = family();
        let grid = *fam.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for which in [Which::W, Which::U] {
            let f = random_bandlimited(grid, rng.gen(), 30.0);
            let mut big = PacketCoefficients::zeros(fam, which);
            for _ in 0..40 {
                let m = rng.gen_range(0..fam.directions().len());
                let k = rng.gen_range(1..=fam.ladder().depth());
                let data = (0..grid.len()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
                big.set_channel(m, k, Some(SpatialField::from_vec(grid, data).unwrap())).unwrap();
            }
            let data = (0..grid.len()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), 0.0)).collect();
            big.set_coarse(SpatialField::from_vec(grid, data).unwrap()).unwrap();
            let tf = transform(fam, which, &f).unwrap();
            let lhs = tf.inner(&big).unwrap();
            let rhs = f.inner(&adjoint(fam, which, &big).unwrap()).unwrap();
            assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1.0), "{which:?}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn linearity_and_translation_covariance() {
        let fam = family();
        let grid = *fam.grid();
        let f = random_bandlimited(grid, 5, 20.0);
        let g = random_bandlimited(grid, 6, 20.0);
        let mut h = f.clone();
        h.add_scaled(Complex64::new(0.5, -2.0), &g).unwrap();
        let (cf, cg, ch) = (transform_v(fam, &f).unwrap(), transform_v(fam, &g).unwrap(), transform_v(fam, &h).unwrap());
        for (m, k, c) in ch.nonzero_channels() {
            let mut expect = cf.channel(m, k).cloned().unwrap_or_else(|| SpatialField::zeros(grid));
            if let Some(x) = cg.channel(m, k) {
                expect.add_scaled(Complex64::new(0.5, -2.0), x).unwrap();
            }
            let mut d = c.clone();
            d.add_scaled(Complex64::new(-1.0, 0.0), &expect).unwrap();
            assert!(d.l2_norm() <= 1e-12 * (1.0 + c.l2_norm()));
        }
        // Shift by (3, 5) lattice cells.
        let n = grid.n();
        let shift = |s: &SpatialField| {
            let d = s.data();
            let data = (0..grid.len()).map(|i| {
                let (x, y) = (i % n, i / n);
                d[((y + n - 5) % n) * n + (x + n - 3) % n]
            });
            SpatialField::from_vec(grid, data.collect()).unwrap()
        };
        let cs = transform_v(fam, &shift(&f)).unwrap();
        for (m, k, c) in cf.nonzero_channels() {
            let mut d = shift(c);
            d.add_scaled(Complex64::new(-1.0, 0.0), cs.channel(m, k).unwrap()).unwrap();
            assert!(d.l2_norm() <= 1e-12 * (1.0 + c.l2_norm()));
        }
    }

    #[test]
    fn channels_are_band_limited() {
        let fam = family();
        let f = random_bandlimited(*fam.grid(), 9, 28.0);
        let c = transform_w(fam, &f).unwrap();
        for (m, k, field) in c.nonzero_channels().take(200) {
            let spec = field.to_spectral();
            let mult = fam.psi(m, k);
            let total: f64 = spec.data().iter().map(|v| v.norm_sqr()).sum();
            let off: f64 =
                spec.data().iter().enumerate().filter(|(i, _)| !mult.in_support(*i)).map(|(_, v)| v.norm_sqr()).sum();
            assert!(off <= 1e-24 * total.max(1e-300), "leakage {off} of {total}");
        }
    }

    #[test]
    fn family_mismatch_is_reported() {
        let fam = family();
        let other = GridSpec::new(32, TAU).unwrap();
        assert!(transform_w(fam, &SpatialField::zeros(other)).is_err());
    }

    #[test]
    fn half_wave_is_a_unitary_group() {
        let grid = GridSpec::new(64, TAU).unwrap();
        let f = random_bandlimited(grid, 11, 30.0);
        assert!(rel_err(&half_wave(&f, 0.0), &f) < 1e-14);
        for t in [0.25, 1.0, -3.0] {
            let g = half_wave(&f, t);
            assert!((g.l2_norm() - f.l2_norm()).abs() < 1e-12);
            assert!(rel_err(&half_wave(&g, -t), &f) < 1e-12);
        }
    }
}
