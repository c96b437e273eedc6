//! Tent-space functionals on `S*(R^2) x (0, inf)`.
//!
//! The conical functional is
//! `A F(x, w)^2 = sum_k w_k avg_{B_k(x, w)} |F(., ., sigma_k)|^2 + avg_{B_c(x, w)} |F_c|^2`
//! where `B_k` is the anisotropic box of radius `tau = lambda sqrt(sigma_k)`:
//! a rectangle with half-widths `min(tau^2, tau)` along `w` and `tau` across,
//! times the directions within chordal distance `tau` of `w`.
//!
//! Each channel is a trigonometric polynomial, so `|F|^2` is one too and its
//! average over a rectangle is the Fourier multiplier
//! `sinc(a zeta_par) sinc(b zeta_perp)`. The energy spectra are computed once
//! per channel and the averaged field is synthesized per direction.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::geometry::{
    chord, metric_d_torus, AnisotropicBall, CospherePoint, DirectionSet, ScaleLadder,
    VolumeEstimator,
};
use crate::grid::{check_exponent, Fft2, GridSpec, SpatialField, SpectralField};
use crate::packets::{PacketFamily, Which};
use crate::transforms::{stream_scales, PacketCoefficients, COARSE_WEIGHT};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Fourier coefficients `c(Delta)` of `|F|^2 = sum_Delta c(Delta) e^{i x Delta}`
/// on the wavenumber rectangle `[x0, x0 + wx) x [y0, y0 + wy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySpectrum {
    x0: i64,
    y0: i64,
    wx: usize,
    wy: usize,
    data: Vec<Complex64>,
}

impl EnergySpectrum {
    pub fn get(&self, dx: i64, dy: i64) -> Complex64 {
        let (i, j) = (dx - self.x0, dy - self.y0);
        if i < 0 || j < 0 || i >= self.wx as i64 || j >= self.wy as i64 {
            return ZERO;
        }
        self.data[j as usize * self.wx + i as usize]
    }

    /// `c(0) = avg |F|^2` over the torus, times nothing: the mean value.
    pub fn mean(&self) -> f64 {
        self.get(0, 0).re
    }

    pub fn bounds(&self) -> (i64, i64, i64, i64) {
        (self.x0, self.x0 + self.wx as i64 - 1, self.y0, self.y0 + self.wy as i64 - 1)
    }
}

/// Exact energy spectrum of `F = F^{-1} g` for a sparse spectrum `g`, by a
/// zero-padded FFT on the bounding box of the support.
pub fn energy_from_spectrum(grid: &GridSpec, entries: &[(usize, Complex64)]) -> Option<EnergySpectrum> {
    let pts: Vec<(i64, i64, Complex64)> = entries
        .iter()
        .filter(|e| e.1 != ZERO)
        .map(|&(i, v)| {
            let (kx, ky) = grid.wavenumbers(i);
            (kx, ky, v)
        })
        .collect();
    if pts.is_empty() {
        return None;
    }
    let (mut xa, mut xb, mut ya, mut yb) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
    for &(x, y, _) in &pts {
        xa = xa.min(x);
        xb = xb.max(x);
        ya = ya.min(y);
        yb = yb.max(y);
    }
    let (wx, wy) = ((xb - xa + 1) as usize, (yb - ya + 1) as usize);
    let l4 = grid.period().powi(4);
    let (ox, oy) = (wx - 1, wy - 1);
    let (sx, sy) = (2 * wx - 1, 2 * wy - 1);
    let mut out = vec![ZERO; sx * sy];
    if pts.len() <= 48 {
        for &(x1, y1, a) in &pts {
            for &(x2, y2, b) in &pts {
                let (dx, dy) = ((x1 - x2 + ox as i64) as usize, (y1 - y2 + oy as i64) as usize);
                out[dy * sx + dx] += a * b.conj();
            }
        }
        out.iter_mut().for_each(|v| *v /= l4);
    } else {
        let p = (2 * wx.max(wy) - 1).next_power_of_two().max(8);
        let mut buf = vec![ZERO; p * p];
        for &(x, y, v) in &pts {
            buf[(y - ya) as usize * p + (x - xa) as usize] = v;
        }
        let mut planner = FftPlanner::new();
        let inv = planner.plan_fft_inverse(p);
        let fwd = planner.plan_fft_forward(p);
        small_fft2(&mut buf, p, &*inv);
        buf.iter_mut().for_each(|v| *v = Complex64::new(v.norm_sqr(), 0.0));
        small_fft2(&mut buf, p, &*fwd);
        let scale = 1.0 / ((p * p) as f64 * l4);
        for dy in -(oy as i64)..=(oy as i64) {
            for dx in -(ox as i64)..=(ox as i64) {
                let src = dy.rem_euclid(p as i64) as usize * p + dx.rem_euclid(p as i64) as usize;
                out[(dy + oy as i64) as usize * sx + (dx + ox as i64) as usize] = buf[src] * scale;
            }
        }
    }
    Some(EnergySpectrum { x0: -(ox as i64), y0: -(oy as i64), wx: sx, wy: sy, data: out })
}

fn small_fft2(buf: &mut [Complex64], p: usize, fft: &dyn rustfft::Fft<f64>) {
    fft.process(buf);
    for i in 0..p {
        for j in i + 1..p {
            buf.swap(i * p + j, j * p + i);
        }
    }
    fft.process(buf);
    for i in 0..p {
        for j in i + 1..p {
            buf.swap(i * p + j, j * p + i);
        }
    }
}

/// Energy spectrum of a sampled field, from the FFT of `|F|^2` on the grid.
/// Exact when `F` is band-limited to `|k| < N/4` per axis; aliased otherwise.
pub fn energy_from_field(field: &SpatialField) -> EnergySpectrum {
    let grid = *field.grid();
    let n = grid.n();
    let mut buf: Vec<Complex64> = field.data().iter().map(|v| Complex64::new(v.norm_sqr(), 0.0)).collect();
    Fft2::for_size(n).forward(&mut buf);
    let scale = 1.0 / (n * n) as f64;
    let half = (n / 2) as i64;
    let mut data = vec![ZERO; n * n];
    for (i, v) in buf.iter().enumerate() {
        let (kx, ky) = grid.wavenumbers(i);
        data[(ky + half) as usize * n + (kx + half) as usize] = v * scale;
    }
    EnergySpectrum { x0: -half, y0: -half, wx: n, wy: n, data }
}

/// Energy spectra of every channel of one scale.
#[derive(Debug, Clone)]
pub struct ScaleEnergy {
    pub k: usize,
    pub sigma: f64,
    pub weight: f64,
    pub channels: Vec<Option<EnergySpectrum>>,
}

/// Energy spectra of a transform, all scales plus the coarse channel.
#[derive(Debug, Clone)]
pub struct CoefficientEnergy {
    pub grid: GridSpec,
    pub directions: DirectionSet,
    pub scales: Vec<ScaleEnergy>,
    pub coarse: Option<EnergySpectrum>,
}

impl CoefficientEnergy {
    /// Discrete `L^2(S*_+)` norm squared, read off the mean energies.
    pub fn norm_sq(&self) -> f64 {
        let area = self.grid.period() * self.grid.period();
        let dw = self.directions.weight();
        let ch: f64 = self
            .scales
            .iter()
            .map(|s| s.weight * dw * s.channels.iter().flatten().map(|e| e.mean()).sum::<f64>())
            .sum();
        let c = self.coarse.as_ref().map_or(0.0, |e| e.mean());
        (ch + c * COARSE_WEIGHT) * area
    }

    /// Drops the coarse channel.
    pub fn without_coarse(mut self) -> Self {
        self.coarse = None;
        self
    }
}

/// Streams the transform `which` of `spectrum` into channel energy spectra;
/// the coarse channel uses the multiplier of `which` when `coarse` is set.
pub fn energies_from_transform(
    family: &PacketFamily,
    which: Which,
    spectrum: &SpectralField,
    coarse: bool,
) -> Result<CoefficientEnergy> {
    let grid = *family.grid();
    let mut scales = Vec::new();
    stream_scales(family, which, spectrum, |slice| {
        let channels = (0..slice.directions())
            .into_par_iter()
            .map(|m| energy_from_spectrum(&grid, slice.spectrum(m)))
            .collect();
        scales.push(ScaleEnergy { k: slice.k, sigma: slice.sigma, weight: slice.weight, channels });
        Ok(())
    })?;
    let coarse = if coarse {
        let entries: Vec<(usize, Complex64)> = family
            .coarse(which)
            .iter()
            .map(|(i, v)| (i, v * spectrum.data()[i] * TAU.sqrt().recip()))
            .filter(|(_, v)| *v != ZERO)
            .collect();
        energy_from_spectrum(&grid, &entries)
    } else {
        None
    };
    Ok(CoefficientEnergy { grid, directions: *family.directions(), scales, coarse })
}

/// Energy spectra of materialized coefficients via FFTs of `|F|^2`.
pub fn energies_from_coefficients(coeffs: &PacketCoefficients) -> CoefficientEnergy {
    let ladder = coeffs.ladder();
    let scales = ladder
        .nodes()
        .map(|k| ScaleEnergy {
            k,
            sigma: ladder.sigma(k as i64),
            weight: ladder.weight(),
            channels: (0..coeffs.directions())
                .into_par_iter()
                .map(|m| coeffs.channel(m, k).map(energy_from_field))
                .collect(),
        })
        .filter(|s| s.channels.iter().any(|c| c.is_some()))
        .collect();
    let coarse = Some(energy_from_field(coeffs.coarse()));
    CoefficientEnergy { grid: *coeffs.grid(), directions: *coeffs.direction_set(), scales, coarse }
}

/// How the ball average in `A` is taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Averaging {
    /// Anisotropic box of radius `lambda sqrt(sigma)`.
    Box { aperture: f64 },
    /// No average: `sum_k w_k |F(x, w, sigma_k)|^2`.
    Pointwise,
}

impl Averaging {
    pub fn aperture(lambda: f64) -> Result<Self> {
        if !(lambda >= 1.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("aperture must be >= 1, got {lambda}")));
        }
        Ok(Averaging::Box { aperture: lambda })
    }
}

fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-8 {
        1.0 - u * u / 6.0
    } else {
        u.sin() / u
    }
}

/// `(half-width along w, half-width across w)` of the spatial box of radius `tau`.
pub fn box_halfwidths(tau: f64) -> (f64, f64) {
    ((tau * tau).min(tau), tau)
}

/// Directions averaged at radius `tau` around direction `m`.
fn window_of(directions: &DirectionSet, tau: f64, m: usize) -> Vec<usize> {
    let count = directions.len();
    match directions.window_halfwidth(tau) {
        None => (0..count).collect(),
        Some(w) => (0..=2 * w).map(|i| (m + count - w + i) % count).collect(),
    }
}

/// `A F(., w_m)^2` sampled on the grid.
pub fn a_squared(energy: &CoefficientEnergy, averaging: Averaging, m: usize) -> Vec<f64> {
    let grid = energy.grid;
    let n = grid.n();
    let step = grid.frequency_step();
    let w = energy.directions.unit(m);
    let mut acc = vec![ZERO; n * n];
    let wrap = |d: i64| d.rem_euclid(n as i64) as usize;
    let add = |e: &EnergySpectrum, weight: f64, tau: Option<f64>, acc: &mut [Complex64]| {
        let (xa, xb, ya, yb) = e.bounds();
        let (a, b) = tau.map_or((0.0, 0.0), box_halfwidths);
        for dy in ya..=yb {
            for dx in xa..=xb {
                let v = e.get(dx, dy);
                if v == ZERO {
                    continue;
                }
                let kernel = if tau.is_some() {
                    let z = [dx as f64 * step, dy as f64 * step];
                    let par = w[0] * z[0] + w[1] * z[1];
                    let perp = -w[1] * z[0] + w[0] * z[1];
                    sinc(a * par) * sinc(b * perp)
                } else {
                    1.0
                };
                acc[wrap(dy) * n + wrap(dx)] += v * (weight * kernel);
            }
        }
    };
    for scale in &energy.scales {
        match averaging {
            Averaging::Pointwise => {
                if let Some(e) = &scale.channels[m] {
                    add(e, scale.weight, None, &mut acc);
                }
            }
            Averaging::Box { aperture } => {
                let tau = aperture * scale.sigma.sqrt();
                let win = window_of(&energy.directions, tau, m);
                let count = win.len() as f64;
                let members: Vec<&EnergySpectrum> = win.iter().filter_map(|&v| scale.channels[v].as_ref()).collect();
                if members.is_empty() {
                    continue;
                }
                let (mut xa, mut xb, mut ya, mut yb) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
                for e in &members {
                    let b = e.bounds();
                    xa = xa.min(b.0);
                    xb = xb.max(b.1);
                    ya = ya.min(b.2);
                    yb = yb.max(b.3);
                }
                let (wx, wy) = ((xb - xa + 1) as usize, (yb - ya + 1) as usize);
                let mut sum = vec![ZERO; wx * wy];
                for e in &members {
                    let (ea, eb, fa, fb) = e.bounds();
                    for dy in fa..=fb {
                        for dx in ea..=eb {
                            sum[(dy - ya) as usize * wx + (dx - xa) as usize] += e.get(dx, dy);
                        }
                    }
                }
                let merged = EnergySpectrum { x0: xa, y0: ya, wx, wy, data: sum };
                add(&merged, scale.weight / count, Some(tau), &mut acc);
            }
        }
    }
    if let Some(c) = &energy.coarse {
        let tau = match averaging {
            Averaging::Box { aperture } => Some(aperture),
            Averaging::Pointwise => None,
        };
        add(c, 1.0, tau, &mut acc);
    }
    Fft2::for_size(n).inverse(&mut acc);
    acc.iter().map(|v| v.re.max(0.0)).collect()
}

/// Requested reductions of `A F`.
#[derive(Debug, Clone, PartialEq)]
pub struct TentSpec {
    pub averages: Vec<Averaging>,
    pub exponents: Vec<f64>,
    pub keep_fields: bool,
}

/// `sum_{x, m} A F(x, w_m)^p` per averaging and exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct TentResult {
    pub averages: Vec<Averaging>,
    pub exponents: Vec<f64>,
    /// `sums[a][i]` for averaging `a` and exponent `i`.
    pub sums: Vec<Vec<f64>>,
    /// `fields[a][m]`: `A F(., w_m)` on the grid, if kept.
    pub fields: Option<Vec<Vec<Vec<f64>>>>,
    measure: f64,
}

impl TentResult {
    /// `((2 pi / M) (L / N)^2 sum A^p)^{1/p}`.
    pub fn norm(&self, average: usize, exponent: usize) -> f64 {
        (self.sums[average][exponent] * self.measure).powf(1.0 / self.exponents[exponent])
    }
}

pub fn evaluate(energy: &CoefficientEnergy, spec: &TentSpec) -> Result<TentResult> {
    for &p in &spec.exponents {
        check_exponent(p)?;
    }
    let m_count = energy.directions.len();
    let mut sums = vec![vec![0.0; spec.exponents.len()]; spec.averages.len()];
    let mut fields = spec.keep_fields.then(|| vec![Vec::with_capacity(m_count); spec.averages.len()]);
    for (a, &avg) in spec.averages.iter().enumerate() {
        let per_m: Vec<(Vec<f64>, Option<Vec<f64>>)> = (0..m_count)
            .into_par_iter()
            .map(|m| {
                let a2 = a_squared(energy, avg, m);
                let s = spec
                    .exponents
                    .iter()
                    .map(|&p| a2.iter().map(|v| v.powf(0.5 * p)).sum::<f64>())
                    .collect();
                (s, spec.keep_fields.then(|| a2.iter().map(|v| v.sqrt()).collect()))
            })
            .collect();
        for (s, f) in per_m {
            for (acc, v) in sums[a].iter_mut().zip(s) {
                *acc += v;
            }
            if let (Some(fields), Some(f)) = (fields.as_mut(), f) {
                fields[a].push(f);
            }
        }
    }
    Ok(TentResult {
        averages: spec.averages.clone(),
        exponents: spec.exponents.clone(),
        sums,
        fields,
        measure: energy.directions.weight() * energy.grid.cell_area(),
    })
}

/// `A F` on the grid for every direction.
pub fn a_functional(coeffs: &PacketCoefficients, aperture: f64) -> Result<Vec<Vec<f64>>> {
    let energy = energies_from_coefficients(coeffs);
    let avg = Averaging::aperture(aperture)?;
    Ok((0..energy.directions.len()).into_par_iter().map(|m| {
        a_squared(&energy, avg, m).into_iter().map(f64::sqrt).collect()
    }).collect())
}

/// `||A F||_{L^p(S*)}` with aperture `lambda`.
pub fn tent_norm(coeffs: &PacketCoefficients, p: f64, aperture: f64) -> Result<f64> {
    check_exponent(p)?;
    let energy = energies_from_coefficients(coeffs);
    let spec = TentSpec { averages: vec![Averaging::aperture(aperture)?], exponents: vec![p], keep_fields: false };
    Ok(evaluate(&energy, &spec)?.norm(0, 0))
}

/// `A F(x, w_m)` with true metric-ball averages over grid points and
/// directions, at the listed `(spatial index, direction)` centers.
pub fn a_functional_metric_ball(
    coeffs: &PacketCoefficients,
    aperture: f64,
    centers: &[(usize, usize)],
) -> Result<Vec<f64>> {
    Averaging::aperture(aperture)?;
    let grid = *coeffs.grid();
    let dirs = *coeffs.direction_set();
    let ladder = *coeffs.ladder();
    Ok(centers
        .par_iter()
        .map(|&(idx, m)| {
            let c = CospherePoint::new(grid.position(idx), dirs.angle(m));
            let mut a2 = 0.0;
            for k in ladder.nodes() {
                let tau = aperture * ladder.sigma(k as i64).sqrt();
                a2 += ladder.weight() * ball_average(&grid, &dirs, &c, tau, |nu, j| {
                    coeffs.channel(nu, k).map_or(0.0, |f| f.data()[j].norm_sqr())
                });
            }
            a2 += ball_average(&grid, &dirs, &c, aperture, |_, j| coeffs.coarse().data()[j].norm_sqr());
            a2.sqrt()
        })
        .collect())
}

/// Mean of `value(direction, spatial index)` over the grid points of the
/// metric ball of radius `tau` around `c`.
fn ball_average(
    grid: &GridSpec,
    dirs: &DirectionSet,
    c: &CospherePoint,
    tau: f64,
    value: impl Fn(usize, usize) -> f64,
) -> f64 {
    let n = grid.n() as i64;
    let h = grid.cell();
    let r = ((tau / h).ceil() as i64).min(n / 2);
    let ci = (c.x[0] / h).round() as i64;
    let cj = (c.x[1] / h).round() as i64;
    let mut s = 0.0;
    let mut count = 0usize;
    for nu in 0..dirs.len() {
        if chord(c.angle(), dirs.angle(nu)) > tau {
            continue;
        }
        for dj in -r..=r {
            for di in -r..=r {
                let i = (ci + di).rem_euclid(n) as usize;
                let j = (cj + dj).rem_euclid(n) as usize;
                let idx = j * n as usize + i;
                let q = CospherePoint::new(grid.position(idx), dirs.angle(nu));
                if metric_d_torus(c, &q, grid.period()) <= tau {
                    s += value(nu, idx);
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        s / count as f64
    }
}

/// `(measure of S* * mean of A^p over the centers)^{1/p}` with metric balls.
pub fn tent_norm_metric_ball(
    coeffs: &PacketCoefficients,
    p: f64,
    aperture: f64,
    centers: &[(usize, usize)],
) -> Result<f64> {
    check_exponent(p)?;
    if centers.is_empty() {
        return Err(Error::Averaging("no sample centers".into()));
    }
    let a = a_functional_metric_ball(coeffs, aperture, centers)?;
    let mean = a.iter().map(|v| v.powf(p)).sum::<f64>() / a.len() as f64;
    let grid = coeffs.grid();
    Ok((mean * grid.period() * grid.period() * TAU).powf(1.0 / p))
}

/// Ball list of the Carleson functional: centers on the sub-lattice of
/// stride `N/16`, every `M/16`-th direction, radii `2^{-j/2}`, `j = 0..=K/J`.
pub fn default_ball_list(grid: &GridSpec, dirs: &DirectionSet, ladder: &ScaleLadder) -> Vec<AnisotropicBall> {
    let stride = (grid.n() / 16).max(1);
    let dstride = (dirs.len() / 16).max(1);
    let jmax = ladder.depth() / ladder.per_octave();
    let mut out = Vec::new();
    for j in (0..grid.n()).step_by(stride) {
        for i in (0..grid.n()).step_by(stride) {
            for m in (0..dirs.len()).step_by(dstride) {
                for r in 0..=jmax {
                    let c = CospherePoint::new([i as f64 * grid.cell(), j as f64 * grid.cell()], dirs.angle(m));
                    out.push(AnisotropicBall::new(c, (-(r as f64) / 2.0).exp2()).expect("positive radius"));
                }
            }
        }
    }
    out
}

/// `(|B|^{-1} int_{T(B)} |F|^2)^{1/2}` for one ball.
pub fn tent_average(coeffs: &PacketCoefficients, ball: &AnisotropicBall, volumes: &VolumeEstimator) -> f64 {
    let grid = *coeffs.grid();
    let dirs = coeffs.direction_set();
    let ladder = coeffs.ladder();
    let n = grid.n() as i64;
    let h = grid.cell();
    let tau = ball.radius();
    let r = ((tau / h).ceil() as i64).min(n / 2);
    let c = ball.center;
    let ci = (c.x[0] / h).round() as i64;
    let cj = (c.x[1] / h).round() as i64;
    let cell = grid.cell_area() * dirs.weight();
    let mut e = 0.0;
    for nu in 0..dirs.len() {
        if chord(c.angle(), dirs.angle(nu)) > tau {
            continue;
        }
        for dj in -r..=r {
            for di in -r..=r {
                let i = (ci + di).rem_euclid(n) as usize;
                let j = (cj + dj).rem_euclid(n) as usize;
                let idx = j * n as usize + i;
                let q = CospherePoint::new(grid.position(idx), dirs.angle(nu));
                let d = metric_d_torus(&c, &q, grid.period());
                if d > tau {
                    continue;
                }
                for k in ladder.nodes() {
                    let sigma = ladder.sigma(k as i64);
                    if let Some(f) = coeffs.channel(nu, k) {
                        if d <= tau - sigma.sqrt() {
                            e += ladder.weight() * f.data()[idx].norm_sqr() * cell;
                        }
                    }
                }
                // sigma in [1, e]: the tent condition holds for sqrt(sigma) <= tau - d.
                let room = tau - d;
                if room > 1.0 {
                    let w = (2.0 * room.ln()).min(1.0);
                    e += w * coeffs.coarse().data()[idx].norm_sqr() * cell;
                }
            }
        }
    }
    (e / volumes.ball_volume(tau)).sqrt()
}

/// `C F` at the sample points: the largest tent average over listed balls
/// containing the point (0 if none does).
pub fn c_functional(
    coeffs: &PacketCoefficients,
    balls: &[AnisotropicBall],
    samples: &[CospherePoint],
    volumes: &VolumeEstimator,
) -> Result<Vec<f64>> {
    if balls.is_empty() {
        return Err(Error::EmptyBallList);
    }
    let period = coeffs.grid().period();
    let averages: Vec<f64> = balls.par_iter().map(|b| tent_average(coeffs, b, volumes)).collect();
    Ok(samples
        .iter()
        .map(|s| {
            balls
                .iter()
                .zip(&averages)
                .filter(|(b, _)| metric_d_torus(&b.center, s, period) <= b.radius())
                .map(|(_, &a)| a)
                .fold(0.0, f64::max)
        })
        .collect())
}
