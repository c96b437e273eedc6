//! Periodic discretization of the plane.
//!
//! A [`GridSpec`] samples the torus `R^2 / (L Z)^2` at `N x N` points. Its
//! frequency lattice is `{2 pi k / L : k in [-N/2, N/2)^2}`. Data are stored
//! row-major with the row index running along the second coordinate, and
//! spectral data use natural FFT order (index `i` holds wavenumber `i` for
//! `i < N/2` and `i - N` otherwise).
//!
//! Normalization follows the continuum Fourier transform
//! `F f(zeta) = int e^{-i x . zeta} f(x) dx`: the forward DFT is scaled by the
//! cell area `(L/N)^2` and the inverse by `1/L^2`, so that
//! `||f||_2 = (2 pi)^{-1} ||F f||_2` with the natural Riemann weights on each
//! side.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Spatial dimension. The packet construction is written for the plane.
pub const DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    n: usize,
    period: f64,
    band: (f64, f64),
}

impl GridSpec {
    /// Grid with `n` samples per axis and period `period`.
    ///
    /// The resolved band defaults to `(1/2, N/2 - N/16)`: the inscribed disc of
    /// the lattice minus a margin, in units where `L = 2 pi`.
    pub fn new(n: usize, period: f64) -> Result<Self> {
        if n < 32 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "samples per axis must be a power of two >= 32, got {n}"
            )));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidGrid(format!("period must be positive, got {period}")));
        }
        let step = 2.0 * PI / period;
        let hi = (n / 2 - n / 16) as f64 * step;
        Ok(Self { n, period, band: (0.5, hi) })
    }

    /// Default grid `N = 256`, `L = 2 pi`.
    pub fn standard() -> Self {
        Self::new(256, 2.0 * PI).expect("valid default grid")
    }

    pub fn with_band(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo >= 0.0 && hi > lo && hi <= self.nyquist()) {
            return Err(Error::InvalidGrid(format!(
                "resolved band ({lo}, {hi}) must satisfy 0 <= lo < hi <= {}",
                self.nyquist()
            )));
        }
        self.band = (lo, hi);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Spatial step `L/N`.
    pub fn cell(&self) -> f64 {
        self.period / self.n as f64
    }

    /// Riemann weight of one spatial sample.
    pub fn cell_area(&self) -> f64 {
        self.cell() * self.cell()
    }

    /// Lattice spacing `2 pi / L` in frequency.
    pub fn frequency_step(&self) -> f64 {
        2.0 * PI / self.period
    }

    /// Largest frequency modulus along an axis.
    pub fn nyquist(&self) -> f64 {
        (self.n / 2) as f64 * self.frequency_step()
    }

    /// Largest frequency modulus on the lattice (a corner point).
    pub fn max_modulus(&self) -> f64 {
        self.nyquist() * std::f64::consts::SQRT_2
    }

    pub fn resolved_band(&self) -> (f64, f64) {
        self.band
    }

    /// Signed wavenumber of an FFT index.
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Signed wavenumbers `(kx, ky)` of a flat index.
    pub fn wavenumbers(&self, idx: usize) -> (i64, i64) {
        (self.wavenumber(idx % self.n), self.wavenumber(idx / self.n))
    }

    /// Frequency vector of a flat spectral index.
    pub fn frequency(&self, idx: usize) -> [f64; 2] {
        let (kx, ky) = self.wavenumbers(idx);
        let step = self.frequency_step();
        [kx as f64 * step, ky as f64 * step]
    }

    /// Flat index of the lattice point with wavenumbers `(kx, ky)`.
    pub fn index_of(&self, kx: i64, ky: i64) -> Option<usize> {
        let half = (self.n / 2) as i64;
        if kx < -half || kx >= half || ky < -half || ky >= half {
            return None;
        }
        let wrap = |k: i64| if k < 0 { (k + self.n as i64) as usize } else { k as usize };
        Some(wrap(ky) * self.n + wrap(kx))
    }

    /// Position of a flat spatial index.
    pub fn position(&self, idx: usize) -> [f64; 2] {
        let h = self.cell();
        [(idx % self.n) as f64 * h, (idx / self.n) as f64 * h]
    }

    /// Shortest displacement `b - a` on the torus, per coordinate.
    pub fn displacement(&self, a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
        let wrap = |d: f64| d - self.period * (d / self.period).round();
        [wrap(b[0] - a[0]), wrap(b[1] - a[1])]
    }

    pub fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self.n == other.n && self.period == other.period {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Complex samples at the spatial grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialField {
    grid: GridSpec,
    data: Vec<Complex64>,
}

/// Complex samples at the lattice frequencies, natural FFT order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    data: Vec<Complex64>,
}

macro_rules! field_common {
    ($ty:ident) => {
        impl $ty {
            pub fn zeros(grid: GridSpec) -> Self {
                Self { grid, data: vec![Complex64::new(0.0, 0.0); grid.len()] }
            }

            pub fn from_vec(grid: GridSpec, data: Vec<Complex64>) -> Result<Self> {
                if data.len() != grid.len() {
                    return Err(Error::InvalidGrid(format!(
                        "expected {} samples, got {}",
                        grid.len(),
                        data.len()
                    )));
                }
                Ok(Self { grid, data })
            }

            pub fn grid(&self) -> &GridSpec {
                &self.grid
            }

            pub fn data(&self) -> &[Complex64] {
                &self.data
            }

            pub fn data_mut(&mut self) -> &mut [Complex64] {
                &mut self.data
            }

            pub fn into_data(self) -> Vec<Complex64> {
                self.data
            }

            pub fn scale(&mut self, alpha: Complex64) {
                self.data.iter_mut().for_each(|v| *v *= alpha);
            }

            pub fn scaled(mut self, alpha: Complex64) -> Self {
                self.scale(alpha);
                self
            }

            /// `self += alpha * other`.
            pub fn add_scaled(&mut self, alpha: Complex64, other: &Self) -> Result<()> {
                self.grid.check_same(&other.grid)?;
                for (a, b) in self.data.iter_mut().zip(&other.data) {
                    *a += alpha * b;
                }
                Ok(())
            }

            /// Squared modulus summed over samples (no quadrature weight).
            pub fn sum_sq(&self) -> f64 {
                self.data.iter().map(|v| v.norm_sqr()).sum()
            }
        }
    };
}

field_common!(SpatialField);
field_common!(SpectralField);

impl SpatialField {
    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 2]) -> Complex64) -> Self {
        let data = (0..grid.len()).map(|i| f(grid.position(i))).collect();
        Self { grid, data }
    }

    pub fn constant(grid: GridSpec, value: Complex64) -> Self {
        Self { grid, data: vec![value; grid.len()] }
    }

    /// Forward transform with the `e^{-i x . zeta}` convention.
    pub fn to_spectral(&self) -> SpectralField {
        let plan = Fft2::for_size(self.grid.n);
        let mut data = self.data.clone();
        plan.forward(&mut data);
        let w = self.grid.cell_area();
        data.iter_mut().for_each(|v| *v *= w);
        SpectralField { grid: self.grid, data }
    }

    /// `||f||_2` with the Riemann weight `(L/N)^2`.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell_area() * self.sum_sq()).sqrt()
    }

    /// Weighted inner product `<self, other> = int self * conj(other)`.
    pub fn inner(&self, other: &SpatialField) -> Result<Complex64> {
        self.grid.check_same(&other.grid)?;
        let s: Complex64 = self.data.iter().zip(&other.data).map(|(a, b)| a * b.conj()).sum();
        Ok(s * self.grid.cell_area())
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.data.iter().all(|v| v.im.abs() <= tol * (1.0 + v.re.abs()))
    }
}

impl SpectralField {
    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 2]) -> Complex64) -> Self {
        let data = (0..grid.len()).map(|i| f(grid.frequency(i))).collect();
        Self { grid, data }
    }

    /// Inverse transform, `f(x) = (2 pi)^{-2} int e^{i x . zeta} F f(zeta) d zeta`.
    pub fn to_spatial(&self) -> SpatialField {
        let plan = Fft2::for_size(self.grid.n);
        let mut data = self.data.clone();
        plan.inverse(&mut data);
        let w = 1.0 / (self.grid.period * self.grid.period);
        data.iter_mut().for_each(|v| *v *= w);
        SpatialField { grid: self.grid, data }
    }

    /// `(2 pi)^{-1} ||F f||_2` with lattice weight `(2 pi / L)^2`.
    pub fn l2_norm(&self) -> f64 {
        let step = self.grid.frequency_step();
        (step * step * self.sum_sq()).sqrt() / (2.0 * PI)
    }

    /// Largest frequency modulus carrying a nonzero coefficient.
    pub fn max_active_modulus(&self) -> f64 {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, v)| v.norm_sqr() > 0.0)
            .map(|(i, _)| {
                let z = self.grid.frequency(i);
                z[0].hypot(z[1])
            })
            .fold(0.0, f64::max)
    }
}

/// Fourier multiplier sampled on the lattice, stored on its support.
///
/// `indices` is strictly increasing; every lattice point not listed carries an
/// exact zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Multiplier {
    grid: GridSpec,
    indices: Vec<u32>,
    values: Vec<Complex64>,
}

impl Multiplier {
    pub fn zero(grid: GridSpec) -> Self {
        Self { grid, indices: Vec::new(), values: Vec::new() }
    }

    /// Samples `symbol` at every lattice frequency and keeps the nonzero values.
    pub fn from_symbol(grid: GridSpec, symbol: impl Fn([f64; 2]) -> Complex64) -> Self {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..grid.len() {
            let v = symbol(grid.frequency(i));
            if v != Complex64::new(0.0, 0.0) {
                indices.push(i as u32);
                values.push(v);
            }
        }
        Self { grid, indices, values }
    }

    pub fn from_real_symbol(grid: GridSpec, symbol: impl Fn([f64; 2]) -> f64) -> Self {
        Self::from_symbol(grid, |z| Complex64::new(symbol(z), 0.0))
    }

    /// Builds a multiplier from sorted `(index, value)` pairs, dropping zeros.
    pub fn from_sparse(grid: GridSpec, entries: Vec<(u32, Complex64)>) -> Result<Self> {
        let mut indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut last: Option<u32> = None;
        for (i, v) in entries {
            if (i as usize) >= grid.len() || last.is_some_and(|l| l >= i) {
                return Err(Error::InvalidGrid(format!("bad or unsorted multiplier index {i}")));
            }
            last = Some(i);
            if v != Complex64::new(0.0, 0.0) {
                indices.push(i);
                values.push(v);
            }
        }
        Ok(Self { grid, indices, values })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    /// Value at a flat lattice index (zero off the support).
    pub fn value(&self, idx: usize) -> Complex64 {
        match self.indices.binary_search(&(idx as u32)) {
            Ok(p) => self.values[p],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn in_support(&self, idx: usize) -> bool {
        self.indices.binary_search(&(idx as u32)).is_ok()
    }

    pub fn to_dense(&self) -> Vec<Complex64> {
        let mut d = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        for (i, v) in self.iter() {
            d[i] = v;
        }
        d
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn conj(&self) -> Self {
        Self {
            grid: self.grid,
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v.conj()).collect(),
        }
    }

    /// Pointwise product of two symbols.
    pub fn product(&self, other: &Multiplier) -> Result<Multiplier> {
        self.grid.check_same(&other.grid)?;
        let (mut a, mut b) = (0, 0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    let v = self.values[a] * other.values[b];
                    if v != Complex64::new(0.0, 0.0) {
                        indices.push(self.indices[a]);
                        values.push(v);
                    }
                    a += 1;
                    b += 1;
                }
            }
        }
        Ok(Multiplier { grid: self.grid, indices, values })
    }

    /// Restriction of `m * F f` to the support, as sparse pairs.
    pub fn act_sparse(&self, spectrum: &SpectralField) -> Vec<(usize, Complex64)> {
        let d = spectrum.data();
        self.iter()
            .filter_map(|(i, v)| {
                let w = v * d[i];
                (w != Complex64::new(0.0, 0.0)).then_some((i, w))
            })
            .collect()
    }

    /// `m * F f` as a full spectral field.
    pub fn act(&self, spectrum: &SpectralField) -> Result<SpectralField> {
        self.grid.check_same(spectrum.grid())?;
        let mut out = SpectralField::zeros(self.grid);
        let d = spectrum.data();
        let o = out.data_mut();
        for (i, v) in self.iter() {
            o[i] = v * d[i];
        }
        Ok(out)
    }
}

/// `F^{-1}(m F f)`.
pub fn apply_multiplier(m: &Multiplier, f: &SpatialField) -> Result<SpatialField> {
    m.grid.check_same(f.grid())?;
    Ok(apply_to_spectrum(m, &f.to_spectral()))
}

/// `F^{-1}(m g)` for a spectrum `g` on the same grid; uses a pruned inverse.
pub fn apply_to_spectrum(m: &Multiplier, spectrum: &SpectralField) -> SpatialField {
    let entries = m.act_sparse(spectrum);
    sparse_to_spatial(m.grid, &entries)
}

/// Inverse transform of a sparse spectrum.
pub fn sparse_to_spatial(grid: GridSpec, entries: &[(usize, Complex64)]) -> SpatialField {
    let mut field = SpatialField::zeros(grid);
    if entries.is_empty() {
        return field;
    }
    let n = grid.n();
    let mut rows: Vec<usize> = entries.iter().map(|(i, _)| i / n).collect();
    rows.sort_unstable();
    rows.dedup();
    {
        let d = field.data_mut();
        for &(i, v) in entries {
            d[i] = v;
        }
    }
    let plan = Fft2::for_size(n);
    plan.inverse_rows(field.data_mut(), &rows);
    let w = 1.0 / (grid.period() * grid.period());
    field.data_mut().iter_mut().for_each(|v| *v *= w);
    field
}

/// `(int |f|^p)^{1/p}` with the Riemann weight `(L/N)^2`, for `1 < p < inf`.
pub fn lp_norm(f: &SpatialField, p: f64) -> Result<f64> {
    check_exponent(p)?;
    Ok(weighted_lp(f.data().iter().map(|v| v.norm()), f.grid().cell_area(), p))
}

pub fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::ExponentOutOfRange(p))
    }
}

/// `(weight * sum |v|^p)^{1/p}` accumulated in a fixed order.
pub fn weighted_lp(values: impl Iterator<Item = f64>, weight: f64, p: f64) -> f64 {
    let s: f64 = values.map(|v| v.abs().powf(p)).sum();
    (weight * s).powf(1.0 / p)
}

/// Row-column 2-D FFT for square power-of-two arrays.
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    /// Shared plan for size `n`.
    pub fn for_size(n: usize) -> Arc<Fft2> {
        static PLANS: OnceLock<Mutex<HashMap<usize, Arc<Fft2>>>> = OnceLock::new();
        let plans = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = plans.lock().expect("fft plan cache poisoned");
        guard
            .entry(n)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                Arc::new(Fft2 {
                    n,
                    forward: planner.plan_fft_forward(n),
                    inverse: planner.plan_fft_inverse(n),
                })
            })
            .clone()
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.full(data, &self.forward);
    }

    /// Unnormalized inverse transform in place.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.full(data, &self.inverse);
    }

    fn full(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(data.len(), self.n * self.n);
        fft.process(data);
        transpose_square(data, self.n);
        fft.process(data);
        transpose_square(data, self.n);
    }

    /// Unnormalized inverse transform of data whose nonzero entries lie in
    /// `rows` (sorted); rows outside the list must be zero.
    pub fn inverse_rows(&self, data: &mut [Complex64], rows: &[usize]) {
        let n = self.n;
        if rows.len() * 2 > n {
            self.inverse(data);
            return;
        }
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        for &r in rows {
            self.inverse.process_with_scratch(&mut data[r * n..(r + 1) * n], &mut scratch);
        }
        transpose_square(data, n);
        self.inverse.process(data);
        transpose_square(data, n);
    }
}

impl Fft2 {
    /// Unnormalized forward transform where only the columns `cols` of the
    /// output are needed. Returns the data in transposed layout: output
    /// `(row, col)` sits at `col * n + row`.
    pub fn forward_columns_transposed(&self, data: &mut [Complex64], cols: &[usize]) {
        let n = self.n;
        self.forward.process(data);
        transpose_square(data, n);
        if cols.len() * 2 > n {
            self.forward.process(data);
            return;
        }
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for &c in cols {
            self.forward.process_with_scratch(&mut data[c * n..(c + 1) * n], &mut scratch);
        }
    }
}

/// Samples of `F f` at the given flat spectral indices, with the same
/// scaling as [`SpatialField::to_spectral`].
pub fn spectral_samples(f: &SpatialField, indices: &[usize]) -> Vec<Complex64> {
    let grid = *f.grid();
    let n = grid.n();
    if indices.is_empty() {
        return Vec::new();
    }
    let mut cols: Vec<usize> = indices.iter().map(|i| i % n).collect();
    cols.sort_unstable();
    cols.dedup();
    let mut data = f.data().to_vec();
    Fft2::for_size(n).forward_columns_transposed(&mut data, &cols);
    let w = grid.cell_area();
    indices.iter().map(|&i| data[(i % n) * n + i / n] * w).collect()
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    const B: usize = 16;
    for bi in (0..n).step_by(B) {
        for bj in (bi..n).step_by(B) {
            for i in bi..(bi + B).min(n) {
                let start = if bi == bj { i + 1 } else { bj };
                for j in start..(bj + B).min(n) {
                    data.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n, 2.0 * PI).unwrap()
    }

    fn random_field(g: GridSpec, seed: u64) -> SpatialField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..g.len()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        SpatialField::from_vec(g, data).unwrap()
    }

    /// Direct double-loop DFT with the continuum scaling.
    fn naive_dft(f: &SpatialField) -> Vec<Complex64> {
        let g = *f.grid();
        (0..g.len())
            .map(|k| {
                let z = g.frequency(k);
                let s: Complex64 = (0..g.len())
                    .map(|j| {
                        let x = g.position(j);
                        f.data()[j] * Complex64::from_polar(1.0, -(x[0] * z[0] + x[1] * z[1]))
                    })
                    .sum();
                s * g.cell_area()
            })
            .collect()
    }

    #[test]
    fn spectral_samples_match_full_transform() {
        let g = grid(64);
        let f = random_field(g, 31);
        let full = f.to_spectral();
        for idx in [vec![0usize, 5, 64 * 3 + 7, 64 * 63 + 63], (0..64 * 64).step_by(3).collect()] {
            let s = spectral_samples(&f, &idx);
            for (k, &i) in idx.iter().enumerate() {
                assert!((s[k] - full.data()[i]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::new(16, 1.0).is_err());
        assert!(GridSpec::new(48, 1.0).is_err());
        assert!(GridSpec::new(64, 0.0).is_err());
        assert!(GridSpec::new(64, 1.0).is_ok());
    }

    #[test]
    fn default_lattice_is_integer() {
        let g = grid(32);
        assert_eq!(g.frequency_step(), 1.0);
        let idx = g.index_of(-3, 5).unwrap();
        assert_eq!(g.wavenumbers(idx), (-3, 5));
        assert_eq!(g.frequency(idx), [-3.0, 5.0]);
        assert!(g.index_of(16, 0).is_none());
        assert!(g.index_of(-16, 0).is_some());
    }

    #[test]
    fn constant_field_concentrates_at_origin() {
        let g = grid(32);
        let spec = SpatialField::constant(g, Complex64::new(1.0, 0.0)).to_spectral();
        let origin = g.index_of(0, 0).unwrap();
        for (i, v) in spec.data().iter().enumerate() {
            if i == origin {
                assert!((v.re - (2.0 * PI).powi(2)).abs() < 1e-10);
            } else {
                assert!(v.norm() < 1e-10);
            }
        }
    }

    #[test]
    fn plane_wave_hits_single_bin() {
        let g = grid(32);
        let (kx, ky) = (3, -7);
        let f = SpatialField::from_fn(g, |x| Complex64::from_polar(1.0, kx as f64 * x[0] + ky as f64 * x[1]));
        let spec = f.to_spectral();
        let target = g.index_of(kx, ky).unwrap();
        for (i, v) in spec.data().iter().enumerate() {
            if i != target {
                assert!(v.norm() < 1e-10, "leak at {i}: {v}");
            }
        }
        assert!((spec.data()[target].norm() - (2.0 * PI).powi(2)).abs() < 1e-10);
    }

    #[test]
    fn fft_matches_direct_dft_and_parseval() {
        let g = grid(32);
        let f = random_field(g, 7);
        let spec = f.to_spectral();
        let direct = naive_dft(&f);
        let scale = direct.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (a, b) in spec.data().iter().zip(&direct) {
            assert!((a - b).norm() <= 1e-12 * scale);
        }
        let lhs = f.l2_norm();
        let rhs = spec.l2_norm();
        assert!((lhs - rhs).abs() / lhs <= 1e-12);
    }

    #[test]
    fn round_trip_is_exact() {
        let g = grid(64);
        let f = random_field(g, 3);
        let back = f.to_spectral().to_spatial();
        let err: f64 = f.data().iter().zip(back.data()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(err / f.sum_sq().sqrt() <= 1e-12);
    }

    #[test]
    fn identity_and_zero_multipliers() {
        let g = grid(32);
        let f = random_field(g, 11);
        let one = Multiplier::from_real_symbol(g, |_| 1.0);
        let out = apply_multiplier(&one, &f).unwrap();
        for (a, b) in out.data().iter().zip(f.data()) {
            assert!((a - b).norm() < 1e-12);
        }
        let zero = Multiplier::zero(g);
        let out = apply_multiplier(&zero, &f).unwrap();
        assert!(out.data().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn half_plane_indicator_on_plane_waves() {
        let g = grid(32);
        let half = Multiplier::from_real_symbol(g, |z| if z[0] > 0.0 { 1.0 } else { 0.0 });
        for (kx, ky) in [(4, 1), (-4, 2), (0, 3)] {
            let f = SpatialField::from_fn(g, |x| Complex64::from_polar(1.0, kx as f64 * x[0] + ky as f64 * x[1]));
            let out = apply_multiplier(&half, &f).unwrap();
            // Oracle: the direct DFT of the plane wave has a single bin at (kx, ky).
            let direct = naive_dft(&f);
            let kept = if kx > 0 { 1.0 } else { 0.0 };
            let bin = g.index_of(kx, ky).unwrap();
            assert!((direct[bin].norm() - (2.0 * PI).powi(2)).abs() < 1e-9);
            for (a, b) in out.data().iter().zip(f.data()) {
                assert!((a - b * kept).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn multipliers_compose_pointwise() {
        let g = grid(32);
        let f = random_field(g, 5);
        let m1 = Multiplier::from_symbol(g, |z| Complex64::new((-0.01 * (z[0] * z[0] + z[1] * z[1])).exp(), 0.3 * z[0]));
        let m2 = Multiplier::from_real_symbol(g, |z| if z[1] >= 0.0 { 1.0 + z[0].abs() } else { 0.0 });
        let a = apply_multiplier(&m1, &apply_multiplier(&m2, &f).unwrap()).unwrap();
        let b = apply_multiplier(&m2, &apply_multiplier(&m1, &f).unwrap()).unwrap();
        let c = apply_multiplier(&m1.product(&m2).unwrap(), &f).unwrap();
        let scale = f.sum_sq().sqrt() * 40.0;
        for ((x, y), z) in a.data().iter().zip(b.data()).zip(c.data()) {
            assert!((x - y).norm() <= 1e-12 * scale);
            assert!((x - z).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn hermitian_symbol_preserves_real_fields() {
        let g = grid(32);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = SpatialField::from_vec(g, (0..g.len()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), 0.0)).collect()).unwrap();
        // m(-z) = conj m(z); the Nyquist row and column are their own mirrors, so keep them real.
        let m = Multiplier::from_symbol(g, |z| {
            if z[0].abs() >= 16.0 || z[1].abs() >= 16.0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new((z[0] * z[0] + z[1] * z[1]).sqrt().cos(), 0.1 * z[0] + 0.05 * z[1])
            }
        });
        let out = apply_multiplier(&m, &f).unwrap();
        assert!(out.is_real(1e-12));
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let f = random_field(grid(32), 1);
        let m = Multiplier::from_real_symbol(grid(64), |_| 1.0);
        assert!(matches!(apply_multiplier(&m, &f), Err(Error::GridMismatch)));
    }

    #[test]
    fn lp_norm_of_constant_and_homogeneity() {
        let g = grid(32);
        let c = Complex64::new(0.0, -2.5);
        let f = SpatialField::constant(g, c);
        for p in [1.5, 2.0, 3.0, 4.0] {
            let expected = c.norm() * (2.0 * PI).powf(2.0 / p);
            assert!((lp_norm(&f, p).unwrap() - expected).abs() < 1e-12 * expected);
        }
        let h = random_field(g, 2);
        let alpha = Complex64::new(-1.5, 2.0);
        let lhs = lp_norm(&h.clone().scaled(alpha), 3.0).unwrap();
        let rhs = alpha.norm() * lp_norm(&h, 3.0).unwrap();
        assert!((lhs - rhs).abs() < 1e-12 * rhs);
        for bad in [1.0, 0.5, f64::INFINITY, f64::NAN] {
            assert!(lp_norm(&h, bad).is_err());
        }
    }

    #[test]
    fn gaussian_l2_norm_matches_closed_form() {
        // f = exp(-|x - c|^2 / (2 s^2)), int f^2 = pi s^2.
        let g = grid(128);
        let s = 0.4;
        let f = SpatialField::from_fn(g, |x| {
            let d = g.displacement([PI, PI], x);
            Complex64::new((-(d[0] * d[0] + d[1] * d[1]) / (2.0 * s * s)).exp(), 0.0)
        });
        let expected = (PI * s * s).sqrt();
        assert!((lp_norm(&f, 2.0).unwrap() - expected).abs() < 1e-6);
    }

    #[test]
    fn pruned_inverse_matches_full() {
        let g = grid(64);
        let entries: Vec<(usize, Complex64)> = [(3, 5), (4, 5), (-2, 5), (7, -9)]
            .iter()
            .enumerate()
            .map(|(j, &(kx, ky))| (g.index_of(kx, ky).unwrap(), Complex64::new(1.0 + j as f64, -0.5)))
            .collect::<std::collections::BTreeMap<_, _>>()
            .into_iter()
            .collect();
        let fast = sparse_to_spatial(g, &entries);
        let mut dense = SpectralField::zeros(g);
        for &(i, v) in &entries {
            dense.data_mut()[i] = v;
        }
        let slow = dense.to_spatial();
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).norm() < 1e-14);
        }
    }
}
