//! Packet kernels on the plane.
//!
//! The symbol is sampled on a rectangle aligned with the packet direction and
//! transformed with a zero-padded FFT whose periods are four times the largest
//! evaluated displacement, so wrapped copies stay out of every measured bin.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::packets::{decay_bin, decay_report, DecayReport};

/// Largest FFT buffer, in complex samples.
pub const MAX_PLANE_SAMPLES: usize = 1 << 24;

/// Frequency rectangle `u in [u_lo, u_hi]`, `|v| <= v_half` in coordinates
/// `zeta = u w + v w_perp`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneWindow {
    pub u_lo: f64,
    pub u_hi: f64,
    pub v_half: f64,
}

impl PlaneWindow {
    /// Covers every packet with radial support in `[0.8, 1.25] / sigma` and
    /// angular support `|zeta_hat - w| <= (5/16) sqrt(sigma)`.
    pub fn standard(sigma: f64) -> Self {
        Self { u_lo: 0.7 / sigma, u_hi: 1.3 / sigma, v_half: 0.7 / sigma.sqrt() }
    }
}

/// Bins `|F^{-1} symbol|` on the plane by `rho = |x|^2 / sigma + <w, x>^2 / sigma^2`
/// for `rho <= rho_max`. The symbol must vanish on the edge of `window`.
pub fn plane_decay_profile(
    symbol: impl Fn([f64; 2]) -> Result<f64> + Sync,
    direction: f64,
    sigma: f64,
    window: PlaneWindow,
    rho_max: f64,
) -> Result<DecayReport> {
    let a_max = (rho_max / (1.0 / sigma + 1.0 / (sigma * sigma))).sqrt();
    let b_max = (sigma * rho_max).sqrt();
    let (hu, hv) = (TAU / (4.0 * a_max), TAU / (4.0 * b_max));
    let mu = ((window.u_hi - window.u_lo) / hu).ceil() as usize + 1;
    let mv = (2.0 * window.v_half / hv).ceil() as usize + 1;
    let (nu, nv) = ((2 * mu).next_power_of_two(), (2 * mv).next_power_of_two());
    if nu * nv > MAX_PLANE_SAMPLES {
        return Err(Error::InvalidConfig(format!(
            "plane kernel needs {nu} x {nv} samples, more than {MAX_PLANE_SAMPLES}"
        )));
    }
    let w = [direction.cos(), direction.sin()];
    let perp = [-w[1], w[0]];
    let mut data = vec![Complex64::new(0.0, 0.0); nu * nv];
    data.par_chunks_mut(nv).take(mu).enumerate().try_for_each(|(i, row)| -> Result<()> {
        let u = window.u_lo + i as f64 * hu;
        for (j, out) in row.iter_mut().take(mv).enumerate() {
            let v = -window.v_half + j as f64 * hv;
            let z = [u * w[0] + v * perp[0], u * w[1] + v * perp[1]];
            *out = Complex64::new(symbol(z)? * hu * hv, 0.0);
        }
        Ok(())
    })?;
    let edge = (0..mv)
        .flat_map(|j| [j, (mu - 1) * nv + j])
        .chain((0..mu).flat_map(|i| [i * nv, i * nv + mv - 1]))
        .map(|k| data[k].norm())
        .fold(0.0, f64::max);
    if edge != 0.0 {
        return Err(Error::InvalidConfig(format!("symbol is {edge:e} on the edge of the frequency window")));
    }
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_inverse(nv);
    data.par_chunks_mut(nv).take(mu).for_each(|row| row_fft.process(row));
    let mut cols = vec![Complex64::new(0.0, 0.0); nu * nv];
    cols.par_chunks_mut(nu).enumerate().for_each(|(j, col)| {
        for (i, c) in col.iter_mut().enumerate().take(mu) {
            *c = data[i * nv + j];
        }
    });
    drop(data);
    let col_fft = planner.plan_fft_inverse(nu);
    cols.par_chunks_mut(nu).for_each(|col| col_fft.process(col));
    let (da, db) = (TAU / (nu as f64 * hu), TAU / (nv as f64 * hv));
    let signed = |k: usize, n: usize| if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
    let bins_per_decade = 8.0;
    let rho_min: f64 = 1e-2;
    let mut sup: Vec<f64> = Vec::new();
    let mut peak: f64 = 0.0;
    for (j, col) in cols.chunks(nu).enumerate() {
        let b = signed(j, nv) * db;
        for (i, v) in col.iter().enumerate() {
            let a = signed(i, nu) * da;
            let rho = (a * a + b * b) / sigma + a * a / (sigma * sigma);
            if rho > rho_max {
                continue;
            }
            let amp = v.norm() / (4.0 * PI * PI);
            peak = peak.max(amp);
            let k = decay_bin(rho, rho_min, bins_per_decade);
            if sup.len() <= k {
                sup.resize(k + 1, -1.0);
            }
            sup[k] = sup[k].max(amp);
        }
    }
    Ok(decay_report(peak, &sup, rho_min, bins_per_decade))
}

/// Barycentric Chebyshev interpolant of a smooth function on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevInterpolant {
    lo: f64,
    hi: f64,
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl ChebyshevInterpolant {
    pub fn new(f: impl Fn(f64) -> Result<f64>, lo: f64, hi: f64, degree: usize) -> Result<Self> {
        if !(hi > lo) || degree == 0 {
            return Err(Error::InvalidConfig(format!("bad interpolation interval [{lo}, {hi}] or degree {degree}")));
        }
        let nodes: Vec<f64> = (0..=degree).map(|k| (k as f64 * PI / degree as f64).cos()).collect();
        let values = nodes.iter().map(|&x| f(lo + (x + 1.0) * 0.5 * (hi - lo))).collect::<Result<_>>()?;
        Ok(Self { lo, hi, nodes, values })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let x = 2.0 * (t - self.lo) / (self.hi - self.lo) - 1.0;
        let last = self.nodes.len() - 1;
        let (mut num, mut den) = (0.0, 0.0);
        for (k, (&xk, &fk)) in self.nodes.iter().zip(&self.values).enumerate() {
            if x == xk {
                return fk;
            }
            let mut wk = if k % 2 == 0 { 1.0 } else { -1.0 };
            if k == 0 || k == last {
                wk *= 0.5;
            }
            let c = wk / (x - xk);
            num += c * fk;
            den += c;
        }
        num / den
    }
}
