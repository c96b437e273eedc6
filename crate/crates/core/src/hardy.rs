//! Norms on `H^p_FIO`: the tent-space norm of `Wf` or `Vf`, the conical
//! square function, the parabolic localization norm, the maximal and the
//! vertical square-function norms.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{apply_to_spectrum, check_exponent, lp_norm, sparse_to_spatial, SpatialField, SpectralField};
use crate::packets::{PacketFamily, Which};
use crate::profiles::Radial;
use crate::tent::{energies_from_transform, evaluate, Averaging, TentSpec};
use crate::transforms::half_wave;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NormKind {
    /// `||A(Wf)||_p`.
    HardyW,
    /// `||A(Vf)||_p`.
    HardyV,
    /// `||q(D)f||_p + ||S f||_p` with the fine channels of `V`.
    Square,
    /// `||q(D)f||_p + (int ||phi_w(D) f||_p^p dw)^{1/p}`.
    Parabolic,
    /// Parabolic norm with `sup_sigma |Phi(sigma D) phi_w(D) f|` inside.
    Maximal,
    /// Unaveraged square function of the fine channels of `V`.
    Vertical,
}

impl NormKind {
    pub const ALL: [NormKind; 6] = [
        NormKind::HardyW,
        NormKind::HardyV,
        NormKind::Square,
        NormKind::Parabolic,
        NormKind::Maximal,
        NormKind::Vertical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NormKind::HardyW => "hardy_w",
            NormKind::HardyV => "hardy_v",
            NormKind::Square => "square",
            NormKind::Parabolic => "parabolic",
            NormKind::Maximal => "maximal",
            NormKind::Vertical => "vertical",
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NormKind::ALL
            .into_iter()
            .find(|k| k.name() == s || (s == "tent" && *k == NormKind::HardyW))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown norm '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormOptions {
    pub aperture: f64,
    /// Dilations for the maximal norm; `None` uses [`extended_ladder`].
    pub maximal_sigmas: Option<Vec<f64>>,
}

impl Default for NormOptions {
    fn default() -> Self {
        Self { aperture: 1.0, maximal_sigmas: None }
    }
}

/// Dilations of the maximal norm, ascending: the limit `0`, nodes continuing
/// the ladder below `sigma_min` until `sigma |zeta|_max <= 0.1`, the ladder
/// itself, `1` and `2^j`, `j = 1..=6`.
pub fn extended_ladder(family: &PacketFamily) -> Vec<f64> {
    let ladder = family.ladder();
    let mut s: Vec<f64> = ladder.nodes().map(|k| ladder.sigma(k as i64)).collect();
    let zmax = family.grid().max_modulus();
    let mut k = ladder.depth() as i64 + 1;
    while ladder.sigma(k - 1) * zmax > 0.1 {
        s.push(ladder.sigma(k));
        k += 1;
    }
    s.push(0.0);
    s.push(1.0);
    s.extend((1..=6).map(|j| (j as f64).exp2()));
    s.sort_by(f64::total_cmp);
    s
}

/// Norms of one function at one exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub p: f64,
    pub l2: f64,
    pub lp: f64,
    /// `||q(D) f||_p`.
    pub low_frequency: f64,
    pub norms: BTreeMap<NormKind, f64>,
}

impl NormReport {
    pub fn get(&self, kind: NormKind) -> Option<f64> {
        self.norms.get(&kind).copied()
    }

    /// `a / b` when both norms were computed.
    pub fn ratio(&self, a: NormKind, b: NormKind) -> Option<f64> {
        Some(self.get(a)? / self.get(b)?)
    }
}

/// Evaluates the requested norms for every exponent, sharing the transforms
/// and the per-direction fields across exponents.
pub fn evaluate_norms(
    family: &PacketFamily,
    f: &SpatialField,
    exponents: &[f64],
    kinds: &[NormKind],
    options: &NormOptions,
) -> Result<Vec<NormReport>> {
    family.check_compatible(f.grid())?;
    for &p in exponents {
        check_exponent(p)?;
    }
    let avg = Averaging::aperture(options.aperture)?;
    let spectrum = f.to_spectral();
    let want = |k: NormKind| kinds.contains(&k);
    let low = apply_to_spectrum(family.q(), &spectrum);
    let low_p: Vec<f64> = exponents.iter().map(|&p| lp_norm(&low, p)).collect::<Result<_>>()?;
    let mut reports: Vec<NormReport> = exponents
        .iter()
        .zip(&low_p)
        .map(|(&p, &q)| {
            Ok(NormReport { p, l2: f.l2_norm(), lp: lp_norm(f, p)?, low_frequency: q, norms: BTreeMap::new() })
        })
        .collect::<Result<_>>()?;
    let mut put = |kind: NormKind, values: Vec<f64>| {
        for (r, v) in reports.iter_mut().zip(values) {
            r.norms.insert(kind, v);
        }
    };
    let tent = |energy: &crate::tent::CoefficientEnergy, averages: Vec<Averaging>| {
        let spec = TentSpec { averages: averages.clone(), exponents: exponents.to_vec(), keep_fields: false };
        let r = evaluate(energy, &spec)?;
        Ok::<_, Error>(
            (0..averages.len()).map(|a| (0..exponents.len()).map(|i| r.norm(a, i)).collect::<Vec<f64>>()).collect::<Vec<_>>(),
        )
    };
    if want(NormKind::HardyW) {
        let e = energies_from_transform(family, Which::W, &spectrum, true)?;
        put(NormKind::HardyW, tent(&e, vec![avg])?.remove(0));
    }
    if want(NormKind::HardyV) || want(NormKind::Square) || want(NormKind::Vertical) {
        let e = energies_from_transform(family, Which::V, &spectrum, true)?;
        if want(NormKind::HardyV) {
            put(NormKind::HardyV, tent(&e, vec![avg])?.remove(0));
        }
        let fine = e.without_coarse();
        let mut av = Vec::new();
        if want(NormKind::Square) {
            av.push(avg);
        }
        if want(NormKind::Vertical) {
            av.push(Averaging::Pointwise);
        }
        let mut out = tent(&fine, av)?.into_iter();
        for kind in [NormKind::Square, NormKind::Vertical] {
            if want(kind) {
                let v = out.next().expect("one result per averaging");
                put(kind, v.iter().zip(&low_p).map(|(s, q)| s + q).collect());
            }
        }
    }
    if want(NormKind::Parabolic) || want(NormKind::Maximal) {
        let sigmas = match &options.maximal_sigmas {
            Some(s) => s.clone(),
            None => extended_ladder(family),
        };
        let (par, max) = localized_sums(family, &spectrum, exponents, want(NormKind::Maximal).then_some(&sigmas[..]));
        let w = family.directions().weight() * f.grid().cell_area();
        let finish = |sums: &[f64]| -> Vec<f64> {
            sums.iter().zip(exponents).zip(&low_p).map(|((s, &p), q)| q + (w * s).powf(1.0 / p)).collect()
        };
        if want(NormKind::Parabolic) {
            put(NormKind::Parabolic, finish(&par));
        }
        if let Some(max) = max {
            put(NormKind::Maximal, finish(&max));
        }
    }
    Ok(reports)
}

/// `sum_{m, x} |phi_{w_m}(D) f|^p` and, when dilations are given,
/// `sum_{m, x} sup_sigma |Phi(sigma D) phi_{w_m}(D) f|^p`, per exponent.
fn localized_sums(
    family: &PacketFamily,
    spectrum: &SpectralField,
    exponents: &[f64],
    sigmas: Option<&[f64]>,
) -> (Vec<f64>, Option<Vec<f64>>) {
    let grid = *family.grid();
    let gauss = Radial::Gaussian;
    let per_m: Vec<(Vec<f64>, Option<Vec<f64>>)> = (0..family.directions().len())
        .into_par_iter()
        .map(|m| {
            let entries = family.phi_omega(m).act_sparse(spectrum);
            let field = sparse_to_spatial(grid, &entries);
            let par = exponents.iter().map(|&p| field.data().iter().map(|v| v.norm().powf(p)).sum()).collect();
            let max = sigmas.map(|sigmas| {
                let mut sup: Vec<f64> = vec![0.0; grid.len()];
                for &sigma in sigmas {
                    let damped: Vec<(usize, Complex64)> = entries
                        .iter()
                        .map(|&(i, v)| {
                            let z = grid.frequency(i);
                            (i, v * gauss.eval(sigma * z[0].hypot(z[1])))
                        })
                        .collect();
                    let g = sparse_to_spatial(grid, &damped);
                    for (s, v) in sup.iter_mut().zip(g.data()) {
                        *s = s.max(v.norm());
                    }
                }
                exponents.iter().map(|&p| sup.iter().map(|v| v.powf(p)).sum()).collect()
            });
            (par, max)
        })
        .collect();
    let mut par = vec![0.0; exponents.len()];
    let mut max = sigmas.map(|_| vec![0.0; exponents.len()]);
    for (a, b) in per_m {
        par.iter_mut().zip(a).for_each(|(s, v)| *s += v);
        if let (Some(max), Some(b)) = (max.as_mut(), b) {
            max.iter_mut().zip(b).for_each(|(s, v)| *s += v);
        }
    }
    (par, max)
}

fn single(family: &PacketFamily, f: &SpatialField, p: f64, kind: NormKind) -> Result<f64> {
    let r = evaluate_norms(family, f, &[p], &[kind], &NormOptions::default())?;
    Ok(r[0].norms[&kind])
}

/// `||A(Wf)||_p` or `||A(Vf)||_p` with aperture 1.
pub fn hardy_norm(family: &PacketFamily, f: &SpatialField, p: f64, via: Which) -> Result<f64> {
    match via {
        Which::W => single(family, f, p, NormKind::HardyW),
        Which::V => single(family, f, p, NormKind::HardyV),
        Which::U => Err(Error::InvalidConfig("the Hardy norm is defined via W or V".into())),
    }
}

pub fn square_function_norm(family: &PacketFamily, f: &SpatialField, p: f64) -> Result<f64> {
    single(family, f, p, NormKind::Square)
}

pub fn parabolic_norm(family: &PacketFamily, f: &SpatialField, p: f64) -> Result<f64> {
    single(family, f, p, NormKind::Parabolic)
}

pub fn maximal_norm(family: &PacketFamily, f: &SpatialField, p: f64) -> Result<f64> {
    single(family, f, p, NormKind::Maximal)
}

pub fn vertical_norm(family: &PacketFamily, f: &SpatialField, p: f64) -> Result<f64> {
    single(family, f, p, NormKind::Vertical)
}

/// Norm ratios of `e^{it sqrt(-Delta)} f` against `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfWaveRow {
    pub t: f64,
    pub p: f64,
    pub lp_ratio: f64,
    pub hardy_ratio: f64,
    pub parabolic_ratio: f64,
}

pub fn half_wave_study(
    family: &PacketFamily,
    f: &SpatialField,
    times: &[f64],
    exponents: &[f64],
) -> Result<Vec<HalfWaveRow>> {
    let kinds = [NormKind::HardyW, NormKind::Parabolic];
    let opts = NormOptions::default();
    let base = evaluate_norms(family, f, exponents, &kinds, &opts)?;
    let mut rows = Vec::new();
    for &t in times {
        let g = half_wave(f, t);
        let moved = evaluate_norms(family, &g, exponents, &kinds, &opts)?;
        for (b, m) in base.iter().zip(&moved) {
            rows.push(HalfWaveRow {
                t,
                p: b.p,
                lp_ratio: m.lp / b.lp,
                hardy_ratio: m.norms[&NormKind::HardyW] / b.norms[&NormKind::HardyW],
                parabolic_ratio: m.norms[&NormKind::Parabolic] / b.norms[&NormKind::Parabolic],
            });
        }
    }
    Ok(rows)
}
