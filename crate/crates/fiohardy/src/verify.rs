//! The acceptance matrix: one function per criterion, sharing families and
//! norm evaluations through a [`Verifier`] context.

use std::cell::{OnceCell, RefCell};
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use fiohardy_core::decay::{plane_decay_profile, ChebyshevInterpolant, PlaneWindow};
use fiohardy_core::geometry::{chord, loglog_slope, metric_d, CospherePoint, DirectionSet, VolumeEstimator};
use fiohardy_core::grid::sparse_to_spatial;
use fiohardy_core::hardy::{evaluate_norms, half_wave_study, NormKind, NormOptions, NormReport};
use fiohardy_core::packets::{
    packet_change_ratio, FamilyTag, PacketFamily, PacketKit, Which,
};
use fiohardy_core::profiles::Normalization;
use fiohardy_core::tent::{energies_from_transform, evaluate, tent_norm, tent_norm_metric_ball, Averaging, TentSpec};
use fiohardy_core::transforms::{reproduce, transform};
use fiohardy_core::{GridSpec, SpatialField};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::suite::{self, TestFunction};

/// Whether a check gates the verdict or only records a budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    Assert,
    Budget,
    Report,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: String,
    pub passed: bool,
    pub kind: CheckKind,
}

impl Check {
    pub fn le(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, tolerance: format!("<= {bound:e}"), passed: value <= bound, kind: CheckKind::Assert }
    }

    pub fn ge(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, tolerance: format!(">= {bound:e}"), passed: value >= bound, kind: CheckKind::Assert }
    }

    pub fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance: format!("in [{lo}, {hi}]"),
            passed: value >= lo && value <= hi,
            kind: CheckKind::Assert,
        }
    }

    pub fn report(name: impl Into<String>, value: f64) -> Self {
        Self { name: name.into(), value, tolerance: "reported".into(), passed: true, kind: CheckKind::Report }
    }

    pub fn budget(name: impl Into<String>, seconds: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value: seconds,
            tolerance: format!("<= {limit} s on the reference 8-core machine"),
            passed: seconds <= limit,
            kind: CheckKind::Budget,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: u32,
    pub title: String,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub seconds: f64,
}

impl CriterionReport {
    fn new(id: u32, title: &str) -> Self {
        Self { id, title: title.into(), checks: Vec::new(), notes: Vec::new(), seconds: 0.0 }
    }

    /// All asserted checks pass.
    pub fn passed(&self) -> bool {
        self.checks.iter().filter(|c| c.kind == CheckKind::Assert).all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.kind == CheckKind::Assert && !c.passed).collect()
    }

    pub fn summary_line(&self) -> String {
        let worst = self.failures().first().map(|c| format!("  first failure: {} = {:e} ({})", c.name, c.value, c.tolerance));
        let budgets: Vec<String> = self
            .checks
            .iter()
            .filter(|c| c.kind == CheckKind::Budget && !c.passed)
            .map(|c| format!("  [budget exceeded: {} = {:.1} s, {}]", c.name, c.value, c.tolerance))
            .collect();
        format!(
            "criterion {:>2} {}: {} ({} checks, {:.1} s){}{}",
            self.id,
            if self.passed() { "PASS" } else { "FAIL" },
            self.title,
            self.checks.len(),
            self.seconds,
            worst.unwrap_or_default(),
            budgets.concat()
        )
    }
}

/// `{test_id, p, norms, ratios}` rows of the JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct NormRow {
    pub test_id: String,
    pub n: usize,
    pub p: f64,
    pub norms: BTreeMap<String, f64>,
    pub ratios: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub config: String,
    pub threads: usize,
    pub criteria: Vec<CriterionReport>,
    pub norms: Vec<NormRow>,
    pub total_seconds: f64,
    pub passed: bool,
}

impl VerifyReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, serde_json::to_string_pretty(self)?).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn write_tables(dir: &Path, tables: &[Table]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for t in tables {
        let path = dir.join(format!("{}.csv", t.name));
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(&t.header)?;
        for r in &t.rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

fn spread(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::MIN, f64::max);
    let min = values.iter().cloned().fold(f64::MAX, f64::min);
    max / min
}

fn p_label(p: f64) -> String {
    if (p - 4.0 / 3.0).abs() < 1e-12 {
        "4/3".into()
    } else {
        format!("{p}")
    }
}

type SuiteNorms = Vec<(String, Vec<NormReport>)>;

/// Shared state of one verification run.
pub struct Verifier {
    cfg: RunConfig,
    suite: Vec<TestFunction>,
    primary: OnceCell<PacketFamily>,
    coarse: OnceCell<PacketFamily>,
    isometry: OnceCell<Vec<(String, f64)>>,
    coarse_norms: OnceCell<SuiteNorms>,
    primary_norms: OnceCell<SuiteNorms>,
    tables: RefCell<Vec<Table>>,
    rows: RefCell<Vec<NormRow>>,
}

impl Verifier {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let suite = suite::select(&cfg.suite)?;
        Ok(Self {
            cfg,
            suite,
            primary: OnceCell::new(),
            coarse: OnceCell::new(),
            isometry: OnceCell::new(),
            coarse_norms: OnceCell::new(),
            primary_norms: OnceCell::new(),
            tables: RefCell::new(Vec::new()),
            rows: RefCell::new(Vec::new()),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn suite(&self) -> &[TestFunction] {
        &self.suite
    }

    pub fn tables(&self) -> Vec<Table> {
        self.tables.borrow().clone()
    }

    pub fn primary(&self) -> Result<&PacketFamily> {
        if let Some(f) = self.primary.get() {
            return Ok(f);
        }
        let fam = self.cfg.build_family(self.cfg.n).with_context(|| format!("building the N = {} family", self.cfg.n))?;
        Ok(self.primary.get_or_init(|| fam))
    }

    pub fn coarse(&self) -> Result<&PacketFamily> {
        if self.cfg.coarse_n == self.cfg.n {
            return self.primary();
        }
        if let Some(f) = self.coarse.get() {
            return Ok(f);
        }
        let fam = self
            .cfg
            .build_family(self.cfg.coarse_n)
            .with_context(|| format!("building the N = {} family", self.cfg.coarse_n))?;
        Ok(self.coarse.get_or_init(|| fam))
    }

    fn field(&self, t: &TestFunction, grid: GridSpec) -> Result<SpatialField> {
        t.field(grid).with_context(|| format!("generating {} on N = {}", t.id, grid.n()))
    }

    fn norms_on(&self, fam: &PacketFamily, kinds: &[NormKind], exponents: &[f64]) -> Result<SuiteNorms> {
        let mut out = Vec::new();
        for t in &self.suite {
            let f = self.field(t, *fam.grid())?;
            let r = evaluate_norms(fam, &f, exponents, kinds, &NormOptions::default())
                .with_context(|| format!("norms of {} on N = {}", t.id, fam.grid().n()))?;
            let mut rows = self.rows.borrow_mut();
            for rep in &r {
                let norms: BTreeMap<String, f64> = rep
                    .norms
                    .iter()
                    .map(|(k, v)| (k.name().to_string(), *v))
                    .chain([("lp".to_string(), rep.lp), ("l2".to_string(), rep.l2), ("low_frequency".to_string(), rep.low_frequency)])
                    .collect();
                let ratios = rep
                    .norms
                    .iter()
                    .filter(|(k, _)| **k != NormKind::Parabolic)
                    .filter_map(|(k, v)| rep.get(NormKind::Parabolic).map(|par| (format!("{}/parabolic", k.name()), v / par)))
                    .collect();
                rows.push(NormRow { test_id: t.id.clone(), n: fam.grid().n(), p: rep.p, norms, ratios });
            }
            out.push((t.id.clone(), r));
        }
        Ok(out)
    }

    /// All norms at every configured exponent on the comparison grid.
    pub fn coarse_norms(&self) -> Result<&SuiteNorms> {
        if let Some(v) = self.coarse_norms.get() {
            return Ok(v);
        }
        let v = self.norms_on(self.coarse()?, &NormKind::ALL, &self.cfg.exponents)?;
        Ok(self.coarse_norms.get_or_init(|| v))
    }

    /// Tent and parabolic norms on the primary grid.
    pub fn primary_norms(&self) -> Result<&SuiteNorms> {
        if self.cfg.coarse_n == self.cfg.n {
            return self.coarse_norms();
        }
        if let Some(v) = self.primary_norms.get() {
            return Ok(v);
        }
        let v = self.norms_on(self.primary()?, &[NormKind::HardyW, NormKind::Parabolic], &self.cfg.exponents)?;
        Ok(self.primary_norms.get_or_init(|| v))
    }

    /// Criterion 1: exact discrete identities.
    pub fn criterion_1(&self) -> Result<CriterionReport> {
        let start = Instant::now();
        let mut rep = CriterionReport::new(1, "exact discrete identities");
        let fam = self.primary()?;
        let d = fam.diagnostics();
        let tol = self.cfg.tolerance("calderon");
        rep.checks.push(Check::le("calderon residual", d.calderon_residual, tol));
        rep.checks.push(Check::le("partition residual |s| on |zeta| > 2", d.partition_residual, tol));
        rep.checks.push(Check::le("angular residual", d.angular_residual, tol));
        let tol = self.cfg.tolerance("reproduction");
        let mut table = Table::new("reproduction", &["test_id", "n", "ww_error", "uv_error", "w_norm_ratio"]);
        let mut iso = Vec::new();
        for t in &self.suite {
            let f = self.field(t, *fam.grid())?;
            let norm = f.l2_norm();
            let err = |fwd: Which, adj: Which| -> Result<(f64, f64)> {
                let r = reproduce(fam, fwd, adj, &f)?;
                let mut d = r.field;
                d.add_scaled(Complex64::new(-1.0, 0.0), &f)?;
                Ok((d.l2_norm() / norm, r.coefficient_norm_sq.sqrt() / norm))
            };
            let (ww, ratio) = err(Which::W, Which::W)?;
            let (uv, _) = err(Which::V, Which::U)?;
            rep.checks.push(Check::le(format!("{}: |W*Wf - f| / |f|", t.id), ww, tol));
            rep.checks.push(Check::le(format!("{}: |U*Vf - f| / |f|", t.id), uv, tol));
            table.push(vec![t.id.clone(), fam.grid().n().to_string(), fmt(ww), fmt(uv), fmt(ratio)]);
            iso.push((t.id.clone(), ratio));
        }
        let _ = self.isometry.set(iso);
        self.tables.borrow_mut().push(table);
        rep.seconds = start.elapsed().as_secs_f64();
        rep.checks.push(Check::budget(format!("runtime at N = {}", fam.grid().n()), rep.seconds, 60.0));
        Ok(rep)
    }

    /// Criterion 2: `W` is an isometry up to discretization.
    pub fn criterion_2(&self) -> Result<CriterionReport> {
        let start = Instant::now();
        let mut rep = CriterionReport::new(2, "W near-isometry");
        if self.isometry.get().is_none() {
            let fam = self.primary()?;
            let mut iso = Vec::new();
            for t in &self.suite {
                let f = self.field(t, *fam.grid())?;
                let e = energies_from_transform(fam, Which::W, &f.to_spectral(), true)?;
                iso.push((t.id.clone(), e.norm_sq().sqrt() / f.l2_norm()));
            }
            let _ = self.isometry.set(iso);
        }
        let tol = self.cfg.tolerance("isometry");
        for (id, ratio) in self.isometry.get().expect("computed above") {
            rep.checks.push(Check::le(format!("{id}: | |Wf| / |f| - 1 |"), (ratio - 1.0).abs(), tol));
        }
        rep.seconds = start.elapsed().as_secs_f64();
        Ok(rep)
    }

    /// Criterion 3: lattice-point-wise support statements.
    pub fn criterion_3(&self) -> Result<CriterionReport> {
        let start = Instant::now();
        let mut rep = CriterionReport::new(3, "support exactness");
        let fam = self.primary()?;
        let grid = *fam.grid();
        let dirs = fam.directions();
        let ladder = fam.ladder();
        let geo = |i: usize| {
            let z = grid.frequency(i);
            (z[0].hypot(z[1]), z[1].atan2(z[0]))
        };
        let slack = 1e-12;
        let mut bad = [0usize; 3];
        let mut entries = 0usize;
        for k in ladder.nodes() {
            let sigma = ladder.sigma(k as i64);
            for m in 0..dirs.len() {
                let w = dirs.angle(m);
                for (t, mult) in [fam.psi(m, k), fam.theta(m, k), fam.chi(m, k)].into_iter().enumerate() {
                    for (i, v) in mult.iter() {
                        if v == Complex64::new(0.0, 0.0) {
                            continue;
                        }
                        entries += 1;
                        let (r, a) = geo(i);
                        let inside = r >= 0.5 / sigma * (1.0 - slack)
                            && r <= 2.0 / sigma * (1.0 + slack)
                            && chord(a, w) <= 2.0 * sigma.sqrt() * (1.0 + slack);
                        if !inside {
                            bad[t] += 1;
                        }
                    }
                }
            }
        }
        for (t, name) in ["psi", "theta", "chi"].iter().enumerate() {
            rep.checks.push(Check::le(format!("{name} entries outside the dyadic-parabolic region"), bad[t] as f64, 0.0));
        }
        let mut phi_bad = 0usize;
        for m in 0..dirs.len() {
            let w = dirs.angle(m);
            for (i, v) in fam.phi_omega(m).iter() {
                if v == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let (r, a) = geo(i);
                if r < 0.125 || chord(a, w) > 2.0 / r.sqrt() * (1.0 + slack) {
                    phi_bad += 1;
                }
            }
        }
        rep.checks.push(Check::le("phi_omega entries with |zeta| < 1/8 or |zeta^ - w| > 2|zeta|^-1/2", phi_bad as f64, 0.0));
        let s_bad = fam.s().iter().filter(|&(i, v)| v != Complex64::new(0.0, 0.0) && geo(i).0 > 2.0).count();
        rep.checks.push(Check::le("s entries with |zeta| > 2", s_bad as f64, 0.0));
        rep.checks.push(Check::report("checked packet entries", entries as f64));
        rep.seconds = start.elapsed().as_secs_f64();
        Ok(rep)
    }

    /// Criterion 4: scaling exponents.
    pub fn criterion_4(&self) -> Result<CriterionReport> {
        let start = Instant::now();
        let mut rep = CriterionReport::new(4, "scaling exponents");
        let fam = self.primary()?;
        let grid = *fam.grid();
        let ladder = fam.ladder();
        let (_, hi) = grid.resolved_band();
        let nodes: Vec<usize> = ladder
            .nodes()
            .filter(|&k| {
                let s = ladder.sigma(k as i64);
                s <= 0.25 && 1.25 / s <= hi
            })
            .collect();
        let mut table = Table::new("scaling", &["quantity", "sigma", "value"]);
        let mut c_pts = Vec::new();
        let mut sup_pts = Vec::new();
        let mut peak_pts = Vec::new();
        for &k in &nodes {
            let sigma = ladder.sigma(k as i64);
            let c = fam.kit().c_sigma(sigma)?;
            let m = 0;
            let psi = fam.psi(m, k);
            let sup = psi.sup_norm();
            let kernel = sparse_to_spatial(grid, &psi.iter().collect::<Vec<_>>());
            let peak = kernel.data().iter().map(|v| v.norm()).fold(0.0, f64::max);
            c_pts.push((sigma, c));
            sup_pts.push((sigma, sup));
            peak_pts.push((sigma, peak));
            for (q, v) in [("c_sigma", c), ("sup_psi", sup), ("peak_kernel", peak)] {
                table.push(vec![q.into(), fmt(sigma), fmt(v)]);
            }
        }
        rep.notes.push(format!("fitted over {} ladder nodes with sigma <= 1/4 and 1.25/sigma inside the band", nodes.len()));
        rep.checks.push(Check::within("c_sigma slope", loglog_slope(&c_pts), -0.30, -0.20));
        rep.checks.push(Check::within("sup |psi| slope", loglog_slope(&sup_pts), -0.35, -0.15));
        rep.checks.push(Check::within("peak |F^-1 psi| slope", loglog_slope(&peak_pts), -1.90, -1.60));
        let est = VolumeEstimator::new(self.cfg.mc_samples, self.cfg.seed);
        let small: Vec<(f64, f64)> = [0.01, 0.02, 0.04, 0.07, 0.1].iter().map(|&t| (t, est.ball_volume(t))).collect();
        let large: Vec<(f64, f64)> = [10.0, 20.0, 40.0, 70.0, 100.0].iter().map(|&t| (t, est.ball_volume(t))).collect();
        for (t, v) in small.iter().chain(&large) {
            table.push(vec!["ball_volume".into(), fmt(*t), fmt(*v)]);
        }
        rep.checks.push(Check::within("small-ball volume slope", loglog_slope(&small), 3.7, 4.3));
        rep.checks.push(Check::within("large-ball volume slope", loglog_slope(&large), 1.7, 2.3));
        let slab_small: Vec<(f64, f64)> =
            [1e-4, 3e-4, 1e-3, 3e-3, 1e-2].iter().map(|&s| (s, est.slab_volume(1, s, 0.3))).collect();
        let slab_large: Vec<(f64, f64)> =
            [10.0, 30.0, 100.0, 300.0, 1000.0].iter().map(|&s| (s, est.slab_volume(1, s, 0.3))).collect();
        for (s, v) in slab_small.iter().chain(&slab_large) {
            table.push(vec!["slab_volume".into(), fmt(*s), fmt(*v)]);
        }
        rep.checks.push(Check::within("slab volume slope below scale 1", loglog_slope(&slab_small), 1.3, 1.7));
        rep.checks.push(Check::within("slab volume slope above scale 1", loglog_slope(&slab_large), 0.8, 1.2));
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let asym = (0..100_000)
            .map(|_| {
                let mut point = || {
                    CospherePoint::new([rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)], rng.gen_range(0.0..TAU))
                };
                let (p, q) = (point(), point());
                metric_d(&p, &q) / metric_d(&q, &p)
            })
            .fold(0.0, f64::max);
        rep.checks.push(Check::report("max d(p, q) / d(q, p) over 1e5 random pairs", asym));
        self.tables.borrow_mut().push(table);
        rep.seconds = start.elapsed().as_secs_f64();
        Ok(rep)
    }

    /// Criterion 5: the angular energy `int phi_v(zeta)^2 dv`.
    pub fn criterion_5(&self) -> Result<CriterionReport> {
        let start = Instant::now();
        let mut rep = CriterionReport::new(5, "angular energy");
        let fam = self.primary()?;
        let grid = *fam.grid();
        let kit = fam.kit();
        let (_, hi) = grid.resolved_band();
        let points: Vec<usize> = (0..grid.len())
            .filter(|&i| {
                let z = grid.frequency(i);
                let r = z[0].hypot(z[1]);
                (1.0..=hi).contains(&r)
            })
            .collect();
        let integral: Vec<f64> = points
            .par_iter()
            .map(|&i| {
                let z = grid.frequency(i);
                let half = kit.phi_omega_halfwidth(z[0].hypot(z[1]));
                let nodes = ((16.0 * TAU / half).ceil() as usize).max(1024);
                kit.angular_energy(z, nodes)
            })
            .collect::<fiohardy_core::Result<_>>()?;
        let discrete: Vec<f64> = points.iter().map(|&i| fam.angular_energy()[i]).collect();
        let shell_stats = |values: &[f64]| -> (f64, f64) {
            let mut shells: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
            for (&i, &v) in points.iter().zip(values) {
                let (kx, ky) = grid.wavenumbers(i);
                shells.entry(kx * kx + ky * ky).or_default().push(v);
            }
            let worst = shells
                .values()
                .filter(|v| v.len() > 1)
                .map(|v| {
                    let mu = v.iter().sum::<f64>() / v.len() as f64;
                    v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / v.len() as f64 / (mu * mu)
                })
                .fold(0.0, f64::max);
            (spread(values), worst)
        };
        let (ratio, var) = shell_stats(&integral);
        rep.checks.push(Check::le("max/min of int phi_v^2 dv over 1 <= |zeta| <= band", ratio, self.cfg.tolerance("angular_ratio")));
        rep.checks.push(Check::le("worst shell variance / mean^2", var, self.cfg.tolerance("radiality")));
        let (dratio, dvar) = shell_stats(&discrete);
        rep.checks.push(Check::report(format!("max/min of the {}-direction sum", fam.directions().len()), dratio));
        rep.checks.push(Check::report(format!("worst shell variance of the {}-direction sum", fam.directions().len()), dvar));
        rep.notes.push(format!(
            "{} lattice points; the integral uses at least 16 nodes per angular half-width",
            points.len()
        ));
        rep.seconds = start.elapsed().as_secs_f64();
        Ok(rep)
    }

    /// Criterion 6: off-region decay of packet kernels.
    ///
    /// Kernels are evaluated on the plane from the continuum symbols; the torus
    /// lattice is too coarse for packets a few lattice points wide.
    pub fn criterion_6(&self) -> Result<CriterionReport> {
        let start = Instant::now();
        let mut rep = CriterionReport::new(6, "packet decay");
        let fam = self.primary()?;
        let ladder = fam.ladder();
        let j = ladder.per_octave();
        let norm = Normalization::Discrete { per_octave: j };
        let standard = PacketKit::new(FamilyTag::Standard, norm)?;
        let tilde = PacketKit::new(FamilyTag::Tilde, norm)?;
        let tol = self.cfg.tolerance("decay_slope");
        let rho_max = 1e6;
        let mut table = Table::new("decay", &["packet", "sigma", "rho_lo", "rho_hi", "sup_over_peak"]);
        for k in [3 * j, 4 * j, 5 * j] {
            let sigma = ladder.sigma(k as i64);
            let w = fam.directions().angle(fam.directions().len() / 8);
            let nu = w + sigma.sqrt() / 32.0;
            let win = PlaneWindow::standard(sigma);
            let r_hi = win.u_hi.hypot(win.v_half);
            let energy = ChebyshevInterpolant::new(
                |r| {
                    let half = standard.phi_omega_halfwidth(r);
                    standard.angular_energy([r, 0.0], ((16.0 * TAU / half).ceil() as usize).max(1024))
                },
                win.u_lo * 0.99,
                r_hi * 1.01,
                64,
            )?;
            for (name, report) in [
                ("psi", plane_decay_profile(|z| standard.psi(w, sigma, z), w, sigma, win, rho_max)),
                ("theta", plane_decay_profile(|z| standard.theta(w, sigma, z), w, sigma, win, rho_max)),
                (
                    "chi",
                    plane_decay_profile(
                        |z| Ok(standard.theta(w, sigma, z)? / energy.eval(z[0].hypot(z[1]))),
                        w,
                        sigma,
                        win,
                        rho_max,
                    ),
                ),
                (
                    "eta",
                    plane_decay_profile(
                        |z| {
                            let num = standard.theta(w, sigma, z)?;
                            if num == 0.0 {
                                return Ok(0.0);
                            }
                            let den = tilde.theta(nu, sigma, z)?;
                            if den < 1e-8 {
                                return Err(fiohardy_core::Error::DenominatorTooSmall { value: den });
                            }
                            Ok(num / den)
                        },
                        w,
                        sigma,
                        win,
                        rho_max,
                    ),
                ),
            ] {
                let d = report?;
                for &(lo, hi, sup) in &d.bins {
                    table.push(vec![name.to_string(), fmt(sigma), fmt(lo), fmt(hi), fmt(sup / d.peak)]);
                }
                rep.checks.push(Check::report(format!("{name} body edge rho at sigma = {sigma:e}"), d.body_rho));
                for order in [2, 4] {
                    let c = d.bins.iter().map(|&(lo, _, sup)| sup * (1.0 + lo).powi(order)).fold(0.0, f64::max);
                    rep.checks.push(Check::report(
                        format!("{name} C_{order} = max sup (1 + rho)^{order} sigma^(7/4) at sigma = {sigma:e}"),
                        c * sigma.powf(1.75),
                    ));
                }
                let label = format!("{name} tail slope at sigma = {sigma:e} ({} bins)", d.fitted_bins);
                match d.tail_slope {
                    Some(s) => rep.checks.push(Check::le(label, s, tol)),
                    None => {
                        rep.checks.push(Check::le(label, f64::NAN, tol));
                        rep.notes.push(format!("{name} at sigma = {sigma:e}: fewer than 3 bins above the noise floor"));
                    }
                }
            }
            let (_, floor) = packet_change_ratio(&standard, &tilde, *fam.grid(), w, nu, sigma)?;
            rep.checks.push(Check::report(format!("eta denominator floor on the lattice at sigma = {sigma:e}"), floor));
        }
        rep.notes.push(format!(
            "tail = the two decades of rho past the last bin at >= 1% of the peak; rho <= {rho_max:e}"
        ));
        self.tables.borrow_mut().push(table);
        rep.seconds = start.elapsed().as_secs_f64();
        Ok(rep)
    }

    /// Criterion 7: change of aperture.
    pub fn criterion_7(&self) -> Result<CriterionReport> {
        let start = Instant::now();
        let mut rep = CriterionReport::new(7, "aperture growth");
        let fam = self.coarse()?;
        let aps = self.cfg.apertures.clone();
        let exps = [4.0 / 3.0, 4.0];
        let spec = TentSpec {
            averages: aps.iter().map(|&a| Averaging::aperture(a)).collect::<fiohardy_core::Result<_>>()?,
            exponents: exps.to_vec(),
            keep_fields: false,
        };
        let mut table = Table::new("aperture", &["test_id", "p", "aperture", "tent_norm", "ratio_to_1"]);
        let base = aps.iter().position(|&a| a == 1.0).context("apertures must include 1")?;
        for t in &self.suite {
            let f = self.field(t, *fam.grid())?;
            let e = energies_from_transform(fam, Which::W, &f.to_spectral(), true)?;
            let r = evaluate(&e, &spec)?;
            for (i, &p) in exps.iter().enumerate() {
                let n1 = r.norm(base, i);
                let pts: Vec<(f64, f64)> = aps.iter().enumerate().map(|(a, &lam)| (lam, r.norm(a, i))).collect();
                for &(lam, v) in &pts {
                    table.push(vec![t.id.clone(), p_label(p), lam.to_string(), fmt(v), fmt(v / n1)]);
                    if lam > 1.0 {
                        rep.checks.push(Check::ge(format!("{}: p = {} ratio lambda = {lam} vs 1", t.id, p_label(p)), v / n1, 1.0 / 3.0));
                    }
                }
                if p == 4.0 {
                    let (lam, v) = *pts.last().expect("apertures");
                    rep.checks.push(Check::le(
                        format!("{}: p = 4 ratio lambda = {lam} vs 1", t.id),
                        v / n1,
                        self.cfg.tolerance("aperture_ratio"),
                    ));
                } else {
                    rep.checks.push(Check::le(
                        format!("{}: p = 4/3 fitted growth exponent", t.id),
                        loglog_slope(&pts),
                        self.cfg.tolerance("aperture_exponent"),
                    ));
                }
            }
        }
        self.tables.borrow_mut().push(table);
        self.ball_calibration(&mut rep)?;
        rep.seconds = start.elapsed().as_secs_f64();
        Ok(rep)
    }

    /// Reports metric-ball against box tent norms on a small grid where the
    /// coefficients can be materialized.
    fn ball_calibration(&self, rep: &mut CriterionReport) -> Result<()> {
        let grid = GridSpec::new(64, self.cfg.period)?;
        let ladder = self.cfg.ladder(&grid)?;
        let m = ((2.0 * TAU / ladder.sigma_min().sqrt() / 16.0).floor() as usize + 1) * 16;
        let fam = PacketFamily::build(grid, DirectionSet::new(m)?, ladder, self.cfg.family_options())?;
        let centers: Vec<(usize, usize)> = (0..grid.len()).step_by(37).map(|i| (i, (i * 7) % m)).collect();
        for id in ["modulated_16", "annulus_24"] {
            let t = suite::select(id)?.remove(0);
            let c = transform(&fam, Which::W, &self.field(&t, grid)?)?;
            for p in [4.0 / 3.0, 2.0, 4.0] {
                let ball = tent_norm_metric_ball(&c, p, 1.0, &centers)?;
                let boxed = tent_norm(&c, p, 1.0)?;
                rep.checks.push(Check::report(
                    format!("{id}: metric-ball / box tent norm at p = {}, N = 64, M = {m}", p_label(p)),
                    ball / boxed,
                ));
            }
        }
        Ok(())
    }

    /// Criterion 8: the parabolic characterization at desk scale.
    pub fn criterion_8(&self) -> Result<CriterionReport> {
        let start = Instant::now();
        let mut rep = CriterionReport::new(8, "parabolic vs tent norm");
        let cmax = self.cfg.tolerance("equivalence");
        let coarse = self.coarse_norms()?;
        let primary = self.primary_norms()?;
        let mut table = Table::new("parabolic_ratio", &["test_id", "n", "p", "parabolic", "hardy_w", "ratio"]);
        for (label, norms, n) in [("coarse", coarse, self.cfg.coarse_n), ("primary", primary, self.cfg.n)] {
            if label == "primary" && self.cfg.n == self.cfg.coarse_n {
                continue;
            }
            for (i, &p) in self.cfg.exponents.iter().enumerate() {
                let ratios: Vec<f64> = norms
                    .iter()
                    .map(|(id, r)| {
                        let (a, b) = (r[i].norms[&NormKind::Parabolic], r[i].norms[&NormKind::HardyW]);
                        table.push(vec![id.clone(), n.to_string(), p_label(p), fmt(a), fmt(b), fmt(a / b)]);
                        a / b
                    })
                    .collect();
                if p != 2.0 {
                    let c = ratios.iter().map(|&r| r.max(1.0 / r)).fold(0.0, f64::max);
                    rep.checks.push(Check::le(format!("N = {n}, p = {}: C* for parabolic / hardy", p_label(p)), c, cmax));
                }
            }
        }
        if self.cfg.n != self.cfg.coarse_n {
            let tol = self.cfg.tolerance("drift");
            for ((id, a), (_, b)) in coarse.iter().zip(primary) {
                for (i, &p) in self.cfg.exponents.iter().enumerate() {
                    if p == 2.0 {
                        continue;
                    }
                    let ra = a[i].norms[&NormKind::Parabolic] / a[i].norms[&NormKind::HardyW];
                    let rb = b[i].norms[&NormKind::Parabolic] / b[i].norms[&NormKind::HardyW];
                    rep.checks.push(Check::le(
                        format!("{id}: p = {} drift N = {} -> {}", p_label(p), self.cfg.coarse_n, self.cfg.n),
                        (rb / ra - 1.0).abs(),
                        tol,
                    ));
                }
            }
        } else {
            rep.notes.push("single grid: refinement drift not measured".into());
        }
        if let Some(i) = self.cfg.exponents.iter().position(|&p| p == 2.0) {
            let f = self.cfg.tolerance("p2_factor");
            for (id, r) in coarse {
                for (k, v) in &r[i].norms {
                    let ratio = v / r[i].l2;
                    rep.checks.push(Check::within(format!("{id}: p = 2 {k} / |f|_2"), ratio, 1.0 / f, f));
                }
            }
        }
        self.tables.borrow_mut().push(table);
        rep.seconds = start.elapsed().as_secs_f64();
        Ok(rep)
    }

    /// Criterion 9: the corollary norms against the parabolic norm.
    pub fn criterion_9(&self) -> Result<CriterionReport> {
        let start = Instant::now();
        let mut rep = CriterionReport::new(9, "corollary equivalences");
        let norms = self.coarse_norms()?;
        let spread_tol = self.cfg.tolerance("corollary_spread");
        let via_v = self.cfg.tolerance("via_v");
        for (i, &p) in self.cfg.exponents.iter().enumerate() {
            if p == 2.0 {
                continue;
            }
            for kind in [NormKind::Square, NormKind::Maximal, NormKind::Vertical] {
                let ratios: Vec<f64> = norms.iter().map(|(_, r)| r[i].ratio(kind, NormKind::Parabolic).expect("computed")).collect();
                rep.checks.push(Check::le(format!("p = {}: spread of {kind} / parabolic", p_label(p)), spread(&ratios), spread_tol));
                rep.checks.push(Check::report(format!("p = {}: max {kind} / parabolic", p_label(p)), ratios.iter().cloned().fold(0.0, f64::max)));
            }
            let ratios: Vec<f64> = norms.iter().map(|(_, r)| r[i].ratio(NormKind::HardyV, NormKind::HardyW).expect("computed")).collect();
            let c = ratios.iter().map(|&r| r.max(1.0 / r)).fold(0.0, f64::max);
            rep.checks.push(Check::le(format!("p = {}: hardy via V / via W constant", p_label(p)), c, via_v));
            let ratios: Vec<f64> = norms.iter().map(|(_, r)| r[i].ratio(NormKind::Vertical, NormKind::HardyW).expect("computed")).collect();
            rep.checks.push(Check::report(
                format!("p = {}: vertical / hardy constant", p_label(p)),
                ratios.iter().map(|&r| r.max(1.0 / r)).fold(0.0, f64::max),
            ));
        }
        rep.seconds = start.elapsed().as_secs_f64();
        Ok(rep)
    }

    /// Criterion 10: the half-wave propagator.
    pub fn criterion_10(&self) -> Result<CriterionReport> {
        let start = Instant::now();
        let mut rep = CriterionReport::new(10, "half-wave invariance");
        let fam = self.coarse()?;
        let times = [0.25, 0.5, 1.0];
        let bound = self.cfg.tolerance("half_wave");
        let unit = self.cfg.tolerance("unitarity");
        let mut table = Table::new("half_wave", &["test_id", "t", "p", "lp_ratio", "hardy_ratio", "parabolic_ratio"]);
        for t in &self.suite {
            let f = self.field(t, *fam.grid())?;
            for row in half_wave_study(fam, &f, &times, &[2.0, 4.0])? {
                table.push(vec![
                    t.id.clone(),
                    row.t.to_string(),
                    p_label(row.p),
                    fmt(row.lp_ratio),
                    fmt(row.hardy_ratio),
                    fmt(row.parabolic_ratio),
                ]);
                if row.p == 4.0 {
                    rep.checks.push(Check::within(
                        format!("{}: t = {} parabolic ratio at p = 4", t.id, row.t),
                        row.parabolic_ratio,
                        1.0 / bound,
                        bound,
                    ));
                    rep.checks.push(Check::report(format!("{}: t = {} L^4 ratio", t.id, row.t), row.lp_ratio));
                } else {
                    for (what, v) in [("L^2", row.lp_ratio), ("parabolic", row.parabolic_ratio), ("hardy", row.hardy_ratio)] {
                        rep.checks.push(Check::le(format!("{}: t = {} p = 2 {what} |ratio - 1|", t.id, row.t), (v - 1.0).abs(), unit));
                    }
                }
            }
        }
        self.tables.borrow_mut().push(table);
        rep.seconds = start.elapsed().as_secs_f64();
        Ok(rep)
    }

    pub fn criterion(&self, id: u32) -> Result<CriterionReport> {
        match id {
            1 => self.criterion_1(),
            2 => self.criterion_2(),
            3 => self.criterion_3(),
            4 => self.criterion_4(),
            5 => self.criterion_5(),
            6 => self.criterion_6(),
            7 => self.criterion_7(),
            8 => self.criterion_8(),
            9 => self.criterion_9(),
            10 => self.criterion_10(),
            _ => anyhow::bail!("no criterion {id}"),
        }
    }

    pub fn norm_rows(&self) -> Vec<NormRow> {
        self.rows.borrow().clone()
    }
}

/// Runs the selected criteria, calling `progress` after each one.
pub fn run_verify(cfg: RunConfig, ids: &[u32], mut progress: impl FnMut(&CriterionReport)) -> Result<(VerifyReport, Vec<Table>)> {
    let start = Instant::now();
    let v = Verifier::new(cfg)?;
    let mut criteria = Vec::new();
    for &id in ids {
        let r = v.criterion(id).with_context(|| format!("criterion {id}"))?;
        progress(&r);
        criteria.push(r);
    }
    let total = start.elapsed().as_secs_f64();
    let passed = criteria.iter().all(|c| c.passed());
    let report = VerifyReport {
        config: v.config().serialize(),
        threads: rayon::current_num_threads(),
        criteria,
        norms: v.norm_rows(),
        total_seconds: total,
        passed,
    };
    Ok((report, v.tables()))
}
