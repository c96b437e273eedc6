use std::f64::consts::TAU;
use std::sync::OnceLock;

use fiohardy_core::geometry::{chord, metric_d, CospherePoint, DirectionSet, ScaleLadder};
use fiohardy_core::packets::{FamilyOptions, PacketFamily, Which};
use fiohardy_core::tent::{tent_norm, energies_from_transform, evaluate, Averaging, TentSpec};
use fiohardy_core::transforms::{adjoint, half_wave, reproduce, transform};
use fiohardy_core::{GridSpec, SpatialField, SpectralField};
use num_complex::Complex64;
use proptest::prelude::*;

fn family() -> &'static PacketFamily {
    static FAMILY: OnceLock<PacketFamily> = OnceLock::new();
    FAMILY.get_or_init(|| {
        let grid = GridSpec::new(64, TAU).unwrap();
        let ladder = ScaleLadder::covering(3, grid.max_modulus(), 0.8).unwrap();
        PacketFamily::build(grid, DirectionSet::new(160).unwrap(), ladder, FamilyOptions::default()).unwrap()
    })
}

/// Field with the given coefficients on `|k| <= band`, in lattice order.
fn bandlimited(grid: GridSpec, band: f64, coeffs: &[(f64, f64)]) -> SpatialField {
    let b = band as i64;
    let mut spec = SpectralField::zeros(grid);
    let mut it = coeffs.iter().cycle();
    for ky in -b..=b {
        for kx in -b..=b {
            let (re, im) = *it.next().unwrap();
            if ((kx * kx + ky * ky) as f64).sqrt() <= band {
                spec.data_mut()[grid.index_of(kx, ky).unwrap()] = Complex64::new(re, im);
            }
        }
    }
    spec.to_spatial()
}

fn coeffs() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 7..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fft_round_trip_and_parseval(c in coeffs(), band in 1.0..28.0f64) {
        let f = bandlimited(GridSpec::new(64, TAU).unwrap(), band, &c);
        let spec = f.to_spectral();
        prop_assert!((spec.l2_norm() - f.l2_norm()).abs() <= 1e-12 * f.l2_norm().max(1e-300));
        let mut back = spec.to_spatial();
        back.add_scaled(Complex64::new(-1.0, 0.0), &f).unwrap();
        prop_assert!(back.l2_norm() <= 1e-12 * f.l2_norm().max(1e-300));
    }

    #[test]
    fn reproducing_formulas(c in coeffs(), band in 2.0..28.0f64) {
        let fam = family();
        let f = bandlimited(*fam.grid(), band, &c);
        let norm = f.l2_norm();
        for (fwd, adj) in [(Which::W, Which::W), (Which::V, Which::U)] {
            let mut r = reproduce(fam, fwd, adj, &f).unwrap().field;
            r.add_scaled(Complex64::new(-1.0, 0.0), &f).unwrap();
            prop_assert!(r.l2_norm() <= 1e-10 * norm, "{fwd:?}: {}", r.l2_norm() / norm);
        }
    }

    #[test]
    fn adjoint_pairing(c in coeffs(), d in coeffs()) {
        let fam = family();
        let f = bandlimited(*fam.grid(), 20.0, &c);
        let g = bandlimited(*fam.grid(), 20.0, &d);
        let wf = transform(fam, Which::W, &f).unwrap();
        let wg = transform(fam, Which::W, &g).unwrap();
        let lhs = wf.inner(&wg).unwrap();
        let rhs = adjoint(fam, Which::W, &wg).unwrap();
        let rhs = f.inner(&rhs).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * f.l2_norm() * g.l2_norm());
    }

    #[test]
    fn tent_norm_is_homogeneous(c in coeffs(), alpha in 0.1..10.0f64) {
        let fam = family();
        let f = bandlimited(*fam.grid(), 20.0, &c);
        let mut wf = transform(fam, Which::W, &f).unwrap();
        let before = tent_norm(&wf, 4.0, 1.0).unwrap();
        wf.scale(Complex64::new(0.0, alpha));
        let after = tent_norm(&wf, 4.0, 1.0).unwrap();
        prop_assert!((after - alpha * before).abs() <= 1e-9 * after);
    }

    #[test]
    fn p2_tent_norm_is_l2(c in coeffs(), aperture in 1.0..4.0f64) {
        let fam = family();
        let f = bandlimited(*fam.grid(), 24.0, &c);
        let e = energies_from_transform(fam, Which::W, &f.to_spectral(), true).unwrap();
        let spec = TentSpec { averages: vec![Averaging::aperture(aperture).unwrap()], exponents: vec![2.0], keep_fields: false };
        let r = evaluate(&e, &spec).unwrap();
        prop_assert!((r.norm(0, 0) - f.l2_norm()).abs() <= 1e-10 * f.l2_norm());
    }

    #[test]
    fn half_wave_is_unitary_group(c in coeffs(), s in -2.0..2.0f64, t in -2.0..2.0f64) {
        let f = bandlimited(GridSpec::new(64, TAU).unwrap(), 20.0, &c);
        let mut two = half_wave(&half_wave(&f, s), t);
        prop_assert!((two.l2_norm() - f.l2_norm()).abs() <= 1e-12 * f.l2_norm());
        two.add_scaled(Complex64::new(-1.0, 0.0), &half_wave(&f, s + t)).unwrap();
        prop_assert!(two.l2_norm() <= 1e-12 * f.l2_norm());
    }

    #[test]
    fn chord_is_a_metric(a in -10.0..10.0f64, b in -10.0..10.0f64, c in -10.0..10.0f64) {
        prop_assert!((chord(a, b) - chord(b, a)).abs() < 1e-15);
        prop_assert!(chord(a, c) <= chord(a, b) + chord(b, c) + 1e-12);
        prop_assert!((chord(a, a + TAU)).abs() < 1e-12);
        prop_assert!(chord(a, b) <= 2.0 + 1e-15);
    }

    #[test]
    fn cosphere_distance_is_quasi_symmetric(x in prop::array::uniform2(-3.0..3.0f64), y in prop::array::uniform2(-3.0..3.0f64), a in 0.0..TAU, b in 0.0..TAU) {
        let (p, q) = (CospherePoint::new(x, a), CospherePoint::new(y, b));
        prop_assert!(metric_d(&p, &q) <= 1.5f64.sqrt() * metric_d(&q, &p) * (1.0 + 1e-12));
        prop_assert!(metric_d(&p, &p).abs() < 1e-12);
    }

    #[test]
    fn ladder_covers_requested_modulus(j in 1usize..8, zmax in 2.0..500.0f64) {
        let l = ScaleLadder::covering(j, zmax, 0.8).unwrap();
        prop_assert!(l.sigma(l.depth() as i64 + 1) * zmax <= 0.8 * (1.0 + 1e-12));
        if l.depth() > 1 {
            prop_assert!(l.sigma(l.depth() as i64) * zmax > 0.8 * (1.0 - 1e-12));
        }
        prop_assert!((l.sigma(j as i64) - 0.5).abs() < 1e-12);
    }
}
