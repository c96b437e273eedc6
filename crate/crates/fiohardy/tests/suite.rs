use std::f64::consts::TAU;

use fiohardy::suite::{default_suite, select, Generator};
use fiohardy_core::GridSpec;

#[test]
fn members_are_normalized_and_deterministic() {
    let grid = GridSpec::new(128, TAU).unwrap();
    for t in default_suite() {
        let a = t.generator.spectrum(grid).unwrap();
        let b = t.generator.spectrum(grid).unwrap();
        assert_eq!(a, b, "{}", t.id);
        assert!((a.l2_norm() - 1.0).abs() < 1e-12, "{}", t.id);
        assert!((t.field(grid).unwrap().l2_norm() - 1.0).abs() < 1e-12, "{}", t.id);
        assert!(a.max_active_modulus() <= t.generator.band(), "{}", t.id);
    }
}

#[test]
fn the_same_function_on_two_grids() {
    let (g1, g2) = (GridSpec::new(128, TAU).unwrap(), GridSpec::new(256, TAU).unwrap());
    for t in default_suite() {
        let (a, b) = (t.generator.spectrum(g1).unwrap(), t.generator.spectrum(g2).unwrap());
        for i in 0..g1.len() {
            let (kx, ky) = g1.wavenumbers(i);
            let j = g2.index_of(kx, ky).unwrap();
            assert!((a.data()[i] - b.data()[j]).norm() < 1e-14, "{}", t.id);
        }
    }
}

#[test]
fn annulus_support_and_phase() {
    let grid = GridSpec::new(128, TAU).unwrap();
    let spec = Generator::FocusedAnnulus { radius: 24.0 }.spectrum(grid).unwrap();
    for (i, v) in spec.data().iter().enumerate() {
        if v.norm() == 0.0 {
            continue;
        }
        let z = grid.frequency(i);
        let r = z[0].hypot(z[1]);
        assert!((18.0..=24.0).contains(&r), "support at {r}");
        let phase = (v.arg() + r).rem_euclid(TAU);
        assert!(phase.min(TAU - phase) < 1e-9);
    }
}

#[test]
fn seeds_give_different_fields() {
    let grid = GridSpec::new(128, TAU).unwrap();
    let a = Generator::RandomBandlimited { seed: 1, band: 48.0 }.spectrum(grid).unwrap();
    let b = Generator::RandomBandlimited { seed: 2, band: 48.0 }.spectrum(grid).unwrap();
    assert_ne!(a, b);
}

#[test]
fn band_violations_and_empty_selections_are_errors() {
    let coarse = GridSpec::new(64, TAU).unwrap();
    assert!(Generator::FocusedAnnulus { radius: 56.0 }.spectrum(coarse).is_err());
    assert!(Generator::Gaussian.spectrum(GridSpec::new(128, 1.0).unwrap()).is_err());
    assert!(select("").is_err());
    assert!(select(" , ").is_err());
    assert!(select("gaussian,missing").is_err());
    assert_eq!(select("annulus_24, gaussian").unwrap().len(), 2);
    assert_eq!(select("default").unwrap().len(), 9);
}
