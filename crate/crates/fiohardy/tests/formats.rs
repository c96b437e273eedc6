use std::f64::consts::TAU;
use std::io::Cursor;

use fiohardy::io::{self, FieldData};
use fiohardy_core::geometry::{DirectionSet, ScaleLadder};
use fiohardy_core::packets::{FamilyOptions, PacketFamily, Which};
use fiohardy_core::transforms::transform;
use fiohardy_core::{GridSpec, SpatialField};
use num_complex::Complex64;

fn small_family() -> PacketFamily {
    let grid = GridSpec::new(32, TAU).unwrap();
    let ladder = ScaleLadder::covering(2, grid.max_modulus(), 0.8).unwrap();
    PacketFamily::build(grid, DirectionSet::new(80).unwrap(), ladder, FamilyOptions::default()).unwrap()
}

fn sample_field(grid: GridSpec) -> SpatialField {
    SpatialField::from_fn(grid, |x| Complex64::new((2.0 * x[0]).cos() + x[1].sin(), (3.0 * x[1]).sin()))
}

#[test]
fn field_round_trip_is_bit_exact() {
    let grid = GridSpec::new(32, TAU).unwrap();
    let f = sample_field(grid);
    for data in [FieldData::Spatial(f.clone()), FieldData::Spectral(f.to_spectral())] {
        let mut buf = Vec::new();
        io::write_field(&mut buf, &data).unwrap();
        let back = io::read_field(&mut Cursor::new(buf)).unwrap();
        assert_eq!(back, data);
    }
}

#[test]
fn truncated_and_mislabelled_files_are_rejected() {
    let grid = GridSpec::new(32, TAU).unwrap();
    let mut buf = Vec::new();
    io::write_field(&mut buf, &FieldData::Spatial(sample_field(grid))).unwrap();
    let short = buf[..buf.len() - 3].to_vec();
    assert!(io::read_field(&mut Cursor::new(short)).is_err());
    let mut wrong = buf.clone();
    wrong[..4].copy_from_slice(b"FAM1");
    assert!(io::read_field(&mut Cursor::new(wrong)).is_err());
    assert!(io::read_coefficients(&mut Cursor::new(buf)).is_err());
}

#[test]
fn family_and_coefficients_round_trip() {
    let fam = small_family();
    let mut buf = Vec::new();
    io::write_family(&mut buf, &fam).unwrap();
    let back = io::read_family(&mut Cursor::new(buf)).unwrap();
    assert_eq!(back.grid(), fam.grid());
    assert_eq!(back.ladder(), fam.ladder());
    assert_eq!(back.directions().len(), fam.directions().len());
    for k in fam.ladder().nodes() {
        for m in 0..fam.directions().len() {
            assert_eq!(back.psi(m, k), fam.psi(m, k));
            assert_eq!(back.chi(m, k), fam.chi(m, k));
        }
    }
    assert_eq!(back.s(), fam.s());

    let f = sample_field(*fam.grid());
    let c = transform(&fam, Which::V, &f).unwrap();
    let mut buf = Vec::new();
    io::write_coefficients(&mut buf, &c).unwrap();
    let c2 = io::read_coefficients(&mut Cursor::new(buf)).unwrap();
    assert_eq!(c2, c);
    assert_eq!(transform(&back, Which::V, &f).unwrap(), c);
}

#[test]
fn files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.fld");
    let data = FieldData::Spatial(sample_field(GridSpec::new(32, TAU).unwrap()));
    io::save_field(&path, &data).unwrap();
    assert_eq!(io::load_field(&path).unwrap(), data);
    assert!(io::load_field(&dir.path().join("missing.fld")).is_err());
}
