//! Binary file formats.
//!
//! * `FLD1`: header line `FLD1 <N> <N> <L> <spatial|spectral>` followed by
//!   `N^2` little-endian `(re, im)` pairs of `f64`, row-major.
//! * `FAM1`: header line `FAM1 <N> <L> <M> <J> <K> <profile> <renormalize>`
//!   followed by sparse multiplier records (`u64` count, then `u32` lattice
//!   index and `f64` re, im per entry) in the order psi, theta, chi
//!   (scale-major), phi_omega, r, s, q, h.
//! * `COE1`: header line `COE1 <N> <L> <M> <J> <K> <W|V|U> <channels>`, the
//!   coarse field as an `FLD1` block, then per stored channel a line
//!   `CH <m> <k>` and an `FLD1` block.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use fiohardy_core::geometry::{DirectionSet, ScaleLadder};
use fiohardy_core::packets::{FamilyOptions, FamilyTag, PacketFamily, Which};
use fiohardy_core::transforms::PacketCoefficients;
use fiohardy_core::{GridSpec, Multiplier, SpatialField, SpectralField};
use num_complex::Complex64;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed header: {0}")]
    Header(String),
    #[error(transparent)]
    Core(#[from] fiohardy_core::Error),
}

pub type FormatResult<T> = std::result::Result<T, FormatError>;

/// A field as stored in an `FLD1` block.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldData {
    Spatial(SpatialField),
    Spectral(SpectralField),
}

impl FieldData {
    pub fn into_spatial(self) -> SpatialField {
        match self {
            FieldData::Spatial(f) => f,
            FieldData::Spectral(f) => f.to_spatial(),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        match self {
            FieldData::Spatial(f) => f.grid(),
            FieldData::Spectral(f) => f.grid(),
        }
    }
}

fn read_line(r: &mut impl BufRead) -> FormatResult<String> {
    let mut line = String::new();
    if r.read_line(&mut line)? == 0 {
        return Err(FormatError::Header("unexpected end of file".into()));
    }
    Ok(line.trim_end().to_string())
}

fn parse<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> FormatResult<T> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| FormatError::Header(format!("bad or missing {what}")))
}

fn write_values(w: &mut impl Write, data: &[Complex64]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(16 * data.len());
    for v in data {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)
}

fn read_values(r: &mut impl Read, count: usize) -> io::Result<Vec<Complex64>> {
    let mut buf = vec![0u8; 16 * count];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect())
}

fn write_block(w: &mut impl Write, grid: &GridSpec, kind: &str, data: &[Complex64]) -> io::Result<()> {
    writeln!(w, "FLD1 {} {} {:?} {kind}", grid.n(), grid.n(), grid.period())?;
    write_values(w, data)
}

pub fn write_field(w: &mut impl Write, field: &FieldData) -> io::Result<()> {
    match field {
        FieldData::Spatial(f) => write_block(w, f.grid(), "spatial", f.data()),
        FieldData::Spectral(f) => write_block(w, f.grid(), "spectral", f.data()),
    }
}

pub fn read_field(r: &mut impl BufRead) -> FormatResult<FieldData> {
    let header = read_line(r)?;
    let mut t = header.split_whitespace();
    if t.next() != Some("FLD1") {
        return Err(FormatError::Header(format!("expected FLD1, got '{header}'")));
    }
    let n: usize = parse(t.next(), "row count")?;
    let n2: usize = parse(t.next(), "column count")?;
    let period: f64 = parse(t.next(), "period")?;
    let kind = t.next().unwrap_or("");
    if n != n2 {
        return Err(FormatError::Header(format!("non-square field {n} x {n2}")));
    }
    let grid = GridSpec::new(n, period)?;
    let data = read_values(r, n * n)?;
    match kind {
        "spatial" => Ok(FieldData::Spatial(SpatialField::from_vec(grid, data)?)),
        "spectral" => Ok(FieldData::Spectral(SpectralField::from_vec(grid, data)?)),
        _ => Err(FormatError::Header(format!("unknown field kind '{kind}'"))),
    }
}

pub fn save_field(path: &Path, field: &FieldData) -> FormatResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_field(&mut w, field)?;
    w.flush()?;
    Ok(())
}

pub fn load_field(path: &Path) -> FormatResult<FieldData> {
    read_field(&mut BufReader::new(File::open(path)?))
}

fn write_multiplier(w: &mut impl Write, m: &Multiplier) -> io::Result<()> {
    let mut buf = Vec::with_capacity(8 + 20 * m.nnz());
    buf.extend_from_slice(&(m.nnz() as u64).to_le_bytes());
    for (&i, v) in m.indices().iter().zip(m.values()) {
        buf.extend_from_slice(&i.to_le_bytes());
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)
}

fn read_multiplier(r: &mut impl Read, grid: GridSpec) -> FormatResult<Multiplier> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let count = u64::from_le_bytes(len) as usize;
    if count > grid.len() {
        return Err(FormatError::Header(format!("multiplier with {count} entries on {} points", grid.len())));
    }
    let mut buf = vec![0u8; 20 * count];
    r.read_exact(&mut buf)?;
    let entries = buf
        .chunks_exact(20)
        .map(|c| {
            let i = u32::from_le_bytes(c[..4].try_into().expect("4 bytes"));
            let re = f64::from_le_bytes(c[4..12].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[12..].try_into().expect("8 bytes"));
            (i, Complex64::new(re, im))
        })
        .collect();
    Ok(Multiplier::from_sparse(grid, entries)?)
}

pub fn write_family(w: &mut impl Write, family: &PacketFamily) -> io::Result<()> {
    let g = family.grid();
    let (dirs, ladder, opts) = (family.directions(), family.ladder(), family.options());
    writeln!(
        w,
        "FAM1 {} {:?} {} {} {} {} {}",
        g.n(),
        g.period(),
        dirs.len(),
        ladder.per_octave(),
        ladder.depth(),
        opts.tag.name(),
        opts.renormalize
    )?;
    type Get = fn(&PacketFamily, usize, usize) -> &Multiplier;
    let tables: [Get; 3] = [PacketFamily::psi, PacketFamily::theta, PacketFamily::chi];
    for get in tables {
        for k in ladder.nodes() {
            for m in 0..dirs.len() {
                write_multiplier(w, get(family, m, k))?;
            }
        }
    }
    for m in 0..dirs.len() {
        write_multiplier(w, family.phi_omega(m))?;
    }
    for mult in [family.r(), family.s(), family.q(), family.h()] {
        write_multiplier(w, mult)?;
    }
    Ok(())
}

fn read_table(r: &mut impl Read, grid: GridSpec, scales: usize, m: usize) -> FormatResult<Vec<Vec<Multiplier>>> {
    (0..scales).map(|_| (0..m).map(|_| read_multiplier(r, grid)).collect()).collect()
}

pub fn read_family(r: &mut impl BufRead) -> FormatResult<PacketFamily> {
    let header = read_line(r)?;
    let mut t = header.split_whitespace();
    if t.next() != Some("FAM1") {
        return Err(FormatError::Header(format!("expected FAM1, got '{header}'")));
    }
    let n: usize = parse(t.next(), "N")?;
    let period: f64 = parse(t.next(), "L")?;
    let m: usize = parse(t.next(), "M")?;
    let j: usize = parse(t.next(), "J")?;
    let k: usize = parse(t.next(), "K")?;
    let tag = FamilyTag::parse(t.next().unwrap_or(""))?;
    let renormalize: bool = parse(t.next(), "renormalize flag")?;
    let grid = GridSpec::new(n, period)?;
    let dirs = DirectionSet::new(m)?;
    let ladder = ScaleLadder::new(j, k)?;
    let scales = ladder.nodes().count();
    let psi = read_table(r, grid, scales, m)?;
    let theta = read_table(r, grid, scales, m)?;
    let chi = read_table(r, grid, scales, m)?;
    let phi: Vec<Multiplier> = (0..m).map(|_| read_multiplier(r, grid)).collect::<FormatResult<_>>()?;
    let mut rsqh = Vec::with_capacity(4);
    for _ in 0..4 {
        rsqh.push(read_multiplier(r, grid)?);
    }
    let rsqh: [Multiplier; 4] = rsqh.try_into().expect("four multipliers");
    Ok(PacketFamily::from_parts(grid, dirs, ladder, FamilyOptions { tag, renormalize }, psi, theta, chi, phi, rsqh)?)
}

pub fn save_family(path: &Path, family: &PacketFamily) -> FormatResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_family(&mut w, family)?;
    w.flush()?;
    Ok(())
}

pub fn load_family(path: &Path) -> FormatResult<PacketFamily> {
    read_family(&mut BufReader::new(File::open(path)?))
}

pub fn write_coefficients(w: &mut impl Write, c: &PacketCoefficients) -> io::Result<()> {
    let g = c.grid();
    let count = c.nonzero_channels().count();
    writeln!(
        w,
        "COE1 {} {:?} {} {} {} {} {count}",
        g.n(),
        g.period(),
        c.directions(),
        c.ladder().per_octave(),
        c.depth(),
        c.which().name()
    )?;
    write_block(w, g, "spatial", c.coarse().data())?;
    for (m, k, f) in c.nonzero_channels() {
        writeln!(w, "CH {m} {k}")?;
        write_block(w, g, "spatial", f.data())?;
    }
    Ok(())
}

pub fn read_coefficients(r: &mut impl BufRead) -> FormatResult<PacketCoefficients> {
    let header = read_line(r)?;
    let mut t = header.split_whitespace();
    if t.next() != Some("COE1") {
        return Err(FormatError::Header(format!("expected COE1, got '{header}'")));
    }
    let n: usize = parse(t.next(), "N")?;
    let period: f64 = parse(t.next(), "L")?;
    let m: usize = parse(t.next(), "M")?;
    let j: usize = parse(t.next(), "J")?;
    let k: usize = parse(t.next(), "K")?;
    let which = Which::parse(t.next().unwrap_or(""))?;
    let count: usize = parse(t.next(), "channel count")?;
    let grid = GridSpec::new(n, period)?;
    let mut c = PacketCoefficients::empty(grid, which, DirectionSet::new(m)?, ScaleLadder::new(j, k)?);
    let coarse = read_field(r)?.into_spatial();
    c.set_coarse(coarse)?;
    for _ in 0..count {
        let line = read_line(r)?;
        let mut t = line.split_whitespace();
        if t.next() != Some("CH") {
            return Err(FormatError::Header(format!("expected channel record, got '{line}'")));
        }
        let cm: usize = parse(t.next(), "direction index")?;
        let ck: usize = parse(t.next(), "scale index")?;
        if cm >= m || ck == 0 || ck > k {
            return Err(FormatError::Header(format!("channel ({cm}, {ck}) out of range")));
        }
        let f = read_field(r)?.into_spatial();
        c.set_channel(cm, ck, Some(f))?;
    }
    Ok(c)
}

pub fn save_coefficients(path: &Path, c: &PacketCoefficients) -> FormatResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_coefficients(&mut w, c)?;
    w.flush()?;
    Ok(())
}

pub fn load_coefficients(path: &Path) -> FormatResult<PacketCoefficients> {
    read_coefficients(&mut BufReader::new(File::open(path)?))
}
