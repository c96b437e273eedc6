use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: fields live on different grids")]
    GridMismatch,

    #[error("exponent p = {0} is outside the supported range (1, inf)")]
    ExponentOutOfRange(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate cutoff radii: inner = {inner}, outer = {outer}")]
    DegenerateCutoff { inner: f64, outer: f64 },

    #[error("profile is identically zero")]
    ZeroProfile,

    #[error("quadrature cannot resolve the integrand: {0}")]
    UnresolvedQuadrature(String),

    #[error("angular energy {value:e} below 1e-8 at lattice point ({kx}, {ky})")]
    AngularEnergyTooSmall { value: f64, kx: i64, ky: i64 },

    #[error("Calderon condition violated: radicand {radicand:e} at |zeta| = {modulus}")]
    CalderonViolated { radicand: f64, modulus: f64 },

    #[error("partition of unity violated: s = {value:e} at |zeta| = {modulus} > 2")]
    PartitionViolated { value: f64, modulus: f64 },

    #[error("change-of-packet denominator {value:e} below 1e-8 on the numerator support")]
    DenominatorTooSmall { value: f64 },

    #[error("family mismatch: {0}")]
    FamilyMismatch(String),

    #[error("tent averaging: {0}")]
    Averaging(String),

    #[error("empty ball list")]
    EmptyBallList,
}
