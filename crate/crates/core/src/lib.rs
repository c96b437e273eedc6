//! Numerical core: periodic field grids, cosphere geometry, wave-packet
//! families, packet transforms, tent functionals and Hardy-space norms.

pub mod decay;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod hardy;
pub mod packets;
pub mod profiles;
pub mod tent;
pub mod transforms;

pub use error::{Error, Result};
pub use grid::{GridSpec, Multiplier, SpatialField, SpectralField};
