//! Driver layer for `fiohardy-core`: run configuration, test-function suite,
//! file formats and the acceptance verifier.

pub mod config;
pub mod io;
pub mod suite;
pub mod verify;
