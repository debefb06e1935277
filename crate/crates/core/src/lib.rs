//! Numerical laboratory for the quantum–classical correspondence.
//!
//! The crate discretizes phase space on periodic grids, propagates wavefunctions
//! and classical flows, computes Wigner and Husimi functions, measures localization
//! norms and solves discrete optimal transport problems between phase-space
//! measures.

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod norms;
pub mod phase;
pub mod transforms;
pub mod transport;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/phase-space.md")]
    mod phase_space {}
    #[doc = include_str!("../../../book/src/transforms.md")]
    mod transforms {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/norms.md")]
    mod norms {}
    #[doc = include_str!("../../../book/src/transport.md")]
    mod transport {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/file-formats.md")]
    mod file_formats {}
}
