//! Phase-space transforms: Weyl and wavepacket quantization, Wigner and Husimi
//! functions, the noising channel and symbol mollification.

pub mod conventions;
pub mod husimi;
pub mod measure;
pub mod mollify;
pub mod noising;
pub mod weyl;
pub mod wigner;

pub use conventions::{resolve_conventions, ConventionReport};
pub use husimi::{husimi, husimi_auto, husimi_values, max_spacing};
pub use measure::{LatticeSpec, PhaseSpaceMeasure};
pub use mollify::mollify_symbol;
pub use noising::{noising_channel, noising_channel_with, Noised};
pub use weyl::{wavepacket_quantize, weyl_quantize, OperatorMatrix};
pub use wigner::{gaussian_smooth, wigner, wigner_density};
