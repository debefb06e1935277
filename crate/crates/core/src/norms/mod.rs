//! Re-centered Sobolev norms, localization norms and operator norms.

pub mod localization;
pub mod monomial;
pub mod sobolev;

pub use localization::{
    coherent_matrix_element, decay_pairs, offdiagonal_decay_check, operator_norm, z_norm, z_norm_with, CheckRecord,
    DecayReport, ZNorm,
};
pub use monomial::{apply_centered_monomial, apply_factor, MonomialIndex};
pub use sobolev::{sobolev_norm, sobolev_norm_with, uncertainty_chain_check, ChainReport, SobolevForm};
