//! Packing construction for the minimax lower bound and numerical
//! certification of its conditions.

pub mod certify;
pub mod code;
pub mod family;
pub mod kl;

pub use certify::{certify, lemma_bound, theoretical_c0, CertificationReport, BETA_MAX};
pub use code::{build_code_family, CodeFamily};
pub use family::{build_hypotheses, build_hypotheses_auto, find_eta, FamilyDump, HypothesisFamily};
pub use kl::{
    averaged_ii1, delta_closed_form, delta_tilde_closed_form, i_term_bound, kl_between, kl_both,
    kl_decomposition, KlDecomposition, KlMode,
};
