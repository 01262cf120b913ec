//! Objective Bayesian model discrimination for two-level factorial designs.
//!
//! The crate covers the full numerical pipeline: coded designs and
//! effect-forced model spaces, posterior model probabilities under a robust
//! hierarchical g-prior or a conventional Gaussian prior, follow-up design
//! search by expected predictive divergence, and heterogeneity diagnostics.
//! It builds without `std`; IO and the command line live in the `obayes`
//! crate.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod designs;
pub mod diagnostics;
pub mod discrimination;
pub mod error;
pub mod factorial;
pub mod linalg;
pub mod posterior;
pub mod quad;
pub mod specfun;

pub use error::{Error, Result};
pub use factorial::{
    build_model_matrix, enumerate_candidate_runs, enumerate_models, AliasPolicy, CandidateTable,
    DesignTable, FactorModel, FactorSpace, InteractionOrder, ModelMatrix,
};
