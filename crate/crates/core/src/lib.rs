//! Closed-form model of mini-batch SGD training time.
//!
//! `T_Conv(M, P) = N_Update(M) * T_Update(M, P)` with the inverse law
//! `N_Update = N_inf + alpha / M` and the update-time model
//! `T_Update = gamma * max(M / P, M_T) + Delta(P)`.
//!
//! * [`sgd_lab`] measures `N_Update(M)` on synthetic convex problems.
//! * [`lawfit`] fits `N_inf` and `alpha`.
//! * [`hwmodel`] models and fits the per-update time.
//! * [`planner`] picks optimal batch sizes and scaling curves.
//! * [`theory`] evaluates the SGD residual bound and the `N_Update` lower bounds.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the common double precision case.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod hwmodel;
pub mod lawfit;
pub mod planner;
pub mod scalar;
pub mod sgd_lab;
pub mod theory;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Scalar;

pub type Problem64 = sgd_lab::Problem<f64>;
pub type SgdConfig64 = sgd_lab::SgdConfig<f64>;
pub type RunRecord64 = sgd_lab::RunRecord<f64>;
pub type LawParams64 = lawfit::LawParams<f64>;
pub type EpsilonLaw64 = lawfit::EpsilonLaw<f64>;
pub type HardwareParams64 = hwmodel::HardwareParams<f64>;
pub type CvConfig64 = hwmodel::CvConfig<f64>;
pub type Plan64 = planner::Plan<f64>;
pub type BoundParams64 = theory::BoundParams<f64>;

pub type Problem32 = sgd_lab::Problem<f32>;
pub type SgdConfig32 = sgd_lab::SgdConfig<f32>;
pub type LawParams32 = lawfit::LawParams<f32>;
pub type HardwareParams32 = hwmodel::HardwareParams<f32>;
pub type Plan32 = planner::Plan<f32>;
pub type BoundParams32 = theory::BoundParams<f32>;
