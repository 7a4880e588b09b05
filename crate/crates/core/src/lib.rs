//! Numerical laboratory for physical measures, dominated splittings,
//! separated-set pressure and Gibbs `F`-state audits of smooth maps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bump;
pub mod entropy;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod measure;
pub mod ode;
pub mod perturb;
pub mod pressure;
pub mod space;
pub mod system;
pub mod systems;
pub mod tangent;

pub use error::{LabError, Result};
pub use space::PhaseSpace;
pub use system::{iterate, jacobian_at, Orbit, SmoothSystem};
