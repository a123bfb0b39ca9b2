//! Network revenue management with linear demand: fluid re-solving policies with
//! and without parameter learning, and variance reduction from offline surrogates.

pub mod error;
pub mod fluid;
pub mod linalg;
pub mod model;
pub mod qp;
pub mod estimators;
pub mod experiments;
pub mod policy;
pub mod rng;
pub mod sim;
pub mod surrogate;
