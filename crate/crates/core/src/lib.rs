// `!(x > 0.0)` style checks are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod dataio;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod geometry;
pub mod hpo;
pub mod likelihood;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod trajectory;
