//! Loadability analysis and Monte Carlo placement of unity power factor
//! PV generation on radial distribution feeders.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod case_model;
pub mod cli;
pub mod loadability;
pub mod mc_allocation;
pub mod power_flow;
pub mod report;
