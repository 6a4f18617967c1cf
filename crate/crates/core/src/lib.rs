//! Mean curvature flow of the regular leaves of cohomogeneity-one
//! isoparametric foliations, reduced to an ODE on the leaf space.
//!
//! [`catalog`] holds the models and their closed-form geometry, [`flow`]
//! integrates the reduced flow up to the singular time, [`diagnostics`]
//! analyzes the singularity, [`comparison`] covers the Riccati and
//! conjugate-point comparisons, and [`extrinsic`] recomputes everything from
//! level-set functions in the ambient space. [`verify`] bundles the invariant
//! suites and [`cli`] is the command-line front end.

pub mod catalog;
pub mod comparison;
pub mod extrinsic;
pub mod diagnostics;
pub mod flow;
pub mod ode;
pub mod report;
pub mod verify;
pub mod cli;
