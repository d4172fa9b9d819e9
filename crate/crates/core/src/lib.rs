//! Numerical laboratory for the wave-trace formula of transversally elliptic
//! operators on linear foliations of flat tori.

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geometric;
pub mod harness;
pub mod maslov;
pub mod model;
pub mod numerics;
pub mod spectral;
