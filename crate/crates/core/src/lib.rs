//! Synthesis of invariant barrier certificates for polynomial dynamical
//! systems. Sum-of-squares conditions are encoded as bilinear matrix
//! inequalities and solved by a difference-of-convex iteration, with an
//! optional branch-and-bound wrapper and a sampling-based posterior check.

extern crate openblas_src;

pub mod linalg;
pub mod polyalg;
pub mod sdp;
pub mod encode;
pub mod dcdecomp;
pub mod dcp;
pub mod verify;
pub mod problem;
pub mod bnb;
pub mod synth;
pub mod bench;
