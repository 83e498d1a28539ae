//! Numerical laboratory for radial bubble-tower stationary solutions of the
//! critical heat equation `v_t - Δv = |v|^{4/(N-2)} v` on the annulus
//! `{ε < |x| < 1}`: construction, linearized spectrum, sign condition and
//! parabolic flows from scaled initial data.

pub mod error;
pub mod flow;
pub mod mesh;
pub mod ode;
pub mod profile;
pub mod spectral;
pub mod stationary;
pub mod tridiag;

pub use error::{Error, Result};
