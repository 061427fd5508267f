//! Relative Morse index, spectral flow and a Lipschitz saddle point
//! reduction, applied to time-periodic solutions of the 1D wave equation
//! u_tt − u_xx = f(x, t, u) on [0, π] × S¹ with Dirichlet ends and period
//! T = 2πq/p.
//!
//! Everything is computed on a Galerkin truncation of the basis
//! sin(jx)·{cos, sin}(kωt), ω = p/q, which is exactly orthonormal on the
//! quadrature grid, so grid transforms, Nemytskii gradients and discrete
//! functionals are mutually consistent.

pub mod error;
pub mod fourier;
pub mod index;
pub mod operator;
pub mod reduction;
pub mod wave;

pub use error::{Error, Result};
