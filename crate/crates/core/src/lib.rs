//! Action and Weyl eigenvalue densities for non-self-adjoint semiclassical
//! operators in two degrees of freedom.

pub mod audit;
pub mod catalog;
pub mod density;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod quadrature;
pub mod quadratic;
pub mod quantize;
pub mod symbol;
pub mod variation;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
