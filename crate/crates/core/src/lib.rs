//! Finite-dimensional operator systems realized as subspaces of matrix
//! algebras, with their quotient, dual and tensor-product cones decided by
//! certified PSD-feasibility computations.

pub mod duality;
pub mod error;
pub mod feasibility;
pub mod linalg;
pub mod opsys;
pub mod quotient;
pub mod tensor;

pub use error::{Error, Result};
