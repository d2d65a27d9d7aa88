//! Grid-based conjugate calculus for composite functions `f0 + g∘F`.

pub mod composite;
pub mod cones;
pub mod conjugate;
pub mod duality;
pub mod error;
pub mod expr;
pub mod extreal;
pub mod grid;
pub mod harness;
pub mod kconv;
pub mod qual;

pub use error::{Error, Result};
pub use expr::FunctionExpr;
pub use extreal::{ext_add, ExtReal};
pub use grid::{grid_inf, sample, Axis, Grid, GridFn};
