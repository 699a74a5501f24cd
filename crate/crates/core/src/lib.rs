//! Yamabe flow for rotationally symmetric, conformally flat, asymptotically
//! flat metrics `g = v^{4/(n-2)} delta` on radial grids.

pub mod config;
pub mod error;
pub mod exhaustion;
pub mod field;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod maxprinciple;
pub mod observables;
pub mod scenario;
pub mod stencil;

pub use error::{Error, Result};
pub use field::ConformalField;
pub use grid::{Constants, RadialGrid, Stretch};
