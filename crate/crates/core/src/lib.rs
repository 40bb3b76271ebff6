//! Numerical toolkit for nilpotent orbits of real semisimple Lie algebras:
//! moment-map flows to orbit cores, sl2 machinery, the instanton ODE and its
//! expansion at infinity, the Kostant-Sekiguchi correspondence and the
//! inequalities behind the deformation argument.

pub mod algebra;
pub mod element;
pub mod error;
pub mod expansion;
pub mod inequality;
pub mod instanton;
pub mod linalg;
pub mod moment;
pub mod ode;
pub mod sekiguchi;
pub mod sl2kit;

pub use algebra::RealSemisimpleAlgebra;
pub use element::GVector;
pub use error::{OrbitError, Result};
