//! Convex compactness in L0+: measure primitives, convex sets, convergent
//! convex combinations, coercive minimization, KKM, minimax and equilibrium
//! solvers over finite probability spaces.

pub mod cli;
pub mod coercive;
pub mod equilibrium;
pub mod error;
pub mod expr;
pub mod functional;
pub mod geom;
pub mod io;
pub mod kkm;
pub mod komlos;
pub mod measure;
pub mod saddle;

pub use error::{Error, Result};
