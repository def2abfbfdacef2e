//! Region-of-attraction estimation for polynomial systems.

pub mod bench;
pub mod cli;
pub mod lyap;
pub mod poly;
pub mod sdp;
pub mod shapes;
pub mod sos;
pub mod verify;
pub mod vsiter;

pub use poly::{DynamicalSystem, Monomial, Polynomial};
