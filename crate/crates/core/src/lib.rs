pub mod artifacts;
pub mod coarse;
pub mod error;
pub mod fem;
pub mod fom;
pub mod gmsfem;
pub mod grid;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod model;
pub mod reduction;
pub mod rom;

pub use error::{Error, Result};
