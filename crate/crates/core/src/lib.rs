pub mod error;
pub mod linalg;
pub mod model;
pub mod privacy;
pub mod controllability;
pub mod sdp;
pub mod design_l0;
pub mod design_l2;
pub mod io;
pub mod oracles;
pub mod hvac;
pub mod cli;

pub use error::{Error, Result};
