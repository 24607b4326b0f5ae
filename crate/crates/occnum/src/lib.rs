//! File formats, parallel sampling, the verification suite and the `occnum`
//! command line on top of [`occnum_core`].

pub mod cli;
pub mod io;
pub mod parallel;
pub mod problem;
pub mod verify;

pub use cli::{run, RunConfig};
