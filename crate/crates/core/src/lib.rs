//! Full-head morphable model toolkit: parameter decoding, soft differentiable
//! rendering, the reconstruction and inpainting loss suite, analysis-by-synthesis
//! fitting, and mesh benchmarking utilities.

pub mod error;
pub mod eval;
pub mod exec;
pub mod fit;
pub mod io;
pub mod loss;
pub mod model;
pub mod render;

pub use error::{Error, Result};
pub use exec::ExecMode;
