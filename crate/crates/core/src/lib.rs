pub mod bench;
pub mod cica;
pub mod cumulants;
pub mod decomp;
pub mod error;
pub mod eval;
pub mod htd;
pub mod synth;
pub mod tensor;

pub use error::{Error, ErrorKind, Result};
