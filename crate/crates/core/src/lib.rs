pub mod clustering;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod io;
pub mod normal;
pub mod numeric;
pub mod popweights;
pub mod sampleweights;
pub mod simulate;

pub use error::{Error, Result};
