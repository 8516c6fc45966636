pub mod anomaly;
pub mod attribution;
pub mod dataio;
pub mod error;
mod linalg;
pub mod metrics;
pub mod patchcheck;
pub mod patchopt;
pub mod retrieval;
pub mod synthetic;

pub use error::{Error, Result};
