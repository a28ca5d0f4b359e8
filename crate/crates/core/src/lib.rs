pub mod array_model;
pub mod channel;
pub mod deriv;
pub mod error;
pub mod experiment;
pub mod matfun;
pub mod optimizer;
pub mod rate;
pub mod scenario;

pub use error::{Error, Result};
